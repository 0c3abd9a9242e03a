"""End-to-end smoke tests for the python surface: tiny but real runs."""

import json
import math

import numpy as np
import pytest

import geod


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset + 2-step training run shared by the expensive tests."""
    root = tmp_path_factory.mktemp("geod_py")
    data = str(root / "data")
    out = str(root / "run")
    geod.gen_data(data, n=8, res=16, seed=3, workers=2)
    config = {
        "steps": 2,
        "batch": 2,
        "resolution": 16,
        "generator": {"latent_dim": 8, "hidden": 16, "layers": 2, "n_ray_samples": 6},
        "discriminator": {"base_channels": 8},
        "schedule": {"it_start": 0, "it_end": 2},
    }
    summary = geod.train(data, out, config)
    return {"data": data, "out": out, "summary": summary}


def test_train_summary(workspace):
    s = workspace["summary"]
    assert s["completed_steps"] == 2
    assert not s["aborted"]
    assert s["final_checkpoint"].endswith("ckpt_final.bin")


def test_render_shapes_and_ranges(workspace):
    color, depth, alpha = geod.render(workspace["summary"]["final_checkpoint"], yaw=0.1)
    assert color.shape == (16, 16, 3)
    assert depth.shape == (16, 16)
    assert alpha.shape == (16, 16)
    assert color.min() >= 0.0 and color.max() <= 1.0
    assert alpha.min() >= 0.0 and alpha.max() <= 1.0 + 1e-9


def test_extract_geometry_normals_unit(workspace):
    g = geod.extract_geometry(workspace["summary"]["final_checkpoint"], z_seed=2)
    n = g["normal"]
    assert n.shape == (16, 16, 3)
    norms = np.linalg.norm(n, axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    assert (g["depth"] >= 0.8 - 1e-9).all() and (g["depth"] <= 1.2 + 1e-9).all()


def test_invert_runs(workspace):
    color, _, _ = geod.render(workspace["summary"]["final_checkpoint"], z_seed=5)
    r = geod.invert(workspace["summary"]["final_checkpoint"], color, mode="z", steps=2)
    assert r["z"].shape == (1, 8)
    assert math.isfinite(r["loss"])


def test_evaluate_report(workspace):
    rep = geod.evaluate(
        workspace["summary"]["final_checkpoint"],
        workspace["data"],
        n_images=1,
        invert_steps=2,
        re_pairs=1,
    )
    assert len(rep["side"]["per_image"]) == 1
    assert rep["side"]["median"] >= 0.0


def test_side_scale_invariance():
    gt = np.random.default_rng(0).uniform(0.8, 1.2, size=(8, 8))
    assert geod.side(3.7 * gt, gt) == pytest.approx(0.0, abs=1e-9)
    pred = np.array([[math.e, 1.0]])
    assert geod.side(pred, np.ones((1, 2))) == pytest.approx(0.5)


def test_scalars_and_schedules():
    assert geod.f_logistic(0.0) == pytest.approx(-math.log(2.0))
    assert geod.lambda_schedule(0, 0.1, 1.0, 100, 200) == pytest.approx(0.1)
    assert geod.lambda_schedule(150, 0.1, 1.0, 100, 200) == pytest.approx(0.55)
    assert geod.lambda_schedule(10**6, 0.1, 1.0, 100, 200) == pytest.approx(1.0)


def test_normal_from_depth_constant_faces_camera():
    n = geod.normal_from_depth(np.full((8, 8), 1.0), fov_degrees=30.0)
    assert np.allclose(n, np.broadcast_to([0.0, 0.0, -1.0], (8, 8, 3)), atol=1e-9)


def test_default_config_round_trip():
    cfg = json.loads(geod.default_config())
    assert cfg["mode"] == "geod"
    assert cfg["schedule"]["it_end"] >= cfg["schedule"]["it_start"]


def test_intrinsics():
    K = geod.intrinsics(30.0, 32, 32)
    assert K["width"] == 32
    assert K["fx"] == pytest.approx(K["fy"])
    assert K["fx"] > 0
