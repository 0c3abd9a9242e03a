#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "testutil.hpp"
#include "geod/cli.hpp"
#include "geod/dataset.hpp"
#include "geod/image_io.hpp"
#include "json.hpp"

using namespace geod;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

std::string tmp(const std::string& leaf) {
  fs::path p = geod::testutil::scratch_root() / ("geod_cli_test_" + leaf);
  fs::remove_all(p);
  return p.string();
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  return json::parse(f);
}

}  // namespace

TEST_CASE("usage errors exit 1, runtime errors exit 2") {
  CHECK(dispatch({}) == 1);                                  // a subcommand is required
  CHECK(dispatch({"frobnicate"}) == 1);                      // unknown subcommand
  CHECK(dispatch({"gen-data"}) == 1);                        // missing --out
  CHECK(dispatch({"gen-data", "--out", "/tmp/x", "--wat", "1"}) == 1);  // unknown flag
  CHECK(dispatch({"train", "--data", "/nonexistent", "--out", tmp("err")}) == 2);
  CHECK(dispatch({"render", "--ckpt", "/nonexistent.bin", "--out", tmp("err2") + "/x.png"}) ==
        2);
  CHECK(dispatch({"invert", "--ckpt", "x", "--image", "y", "--out", "z", "--mode", "pose"}) ==
        1);  // mode outside {z, z-pose}
  CHECK(dispatch({"--help"}) == 0);
}

TEST_CASE("the whole toolchain runs end to end") {
  const std::string ds = tmp("ds");
  const std::string run = tmp("run");

  CHECK(dispatch({"gen-data", "--out", ds, "--n", "8", "--res", "16", "--seed", "3",
                  "--workers", "2"}) == 0);
  CHECK(read_manifest(ds).count == 8);

  // Tiny training config; CLI overrides trim it further.
  const std::string cfg_path = tmp("cfg") + ".json";
  fs::create_directories(fs::path(cfg_path).parent_path());
  {
    std::ofstream f(cfg_path);
    f << R"({"resolution": 16, "batch": 2, "steps": 5,
             "generator": {"latent_dim": 8, "hidden": 16, "layers": 2, "n_ray_samples": 6},
             "discriminator": {"base_channels": 8},
             "schedule": {"it_start": 0, "it_end": 2}})";
  }
  CHECK(dispatch({"train", "--data", ds, "--out", run, "--cfg", cfg_path, "--steps", "2",
                  "--seed", "9"}) == 0);
  CHECK(fs::exists(run + "/run.json"));
  CHECK(fs::exists(run + "/metrics.csv"));
  CHECK(fs::exists(run + "/ckpt_final.bin"));
  json run_meta = read_json(run + "/run.json");
  CHECK(run_meta["config"]["steps"] == 2);   // the override landed
  CHECK(run_meta["config"]["seed"] == 9);
  const std::string ckpt = run + "/ckpt_final.bin";

  const std::string report = tmp("rep") + ".json";
  CHECK(dispatch({"eval", "--ckpt", ckpt, "--data", ds, "--metrics", report, "--n", "1",
                  "--steps", "2", "--seed", "4"}) == 0);
  json rep = read_json(report);
  CHECK(rep["side"]["per_image"].size() == 1);
  CHECK(rep["side"]["median"].get<double>() >= 0.0);

  const std::string png = tmp("render") + "/view.png";
  CHECK(dispatch({"render", "--ckpt", ckpt, "--out", png, "--yaw", "0.1", "--z-seed", "5"}) ==
        0);
  CHECK(read_png(png).shape() == Shape{16, 16, 3});

  const std::string geo = tmp("geo");
  CHECK(dispatch({"extract-geometry", "--ckpt", ckpt, "--out", geo, "--pitch", "1.6"}) == 0);
  for (const char* leaf : {"color.png", "depth.png", "normal.png", "depth.f32", "alpha.f32"}) {
    CHECK(fs::exists(geo + "/" + std::string(leaf)));
  }
  Tensor depth = read_f32(geo + "/depth.f32", 16, 16);
  for (double d : depth.values()) {
    CHECK(d >= 0.8 - 1e-6);
    CHECK(d <= 1.2 + 1e-6);
  }

  const std::string inv = tmp("inv");
  CHECK(dispatch({"invert", "--ckpt", ckpt, "--image", png, "--out", inv, "--mode", "z",
                  "--steps", "2"}) == 0);
  json ij = read_json(inv + "/inversion.json");
  CHECK(ij["z"].size() == 8);
  CHECK(fs::exists(inv + "/recon.png"));

  CHECK(dispatch({"invert", "--ckpt", ckpt, "--image", png, "--out", inv, "--mode", "z-pose",
                  "--steps", "2", "--yaw", "0.05"}) == 0);

  for (const std::string& p : {ds, run, fs::path(cfg_path).parent_path().string(),
                               fs::path(report).parent_path().string(),
                               fs::path(png).parent_path().string(), geo, inv}) {
    fs::remove_all(p);
  }
}

TEST_SUITE_END();
