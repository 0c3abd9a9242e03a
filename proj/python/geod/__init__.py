"""Geometry-supervised radiance-field GAN: python surface over the C++ core.

The heavy lifting (training, rendering, inversion, evaluation) lives in the
compiled `_geod` module; this package adds json conveniences on top.
"""

import json as _json

from ._geod import (
    default_config,
    extract_geometry,
    f_logistic,
    gen_data,
    intrinsics,
    invert,
    lambda_schedule,
    normal_from_depth,
    render,
    side,
)
from ._geod import evaluate as _evaluate_json
from ._geod import train as _train_json

__all__ = [
    "default_config",
    "evaluate",
    "extract_geometry",
    "f_logistic",
    "gen_data",
    "intrinsics",
    "invert",
    "lambda_schedule",
    "normal_from_depth",
    "render",
    "side",
    "train",
]


def train(data, out, config=None):
    """Run training; `config` may be a dict, a JSON string, or None for defaults."""
    if config is None:
        config_json = ""
    elif isinstance(config, str):
        config_json = config
    else:
        config_json = _json.dumps(config)
    return _train_json(data, out, config_json)


def evaluate(ckpt, data, n_images=12, invert_steps=150, re_pairs=8, seed=1):
    """Score a checkpoint; returns the evaluation report as a dict."""
    return _json.loads(_evaluate_json(ckpt, data, n_images, invert_steps, re_pairs, seed))
