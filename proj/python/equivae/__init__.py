"""EquiVAE: invariant-equivariant variational autoencoder.

The heavy lifting lives in the compiled extension; this package re-exports
its surface and adds a couple of small conveniences.
"""

import json as _json

from equivae._core import *  # noqa: F401,F403
from equivae._core import __version__, train as _train, evaluate as _evaluate

__all__ = [
    "__version__",
    "train",
    "evaluate",
    "train_config",
]


def train_config(**overrides):
    """A minimal synthetic-data run config, with keyword overrides merged in
    at the top level."""
    config = {
        "seed": 1,
        "mode": "supervised",
        "output_dir": "runs/equivae",
        "dataset": {"kind": "synthetic"},
    }
    config.update(overrides)
    return config


def train(config):
    """Accepts a config dict or JSON string; returns the result summary."""
    if isinstance(config, dict):
        config = _json.dumps(config)
    return _train(config)


def evaluate(config, checkpoint, report_path=""):
    if isinstance(config, dict):
        config = _json.dumps(config)
    return _evaluate(config, checkpoint, report_path)
