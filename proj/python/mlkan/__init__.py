"""Multilevel spline KAN core bindings.

Configs and run summaries are plain dicts here; the extension module passes
them as JSON text.
"""

import json

from . import _core
from ._core import (
    Network,
    bench,
    bspline_basis,
    cob_matrix,
    eigen_report,
    mask_constant,
    relu_basis,
    uniform_knots,
)

__all__ = [
    "Network",
    "analyze",
    "bench",
    "bspline_basis",
    "cob_matrix",
    "default_config",
    "eigen_report",
    "mask_constant",
    "relu_basis",
    "resolve_config",
    "run",
    "uniform_knots",
]


def default_config(experiment):
    """Full default configuration tree for one experiment."""
    return json.loads(_core.default_config(experiment))


def resolve_config(config):
    """Merges a partial config into the defaults; unknown keys raise ValueError."""
    return json.loads(_core.resolve_config(json.dumps(config)))


def run(config, out_dir=""):
    """Trains one configuration and returns the run summary.

    With out_dir set, metrics.csv, summary.json, fields.csv and weights.txt
    are written there, the same files the command-line driver produces.
    """
    return json.loads(_core.run_experiment(json.dumps(config), out_dir))


def analyze(orders=(1, 2, 3, 4), sizes=(16, 32, 64, 128), out_dir="", seed=1234):
    """Eigen, ratio-scaling and bound checks of the change of basis."""
    return json.loads(_core.run_analyze(list(orders), list(sizes), out_dir, seed))
