"""Python bindings for the mrwlab core."""

import json

from ._mrwlab import (
    ConfigError,
    Model,
    ModelError,
    MrwError,
    NonConvergenceError,
    ascending_kernel,
    descending_kernel,
    drift,
    dual,
    escape_probabilities,
    exact_pipeline,
    flower_min_tail_probability,
    model_from_json,
    model_zoo,
    simulate_ladder,
    stationary,
)
from ._mrwlab import run_command as _run_command

__all__ = [
    "ConfigError",
    "Model",
    "ModelError",
    "MrwError",
    "NonConvergenceError",
    "ascending_kernel",
    "descending_kernel",
    "drift",
    "dual",
    "escape_probabilities",
    "exact_pipeline",
    "flower_min_tail_probability",
    "model_from_json",
    "model_zoo",
    "run",
    "simulate_ladder",
    "stationary",
    "zoo",
]


def zoo(name, **params):
    return model_zoo(name, json.dumps(params))


def run(command, config, base_dir=""):
    """Run a CLI command on a config dict; returns (exit_code, report, summary)."""
    code, report, summary = _run_command(command, json.dumps(config), str(base_dir))
    return code, json.loads(report), summary
