"""Structured actor-critic dialogue policies (C++ core via pybind11)."""

import json

from ._strac import *  # noqa: F401,F403
from ._strac import run_experiment_json


def run_experiment(config):
    """Run an experiment from a config dict (same keys as the CLI JSON)."""
    if not isinstance(config, str):
        config = json.dumps(config)
    return run_experiment_json(config)
