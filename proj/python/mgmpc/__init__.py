"""Scenario-tree MPC for microgrid energy management.

Configs are plain dicts with the same layout as the JSON files read by the
``mgmpc`` command-line tool; missing keys take their defaults.
"""

import json
import os

from . import _mgmpc
from ._mgmpc import ConfigError, avar, avar_primal_sup, var_value

__all__ = [
    "ConfigError",
    "avar",
    "avar_primal_sup",
    "case_study_grid",
    "default_config",
    "normalize_config",
    "run_cli",
    "simulate",
    "solve",
    "var_value",
]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def case_study_grid():
    """Four-bus grid with one unit of each kind."""
    return json.loads(_mgmpc.case_study_grid())


def default_config():
    return json.loads(_mgmpc.default_config())


def normalize_config(config, base_dir=""):
    """Validated config with every default filled in. Raises ConfigError."""
    return json.loads(_mgmpc.normalize_config(_text(config), os.fspath(base_dir)))


def solve(config, base_dir=""):
    """One scenario-tree solve; returns status, solver stats and per-node values."""
    return json.loads(_mgmpc.solve(_text(config), os.fspath(base_dir)))


def simulate(config, base_dir="", timing=True):
    """Closed loop; returns (metrics dict, trace CSV text)."""
    report, csv = _mgmpc.simulate(_text(config), os.fspath(base_dir), timing)
    return json.loads(report), csv


def run_cli(*args):
    """Runs the command-line tool in-process; returns (exit code, stdout, stderr)."""
    return _mgmpc.run_cli([os.fspath(a) for a in args])
