"""Python access to the SQG lab core: grids, snapshots, configs and runs."""

import json as _json

from ._core import (
    TABLE_HEADER,
    BlowUpError,
    ConfigError,
    WaveGrid,
    analytic_rate_linear,
    config_hash,
    l2_norm,
    load_snapshot,
    make_grid,
    parse_config,
    read_table,
    save_snapshot,
    sobolev_norm,
    to_physical,
    wilson_interval,
)
from . import _core


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def effective_config(config):
    """Effective config as a dict; accepts a JSON string or a dict."""
    echo, _ = parse_config(_text(config))
    return _json.loads(echo)


def run(config, out=None, seed=None, workers=None, stride=None):
    """Run a config (JSON string or dict) and return the exit code."""
    return _core.run(_text(config), out=out, seed=seed, workers=workers, stride=stride)


def trajectory(config):
    """Norm series and final coefficients of the config's simulate process."""
    return _core.trajectory(_text(config))


__all__ = [
    "TABLE_HEADER",
    "BlowUpError",
    "ConfigError",
    "WaveGrid",
    "analytic_rate_linear",
    "config_hash",
    "effective_config",
    "l2_norm",
    "load_snapshot",
    "make_grid",
    "parse_config",
    "read_table",
    "run",
    "save_snapshot",
    "sobolev_norm",
    "to_physical",
    "trajectory",
    "wilson_interval",
]
