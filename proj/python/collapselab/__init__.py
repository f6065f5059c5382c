"""Python surface of the self-training diffusion laboratory.

Configs are plain dicts mirroring the JSON schema used by the CLI; every
operation is deterministic given (config, seed).
"""

import json as _json

from . import _core
from ._core import (
    __version__,
    check_bounds,
    discounted_sum,
    gaussian_chi2,
    gaussian_kl,
)

__all__ = [
    "__version__",
    "ablation_contribution",
    "analytic_score",
    "check_bounds",
    "config",
    "config_hash",
    "default_config",
    "discounted_sum",
    "gaussian_chi2",
    "gaussian_kl",
    "heatmap",
    "probe",
    "run",
    "sample_mixture",
]


def default_config(profile="desk"):
    """Profile defaults as a dict ("desk" or "paper")."""
    return _json.loads(_core.default_config(profile))


def config(profile="desk", **overrides):
    """Profile defaults with keyword overrides applied."""
    cfg = default_config(profile)
    for key, value in overrides.items():
        if key not in cfg:
            raise KeyError(f"unknown config field: {key}")
        cfg[key] = value
    return cfg


def _as_json(cfg):
    if cfg is None:
        return ""
    return _json.dumps(cfg) if isinstance(cfg, dict) else cfg


def config_hash(cfg):
    return _core.config_hash(_as_json(cfg))


def run(cfg=None, seed=None, store_dir=""):
    return _core.run(_as_json(cfg), seed, store_dir)


def heatmap(cfg=None, seed=None, horizon=0):
    return _core.heatmap(_as_json(cfg), seed, horizon)


def ablation_contribution(cfg, seed, ablate_at, horizon):
    return _core.ablation_contribution(_as_json(cfg), seed, ablate_at, horizon)


def probe(cfg=None, seed=None):
    return _core.probe(_as_json(cfg), seed)


def sample_mixture(cfg, n, key):
    return _core.sample_mixture(_as_json(cfg), n, key)


def analytic_score(cfg, x, t):
    return _core.analytic_score(_as_json(cfg), x, t)
