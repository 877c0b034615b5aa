"""Few-shot classification benchmark: Python front end to the C++ core."""

import json
import os

from . import _fsb
from ._fsb import ConfigError, SynthConfig, UnsupportedMethodError

__all__ = [
    "ConfigError",
    "UnsupportedMethodError",
    "SynthConfig",
    "resolve_config",
    "load_config",
    "config_digest",
    "train",
    "evaluate",
    "analyze_db",
    "synth_dataset",
    "db_index",
]


def resolve_config(config):
    """Every field of a run config, defaults filled in. Raises ConfigError."""
    return json.loads(_fsb.resolve_config(json.dumps(config)))


def load_config(path):
    """Resolved config from a JSON file; FSB_SEED replaces the top-level seed."""
    return json.loads(_fsb.load_config(os.fspath(path)))


def config_digest(config):
    return _fsb.config_digest(json.dumps(config))


def train(config):
    """Trains from a config dict or file. Returns the written paths."""
    if isinstance(config, (str, os.PathLike)):
        config = load_config(config)
    elif (seed := _fsb.env_seed()) is not None:
        config = dict(config, seed=seed)
    return _fsb.train(json.dumps(config))


def _eval_config(checkpoint, config, overrides):
    cfg = json.loads(_fsb.checkpoint_config(os.fspath(checkpoint))) if config is None else dict(config)
    ev = dict(cfg.get("eval") or {})
    ev.update(overrides)
    if (seed := _fsb.env_seed()) is not None:
        ev["seed"] = seed
    cfg["eval"] = ev
    return cfg


def evaluate(checkpoint, config=None, *, ways=(), workers=1, out=None, force=False, **overrides):
    """Scores a checkpoint; keyword overrides go into the eval section
    (episodes=50, k_shot=1, scheme="new-softmax-head", ...). Returns report dicts."""
    ways = list(ways)
    if len(ways) == 1:
        overrides["n_way"] = ways[0]
    cfg = _eval_config(checkpoint, config, overrides)
    text = _fsb.evaluate(os.fspath(checkpoint), json.dumps(cfg), ways, workers,
                         "" if out is None else os.fspath(out), force)
    return json.loads(text)


def analyze_db(checkpoint, config=None, *, roles=("base", "novel"), force=False, **overrides):
    """Davies-Bouldin index per role; infinite values come back as the string "inf"."""
    cfg = _eval_config(checkpoint, config, overrides)
    return json.loads(_fsb.analyze_db(os.fspath(checkpoint), json.dumps(cfg), list(roles), force))


def synth_dataset(out, pnm=False, **params):
    """Writes a synthetic dataset tree; params are SynthConfig fields."""
    sc = SynthConfig()
    sc.name = os.path.basename(os.path.normpath(os.fspath(out)))
    for k, v in params.items():
        if not hasattr(sc, k):
            raise TypeError(f"unknown synth parameter {k!r}")
        setattr(sc, k, v)
    _fsb.synth_dataset(os.fspath(out), sc, pnm)


def db_index(features, labels):
    return _fsb.db_index(features, list(labels))
