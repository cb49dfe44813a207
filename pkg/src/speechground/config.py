"""Flat key=value configuration resolved against typed defaults.

A config file is lines of ``key = value`` with ``#`` comments.  Every key must
exist in DEFAULTS; unknown keys raise naming the key.  Values are coerced to
the default's type, with tuples written as comma-separated strings.
"""

from __future__ import annotations

from .losses import LossConfig
from .trainer import TrainConfig

# Data generation keys live alongside training keys so one file drives a
# whole experiment.
DATA_DEFAULTS = {
    "train_scenes": 150,
    "val_scenes": 50,
    "utterances_per_scene": 16,
    "data_seed": 0,
}


def _flat_defaults() -> dict:
    cfg = TrainConfig()
    out = {}
    for f_name, value in vars(cfg).items():
        if f_name == "loss":
            continue
        out[f_name] = value
    for f_name, value in vars(cfg.loss).items():
        out[f_name] = value
    out.update(DATA_DEFAULTS)
    return out


DEFAULTS = _flat_defaults()


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if not raw:
            return ()
        return tuple(part.strip() for part in raw.split(","))
    return raw


def parse_config_file(path) -> dict:
    """Key=value pairs from a file, coerced against DEFAULTS."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, raw, DEFAULTS[key])
    return out


def resolve_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then file values, then explicit overrides."""
    resolved = dict(DEFAULTS)
    if path is not None:
        resolved.update(parse_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        resolved[key] = value
    return resolved


def to_train_config(resolved: dict) -> TrainConfig:
    loss = LossConfig(
        alpha1=resolved["alpha1"],
        alpha2=resolved["alpha2"],
        beta=resolved["beta"],
        gamma1=resolved["gamma1"],
        gamma2=resolved["gamma2"],
        gamma3=resolved["gamma3"],
        temperature=resolved["temperature"],
    )
    kwargs = {}
    for f_name in vars(TrainConfig()):
        if f_name == "loss":
            continue
        kwargs[f_name] = resolved[f_name]
    kwargs["alignments"] = tuple(kwargs["alignments"])
    return TrainConfig(loss=loss, **kwargs)


def format_config(resolved: dict) -> str:
    lines = []
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
