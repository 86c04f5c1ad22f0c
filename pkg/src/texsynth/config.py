"""Key-value configuration with file and environment sources.

Format: UTF-8 text, one ``key = value`` pair per line, ``#`` starts a
comment, blank lines ignored.  Every file must carry ``config_version = 1``.
Environment variables override file values: ``TEXSYNTH_SERVICE_PORT=9000``
maps to ``service.port`` (prefix stripped, lowered, underscores separating
the section become a dot).  Unknown file keys are rejected so typos fail
loudly; unrelated ``TEXSYNTH_*`` environment variables are ignored.
"""

from __future__ import annotations

import os

from .errors import DomainError, FormatError, VersionError

CONFIG_VERSION = 1
ENV_PREFIX = "TEXSYNTH_"

# key -> default; the default's type is the coercion target
DEFAULTS: dict[str, object] = {
    "service.host": "127.0.0.1",
    "service.port": 8765,
    "service.queue_limit": 64,
    "service.tick_mode": "timer",
    "service.static_dir": "",
    "train.epochs": 200,
    "train.batch_size": 64,
    "train.learning_rate": 1e-3,
    "train.patience": 20,
    "train.lr_schedule": "cosine",
    "ar.order": 30,
    "ar.grid_force": 4,
    "ar.grid_speed": 4,
    "synth.refresh": 100,
    "gla.iterations": 100,
    "gla.momentum": 0.99,
    "eval.runs": 10,
    "eval.condition": "gla",
}

_CHOICES = {
    "service.tick_mode": ("timer", "manual"),
    "train.lr_schedule": ("constant", "cosine"),
    "eval.condition": ("gla", "frames", "stitch"),
}


def _coerce(key: str, raw: str):
    kind = type(DEFAULTS[key])
    try:
        if kind is int:
            value = int(raw)
        elif kind is float:
            value = float(raw)
        else:
            value = raw
    except ValueError:
        raise DomainError(f"config key {key!r} expects {kind.__name__}, got {raw!r}")
    if key in _CHOICES and value not in _CHOICES[key]:
        raise DomainError(f"config key {key!r} must be one of {_CHOICES[key]}")
    return value


def _parse_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    version = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key == "config_version":
                try:
                    version = int(raw)
                except ValueError:
                    raise VersionError(f"{path}:{lineno}: bad config_version {raw!r}")
                continue
            if key not in DEFAULTS:
                raise DomainError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    if version is None:
        raise VersionError(f"{path}: missing config_version")
    if version != CONFIG_VERSION:
        raise VersionError(f"{path}: unsupported config_version {version}")
    return values


def _env_overrides(env) -> dict[str, object]:
    by_env_name = {
        ENV_PREFIX + key.upper().replace(".", "_"): key for key in DEFAULTS
    }
    out: dict[str, object] = {}
    for name, raw in env.items():
        key = by_env_name.get(name)
        if key is not None:
            out[key] = _coerce(key, raw)
    return out


def load_config(path=None, env=None) -> dict[str, object]:
    """Defaults, overridden by the file (if any), overridden by environment."""
    merged = dict(DEFAULTS)
    if path is not None:
        merged.update(_parse_file(path))
    merged.update(_env_overrides(os.environ if env is None else env))
    return merged


def write_config(values: dict[str, object], path) -> None:
    """Write a loadable config file; unknown keys are rejected."""
    for key in values:
        if key not in DEFAULTS:
            raise DomainError(f"unknown config key {key!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"config_version = {CONFIG_VERSION}\n")
        for key in sorted(values):
            fh.write(f"{key} = {values[key]}\n")
