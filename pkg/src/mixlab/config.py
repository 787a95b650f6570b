"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

__all__ = ["ConfigError", "ExperimentConfig", "parse_config_text", "load_config", "coerce"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse one ``key = value`` per line; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def coerce(key: str, value: Any, default: Any) -> Any:
    """Convert ``value`` to the type of ``default``."""
    if isinstance(value, str):
        text = value.strip()
    else:
        text = None
    try:
        if isinstance(default, bool):
            if text is None:
                return bool(value)
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text) if text is not None else int(value)
        if isinstance(default, float):
            return float(text) if text is not None else float(value)
        if isinstance(default, tuple):
            items = [s.strip() for s in text.split(",") if s.strip()] if text is not None else list(value)
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in items)
        return text if text is not None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


def _render(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated parameters of one experiment run."""

    experiment: str
    params: tuple[tuple[str, Any], ...]
    seed: int = 0

    def __getitem__(self, key: str) -> Any:
        for k, v in self.params:
            if k == key:
                return v
        raise KeyError(key)

    def as_dict(self) -> dict[str, Any]:
        return dict(self.params)

    def canonical(self) -> str:
        lines = [f"experiment={self.experiment}", f"seed={self.seed}"]
        lines += [f"{k}={_render(v)}" for k, v in self.params]
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @classmethod
    def build(cls, experiment: str, defaults: Mapping[str, Any], values: Mapping[str, Any], seed: int = 0) -> "ExperimentConfig":
        unknown = sorted(set(values) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown keys for {experiment}: {', '.join(unknown)}")
        merged = {k: coerce(k, values[k], d) if k in values else d for k, d in defaults.items()}
        return cls(experiment, tuple(sorted(merged.items())), int(seed))


def load_config(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, str(p))
