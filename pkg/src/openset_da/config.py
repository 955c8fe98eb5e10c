"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments.  Resolution order is built-in
defaults, then the file, then command-line overrides.  The resolved
configuration is written back verbatim as the run manifest, so a manifest
is itself a valid config file.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # data: either feature files or data = synthetic
    data: str = "files"
    source: str = ""
    target: str = ""
    ground_truth: str = ""
    labeled_targets: str = ""
    n_targets: int = 0  # 0 = use all target rows
    synth_classes: int = 3
    synth_per_class: int = 100
    synth_dim: int = 10
    synth_rotation: float = 20.0
    synth_translation: float = 5.0
    synth_unknown_ratio: float = 0.5
    synth_scale: float = 6.0
    synth_source_unknown: int = 2
    synth_target_unknown: int = 3
    synth_unknown_radius: float = 0.5
    # method
    variant: str = "ati-lambda"
    rho: float = 0.5
    epsilon: float = 0.01
    max_iter: int = 10
    coverage: bool = True
    coverage_unknown: bool = True
    backend: str = "auto"
    stop_on_fixed_point: bool = True
    svm_c: float = 0.001
    svm_tol: float = 1e-6
    svm_max_passes: int = 10_000
    baseline_mode: str = "st"
    protocol: str = "os"
    seed: int = 0
    out: str = "run"
    plot_data: bool = False


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool or kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def field_types() -> dict:
    return {f.name: f.type for f in fields(RunConfig)}


def parse_text(text: str) -> dict:
    out = {}
    types = field_types()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, types[key], value)
    return out


def load(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        values.update(parse_text(p.read_text(encoding="utf-8")))
    types = field_types()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, types[key], str(value)) if isinstance(value, str) else value
    cfg = RunConfig(**values)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig) -> None:
    if cfg.data not in ("files", "synthetic"):
        raise ConfigError("data must be 'files' or 'synthetic'")
    if cfg.data == "files" and not (cfg.source and cfg.target):
        raise ConfigError("source and target feature files are required")
    if not 0.0 <= cfg.rho <= 1.0:
        raise ConfigError("rho must lie in [0, 1]")
    if not cfg.epsilon > 0 or cfg.max_iter < 1:
        raise ConfigError("epsilon > 0 and max_iter >= 1 required")
    if not (cfg.svm_c > 0 and math.isfinite(cfg.svm_c)):
        raise ConfigError("svm_c must be positive")


def dump(cfg: RunConfig, header: list[str] | None = None) -> str:
    lines = [f"# {h}" for h in header or []]
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def replace(cfg: RunConfig, **changes) -> RunConfig:
    new = dataclasses.replace(cfg, **changes)
    _check(new)
    return new
