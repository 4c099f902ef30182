"""Run configuration: INI-style files with one section per command, plus flag overrides.

Example::

    [common]
    seed = 2007
    workers = 1
    out = results

    [power-study]
    sims = 1000
    n_stage1 = 63350
    n_stage2 = 219
    h = auto

Keys match the long flag names of each command with dashes replaced by
underscores. Flags given on the command line win over file values.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class CommonConfig:
    seed: int = 2007
    workers: int = os.cpu_count() or 1
    out: str = "results"


@dataclass
class PowerStudyConfig:
    sims: int = 1000
    n_stage1: int = 63_350
    n_stage2: int = 219
    hermite_order: int = 8
    h: Optional[float] = None
    interp: bool = True
    wald_critical: float = 1.96
    max_evaluations: int = 20_000
    restarts: int = 2


@dataclass
class FitMixtureConfig:
    data: Optional[str] = None
    simulate: Optional[int] = None
    h: float = 0.15
    check: bool = False


@dataclass
class ValidateInterpConfig:
    order: int = 20
    margin: Optional[int] = None
    runge_h: float = 0.02


@dataclass
class CalibrateConfig:
    probe: str = "runge"
    h1: float = 0.02
    target: float = 1e-8
    order: int = 20


@dataclass
class BenchConfig:
    n_stage1: int = 63_350
    n_stage2: int = 219
    mixture_n: int = 1_000_000
    fits: bool = True


SECTIONS = {
    "common": CommonConfig,
    "power-study": PowerStudyConfig,
    "fit-mixture": FitMixtureConfig,
    "validate-interp": ValidateInterpConfig,
    "calibrate": CalibrateConfig,
    "bench": BenchConfig,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(cls, name: str, raw: str):
    default = getattr(cls(), name)
    annotation = {f.name: f.type for f in fields(cls)}[name]
    text = raw.strip()
    if "Optional" in str(annotation) and text.lower() in {"", "none", "auto"}:
        return None
    try:
        if "bool" in str(annotation):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if "int" in str(annotation):
            return int(text)
        if "float" in str(annotation):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} (default {default!r})") from None
    return text


def load(path: Optional[str], section: str):
    """Return ``(CommonConfig, section config)`` from ``path`` (or defaults)."""
    common = CommonConfig()
    cfg = SECTIONS[section]()
    if path is None:
        return common, cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for name, target in (("common", common), (section, cfg)):
        if not parser.has_section(name):
            continue
        known = {f.name for f in fields(target)}
        for key, raw in parser.items(name):
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"[{name}] unknown key {key!r}; expected one of {sorted(known)}")
            setattr(target, key, _coerce(type(target), key, raw))
    return common, cfg


def apply_overrides(target, overrides: dict):
    for key, val in overrides.items():
        if val is not None:
            setattr(target, key, val)
    return target


def out_dir(common: CommonConfig) -> Path:
    return Path(common.out)
