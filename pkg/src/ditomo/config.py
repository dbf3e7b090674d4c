"""Dataclass configs and the flat ``key = value`` config file format.

Keys are dotted (``mle.epsilon0``, ``di.gap_tol``, ``benchmark.runs``); every
key has a default and unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

METHODS = ("DD_ML_PARTIAL", "DD_ML_FULL", "DI_DD_ML", "LIN_PARTIAL", "LIN_FULL")


@dataclass(frozen=True)
class MleConfig:
    epsilon0: float = 1e6
    epsilon_min: float = 1e-10
    kl_tol: float = 1e-14
    max_iters: int = 100_000
    prob_floor: float = 1e-15


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-7
    inner_tol: float = 1e-8
    t0: float = 1.0
    t_factor: float = 10.0
    max_inner_iters: int = 5000
    inner_method: str = "newton"  # or "gradient"


@dataclass(frozen=True)
class BenchmarkConfig:
    states: tuple = ("tau1", "tau2", "tau3")
    methods: tuple = METHODS
    runs: int = 1000
    n_samples: float = 1000.0
    master_seed: int = 20180101
    output_dir: str = "results"
    jobs: int = 0  # 0 = all available cores
    mle: MleConfig = field(default_factory=MleConfig)
    di: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        bad = set(self.states) - {"tau1", "tau2", "tau3"}
        if bad or not self.states:
            raise ConfigError(f"states must be a non-empty subset of tau1, tau2, tau3 (got {self.states})")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.n_samples > 0:
            raise ConfigError("n_samples must be positive")
        if self.di.inner_method not in ("newton", "gradient"):
            raise ConfigError("di.inner_method must be 'newton' or 'gradient'")

    @property
    def worker_count(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


def _registry() -> dict[str, tuple[str | None, dataclasses.Field]]:
    keys = {}
    for f in dataclasses.fields(BenchmarkConfig):
        if f.name in ("mle", "di"):
            continue
        prefix = "" if f.name in ("master_seed", "output_dir") else "benchmark."
        keys[prefix + f.name] = (None, f)
    for section, cls in (("mle", MleConfig), ("di", SolverConfig)):
        for f in dataclasses.fields(cls):
            keys[f"{section}.{f.name}"] = (section, f)
    return keys


CONFIG_KEYS = _registry()


def _convert(field_: dataclasses.Field, raw):
    default = field_.default if field_.default is not dataclasses.MISSING else field_.default_factory()
    if isinstance(default, tuple):
        if isinstance(raw, str):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return tuple(raw)
    if isinstance(default, bool):
        return str(raw).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def build_config(overrides: dict) -> BenchmarkConfig:
    top, sections = {}, {"mle": {}, "di": {}}
    for key, raw in overrides.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, f = CONFIG_KEYS[key]
        try:
            value = _convert(f, raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        (sections[section] if section else top)[f.name] = value
    return BenchmarkConfig(**top, mle=MleConfig(**sections["mle"]), di=SolverConfig(**sections["di"]))


def load_config(path, overrides: dict | None = None) -> BenchmarkConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return build_config(values)


def config_to_dict(config: BenchmarkConfig) -> dict:
    out = {}
    for key, (section, f) in CONFIG_KEYS.items():
        owner = getattr(config, section) if section else config
        value = getattr(owner, f.name)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
