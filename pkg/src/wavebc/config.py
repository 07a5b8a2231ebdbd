"""Run configuration: ``key = value`` files with dotted section keys.

Example::

    # interval run
    domain.kind = interval
    domain.h = 0.0025
    time.T = 0.8
    potential.kind = gaussian
    potential.amplitude = 2

Unknown keys are rejected and every error names the offending line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bc_inversion import InversionConfig
from .characterization import CharacterizationConfig
from .geometry import DomainSpec
from .wave_forward import (NonlocalStencil, PotentialField, SolverGrid,
                           make_potential)


class ConfigError(ValueError):
    """Invalid configuration text; ``line`` is 1-based or ``None``."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "zero"
    amplitude: float = 0.0
    center: float = 0.4
    width: float = 0.1
    file: str | None = None

    def build(self, grid: SolverGrid, base_dir: Path | None = None) -> PotentialField | None:
        if self.kind == "zero":
            return None
        if self.kind == "file":
            p = Path(self.file)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            vals = np.loadtxt(p, dtype=float, ndmin=1)
            if vals.shape != grid.shape:
                if grid.domain.kind == "disc" and vals.ndim == 1 and vals.shape[0] == grid.n_cells:
                    vals = np.repeat(vals[:, None], grid.n_angular, axis=1)
                else:
                    raise ConfigError(f"potential file has shape {vals.shape}, solver grid is {grid.shape}")
            return PotentialField(vals)
        return make_potential(grid, self.kind, self.amplitude, self.center, self.width)


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    T: float
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    noise_level: float = 0.0
    seed: int = 0
    inversion: InversionConfig = field(default_factory=InversionConfig)
    characterization: CharacterizationConfig = field(default_factory=CharacterizationConfig)
    deterministic: bool = True
    nonlocal_source: bool = False
    nonlocal_weights: tuple = (0.5, 1.0, 0.5)
    nonlocal_spacing: int = 1
    store_oracle: bool = False
    base_dir: str | None = None

    def stencil(self) -> NonlocalStencil | None:
        if not self.nonlocal_source:
            return None
        return NonlocalStencil(tuple(self.nonlocal_weights), self.nonlocal_spacing)

    def to_flat(self) -> dict:
        """Echo as a flat ``{dotted key: value}`` mapping (JSON friendly)."""
        out = {f"domain.{k}": getattr(self.domain, k) for k in _DOMAIN_KEYS}
        out["time.T"] = self.T
        out.update({f"potential.{k}": getattr(self.potential, k) for k in _POTENTIAL_KEYS})
        out["noise.level"] = self.noise_level
        out["noise.seed"] = self.seed
        out.update({f"inversion.{f.name}": getattr(self.inversion, f.name)
                    for f in dataclasses.fields(InversionConfig)})
        out.update({f"characterization.{k}": getattr(self.characterization, k)
                    for k in _CHAR_KEYS})
        out["run.deterministic"] = self.deterministic
        out["nonlocal.enabled"] = self.nonlocal_source
        out["nonlocal.weights"] = list(self.nonlocal_weights)
        out["nonlocal.spacing"] = self.nonlocal_spacing
        out["output.store_oracle"] = self.store_oracle
        return out


_DOMAIN_KEYS = ("kind", "L_solver", "h", "rho", "inner_wall_depth", "n_angular", "n_radial", "n_gamma")
_POTENTIAL_KEYS = ("kind", "amplitude", "center", "width", "file")
_CHAR_KEYS = tuple(f.name for f in dataclasses.fields(CharacterizationConfig) if f.name != "inversion")


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text: str):
    return None if text.strip().lower() in ("none", "auto", "") else float(text)


def _convert(type_name: str, text: str):
    t = str(type_name).replace(" ", "")
    if t == "bool":
        return _parse_bool(text)
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    if t in ("float|None", "None|float"):
        return _parse_optional_float(text)
    if t in ("str|None",):
        return None if text.strip().lower() == "none" else text
    return text


def _schema() -> dict:
    """Map dotted key -> (section, field, type name)."""
    dom = _field_types(DomainSpec)
    sch = {f"domain.{k}": ("domain", k, dom[k]) for k in _DOMAIN_KEYS}
    sch["time.T"] = ("time", "T", "float")
    pot = _field_types(PotentialSpec)
    sch.update({f"potential.{k}": ("potential", k, pot[k]) for k in _POTENTIAL_KEYS})
    sch["noise.level"] = ("run", "noise_level", "float")
    sch["noise.seed"] = ("run", "seed", "int")
    inv = _field_types(InversionConfig)
    sch.update({f"inversion.{k}": ("inversion", k, v) for k, v in inv.items()})
    ch = _field_types(CharacterizationConfig)
    sch.update({f"characterization.{k}": ("characterization", k, ch[k]) for k in _CHAR_KEYS})
    sch["run.deterministic"] = ("run", "deterministic", "bool")
    sch["nonlocal.enabled"] = ("run", "nonlocal_source", "bool")
    sch["nonlocal.weights"] = ("run", "nonlocal_weights", "floats")
    sch["nonlocal.spacing"] = ("run", "nonlocal_spacing", "int")
    sch["output.store_oracle"] = ("run", "store_oracle", "bool")
    return sch


SCHEMA = _schema()


def parse_config_text(text: str, path=None) -> RunConfig:
    sections: dict[str, dict] = {s: {} for s in ("domain", "time", "potential", "inversion",
                                                  "characterization", "run")}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, path)
        seen[key] = lineno
        section, name, typ = SCHEMA[key]
        try:
            if typ == "floats":
                conv = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                conv = _convert(typ, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, path) from None
        sections[section][name] = (conv, lineno)
    return _build(sections, path)


def _values(sec: dict) -> dict:
    return {k: v for k, (v, _) in sec.items()}


def _first_line(sec: dict):
    return min((ln for _, ln in sec.values()), default=None)


def _build(sections: dict, path) -> RunConfig:
    if "kind" not in sections["domain"]:
        raise ConfigError("missing required key 'domain.kind'", None, path)
    if "T" not in sections["time"]:
        raise ConfigError("missing required key 'time.T'", None, path)

    def make(cls, name, **extra):
        sec = sections[name]
        try:
            return cls(**_values(sec), **extra)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid {name} block: {exc}", _first_line(sec), path) from None

    domain = make(DomainSpec, "domain")
    T = sections["time"]["T"][0]
    try:
        domain.check_horizon(T)
        domain.n_tau(T)
    except ValueError as exc:
        raise ConfigError(f"invalid horizon: {exc}", sections["time"]["T"][1], path) from None
    pot = make(PotentialSpec, "potential")
    if pot.kind not in ("zero", "constant", "gaussian", "file"):
        raise ConfigError(f"unknown potential kind {pot.kind!r}", sections["potential"]["kind"][1], path)
    if pot.kind == "file" and not pot.file:
        raise ConfigError("potential.kind = file needs potential.file", sections["potential"]["kind"][1], path)
    inv = make(InversionConfig, "inversion")
    char = make(CharacterizationConfig, "characterization", inversion=inv)
    run = _values(sections["run"])
    try:
        cfg = RunConfig(domain, T, pot, inversion=inv, characterization=char,
                        base_dir=None if path is None else str(Path(path).parent), **run)
        if cfg.noise_level < 0:
            raise ValueError("noise.level must be non-negative")
        if cfg.seed < 0:
            raise ValueError("noise.seed must be non-negative")
        cfg.stencil() if cfg.nonlocal_source else NonlocalStencil(tuple(cfg.nonlocal_weights),
                                                                  cfg.nonlocal_spacing)
    except ValueError as exc:
        raise ConfigError(str(exc), _first_line(sections["run"]), path) from None
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not valid UTF-8: {exc}", None, p) from None
    return parse_config_text(text, p)
