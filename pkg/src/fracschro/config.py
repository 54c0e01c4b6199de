"""Experiment configuration: strict JSON -> dataclasses, plus builders that
turn the parsed specs into spectra, regions, potentials and targets.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np

from .forward import Potential
from .fractional import load_field
from .spectral import Region, Spectrum, build_region, build_torus_spectrum, load_spectrum


class ConfigError(ValueError):
    pass


@dataclass
class ManifoldSpec:
    kind: Literal["torus", "file"] = "torus"
    dim: int = 1
    circumferences: list[float] = field(default_factory=lambda: [2 * np.pi])
    modes_per_axis: int = 20
    grid_per_axis: int = 64
    path: Optional[str] = None


@dataclass
class RegionSpec:
    kind: Literal["box", "ball", "indices", "mask_file"] = "box"
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    center: list[float] = field(default_factory=list)
    radius: float = 0.0
    indices: list[int] = field(default_factory=list)
    path: Optional[str] = None
    name: str = "O"


@dataclass
class TrigTerm:
    freq: list[int]
    cos: float = 0.0
    sin: float = 0.0


@dataclass
class PotentialSpec:
    name: str = "V"
    kind: Literal["constant", "bump", "trig", "file"] = "constant"
    value: float = 1.0
    base: float = 0.0
    amplitude: float = 0.0
    center: list[float] = field(default_factory=list)
    radius: float = 1.0
    terms: list[TrigTerm] = field(default_factory=list)
    path: Optional[str] = None


@dataclass
class BasisSpec:
    kind: Literal["bump", "windowed-mode"] = "bump"
    m: int = 24


@dataclass
class TargetSpec:
    name: str
    kind: Literal["constant", "sign_change", "mode", "file"] = "constant"
    value: float = 1.0
    k: int = 1
    path: Optional[str] = None


@dataclass
class VerifySpec:
    trials: int = 100
    tolerance: float = 1e-10


@dataclass
class MeasureSpec:
    potential: Optional[str] = None
    noise: float = 0.0


@dataclass
class RungeSpec:
    alphas: list[float] = field(default_factory=lambda: [10.0**-k for k in range(1, 11)])
    targets: list[TargetSpec] = field(default_factory=list)
    norm: Literal["L2", "Hs"] = "L2"


@dataclass
class InversionSpec:
    mode: Literal["linearized", "gauss-newton"] = "gauss-newton"
    support: Literal["inside", "outside"] = "inside"
    bundle: str = "bundle"
    bundle2: Optional[str] = None
    init: Optional[PotentialSpec] = None
    ground_truth: Optional[str] = None
    unknown_points: Optional[list[int]] = None
    alpha: float = 1e-10
    num_probes: int = 20
    beta: float = 0.0
    max_iter: int = 30
    tol: float = 1e-20


@dataclass
class ExperimentConfig:
    manifold: ManifoldSpec = field(default_factory=ManifoldSpec)
    s: float = 0.5
    region: RegionSpec = field(default_factory=RegionSpec)
    potentials: list[PotentialSpec] = field(default_factory=list)
    basis: BasisSpec = field(default_factory=BasisSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    runge: RungeSpec = field(default_factory=RungeSpec)
    inversion: InversionSpec = field(default_factory=InversionSpec)
    output_dir: str = "out"
    seed: int = 0
    base_dir: str = field(default=".", metadata={"internal": True})

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


# -- strict parsing ----------------------------------------------------------


def _parse(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union or (hasattr(types, "UnionType") and origin is getattr(types, "UnionType")):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _parse(inner[0], value, where)
    if origin is Literal:
        if value not in args:
            raise ConfigError(f"{where}: expected one of {list(args)}, got {value!r}")
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return [_parse(args[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        return _parse_dataclass(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not np.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp!r}")


def _parse_dataclass(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    kwargs = {}
    for name, f in fields.items():
        if name in data:
            kwargs[name] = _parse(hints[name], data[name], f"{where}.{name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where}.{name}: required field missing")
    return cls(**kwargs)


def parse_config(data: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    cfg = _parse_dataclass(ExperimentConfig, data, "config")
    cfg.base_dir = str(base_dir)
    if not (0.0 < cfg.s <= 1.0):
        raise ConfigError(f"config.s: must lie in (0, 1], got {cfg.s!r}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("config.seed: must be an unsigned 64-bit integer")
    m = cfg.manifold
    if m.kind == "file" and not m.path:
        raise ConfigError("config.manifold.path: required for kind 'file'")
    if cfg.basis.m < 1:
        raise ConfigError("config.basis.m: must be positive")
    if cfg.verify.trials < 1:
        raise ConfigError("config.verify.trials: must be positive")
    names = [p.name for p in cfg.potentials]
    if len(set(names)) != len(names):
        raise ConfigError("config.potentials: names must be unique")
    if any(a <= 0 for a in cfg.runge.alphas):
        raise ConfigError("config.runge.alphas: all entries must be positive")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(data, path.parent)


# -- builders ----------------------------------------------------------------


def build_spectrum(cfg: ExperimentConfig) -> Spectrum:
    m = cfg.manifold
    if m.kind == "file":
        return load_spectrum(cfg.resolve(m.path))
    return build_torus_spectrum(m.dim, m.circumferences, m.modes_per_axis, m.grid_per_axis)


def build_region_from_spec(spectrum: Spectrum, spec: RegionSpec, cfg: ExperimentConfig | None = None) -> Region:
    if spec.kind == "box":
        lo, hi = np.asarray(spec.lower, float), np.asarray(spec.upper, float)
        if lo.size != spectrum.grid.dim or hi.size != spectrum.grid.dim:
            raise ConfigError("config.region: lower/upper must match the manifold dimension")
        return build_region(spectrum, lambda x: bool(np.all((x > lo) & (x < hi))), spec.name)
    if spec.kind == "ball":
        c = np.asarray(spec.center, float)
        if c.size != spectrum.grid.dim:
            raise ConfigError("config.region.center: must match the manifold dimension")
        d = spectrum.distance(spectrum.points, c)
        return build_region(spectrum, d < spec.radius, spec.name)
    if spec.kind == "indices":
        return build_region(spectrum, spec.indices, spec.name)
    path = cfg.resolve(spec.path) if cfg else Path(spec.path)
    mask = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8).astype(bool)
    return build_region(spectrum, mask, spec.name)


def bump_profile(spectrum: Spectrum, center, radius: float) -> np.ndarray:
    """Smooth bump with peak 1 at ``center`` and support radius ``radius``."""
    c = np.asarray(center, float)
    if c.size != spectrum.grid.dim:
        raise ConfigError("bump center must match the manifold dimension")
    t = spectrum.distance(spectrum.points, c) / radius
    out = np.zeros(spectrum.num_points)
    inside = t < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def potential_values(spectrum: Spectrum, spec: PotentialSpec, cfg: ExperimentConfig | None = None) -> np.ndarray:
    x = spectrum.points
    if spec.kind == "constant":
        return np.full(spectrum.num_points, spec.value)
    if spec.kind == "bump":
        return spec.base + spec.amplitude * bump_profile(spectrum, spec.center, spec.radius)
    if spec.kind == "trig":
        if spectrum.periods is None:
            raise ConfigError("trig potentials need a torus manifold")
        k = 2 * np.pi / np.asarray(spectrum.periods)
        v = np.full(spectrum.num_points, spec.base)
        for term in spec.terms:
            phase = x @ (np.asarray(term.freq, float) * k)
            v += term.cos * np.cos(phase) + term.sin * np.sin(phase)
        return v
    path = cfg.resolve(spec.path) if cfg else Path(spec.path)
    return load_field(spectrum, path)


def build_potential(spectrum: Spectrum, spec: PotentialSpec, cfg: ExperimentConfig | None = None) -> Potential:
    return Potential(spectrum, potential_values(spectrum, spec, cfg))


def target_values(spectrum: Spectrum, region: Region, spec: TargetSpec, cfg: ExperimentConfig | None = None) -> np.ndarray:
    if spec.kind == "constant":
        return np.full(region.count, spec.value)
    if spec.kind == "mode":
        if not 0 <= spec.k < spectrum.num_modes:
            raise ConfigError(f"target {spec.name}: mode index out of range")
        return region.restrict(spectrum.modes[spec.k])
    if spec.kind == "sign_change":
        return sign_change_profile(spectrum, region)
    path = cfg.resolve(spec.path) if cfg else Path(spec.path)
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f8").astype(float)
    if data.size != region.count:
        raise ConfigError(
            f"target {spec.name}: file has {data.size} samples, region has {region.count} points"
        )
    return data


def sign_change_profile(spectrum: Spectrum, region: Region) -> np.ndarray:
    """cos(pi t), t running from 0 to 1 across the region along the first axis."""
    x0 = region.restrict(spectrum.points[:, 0])
    span = x0.max() - x0.min()
    t = (x0 - x0.min()) / span if span > 0 else np.zeros_like(x0)
    return np.cos(np.pi * t)
