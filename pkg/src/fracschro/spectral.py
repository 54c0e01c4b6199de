"""Discrete spectral data of closed manifolds.

A :class:`Spectrum` bundles the first ``K`` Laplace-Beltrami eigenvalues, the
eigenfunctions sampled on a quadrature grid and the quadrature weights. Flat
tori are built analytically; anything else is ingested from files written by
an external eigensolver (see :func:`load_spectrum`).
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

ORTHONORMALITY_TOL = 1e-10
LOAD_ORTHONORMALITY_TOL = 1e-6
ZERO_EIGENVALUE_TOL = 1e-10
WEIGHT_SUM_RTOL = 1e-12

_F64 = np.dtype("<f8")


class SpectrumError(ValueError):
    """Raised when spectral data violates one of the Spectrum invariants."""


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray  # (P, dim)
    weights: np.ndarray  # (P,)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float)
        if pts.ndim != 2 or w.ndim != 1 or pts.shape[0] != w.shape[0]:
            raise SpectrumError("grid points and weights have inconsistent shapes")
        if not np.all(w > 0):
            raise SpectrumError("quadrature weights must be strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues, sampled eigenfunctions (row k = phi_k on the grid) and grid.

    ``periods`` is set for torus backends and used for periodic distances;
    ``labels`` records the frequency tuple and cos/sin kind of each torus mode.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    grid: Grid
    volume: float
    name: str = "spectrum"
    periods: tuple[float, ...] | None = None
    labels: tuple = field(default=(), repr=False)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        phi = np.array(self.modes, dtype=float)
        lam.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "modes", phi)
        object.__setattr__(self, "volume", float(self.volume))
        if phi.ndim != 2 or phi.shape != (lam.shape[0], self.grid.size):
            raise SpectrumError(
                f"modes shape {phi.shape} does not match K={lam.shape[0]}, P={self.grid.size}"
            )

    @property
    def num_modes(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def num_points(self) -> int:
        return self.grid.size

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def orthonormality_residual(self) -> tuple[float, tuple[int, int]]:
        """Max of |sum_p w_p phi_j phi_k - delta_jk| and the worst pair (j, k)."""
        gram = (self.modes * self.weights) @ self.modes.T
        dev = np.abs(gram - np.eye(self.num_modes))
        j, k = np.unravel_index(int(np.argmax(dev)), dev.shape)
        return float(dev[j, k]), (int(min(j, k)), int(max(j, k)))

    def validate(self, orthonormality_tol: float = ORTHONORMALITY_TOL) -> None:
        lam = self.eigenvalues
        if lam.size == 0:
            raise SpectrumError("spectrum has no modes")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(self.modes)):
            raise SpectrumError("spectrum contains non-finite values")
        if np.any(np.diff(lam) < 0):
            raise SpectrumError("eigenvalues not ascending")
        if abs(lam[0]) > ZERO_EIGENVALUE_TOL:
            raise SpectrumError(f"lambda_0 = {lam[0]!r} is not zero")
        if np.any(lam < 0):
            raise SpectrumError("eigenvalues must be nonnegative")
        vol = self.grid.volume
        if abs(vol - self.volume) > WEIGHT_SUM_RTOL * self.volume:
            raise SpectrumError(
                f"weights sum to {vol!r}, declared volume is {self.volume!r}"
            )
        const = self.volume ** -0.5
        if np.max(np.abs(self.modes[0] - const)) > orthonormality_tol:
            raise SpectrumError("mode 0 is not the constant vol^{-1/2}")
        res, (j, k) = self.orthonormality_residual()
        if res > orthonormality_tol:
            raise SpectrumError(
                f"orthonormality violated: worst pair ({j}, {k}) with residual {res:.3e}"
            )

    def periodic_delta(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Coordinate differences x - y, wrapped to the fundamental cell for tori."""
        d = np.asarray(x, float) - np.asarray(y, float)
        if self.periods is not None:
            c = np.asarray(self.periods)
            d = d - c * np.round(d / c)
        return d

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.periodic_delta(x, y), axis=-1)


def _torus_frequencies(dim: int, n: int) -> list[tuple[tuple[int, ...], int]]:
    """Canonical (frequency, kind) labels; kind 0 = cos, 1 = sin.

    Each pair {m, -m} is represented once, by the tuple whose first nonzero
    entry is positive.
    """
    labels = [((0,) * dim, 0)]
    for m in itertools.product(range(-n, n + 1), repeat=dim):
        nz = [v for v in m if v != 0]
        if not nz or nz[0] < 0:
            continue
        labels.append((m, 0))
        labels.append((m, 1))
    return labels


def build_torus_spectrum(
    dim: int,
    circumferences: float | Sequence[float],
    modes_per_axis: int,
    grid_per_axis: int,
) -> Spectrum:
    """Analytic spectrum of the flat torus prod_i R / (c_i Z).

    Frequencies ``|m_i| <= modes_per_axis`` are kept, giving ``(2N+1)**dim``
    real cos/sin modes. Ties in the eigenvalue are ordered by frequency tuple,
    then cos before sin. The uniform grid integrates products of retained
    modes exactly when ``grid_per_axis >= 2*modes_per_axis + 1``.
    """
    if dim not in (1, 2):
        raise SpectrumError("torus backend supports dim 1 or 2")
    circ = np.atleast_1d(np.asarray(circumferences, dtype=float))
    if circ.size == 1 and dim == 2:
        circ = np.repeat(circ, 2)
    if circ.size != dim:
        raise SpectrumError(f"expected {dim} circumferences, got {circ.size}")
    if np.any(circ <= 0) or not np.all(np.isfinite(circ)):
        raise SpectrumError("circumferences must be positive")
    n, g = int(modes_per_axis), int(grid_per_axis)
    if n < 1:
        raise SpectrumError("modes_per_axis must be a positive integer")
    if g < 2 * n + 1:
        raise SpectrumError(
            f"grid_per_axis={g} below the quadrature exactness bound 2*modes_per_axis+1={2 * n + 1}"
        )

    axes = [np.arange(g) * (c / g) for c in circ]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([a.ravel() for a in mesh], axis=1)
    volume = float(np.prod(circ))
    weights = np.full(points.shape[0], volume / points.shape[0])

    labels = _torus_frequencies(dim, n)
    wavenum = 2.0 * np.pi / circ
    lam = [float(np.sum((np.array(m) * wavenum) ** 2)) for m, _ in labels]
    order = sorted(range(len(labels)), key=lambda i: (lam[i], labels[i][0], labels[i][1]))
    labels = [labels[i] for i in order]
    lam = np.array([lam[i] for i in order])

    modes = np.empty((len(labels), points.shape[0]))
    amp = np.sqrt(2.0 / volume)
    for row, (m, kind) in enumerate(labels):
        if not any(m):
            modes[row] = volume ** -0.5
            continue
        phase = points @ (np.array(m) * wavenum)
        modes[row] = amp * (np.cos(phase) if kind == 0 else np.sin(phase))

    spec = Spectrum(
        eigenvalues=lam,
        modes=modes,
        grid=Grid(points, weights),
        volume=volume,
        name=f"torus{dim}d",
        periods=tuple(float(c) for c in circ),
        labels=tuple(labels),
    )
    spec.validate()
    return spec


# -- file backend ------------------------------------------------------------

_MANIFEST_KEYS = {
    "name",
    "dim",
    "volume",
    "num_modes",
    "num_points",
    "eigenvalues_file",
    "modes_file",
    "weights_file",
    "points_file",
}
_OPTIONAL_KEYS = {"periods"}


def _write_raw(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype=_F64).tobytes(order="C"))


def _read_raw(path: Path, count: int) -> np.ndarray:
    if not path.is_file():
        raise SpectrumError(f"missing array file {path}")
    data = np.frombuffer(path.read_bytes(), dtype=_F64)
    if data.size != count:
        raise SpectrumError(f"{path.name}: expected {count} float64 values, found {data.size}")
    return data.astype(float)


def save_spectrum(spectrum: Spectrum, directory: str | Path, stem: str = "spectrum") -> Path:
    """Write manifest JSON plus little-endian float64 raw arrays; returns manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "eigenvalues_file": f"{stem}_eigenvalues.f64",
        "modes_file": f"{stem}_modes.f64",
        "weights_file": f"{stem}_weights.f64",
        "points_file": f"{stem}_points.f64",
    }
    _write_raw(d / files["eigenvalues_file"], spectrum.eigenvalues)
    _write_raw(d / files["modes_file"], spectrum.modes)
    _write_raw(d / files["weights_file"], spectrum.weights)
    _write_raw(d / files["points_file"], spectrum.points)
    manifest = {
        "name": spectrum.name,
        "dim": spectrum.grid.dim,
        "volume": spectrum.volume,
        "num_modes": spectrum.num_modes,
        "num_points": spectrum.num_points,
        **files,
    }
    if spectrum.periods is not None:
        manifest["periods"] = list(spectrum.periods)
    path = d / f"{stem}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_spectrum(manifest_path: str | Path) -> Spectrum:
    """Read a spectrum written by :func:`save_spectrum` (or an external tool).

    All invariants are re-checked; orthonormality is accepted up to 1e-6 since
    externally computed eigenvectors are rarely exact to rounding.
    """
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise SpectrumError(f"spectrum manifest {path} not found") from None
    except json.JSONDecodeError as exc:
        raise SpectrumError(f"malformed manifest {path}: {exc}") from None
    if not isinstance(manifest, dict):
        raise SpectrumError("malformed manifest: expected a JSON object")
    missing = _MANIFEST_KEYS - manifest.keys()
    unknown = manifest.keys() - _MANIFEST_KEYS - _OPTIONAL_KEYS
    if missing:
        raise SpectrumError(f"malformed manifest: missing {sorted(missing)}")
    if unknown:
        raise SpectrumError(f"malformed manifest: unknown keys {sorted(unknown)}")
    try:
        k, p, dim = int(manifest["num_modes"]), int(manifest["num_points"]), int(manifest["dim"])
        volume = float(manifest["volume"])
    except (TypeError, ValueError):
        raise SpectrumError("malformed manifest: non-numeric size fields") from None
    if k < 1 or p < 1 or dim < 1:
        raise SpectrumError("malformed manifest: sizes must be positive")

    base = path.parent
    lam = _read_raw(base / manifest["eigenvalues_file"], k)
    modes = _read_raw(base / manifest["modes_file"], k * p).reshape(k, p)
    weights = _read_raw(base / manifest["weights_file"], p)
    points = _read_raw(base / manifest["points_file"], p * dim).reshape(p, dim)
    periods = manifest.get("periods")
    spec = Spectrum(
        eigenvalues=lam,
        modes=modes,
        grid=Grid(points, weights),
        volume=volume,
        name=str(manifest["name"]),
        periods=tuple(float(c) for c in periods) if periods is not None else None,
    )
    spec.validate(orthonormality_tol=LOAD_ORTHONORMALITY_TOL)
    return spec


def export_eigenvalues_csv(spectrum: Spectrum, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "eigenvalue"])
        for k, lam in enumerate(spectrum.eigenvalues):
            writer.writerow([k, repr(float(lam))])


# -- regions -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Region:
    mask: np.ndarray
    name: str = "O"

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.ndim != 1:
            raise ValueError("region mask must be one-dimensional")
        if not m.any():
            raise ValueError("region is empty")
        if m.all():
            raise ValueError("region covers the whole grid; a proper subset is required")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def complement(self, name: str | None = None) -> "Region":
        return Region(~self.mask, name or f"M\\{self.name}")

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[..., self.mask]

    def extend_by_zero(self, region_values: np.ndarray) -> np.ndarray:
        region_values = np.asarray(region_values, dtype=float)
        out = np.zeros(region_values.shape[:-1] + (self.mask.size,))
        out[..., self.mask] = region_values
        return out


def build_region(
    spectrum: Spectrum,
    predicate: Callable[[np.ndarray], bool] | Iterable[int] | np.ndarray,
    name: str = "O",
) -> Region:
    """Region from a coordinate predicate, an index list or a boolean mask."""
    p = spectrum.num_points
    if callable(predicate):
        mask = np.array([bool(predicate(x)) for x in spectrum.points])
    else:
        arr = np.asarray(list(predicate) if not isinstance(predicate, np.ndarray) else predicate)
        if arr.dtype == bool:
            if arr.shape != (p,):
                raise ValueError(f"mask length {arr.shape} does not match grid size {p}")
            mask = arr.copy()
        else:
            idx = arr.astype(int).ravel()
            if idx.size and (idx.min() < 0 or idx.max() >= p):
                raise ValueError("region index out of range")
            mask = np.zeros(p, dtype=bool)
            mask[idx] = True
    return Region(mask, name)
