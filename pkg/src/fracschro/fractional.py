"""Fields on a spectrum and spectral functions of the Laplace-Beltrami operator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import Spectrum

CONSISTENCY_TOL = 1e-10


def _check_s(s: float) -> float:
    s = float(s)
    if not (0.0 < s <= 1.0):
        raise ValueError(f"fractional order s={s!r} must lie in (0, 1]")
    return s


@dataclass(frozen=True, eq=False)
class Field:
    """Real function on the grid of ``spectrum``.

    Either representation may be given; the other is derived on demand. When
    both are given they must agree (synthesis of the coefficients reproduces
    the samples), so fields that are not band-limited, such as region
    supported sources, are stored by their samples only.
    """

    spectrum: Spectrum
    values: np.ndarray | None = None
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        if self.values is None and self.coeffs is None:
            raise ValueError("a Field needs grid values or spectral coefficients")
        if self.values is not None:
            v = np.array(self.values, dtype=float)
            if v.shape != (self.spectrum.num_points,):
                raise ValueError(
                    f"field has {v.shape} samples, grid has {self.spectrum.num_points} points"
                )
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        if self.coeffs is not None:
            c = np.array(self.coeffs, dtype=float)
            if c.shape != (self.spectrum.num_modes,):
                raise ValueError(
                    f"field has {c.shape} coefficients, spectrum has {self.spectrum.num_modes} modes"
                )
            c.setflags(write=False)
            object.__setattr__(self, "coeffs", c)
        if self.values is not None and self.coeffs is not None:
            gap = np.max(np.abs(self.coeffs @ self.spectrum.modes - self.values))
            if gap > CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(self.values)))):
                raise ValueError(f"field representations disagree by {gap:.3e}")

    @classmethod
    def from_coeffs(cls, spectrum: Spectrum, coeffs: np.ndarray) -> "Field":
        c = np.asarray(coeffs, dtype=float)
        return cls(spectrum, values=c @ spectrum.modes, coeffs=c)

    @classmethod
    def constant(cls, spectrum: Spectrum, value: float = 1.0) -> "Field":
        c = np.zeros(spectrum.num_modes)
        c[0] = value * spectrum.volume ** 0.5
        return cls(spectrum, values=np.full(spectrum.num_points, float(value)), coeffs=c)

    @property
    def grid_values(self) -> np.ndarray:
        return self.values if self.values is not None else synthesize(self.spectrum, self.coeffs)

    @property
    def spectral_coeffs(self) -> np.ndarray:
        return self.coeffs if self.coeffs is not None else analyze(self.spectrum, self.values)


def _values_of(spectrum: Spectrum, u) -> np.ndarray:
    if isinstance(u, Field):
        if u.spectrum is not spectrum and u.spectrum.num_points != spectrum.num_points:
            raise ValueError("field lives on a different grid")
        return u.grid_values
    v = np.asarray(u, dtype=float)
    if v.shape[-1:] != (spectrum.num_points,):
        raise ValueError(f"expected {spectrum.num_points} grid samples, got {v.shape}")
    return v


def analyze(spectrum: Spectrum, u) -> np.ndarray:
    """Coefficients c_k = sum_p w_p u(x_p) phi_k(x_p). Accepts (..., P) stacks."""
    v = _values_of(spectrum, u)
    return (v * spectrum.weights) @ spectrum.modes.T


def synthesize(spectrum: Spectrum, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1:] != (spectrum.num_modes,):
        raise ValueError(f"expected {spectrum.num_modes} coefficients, got {c.shape}")
    return c @ spectrum.modes


def frac_symbol(spectrum: Spectrum, exponent: float) -> np.ndarray:
    """lambda_k ** exponent with 0 ** a := 0 for the zero eigenvalue."""
    lam = spectrum.eigenvalues
    out = np.zeros_like(lam)
    pos = lam > 0
    out[pos] = lam[pos] ** exponent
    return out


def apply_frac(u: Field, s: float, power_multiplier: float = 1.0) -> Field:
    """(-Delta_g)^(s * power_multiplier) u by scaling spectral coefficients."""
    s = _check_s(s)
    if power_multiplier <= 0:
        raise ValueError("power_multiplier must be positive")
    c = u.spectral_coeffs * frac_symbol(u.spectrum, s * power_multiplier)
    return Field.from_coeffs(u.spectrum, c)


def l2_inner(u, v, spectrum: Spectrum | None = None) -> float:
    if spectrum is None:
        spectrum = u.spectrum if isinstance(u, Field) else v.spectrum
    a = _values_of(spectrum, u)
    b = _values_of(spectrum, v)
    return float(np.sum(spectrum.weights * a * b))


def l2_norm(u, spectrum: Spectrum | None = None) -> float:
    return l2_inner(u, u, spectrum) ** 0.5


def sobolev_norm(u: Field, a: float) -> float:
    """Inhomogeneous norm (sum_k (1 + lambda_k)^a c_k^2)^(1/2)."""
    if a < 0:
        raise ValueError("Sobolev exponent must be nonnegative")
    c = u.spectral_coeffs
    return float(np.sqrt(np.sum((1.0 + u.spectrum.eigenvalues) ** a * c**2)))


# -- field files -------------------------------------------------------------


def save_field_binary(values: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(np.ascontiguousarray(values, dtype="<f8").tobytes())


def save_field_csv(spectrum: Spectrum, columns: dict[str, np.ndarray], path: str | Path) -> None:
    """CSV with point coordinates x0..x{d-1} followed by the named value columns."""
    dim = spectrum.grid.dim
    names = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dim)] + names)
        for p in range(spectrum.num_points):
            row = [repr(float(x)) for x in spectrum.points[p]]
            row += [repr(float(columns[n][p])) for n in names]
            writer.writerow(row)


def load_field(spectrum: Spectrum, path: str | Path, column: str | None = None) -> np.ndarray:
    """Grid samples from a raw float64 file or a CSV written by :func:`save_field_csv`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"field file {path} not found")
    p = spectrum.num_points
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty CSV")
        header, body = rows[0], rows[1:]
        dim = spectrum.grid.dim
        value_cols = header[dim:]
        if not value_cols:
            raise ValueError(f"{path}: no value column")
        name = column if column is not None else value_cols[0]
        if name not in header:
            raise ValueError(f"{path}: column {name!r} not found")
        j = header.index(name)
        values = np.array([float(r[j]) for r in body])
    else:
        values = np.frombuffer(path.read_bytes(), dtype="<f8").astype(float)
    if values.shape != (p,):
        raise ValueError(f"{path}: field has {values.size} samples, grid has {p} points")
    return values
