"""Galerkin solver for ((-Delta_g)^s + V) u = f in the truncated eigenbasis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .fractional import Field, _check_s, analyze, frac_symbol, l2_inner
from .spectral import Spectrum

ZERO_POTENTIAL_TOL = 1e-14
COMPATIBILITY_TOL = 1e-10
RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


class IncompatibleSourceError(ValueError):
    """Source with nonzero mean while the potential vanishes identically."""


@dataclass(frozen=True, eq=False)
class Potential:
    spectrum: Spectrum
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.spectrum.num_points,):
            raise ValueError(
                f"potential has {v.shape} samples, grid has {self.spectrum.num_points} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("potential has non-finite samples")
        if np.any(v < 0):
            p = int(np.argmin(v))
            raise ValueError(
                f"Potential nonnegativity violated: V[{p}] = {v[p]!r} < 0"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values < ZERO_POTENTIAL_TOL))


def potential_matrix(spectrum: Spectrum, values: np.ndarray) -> np.ndarray:
    """M_V[j, k] = sum_p w_p V_p phi_j(x_p) phi_k(x_p)."""
    phi = spectrum.modes
    m = (phi * (spectrum.weights * values)) @ phi.T
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: np.ndarray
    potential: Potential
    s: float
    _factor: tuple = field(default=None, repr=False)

    @property
    def spectrum(self) -> Spectrum:
        return self.potential.spectrum

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def condition_estimate(self) -> float:
        ev = np.linalg.eigvalsh(self._active_block())
        return float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")

    def _active(self) -> slice:
        # constants are in the kernel when V vanishes; drop mode 0
        return slice(1, None) if self.potential.is_zero else slice(None)

    def _active_block(self) -> np.ndarray:
        a = self._active()
        return self.matrix[a, a]

    def factor(self):
        if self._factor is None:
            block = self._active_block()
            try:
                fac = linalg.cho_factor(block, lower=True, check_finite=True)
            except linalg.LinAlgError:
                cond = np.linalg.cond(block)
                raise SolverError(
                    f"Cholesky factorization failed (condition estimate {cond:.3e})"
                ) from None
            object.__setattr__(self, "_factor", fac)
        return self._factor


def assemble(spectrum: Spectrum, V: Potential, s: float) -> OperatorMatrix:
    s = _check_s(s)
    if V.spectrum is not spectrum and V.spectrum.num_points != spectrum.num_points:
        raise ValueError("potential sampled on a different grid")
    mat = np.diag(frac_symbol(spectrum, s)) + potential_matrix(spectrum, V.values)
    return OperatorMatrix(mat, V, s)


def _solve_coeffs(op: OperatorMatrix, cf: np.ndarray) -> np.ndarray:
    """Solve A c_u = c_f for one (K,) or many (K, n) right-hand sides."""
    if op.potential.is_zero:
        means = np.atleast_1d(cf[0]) * op.spectrum.volume ** 0.5
        if np.any(np.abs(means) > COMPATIBILITY_TOL):
            raise IncompatibleSourceError(
                f"V vanishes identically; source must have zero mean, got "
                f"(f, 1) = {float(np.max(np.abs(means))):.3e}"
            )
    a = op._active()
    cu = np.zeros_like(cf, dtype=float)
    fac = op.factor()
    cu[a] = linalg.cho_solve(fac, cf[a])
    res = op.matrix[a, a] @ cu[a] - cf[a]
    scale = np.linalg.norm(cf[a], axis=0)
    bad = np.linalg.norm(res, axis=0) > RESIDUAL_RTOL * np.maximum(scale, 1e-300)
    if np.any(bad & (scale > 0)):
        # one step of iterative refinement before giving up
        cu[a] -= linalg.cho_solve(fac, res)
        res = op.matrix[a, a] @ cu[a] - cf[a]
        if np.any((np.linalg.norm(res, axis=0) > RESIDUAL_RTOL * scale) & (scale > 0)):
            raise SolverError(
                f"solve residual above tolerance (condition estimate {op.condition_estimate():.3e})"
            )
    return cu


def solve(op: OperatorMatrix, f: Field) -> Field:
    cf = f.spectral_coeffs
    return Field.from_coeffs(op.spectrum, _solve_coeffs(op, cf))


def solve_many(op: OperatorMatrix, sources: np.ndarray) -> np.ndarray:
    """Solution coefficients for a stack of grid sources of shape (n, P); returns (n, K)."""
    cf = analyze(op.spectrum, np.atleast_2d(sources))
    return _solve_coeffs(op, cf.T).T


def solve_adjoint(op: OperatorMatrix, rhs: Field) -> Field:
    """Solution of the adjoint problem; the operator is self-adjoint, so this is :func:`solve`."""
    return solve(op, rhs)


def apply(op: OperatorMatrix, u: Field) -> Field:
    return Field.from_coeffs(op.spectrum, op.matrix @ u.spectral_coeffs)


def energy(op: OperatorMatrix, u: Field) -> float:
    """sum_k lambda_k^s c_k^2 + sum_p w_p V_p u_p^2."""
    c = u.spectral_coeffs
    vals = u.grid_values
    sp = op.spectrum
    return float(
        np.sum(frac_symbol(sp, op.s) * c**2) + np.sum(sp.weights * op.potential.values * vals**2)
    )


def quadratic_form(op: OperatorMatrix, u: Field) -> float:
    c = u.spectral_coeffs
    return float(c @ op.matrix @ c)


def coefficient_decay(u: Field) -> list[float]:
    """Max |c_k| over successive eigenvalue shells; a discrete smoothness diagnostic."""
    lam = u.spectrum.eigenvalues
    c = np.abs(u.spectral_coeffs)
    return [float(c[lam == val].max()) for val in np.unique(lam)]


def solver_diagnostics(op: OperatorMatrix, f: Field | None = None) -> dict:
    diag = {
        "num_modes": op.spectrum.num_modes,
        "s": op.s,
        "zero_potential": op.potential.is_zero,
        "symmetry_residual": op.symmetry_residual(),
        "condition_estimate": op.condition_estimate(),
    }
    if f is not None:
        u = solve(op, f)
        cf = f.spectral_coeffs
        diag["relative_residual"] = float(
            np.linalg.norm(op.matrix @ u.spectral_coeffs - cf) / max(np.linalg.norm(cf), 1e-300)
        )
        diag["coefficient_decay"] = coefficient_decay(u)
        diag["energy"] = energy(op, u)
        diag["source_mean"] = l2_inner(f, np.ones(op.spectrum.num_points))
    return diag


def write_diagnostics(diag: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
