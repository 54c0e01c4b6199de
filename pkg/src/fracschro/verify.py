"""Randomised checks of the exact discrete identities, collected into a report."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .forward import OperatorMatrix, apply, energy, quadratic_form
from .fractional import Field, apply_frac, l2_inner
from .measurement import SourceBasis, gram_matrix, integral_identity_residual
from .spectral import Spectrum


@dataclass
class Check:
    name: str
    max_residual: float
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return bool(self.max_residual < self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def random_bandlimited(spectrum: Spectrum, rng: np.random.Generator) -> Field:
    return Field.from_coeffs(spectrum, rng.standard_normal(spectrum.num_modes))


def random_source(basis: SourceBasis, rng: np.random.Generator) -> Field:
    return basis.combine(rng.standard_normal(basis.count))


def check_orthonormality(spectrum: Spectrum, tol: float = 1e-10) -> Check:
    res, _ = spectrum.orthonormality_residual()
    return Check("orthonormality", res, tol, 1)


def check_integration_by_parts(spectrum: Spectrum, s: float, rng, trials: int, tol: float = 1e-10) -> Check:
    """(A^s u, v) = (A^{s/2} u, A^{s/2} v) = (u, A^s v) for random band-limited u, v."""
    worst = 0.0
    for _ in range(trials):
        u, v = random_bandlimited(spectrum, rng), random_bandlimited(spectrum, rng)
        left = l2_inner(apply_frac(u, s), v)
        mid = l2_inner(apply_frac(u, s, 0.5), apply_frac(v, s, 0.5))
        right = l2_inner(u, apply_frac(v, s))
        worst = max(worst, abs(left - mid), abs(mid - right))
    return Check("integration_by_parts", worst, tol, trials)


def check_semigroup(spectrum: Spectrum, s: float, rng, trials: int, tol: float = 1e-10) -> Check:
    worst = 0.0
    for _ in range(trials):
        u = random_bandlimited(spectrum, rng)
        s1 = s * rng.uniform(0.1, 0.9)
        s2 = s - s1
        two_step = apply_frac(apply_frac(u, s1), s2)
        one_step = apply_frac(u, s1, s / s1)
        worst = max(worst, float(np.max(np.abs(two_step.grid_values - one_step.grid_values))))
    return Check("semigroup", worst, tol, trials)


def check_mean_annihilation(spectrum: Spectrum, s: float, rng, trials: int, tol: float = 1e-12) -> Check:
    one = np.ones(spectrum.num_points)
    worst = max(abs(l2_inner(apply_frac(random_bandlimited(spectrum, rng), s), one, spectrum)) for _ in range(trials))
    return Check("mean_annihilation", worst, tol, trials)


def check_energy_identity(op: OperatorMatrix, rng, trials: int, tol: float = 1e-10) -> Check:
    worst = 0.0
    for _ in range(trials):
        u = random_bandlimited(op.spectrum, rng)
        e = energy(op, u)
        worst = max(worst, abs(l2_inner(apply(op, u), u) - e), abs(quadratic_form(op, u) - e))
    return Check("energy_identity", worst, tol, trials)


def check_self_adjointness(op: OperatorMatrix, basis: SourceBasis, tol: float = 1e-10) -> Check:
    """max |(f_i, L f_j) - (L f_i, f_j)| / (||f_i|| ||f_j||) over basis pairs."""
    g = gram_matrix(op, basis).matrix
    norms = np.sqrt(np.diag(basis.mass_matrix()))
    res = np.abs(g - g.T) / np.outer(norms, norms)
    return Check("self_adjointness", float(res.max()), tol, 1)


def check_integral_identity(
    op1: OperatorMatrix, op2: OperatorMatrix, basis: SourceBasis, rng, trials: int, tol: float = 1e-10
) -> Check:
    """Residual relative to |((V1 - V2) u1, u2)| + 1e-14."""
    worst = 0.0
    for _ in range(trials):
        f1, f2 = random_source(basis, rng), random_source(basis, rng)
        res, _, rhs = integral_identity_residual(op1, op2, f1, f2, basis.region, return_terms=True)
        worst = max(worst, res / (abs(rhs) + 1e-14))
    return Check("integral_identity", worst, tol, trials)


def run_suite(
    spectrum: Spectrum,
    s: float,
    op1: OperatorMatrix,
    op2: OperatorMatrix,
    basis: SourceBasis,
    rng: np.random.Generator,
    trials: int = 100,
    tol: float = 1e-10,
) -> list[Check]:
    checks = [
        check_orthonormality(spectrum, tol),
        check_integration_by_parts(spectrum, s, rng, trials, tol),
        check_semigroup(spectrum, s, rng, trials, tol),
        check_mean_annihilation(spectrum, s, rng, trials),
        check_energy_identity(op1, rng, trials, tol),
        check_energy_identity(op2, rng, trials, tol),
        check_self_adjointness(op1, basis, tol),
        check_self_adjointness(op2, basis, tol),
        check_integral_identity(op1, op2, basis, rng, trials, tol),
    ]
    checks[4].name = "energy_identity_V1"
    checks[5].name = "energy_identity_V2"
    checks[6].name = "self_adjointness_V1"
    checks[7].name = "self_adjointness_V2"
    return checks
