"""Tikhonov-regularised Runge approximation: region supported sources whose
solutions, restricted to the region, approximate a prescribed target.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .forward import OperatorMatrix, energy, quadratic_form, solve_adjoint
from .fractional import Field, frac_symbol
from .measurement import SourceBasis, gram_matrix

COND_LIMIT = 1e15
SVD_RTOL = 1e-12
MONOTONE_SLACK = 1e-12
DEFAULT_ALPHAS = tuple(10.0**-k for k in range(1, 11))


def misfit_matrix(basis: SourceBasis, norm: str = "L2", s: float | None = None) -> np.ndarray:
    """Symmetric matrix N with ||x||^2 = x^T N x for region samples x.

    ``L2`` is the weighted L2(O) norm. ``Hs`` extends x by zero to the whole
    manifold and takes the (1 + lambda)^s weighted norm of the truncated
    expansion; on region vectors with more points than modes it is only a
    seminorm.
    """
    sp, region = basis.spectrum, basis.region
    w = sp.weights[region.mask]
    if norm == "L2":
        return np.diag(w)
    if norm == "Hs":
        if s is None:
            raise ValueError("Hs misfit needs s")
        phi = sp.modes[:, region.mask] * w  # analysis of the zero extension
        return phi.T @ (((1.0 + sp.eigenvalues) ** s)[:, None] * phi)
    raise ValueError(f"unknown misfit norm {norm!r}")


@dataclass(frozen=True, eq=False)
class RungeProblem:
    """Linear data for min ||A c - h||_N^2 + alpha c^T M c.

    ``forward`` holds the restricted solutions of the basis elements as
    columns (n_region x m); it comes either from an operator or straight from
    a measurement bundle.
    """

    forward: np.ndarray
    basis: SourceBasis
    target: np.ndarray
    alpha: float
    norm: str = "L2"
    s: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        h = np.asarray(self.target, float)
        if h.shape != (self.basis.region.count,):
            raise ValueError(
                f"target has {h.shape} samples, region has {self.basis.region.count} points"
            )
        if not np.all(np.isfinite(h)):
            raise ValueError("target must be finite")
        object.__setattr__(self, "target", h)

    @classmethod
    def from_operator(cls, op: OperatorMatrix, basis: SourceBasis, target, alpha: float, norm: str = "L2"):
        smap = gram_matrix(op, basis)
        return cls(smap.restricted_solutions.T, basis, target, alpha, norm, op.s)

    @classmethod
    def from_bundle(cls, bundle, target, alpha: float, norm: str = "L2"):
        return cls(bundle.restricted_solutions.T, bundle.basis, target, alpha, norm, bundle.s)

    def with_target(self, target, alpha: float | None = None) -> "RungeProblem":
        return RungeProblem(self.forward, self.basis, target, self.alpha if alpha is None else alpha, self.norm, self.s)


@dataclass
class RungeResult:
    source_coeffs: np.ndarray
    achieved_error: float
    source_norm: float
    alpha: float
    residual: np.ndarray  # A c - h on the region
    optimality_residual: float
    method: str = "normal"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_coeffs"] = [float(v) for v in self.source_coeffs]
        d["residual"] = [float(v) for v in self.residual]
        return d


def misfit_norm(problem: RungeProblem, residual: np.ndarray) -> float:
    n = misfit_matrix(problem.basis, problem.norm, problem.s)
    return float(np.sqrt(max(residual @ n @ residual, 0.0)))


def evaluate(problem: RungeProblem, coeffs: np.ndarray) -> tuple[float, float, np.ndarray]:
    """(misfit, source L2 norm, residual) of a given coefficient vector."""
    coeffs = np.asarray(coeffs, float)
    r = problem.forward @ coeffs - problem.target
    mass = problem.basis.mass_matrix()
    return misfit_norm(problem, r), float(np.sqrt(max(coeffs @ mass @ coeffs, 0.0))), r


def approximate(problem: RungeProblem) -> RungeResult:
    """Regularised least-squares source for the target.

    The m x m normal equations (A^T N A + alpha M) c = A^T N h are solved
    directly; above a condition number of 1e15 an SVD of the stacked
    least-squares system with relative truncation 1e-12 is used instead.
    """
    a = problem.forward
    n = misfit_matrix(problem.basis, problem.norm, problem.s)
    mass = problem.basis.mass_matrix()
    lhs = a.T @ n @ a + problem.alpha * mass
    lhs = 0.5 * (lhs + lhs.T)
    rhs = a.T @ n @ problem.target
    method = "normal"
    cond = np.linalg.cond(lhs)
    if cond <= COND_LIMIT:
        try:
            c = linalg.cho_solve(linalg.cho_factor(lhs), rhs)
        except linalg.LinAlgError:
            c = linalg.solve(lhs, rhs, assume_a="sym")
    else:
        warnings.warn(
            f"normal equations ill-conditioned (cond {cond:.2e}); using truncated SVD",
            stacklevel=2,
        )
        method = "svd"
        n_half = _psd_sqrt(n)
        m_half = _psd_sqrt(mass)
        stacked = np.vstack([n_half @ a, np.sqrt(problem.alpha) * m_half])
        b = np.concatenate([n_half @ problem.target, np.zeros(m_half.shape[0])])
        c, *_ = linalg.lstsq(stacked, b, cond=SVD_RTOL)
    opt = float(np.linalg.norm(lhs @ c - rhs) / max(np.linalg.norm(rhs), 1e-300))
    err, snorm, r = evaluate(problem, c)
    return RungeResult(c, err, snorm, float(problem.alpha), r, opt, method)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    ev, vec = np.linalg.eigh(0.5 * (mat + mat.T))
    return (vec * np.sqrt(np.clip(ev, 0, None))) @ vec.T


@dataclass
class SweepRow:
    target_id: str
    alpha: float
    error: float
    relative_error: float
    source_norm: float


@dataclass
class SweepTable:
    rows: list[SweepRow]

    def errors(self, target_id: str) -> np.ndarray:
        return np.array([r.error for r in self.rows if r.target_id == target_id])

    def source_norms(self, target_id: str) -> np.ndarray:
        return np.array([r.source_norm for r in self.rows if r.target_id == target_id])

    def target_ids(self) -> list[str]:
        return list(dict.fromkeys(r.target_id for r in self.rows))

    def monotone_violations(self, slack: float = MONOTONE_SLACK) -> list[str]:
        """Targets whose error column increases somewhere along decreasing alpha."""
        bad = []
        for tid in self.target_ids():
            rows = sorted((r for r in self.rows if r.target_id == tid), key=lambda r: -r.alpha)
            errs = np.array([r.error for r in rows])
            if np.any(np.diff(errs) > slack * max(1.0, errs.max(initial=0.0))):
                bad.append(tid)
        return bad

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["target_id", "alpha", "error", "relative_error", "source_norm"])
            for r in self.rows:
                writer.writerow([r.target_id, repr(r.alpha), repr(r.error), repr(r.relative_error), repr(r.source_norm)])


def density_sweep(
    problem: RungeProblem,
    targets: dict[str, np.ndarray] | list[np.ndarray],
    alphas=DEFAULT_ALPHAS,
    threads: int = 1,
    strict: bool = False,
) -> SweepTable:
    """Runge error and source norm per (target, alpha); rows follow input order."""
    if isinstance(targets, dict):
        items = list(targets.items())
    else:
        items = [(f"t{i}", t) for i, t in enumerate(targets)]
    alphas = [float(a) for a in alphas]
    if not items or not alphas:
        raise ValueError("density sweep needs at least one target and one alpha")
    cells = [(tid, np.asarray(h, float), a) for tid, h in items for a in alphas]

    def run(cell):
        tid, h, a = cell
        res = approximate(problem.with_target(h, a))
        h_norm = misfit_norm(problem.with_target(h), h)
        rel = res.achieved_error / h_norm if h_norm > 0 else res.achieved_error
        return SweepRow(tid, a, res.achieved_error, rel, res.source_norm)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    table = SweepTable(rows)
    bad = table.monotone_violations()
    if strict and bad:
        raise ArithmeticError(f"Runge error not monotone along the alpha ladder for {bad}")
    return table


def adjoint_certificate(op: OperatorMatrix, basis: SourceBasis, residual: np.ndarray) -> dict:
    """Adjoint solution driven by the region residual, extended by zero.

    Reports ||w||_{L2(O)}, the energy of w and the matching quadratic form;
    both are expected to shrink as the approximation improves.
    """
    region = basis.region
    sp = op.spectrum
    rhs = Field(sp, values=region.extend_by_zero(residual))
    w = solve_adjoint(op, rhs)
    wv = w.grid_values
    wo = float(np.sqrt(np.sum(sp.weights[region.mask] * wv[region.mask] ** 2)))
    frac_part = float(np.sum(frac_symbol(sp, op.s) * w.spectral_coeffs**2))
    return {
        "w_region_l2": wo,
        "energy": energy(op, w),
        "quadratic_form": quadratic_form(op, w),
        "fractional_energy": frac_part,
    }


def write_sweep_metadata(path: str | Path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
