"""Potential recovery from local source-to-solution measurements.

Two inverters:

* :func:`linearized_recover` compares two measurement bundles whose
  potentials agree outside the region. Runge approximants u1 ~ h and u2 ~ 1
  turn Gram differences into moments of the potential difference against
  probe functions h, which are then inverted by regularised least squares.
* :func:`gauss_newton_recover` fits a single measured Gram matrix by
  projected Gauss-Newton, with unknowns either inside the region or at a set
  of points outside it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .forward import Potential, assemble
from .fractional import Field
from .measurement import MeasurementBundle, gram_matrix
from .runge import RungeProblem, approximate
from .spectral import Region

log = logging.getLogger(__name__)


class ProbeRankError(ValueError):
    pass


def jacobian_entry(u_i: Field, u_j: Field, point_index: int, weight: float) -> float:
    """Derivative of G_ij with respect to V at one grid point: -w_p u_i(x_p) u_j(x_p)."""
    vi, vj = u_i.grid_values, u_j.grid_values
    if not 0 <= point_index < vi.shape[0]:
        raise IndexError(f"point index {point_index} out of range for {vi.shape[0]} points")
    return -weight * vi[point_index] * vj[point_index]


def gram_jacobian(solutions: np.ndarray, weights: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rows (i, j) in C order, columns the selected grid points: -w_p u_i(p) u_j(p)."""
    u = solutions[:, points]
    jac = -(u[:, None, :] * u[None, :, :]) * weights[points]
    return jac.reshape(-1, points.size)


def probe_family(bundle: MeasurementBundle, r: int) -> dict[str, np.ndarray]:
    """The constant plus the first ``r`` non-constant eigenfunctions, restricted to the region."""
    sp, region = bundle.spectrum, bundle.region
    if r + 1 > sp.num_modes:
        raise ValueError(f"at most {sp.num_modes - 1} eigenfunction probes available")
    probes = {"const": np.ones(region.count)}
    for k in range(1, r + 1):
        probes[f"phi{k}"] = region.restrict(sp.modes[k])
    return probes


def _check_twins(b1: MeasurementBundle, b2: MeasurementBundle) -> None:
    if b1.s != b2.s:
        raise ValueError("bundles use different s")
    if not np.array_equal(b1.region.mask, b2.region.mask):
        raise ValueError("bundles use different regions")
    if b1.basis.samples.shape != b2.basis.samples.shape or not np.array_equal(
        b1.basis.samples, b2.basis.samples
    ):
        raise ValueError("bundles use mismatched source bases")


@dataclass
class LinearizedResult:
    delta_v: np.ndarray  # on region points
    moments: np.ndarray
    probe_names: list[str]
    probe_rank: int
    beta: float
    runge_errors: dict = field(default_factory=dict)
    assumption: str = "V1 = V2 outside the region"


def moments_from_bundles(
    bundle1: MeasurementBundle,
    bundle2: MeasurementBundle,
    probes: dict[str, np.ndarray],
    alpha: float,
) -> tuple[np.ndarray, dict]:
    """d(h) = -((L1 - L2) f1, f2) with u1^{f1} ~ h and u2^{f2} ~ 1, bundles only."""
    one = np.ones(bundle1.region.count)
    f2 = approximate(RungeProblem.from_bundle(bundle2, one, alpha))
    dgram = bundle1.gram - bundle2.gram
    moments = []
    errs = {"const(u2)": f2.achieved_error}
    for name, h in probes.items():
        f1 = approximate(RungeProblem.from_bundle(bundle1, h, alpha))
        errs[name] = f1.achieved_error
        # G_ij = (f_i, L f_j): ((L1 - L2) f1, f2) = c2^T dG c1
        moments.append(-(f2.source_coeffs @ dgram @ f1.source_coeffs))
    return np.array(moments), errs


def linearized_recover(
    bundle1: MeasurementBundle,
    bundle2: MeasurementBundle,
    probe_targets: dict[str, np.ndarray] | list[np.ndarray] | None = None,
    alpha: float = 1e-10,
    num_probes: int = 20,
    beta_rel: float = 1e-8,
) -> LinearizedResult:
    """Estimate V1 - V2 on the region from two bundles.

    Moments d(h) ~ int_O (V1 - V2) h are collected for every probe h and the
    system H^T W dV = d is solved with Tikhonov weight
    ``beta_rel * sigma_max^2``.
    """
    _check_twins(bundle1, bundle2)
    if probe_targets is None:
        probe_targets = probe_family(bundle1, num_probes)
    if not isinstance(probe_targets, dict):
        probe_targets = {f"h{i}": np.asarray(h, float) for i, h in enumerate(probe_targets)}
    names = list(probe_targets)
    region = bundle1.region
    w = bundle1.spectrum.weights[region.mask]
    H = np.array([np.asarray(probe_targets[n], float) for n in names])  # (r, n_O)
    if H.shape[1] != region.count:
        raise ValueError("probe targets must be sampled on the region")

    d, errs = moments_from_bundles(bundle1, bundle2, probe_targets, alpha)
    op = H * w  # moment operator, (r, n_O)
    sv = np.linalg.svd(op, compute_uv=False)
    rank = int(np.sum(sv > 1e-12 * sv.max()))
    if rank < min(len(names), region.count) and rank < 2:
        raise ProbeRankError(f"probe family numerically rank {rank}")
    beta = beta_rel * sv.max() ** 2
    # min ||op dv - d||^2 + beta ||dv||^2
    dv = op.T @ linalg.solve(op @ op.T + beta * np.eye(len(names)), d, assume_a="pos")
    return LinearizedResult(dv, d, names, rank, beta, errs)


# -- Gauss-Newton ------------------------------------------------------------


@dataclass
class GaussNewtonConfig:
    max_iter: int = 30
    beta: float = 0.0
    tol: float = 1e-20
    rtol: float = 1e-12
    step_tol: float = 1e-12
    max_backtracks: int = 30
    armijo_c: float = 1e-4


@dataclass
class InversionResult:
    V_recovered: Potential
    support_mode: str
    misfit_history: list[float]
    data_misfit_history: list[float]
    iterations: int
    converged: bool
    stagnated: bool = False
    smallest_singular_value: float | None = None
    relative_error: float | None = None
    message: str = ""

    def to_dict(self, config: GaussNewtonConfig | None = None) -> dict:
        d = {
            "support_mode": self.support_mode,
            "misfit_history": [float(v) for v in self.misfit_history],
            "data_misfit_history": [float(v) for v in self.data_misfit_history],
            "iterations": self.iterations,
            "converged": self.converged,
            "stagnated": self.stagnated,
            "smallest_singular_value": self.smallest_singular_value,
            "message": self.message,
        }
        if self.relative_error is not None:
            d["relative_error"] = self.relative_error
        if config is not None:
            d["config"] = asdict(config)
        return d


def relative_error(estimate: np.ndarray, truth: np.ndarray, weights: np.ndarray) -> float:
    num = np.sqrt(np.sum(weights * (estimate - truth) ** 2))
    den = np.sqrt(np.sum(weights * truth**2))
    return float(num / den) if den > 0 else float(num)


class _GramModel:
    """Simulated Gram matrix and Jacobian for a trial potential."""

    def __init__(self, bundle: MeasurementBundle):
        self.bundle = bundle
        self.spectrum = bundle.spectrum

    def evaluate(self, values: np.ndarray):
        op = assemble(self.spectrum, Potential(self.spectrum, values), self.bundle.s)
        smap = gram_matrix(op, self.bundle.basis)
        return smap.matrix, smap.solutions


def gauss_newton_recover(
    bundle_measured: MeasurementBundle,
    V_init: Potential,
    unknown_support: Region,
    config: GaussNewtonConfig | None = None,
    support_mode: str | None = None,
) -> InversionResult:
    """Projected Gauss-Newton fit of the measured Gram matrix.

    Objective: ||G(V) - G_meas||_F^2 + beta ||V - V_init||_w^2 over V at the
    points of ``unknown_support``; V stays at ``V_init`` elsewhere. The
    Jacobian is exact (-w_p u_i u_j), steps are Armijo-backtracked on the
    projected path so the objective never increases, and V is clamped at 0.
    """
    cfg = config or GaussNewtonConfig()
    sp = bundle_measured.spectrum
    if support_mode is None:
        support_mode = "inside-O" if np.array_equal(unknown_support.mask, unknown_support.mask & bundle_measured.region.mask) else "outside-O"
    pts = unknown_support.indices
    w = sp.weights[pts]
    model = _GramModel(bundle_measured)
    g_meas = bundle_measured.gram
    v0 = V_init.values.copy()
    v = v0.copy()

    def objective(vals, g):
        data = float(np.sum((g - g_meas) ** 2))
        reg = cfg.beta * float(np.sum(w * (vals[pts] - v0[pts]) ** 2))
        return data + reg, data

    g, sols = model.evaluate(v)
    phi, data = objective(v, g)
    history, data_hist = [phi], [data]
    converged = phi < cfg.tol
    stagnated = False
    sigma_min = None
    message = "converged at initial guess" if converged else ""
    it = 0
    while not converged and it < cfg.max_iter:
        it += 1
        jac = gram_jacobian(sols, sp.weights, pts)
        sv = np.linalg.svd(jac, compute_uv=False)
        sigma_min = float(sv.min())
        r = (g - g_meas).ravel()
        grad = jac.T @ r + cfg.beta * w * (v[pts] - v0[pts])
        hess = jac.T @ jac + cfg.beta * np.diag(w)
        try:
            step = -linalg.solve(hess, grad, assume_a="sym")
        except linalg.LinAlgError:
            step = -linalg.lstsq(hess, grad)[0]
        if not np.all(np.isfinite(step)):
            step = -linalg.lstsq(hess, grad)[0]
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = v.copy()
            trial[pts] = np.maximum(v[pts] + t * step, 0.0)
            g_t, sols_t = model.evaluate(trial)
            phi_t, data_t = objective(trial, g_t)
            decrease = grad @ (trial[pts] - v[pts])
            if phi_t <= phi + cfg.armijo_c * min(decrease, 0.0) and phi_t <= phi:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stagnated = True
            message = f"no decrease after {cfg.max_backtracks} backtracks (smallest singular value {sigma_min:.3e})"
            log.warning(message)
            break
        moved = np.linalg.norm(trial[pts] - v[pts])
        rel_drop = (phi - phi_t) / phi if phi > 0 else 0.0
        v, g, sols, phi = trial, g_t, sols_t, phi_t
        history.append(phi)
        data_hist.append(data_t)
        if phi < cfg.tol:
            converged, message = True, "objective below tolerance"
        elif moved < cfg.step_tol * max(1.0, np.linalg.norm(v[pts])):
            converged, message = True, "step below tolerance"
        elif rel_drop < cfg.rtol:
            converged, message = True, "relative decrease below tolerance"
    if not converged and not stagnated:
        message = message or f"reached max_iter={cfg.max_iter}"
    if sigma_min is not None and sigma_min <= 0:
        log.warning("Jacobian rank collapse: smallest singular value %g", sigma_min)
    return InversionResult(
        V_recovered=Potential(sp, v),
        support_mode=support_mode,
        misfit_history=history,
        data_misfit_history=data_hist,
        iterations=it,
        converged=converged,
        stagnated=stagnated,
        smallest_singular_value=sigma_min,
        message=message,
    )


def jacobian_at(bundle: MeasurementBundle, V: Potential, support: Region) -> np.ndarray:
    _, sols = _GramModel(bundle).evaluate(V.values)
    return gram_jacobian(sols, bundle.spectrum.weights, support.indices)


def write_result(result: InversionResult, directory: str | Path, config: GaussNewtonConfig | None = None, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict(config)
    if extra:
        payload.update(extra)
    path = d / "inversion_result.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
