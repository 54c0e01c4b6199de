import numpy as np
import pytest

from fracschro.config import bump_profile
from fracschro.forward import Potential, assemble
from fracschro.fractional import Field
from fracschro.inversion import (
    GaussNewtonConfig,
    ProbeRankError,
    gauss_newton_recover,
    gram_jacobian,
    jacobian_at,
    jacobian_entry,
    linearized_recover,
    probe_family,
    relative_error,
)
from fracschro.measurement import build_source_basis, bundle_from_map, gram_matrix
from fracschro.spectral import Region, build_region, build_torus_spectrum

CIRCLE = build_torus_spectrum(1, 2 * np.pi, 20, 64)
X = CIRCLE.points[:, 0]
W = CIRCLE.weights
HALF = build_region(CIRCLE, lambda x: 0 < x[0] < np.pi)
BASIS = build_source_basis(CIRCLE, HALF, "bump", 24)
S = 0.5


def bundle_for(values, basis=BASIS, s=S):
    return bundle_from_map(gram_matrix(assemble(CIRCLE, Potential(CIRCLE, values), s), basis))


def bump_inside(amplitude):
    return 1.0 + amplitude * bump_profile(CIRCLE, [np.pi / 2], 1.0)


V_REF = np.ones(CIRCLE.num_points)
B_REF = bundle_for(V_REF)


def test_jacobian_entry_basics():
    u = Field.from_coeffs(CIRCLE, np.r_[1.0, np.zeros(CIRCLE.num_modes - 1)])
    z = Field.from_coeffs(CIRCLE, np.zeros(CIRCLE.num_modes))
    assert jacobian_entry(u, z, 3, W[3]) == 0.0
    v = Field.from_coeffs(CIRCLE, np.arange(CIRCLE.num_modes, dtype=float) / 40)
    assert jacobian_entry(u, v, 7, W[7]) == jacobian_entry(v, u, 7, W[7])
    for bad in (-1, CIRCLE.num_points):
        with pytest.raises(IndexError):
            jacobian_entry(u, v, bad, 1.0)


def test_gram_jacobian_matches_finite_differences():
    v = bump_inside(0.5)
    pts = np.array([5, 12, 20, 40])
    jac = jacobian_at(B_REF, Potential(CIRCLE, v), Region(np.isin(np.arange(64), pts), "p"))
    g0 = bundle_for(v).gram
    eps = 1e-6
    for col, p in enumerate(pts):
        vp = v.copy()
        vp[p] += eps
        vm = v.copy()
        vm[p] -= eps
        fd = ((bundle_for(vp).gram - bundle_for(vm).gram) / (2 * eps)).ravel()
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(fd - jac[:, col])) < 1e-6 * scale
    assert g0.shape == (BASIS.count, BASIS.count)


def test_gram_jacobian_is_symmetric_in_ij():
    sols = np.random.default_rng(0).standard_normal((5, 64))
    jac = gram_jacobian(sols, W, np.array([1, 2, 3])).reshape(5, 5, 3)
    np.testing.assert_array_equal(jac, jac.transpose(1, 0, 2))


def test_gauss_newton_fixed_point():
    res = gauss_newton_recover(B_REF, Potential(CIRCLE, V_REF), HALF)
    assert res.misfit_history[0] < 1e-20
    assert res.iterations == 0 and res.converged
    np.testing.assert_array_equal(res.V_recovered.values, V_REF)


def test_gauss_newton_zero_data_step_is_tiny():
    # perturb the init by rounding-level noise; the data says V = V_ref
    v0 = V_REF + 1e-13 * np.random.default_rng(1).standard_normal(64)
    res = gauss_newton_recover(B_REF, Potential(CIRCLE, v0), HALF, GaussNewtonConfig(max_iter=1))
    assert np.linalg.norm(res.V_recovered.values - v0) < 1e-8


def test_gauss_newton_inside_recovers_bump():
    truth = bump_inside(0.5)
    res = gauss_newton_recover(bundle_for(truth), Potential(CIRCLE, V_REF), HALF)
    assert res.converged and not res.stagnated
    assert np.all(np.diff(res.misfit_history) <= 0)
    m = HALF.mask
    assert relative_error(res.V_recovered.values[m], truth[m], W[m]) < 1e-6
    # the complement is untouched
    np.testing.assert_array_equal(res.V_recovered.values[~m], V_REF[~m])


def test_gauss_newton_stays_nonnegative():
    truth = bump_inside(0.5)
    res = gauss_newton_recover(bundle_for(truth), Potential(CIRCLE, np.full(64, 3.0)), HALF, GaussNewtonConfig(max_iter=8))
    assert np.all(res.V_recovered.values >= 0)
    assert np.all(np.diff(res.misfit_history) <= 0)


def test_linearized_identical_potentials_give_zero():
    res = linearized_recover(B_REF, B_REF)
    assert np.linalg.norm(res.delta_v) < 1e-6
    assert res.probe_names[0] == "const"
    assert res.probe_rank == len(res.probe_names)


def test_linearized_scales_with_amplitude():
    a = 1e-3
    d1 = linearized_recover(bundle_for(bump_inside(a)), B_REF).delta_v
    d2 = linearized_recover(bundle_for(bump_inside(2 * a)), B_REF).delta_v
    # linear to leading order in the amplitude
    assert np.linalg.norm(d2 - 2 * d1) < 1e-2 * np.linalg.norm(d2)


def test_linearized_recovers_small_bump():
    a = 1e-3
    truth = a * bump_profile(CIRCLE, [np.pi / 2], 1.0)[HALF.mask]
    res = linearized_recover(bundle_for(bump_inside(a)), B_REF)
    assert relative_error(res.delta_v, truth, W[HALF.mask]) < 0.05


def test_linearized_rejects_mismatched_bundles():
    other = bundle_for(V_REF, basis=build_source_basis(CIRCLE, HALF, "bump", 20))
    with pytest.raises(ValueError, match="bases"):
        linearized_recover(B_REF, other)
    with pytest.raises(ValueError, match="different s"):
        linearized_recover(B_REF, bundle_for(V_REF, s=0.7))


def test_linearized_rank_deficient_probes():
    with pytest.raises(ProbeRankError):
        linearized_recover(B_REF, B_REF, probe_targets=[np.ones(HALF.count), 2 * np.ones(HALF.count)])


def test_probe_family_limits():
    assert len(probe_family(B_REF, 4)) == 5
    with pytest.raises(ValueError):
        probe_family(B_REF, CIRCLE.num_modes)


def test_relative_error_zero_truth():
    assert relative_error(np.ones(3), np.zeros(3), np.ones(3)) == pytest.approx(np.sqrt(3))
