import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fracschro.forward import (
    IncompatibleSourceError,
    Potential,
    apply,
    assemble,
    coefficient_decay,
    energy,
    quadratic_form,
    solve,
    solve_adjoint,
    solver_diagnostics,
    write_diagnostics,
)
from fracschro.fractional import Field, frac_symbol, l2_inner
from fracschro.spectral import build_region, build_torus_spectrum

CIRCLE = build_torus_spectrum(1, 2 * np.pi, 20, 64)
X = CIRCLE.points[:, 0]


def smooth_potential(rng, spectrum=CIRCLE, offset=0.5):
    c = np.zeros(spectrum.num_modes)
    c[1:9] = rng.standard_normal(8) * 0.3
    v = c @ spectrum.modes
    return Potential(spectrum, v - v.min() + offset)


def test_zero_potential_gives_diagonal():
    op = assemble(CIRCLE, Potential(CIRCLE, np.zeros(64)), 0.5)
    np.testing.assert_array_equal(op.matrix, np.diag(frac_symbol(CIRCLE, 0.5)))


def test_constant_potential_adds_identity():
    op = assemble(CIRCLE, Potential(CIRCLE, np.full(64, 2.5)), 0.3)
    expected = np.diag(frac_symbol(CIRCLE, 0.3)) + 2.5 * np.eye(CIRCLE.num_modes)
    np.testing.assert_allclose(op.matrix, expected, atol=1e-13)


def test_assembled_matrix_symmetric(rng):
    op = assemble(CIRCLE, smooth_potential(rng), 0.7)
    assert op.symmetry_residual() < 1e-12


def test_negative_potential_rejected():
    v = np.ones(64)
    v[5] = -1e-3
    with pytest.raises(ValueError, match="nonnegativity"):
        Potential(CIRCLE, v)


def test_potential_grid_mismatch():
    with pytest.raises(ValueError):
        Potential(CIRCLE, np.ones(10))


def test_solve_zero_source():
    op = assemble(CIRCLE, Potential(CIRCLE, np.ones(64)), 0.5)
    u = solve(op, Field(CIRCLE, values=np.zeros(64)))
    assert np.all(u.grid_values == 0)


@pytest.mark.parametrize("k", [0, 1, 4, 17, 40])
def test_unit_potential_diagonal_solve(k):
    s = 0.6
    op = assemble(CIRCLE, Potential(CIRCLE, np.ones(64)), s)
    u = solve(op, Field(CIRCLE, values=CIRCLE.modes[k]))
    expected = CIRCLE.modes[k] / (CIRCLE.eigenvalues[k] ** s + 1)
    np.testing.assert_allclose(u.grid_values, expected, atol=1e-12)


def test_manufactured_solution():
    op = assemble(CIRCLE, Potential(CIRCLE, 2 + np.sin(X)), 0.5)
    u_star = Field(CIRCLE, values=np.cos(X))
    f = apply(op, u_star)
    u = solve(op, f)
    assert np.max(np.abs(u.grid_values - np.cos(X))) < 1e-10


def test_apply_of_constant():
    one = Field.constant(CIRCLE)
    op0 = assemble(CIRCLE, Potential(CIRCLE, np.zeros(64)), 0.5)
    assert np.max(np.abs(apply(op0, one).grid_values)) < 1e-14
    # V times a constant is band-limited when V is
    v = 1 + 0.5 * np.cos(X) + 0.2 * np.sin(3 * X)
    op = assemble(CIRCLE, Potential(CIRCLE, v), 0.5)
    np.testing.assert_allclose(apply(op, one).grid_values, v, atol=1e-12)


def test_apply_inverts_solve(rng):
    op = assemble(CIRCLE, smooth_potential(rng), 0.4)
    f = Field.from_coeffs(CIRCLE, rng.standard_normal(CIRCLE.num_modes))
    np.testing.assert_allclose(apply(op, solve(op, f)).grid_values, f.grid_values, atol=1e-9)


def test_zero_potential_compatibility():
    op = assemble(CIRCLE, Potential(CIRCLE, np.zeros(64)), 0.5)
    u = solve(op, Field(CIRCLE, values=np.cos(3 * X)))
    np.testing.assert_allclose(u.grid_values, np.cos(3 * X) / 3**1.0, atol=1e-12)
    assert abs(l2_inner(u, np.ones(64), CIRCLE)) < 1e-12
    with pytest.raises(IncompatibleSourceError):
        solve(op, Field(CIRCLE, values=1 + np.cos(X)))


def test_solve_adjoint_same_path(rng):
    op = assemble(CIRCLE, smooth_potential(rng), 0.5)
    f = Field.from_coeffs(CIRCLE, rng.standard_normal(CIRCLE.num_modes))
    assert solve_adjoint(op, f).grid_values.tobytes() == solve(op, f).grid_values.tobytes()
    assert np.all(solve_adjoint(op, Field(CIRCLE, values=np.zeros(64))).grid_values == 0)


def test_adjoint_solution_is_nonlocal():
    region = build_region(CIRCLE, lambda x: 0 < x[0] < np.pi)
    op = assemble(CIRCLE, Potential(CIRCLE, 1 + 0.3 * np.cos(X)), 0.5)
    bump = np.where(region.mask, np.exp(-((X - np.pi / 2) ** 2) / 0.1), 0.0)
    w = solve_adjoint(op, Field(CIRCLE, values=bump))
    assert np.max(np.abs(w.grid_values[~region.mask])) > 1e-6


@settings(max_examples=40)
@given(arrays(np.float64, 41, elements=st.floats(-5, 5)), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_energy_identity(c, s, seed):
    op = assemble(CIRCLE, smooth_potential(np.random.default_rng(seed), offset=0.0), s)
    u = Field.from_coeffs(CIRCLE, c)
    e = energy(op, u)
    assert e >= -1e-12
    tol = 1e-10 * max(1.0, e)
    assert abs(l2_inner(apply(op, u), u) - e) < tol
    assert abs(quadratic_form(op, u) - e) < tol


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_rayleigh_quotient_monotone_in_potential(seed, s):
    rng = np.random.default_rng(seed)
    v = smooth_potential(rng, offset=0.0).values
    v_big = v + np.abs(rng.standard_normal(64)) * 0.5
    lo = np.linalg.eigvalsh(assemble(CIRCLE, Potential(CIRCLE, v), s).matrix)[0]
    hi = np.linalg.eigvalsh(assemble(CIRCLE, Potential(CIRCLE, v_big), s).matrix)[0]
    assert hi >= lo - 1e-12


def test_positive_definite_when_potential_somewhere_positive():
    v = np.zeros(64)
    v[10] = 0.5
    op = assemble(CIRCLE, Potential(CIRCLE, v), 0.5)
    assert np.linalg.eigvalsh(op.matrix)[0] > 0
    op.factor()


def test_diagnostics_json(tmp_path, rng):
    op = assemble(CIRCLE, smooth_potential(rng), 0.5)
    f = Field(CIRCLE, values=np.exp(np.cos(X)))
    diag = solver_diagnostics(op, f)
    assert diag["relative_residual"] < 1e-10
    assert diag["condition_estimate"] > 1
    decay = diag["coefficient_decay"]
    assert decay[-1] < 1e-6 * decay[0]
    write_diagnostics(diag, tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text())["num_modes"] == 41


def test_coefficient_decay_shells():
    u = Field(CIRCLE, values=np.cos(2 * X))
    d = coefficient_decay(u)
    assert len(d) == 21 and d[2] > 1 and max(d[:2] + d[3:]) < 1e-12
