import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fracschro.fractional import (
    Field,
    analyze,
    apply_frac,
    l2_inner,
    load_field,
    save_field_binary,
    save_field_csv,
    sobolev_norm,
    synthesize,
)
from fracschro.spectral import build_torus_spectrum

CIRCLE = build_torus_spectrum(1, 2 * np.pi, 20, 64)
TORUS = build_torus_spectrum(2, [2 * np.pi, 3.0], 3, 8)

coeffs = arrays(np.float64, CIRCLE.num_modes, elements=st.floats(-10, 10))
orders = st.floats(0.05, 1.0)


def test_analyze_mode_gives_unit_vector():
    c = analyze(CIRCLE, CIRCLE.modes[3])
    e3 = np.zeros(CIRCLE.num_modes)
    e3[3] = 1.0
    np.testing.assert_allclose(c, e3, atol=1e-13)


def test_analyze_constant():
    c = analyze(CIRCLE, np.ones(CIRCLE.num_points))
    assert abs(c[0] - np.sqrt(2 * np.pi)) < 1e-13
    assert np.max(np.abs(c[1:])) < 1e-13


def test_synthesize_basics():
    e0 = np.zeros(CIRCLE.num_modes)
    e0[0] = 1.0
    np.testing.assert_allclose(synthesize(CIRCLE, e0), (2 * np.pi) ** -0.5)
    assert np.all(synthesize(CIRCLE, np.zeros(CIRCLE.num_modes)) == 0)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        analyze(CIRCLE, np.ones(10))
    with pytest.raises(ValueError):
        synthesize(CIRCLE, np.ones(3))


@given(coeffs)
def test_round_trip_coefficients(c):
    np.testing.assert_allclose(analyze(CIRCLE, synthesize(CIRCLE, c)), c, atol=1e-10)


@given(coeffs)
def test_round_trip_band_limited_samples(c):
    u = synthesize(CIRCLE, c)
    np.testing.assert_allclose(synthesize(CIRCLE, analyze(CIRCLE, u)), u, atol=1e-10)


def test_field_consistency_is_enforced():
    c = np.zeros(CIRCLE.num_modes)
    c[1] = 1.0
    Field(CIRCLE, values=synthesize(CIRCLE, c), coeffs=c)
    with pytest.raises(ValueError, match="disagree"):
        Field(CIRCLE, values=synthesize(CIRCLE, c) + 1e-6, coeffs=c)
    with pytest.raises(ValueError):
        Field(CIRCLE)


def test_apply_frac_kills_constants():
    u = Field.constant(CIRCLE, 3.0)
    assert np.max(np.abs(apply_frac(u, 0.4).grid_values)) < 1e-14


def test_apply_frac_cos2x_half_power():
    x = CIRCLE.points[:, 0]
    out = apply_frac(Field(CIRCLE, values=np.cos(2 * x)), 0.5)
    np.testing.assert_allclose(out.grid_values, 2 * np.cos(2 * x), atol=1e-12)


def test_apply_frac_s1_matches_classical_laplacian(rng):
    # -u'' of a random trigonometric polynomial, differentiated by hand
    x = CIRCLE.points[:, 0]
    a, b = rng.standard_normal(21), rng.standard_normal(21)
    n = np.arange(21)
    u = sum(a[k] * np.cos(k * x) + b[k] * np.sin(k * x) for k in n)
    lap = sum(k**2 * (a[k] * np.cos(k * x) + b[k] * np.sin(k * x)) for k in n)
    out = apply_frac(Field(CIRCLE, values=u), 1.0)
    np.testing.assert_allclose(out.grid_values, lap, atol=1e-10 * max(1, np.abs(lap).max()))


def test_apply_frac_2d_laplacian(rng):
    x, y = TORUS.points.T
    k2 = 2 * np.pi / 3.0
    u = np.cos(2 * x + k2 * y) + 0.3 * np.sin(3 * x)
    lap = (4 + k2**2) * np.cos(2 * x + k2 * y) + 0.3 * 9 * np.sin(3 * x)
    np.testing.assert_allclose(apply_frac(Field(TORUS, values=u), 1.0).grid_values, lap, atol=1e-10)


def test_frac_order_validated():
    u = Field.constant(CIRCLE)
    for bad in (0.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            apply_frac(u, bad)


def test_l2_inner_of_modes_and_constants():
    gram = np.array([[l2_inner(CIRCLE.modes[j], CIRCLE.modes[k], CIRCLE) for k in range(5)] for j in range(5)])
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-10)
    one = Field.constant(CIRCLE)
    assert abs(l2_inner(one, one) - 2 * np.pi) < 1e-12


@given(coeffs, coeffs)
def test_parseval(c1, c2):
    u, v = Field.from_coeffs(CIRCLE, c1), Field.from_coeffs(CIRCLE, c2)
    assert abs(l2_inner(u, v) - c1 @ c2) < 1e-10 * max(1.0, np.linalg.norm(c1) * np.linalg.norm(c2))


def test_sobolev_norm_single_mode():
    for k in (0, 1, 5, 17, 40):
        u = Field(CIRCLE, values=CIRCLE.modes[k])
        for a in (0.0, 0.5, 1.0, 2.0):
            assert abs(sobolev_norm(u, a) - (1 + CIRCLE.eigenvalues[k]) ** (a / 2)) < 1e-10 * (1 + CIRCLE.eigenvalues[k]) ** (a / 2)


@given(coeffs)
def test_sobolev_a0_is_l2(c):
    u = Field.from_coeffs(CIRCLE, c)
    assert abs(sobolev_norm(u, 0.0) - np.sqrt(l2_inner(u, u))) < 1e-9 * max(1.0, np.linalg.norm(c))


@given(coeffs, st.lists(st.floats(0, 3), min_size=2, max_size=6))
def test_sobolev_monotone_in_exponent(c, exps):
    u = Field.from_coeffs(CIRCLE, c)
    norms = [sobolev_norm(u, a) for a in sorted(exps)]
    assert all(b >= a * (1 - 1e-14) for a, b in zip(norms, norms[1:]))


def test_sobolev_rejects_negative_exponent():
    with pytest.raises(ValueError):
        sobolev_norm(Field.constant(CIRCLE), -1.0)


@settings(max_examples=60)
@given(coeffs, coeffs, orders)
def test_integration_by_parts(c1, c2, s):
    u, v = Field.from_coeffs(CIRCLE, c1), Field.from_coeffs(CIRCLE, c2)
    left = l2_inner(apply_frac(u, s), v)
    mid = l2_inner(apply_frac(u, s, 0.5), apply_frac(v, s, 0.5))
    right = l2_inner(u, apply_frac(v, s))
    scale = max(1.0, np.linalg.norm(c1) * np.linalg.norm(c2) / 100)
    assert abs(left - mid) < 1e-10 * scale
    assert abs(mid - right) < 1e-10 * scale


@settings(max_examples=60)
@given(coeffs, st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_semigroup(c, s1, s2):
    u = Field.from_coeffs(CIRCLE, c)
    two = apply_frac(apply_frac(u, s1), s2).grid_values
    one = apply_frac(u, s1, (s1 + s2) / s1).grid_values
    assert np.max(np.abs(two - one)) < 1e-10 * max(1.0, np.linalg.norm(c) / 10)


@given(coeffs, orders)
def test_mean_annihilation(c, s):
    u = Field.from_coeffs(CIRCLE, c)
    one = np.ones(CIRCLE.num_points)
    assert abs(l2_inner(apply_frac(u, s), one, CIRCLE)) < 1e-12 * max(1.0, np.linalg.norm(c))


def test_field_file_round_trip(tmp_path, rng):
    v = rng.standard_normal(TORUS.num_points)
    save_field_binary(v, tmp_path / "f.f64")
    assert load_field(TORUS, tmp_path / "f.f64").tobytes() == v.tobytes()
    save_field_csv(TORUS, {"a": v, "b": 2 * v}, tmp_path / "f.csv")
    np.testing.assert_array_equal(load_field(TORUS, tmp_path / "f.csv", "b"), 2 * v)
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "x0,x1,a,b"
    with pytest.raises(ValueError):
        load_field(build_torus_spectrum(1, 1.0, 2, 7), tmp_path / "f.f64")
