"""Total variation, oscillation seminorm, and matrix size measures."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from marlcert import (
    NumericalError,
    ValidationError,
    aligned_sup_distance,
    global_oscillation,
    inf_norm,
    oscillation,
    power_norm_constant,
    spectral_radius,
    tv,
)

SIZES = (2, 3, 2)
TOTAL = 12

finite_floats = st.floats(min_value=-50, max_value=50, allow_nan=False)
functions = arrays(float, TOTAL, elements=finite_floats)


def test_tv_known_values():
    assert tv([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25, abs=1e-15)


def test_tv_rejects_non_distributions():
    with pytest.raises(ValidationError):
        tv([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValidationError):
        tv([-0.1, 1.1], [0.5, 0.5])
    with pytest.raises(ValidationError):
        tv([1.0], [0.5, 0.5])


@given(st.integers(min_value=0, max_value=10**9))
def test_tv_symmetry_and_range(seed):
    rng = np.random.default_rng(seed)
    p = rng.random(4) + 1e-9
    p /= p.sum()
    q = rng.random(4) + 1e-9
    q /= q.sum()
    d = tv(p, q)
    assert 0.0 <= d <= 1.0
    assert d == tv(q, p)
    r = rng.random(4) + 1e-9
    r /= r.sum()
    assert tv(p, r) <= tv(p, q) + tv(q, r) + 1e-12


@given(functions)
def test_oscillation_matches_bruteforce(f):
    np.testing.assert_allclose(oscillation(f, SIZES),
                               oracles.oscillation_oracle(f, SIZES), atol=1e-12)


@given(functions, st.floats(min_value=-5, max_value=5, allow_nan=False))
def test_oscillation_homogeneous_and_shift_invariant(f, c):
    base = oscillation(f, SIZES)
    np.testing.assert_allclose(oscillation(c * f, SIZES), abs(c) * base, atol=1e-10)
    np.testing.assert_allclose(oscillation(f + c, SIZES), base, atol=1e-10)


@given(functions, functions)
def test_oscillation_subadditive(f, g):
    lhs = oscillation(f + g, SIZES)
    rhs = oscillation(f, SIZES) + oscillation(g, SIZES)
    assert (lhs <= rhs + 1e-10).all()


@given(functions)
def test_oscillation_is_least_hamming_lipschitz_vector(f):
    delta = oscillation(f, SIZES)
    assert oracles.hamming_bound_holds(f, SIZES, delta, 1e-12)
    # Each entry is attained by some single-coordinate pair, so no smaller
    # vector can dominate all single-coordinate changes.
    brute = oracles.oscillation_oracle(f, SIZES)
    np.testing.assert_allclose(delta, brute, atol=1e-12)


def test_oscillation_size_one_coordinates_are_zero():
    f = np.arange(4.0)
    delta = oscillation(f, (1, 4))
    assert delta[0] == 0.0
    assert delta[1] == 3.0


def test_oscillation_shape_mismatch():
    with pytest.raises(ValidationError):
        oscillation(np.zeros(5), (2, 2))


def test_global_oscillation_and_alignment():
    f = np.array([3.0, -1.0, 2.0])
    assert global_oscillation(f) == 4.0
    # Best constant shift is the midrange of the difference.
    u = np.array([1.0, 5.0, 2.0])
    v = np.zeros(3)
    got = aligned_sup_distance(u, v)
    grid = np.linspace(-10, 10, 20001)
    brute = min(np.abs(u - v - c).max() for c in grid)
    assert got == pytest.approx(brute, abs=1e-3)
    assert got == pytest.approx(2.0, abs=1e-15)
    # Aligning with any constant shift of v changes nothing.
    assert aligned_sup_distance(u, v + 17.0) == pytest.approx(got, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(min_value=0, max_value=10**9))
def test_spectral_radius_matches_eig(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    m = rng.random((n, n)) * rng.integers(0, 2, size=(n, n))
    got = spectral_radius(m)
    want = oracles.spectral_radius_oracle(m)
    assert got == pytest.approx(want, abs=1e-8)


def test_spectral_radius_edge_cases():
    assert spectral_radius(np.zeros((3, 3))) == pytest.approx(0.0, abs=1e-9)
    assert spectral_radius(np.eye(2)) == pytest.approx(1.0, abs=1e-9)
    # Periodic support: plain power iteration would oscillate without a shift.
    cycle = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert spectral_radius(cycle) == pytest.approx(1.0, abs=1e-9)
    nilpotent = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert spectral_radius(nilpotent) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValidationError):
        spectral_radius(np.array([[-1.0]]))
    with pytest.raises(ValidationError):
        spectral_radius(np.zeros((2, 3)))


def test_inf_norm_is_max_abs_row_sum():
    m = np.array([[1.0, -2.0], [0.5, 0.25]])
    assert inf_norm(m) == 3.0


def test_power_norm_constant_bounds_powers():
    rng = np.random.default_rng(7)
    m = rng.random((4, 4)) * 0.3
    rho = spectral_radius(m)
    lam = rho + 1e-9
    c = power_norm_constant(m, lam)
    assert c >= 1.0
    for t in range(0, 65, 8):
        assert inf_norm(np.linalg.matrix_power(m, t)) <= c * lam**t + 1e-9


def test_power_norm_constant_nilpotent_stops_early():
    nilpotent = np.array([[0.0, 0.5], [0.0, 0.0]])
    c = power_norm_constant(nilpotent, 1e-9)
    assert c == pytest.approx(0.5 / 1e-9, rel=1e-12)


def test_power_norm_constant_underflow_raises():
    m = np.full((2, 2), 0.45)
    with pytest.raises(NumericalError):
        power_norm_constant(m, 1e-9, t_max=64)


def test_power_norm_constant_validates_rate():
    with pytest.raises(ValidationError):
        power_norm_constant(np.eye(2), 1.0)
    with pytest.raises(ValidationError):
        power_norm_constant(np.eye(2), 0.0)
