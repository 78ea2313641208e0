import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersal.airy import A0, SUPPORTED, airy_ai, airy_ai_prime, build_eta_star, find_A0
from dispersal.errors import InvalidA1, OutOfRange

mpmath.mp.dps = 30


def test_values_at_origin():
    assert airy_ai(0.0) == pytest.approx(3 ** (-2 / 3) / math.gamma(2 / 3), abs=1e-15)
    assert airy_ai_prime(0.0) == pytest.approx(-(3 ** (-1 / 3)) / math.gamma(1 / 3), abs=1e-15)
    assert airy_ai(0.0) == pytest.approx(0.3550280539, abs=1e-10)
    assert airy_ai_prime(0.0) == pytest.approx(-0.2588194038, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(-SUPPORTED, SUPPORTED))
def test_matches_mpmath(x):
    ai, aip = float(mpmath.airyai(x)), float(mpmath.airyai(x, derivative=1))
    scale = max(1.0, abs(x)) ** 0.25
    assert abs(airy_ai(x) - ai) <= 1e-10 * scale + 1e-9 * abs(ai)
    assert abs(airy_ai_prime(x) - aip) <= 1e-10 * scale**2 + 1e-9 * abs(aip)


@pytest.mark.parametrize("x", [4.4, 5.5, 5.7, 6.6, 10.0, -6.4, -6.6, -15.0])
def test_accurate_across_regime_switch(x):
    assert airy_ai(x) == pytest.approx(float(mpmath.airyai(x)), rel=1e-8, abs=1e-14)
    assert airy_ai_prime(x) == pytest.approx(float(mpmath.airyai(x, derivative=1)), rel=1e-8, abs=1e-14)


def test_decay_on_positive_axis():
    x = np.linspace(0, 10, 201)
    vals = np.array([airy_ai(t) for t in x])
    assert np.all(np.diff(vals) < 0) and vals.min() > 0
    assert airy_ai(5.0) < 1e-3
    # integral from 0 to infinity is 1/3
    from scipy.integrate import quad
    total, _ = quad(airy_ai, 0, SUPPORTED, epsabs=1e-14)
    assert total == pytest.approx(1 / 3, abs=1e-10)


def test_out_of_range():
    with pytest.raises(OutOfRange):
        airy_ai(SUPPORTED + 1)
    with pytest.raises(OutOfRange):
        airy_ai_prime(-SUPPORTED - 1)


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_A0_against_bisection_oracle():
    # plain bisection on a separately summed Maclaurin series
    def aip_series(x, terms=60):
        c1, c2 = float(airy_ai(0.0)), float(airy_ai_prime(0.0))
        a = [0.0] * (3 * terms + 3)
        a[0], a[1] = c1, c2
        for n in range(3 * terms):
            # Ai'' = x Ai  gives a[n+3] = a[n] / ((n+3)(n+2))
            a[n + 3] = a[n] / ((n + 3) * (n + 2))
        return sum(k * a[k] * x ** (k - 1) for k in range(1, len(a)))

    oracle = -bisect(aip_series, -2.0, -0.5)
    assert oracle == pytest.approx(1.0187929716, abs=1e-8)
    assert A0 == pytest.approx(oracle, abs=1e-8)
    assert find_A0() == A0
    assert abs(airy_ai_prime(-A0)) < 1e-9
    assert A0 == pytest.approx(-float(mpmath.airyaizero(1, derivative=1)), abs=1e-13)


def test_first_zero_of_derivative():
    xs = np.linspace(-A0 + 1e-6, 0, 400)
    assert all(airy_ai_prime(x) < 0 for x in xs)


@pytest.mark.parametrize("a1", [1.0, 0.0345, 3.0])
def test_eta_star_identities(a1):
    eta = build_eta_star(a1)
    assert eta.a0 == a1 ** (2 / 3) * A0
    assert abs(eta.derivative(0.0)) < 1e-8
    assert np.all(eta.values[:-1] > 0)
    # unit mass against an independent mpmath quadrature
    c = a1 ** (1 / 3)
    Z = float(mpmath.quad(mpmath.airyai, [-A0, 0, mpmath.inf])) / c
    assert eta.normalization == pytest.approx(Z, rel=1e-10)
    assert eta.mass(1e6) == pytest.approx(1.0, abs=1e-8)
    assert eta.tail_bound < 1e-10


@pytest.mark.parametrize("a1", [1.0, 0.0345, 3.0])
def test_eta_star_ode_residual_by_finite_differences(a1):
    eta = build_eta_star(a1)
    # fourth-order stencil; h is large enough that rounding / h^2 stays small
    h = 0.01 * a1 ** (-1 / 3)
    s = np.arange(2 * h, eta.s_max - 2 * h, h)
    v = {k: eta(s + k * h) for k in (-2, -1, 0, 1, 2)}
    d2 = (-v[-2] + 16 * v[-1] - 30 * v[0] + 16 * v[1] - v[2]) / (12 * h**2)
    res = d2 + (eta.a0 - a1 * s) * v[0]
    assert np.abs(res).max() < 1e-6


def test_eta_star_shape():
    eta = build_eta_star(0.5)
    s = eta.s
    # maximum at the wall, strictly decreasing, concave before a0/a1 and convex after
    assert np.argmax(eta.values) == 0
    assert np.all(np.diff(eta.values) < 0)
    d2 = np.diff(eta.values, 2)
    inner = s[1:-1]
    assert np.all(d2[inner < eta.inflection - 0.05] < 0)
    assert np.all(d2[(inner > eta.inflection + 0.05) & (eta.values[1:-1] > 1e-10)] > 0)
    assert eta.second_derivative(eta.inflection) == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 20.0))
def test_scaling_law(a1):
    base, eta = build_eta_star(1.0), build_eta_star(a1)
    c = a1 ** (1 / 3)
    s = np.linspace(0, 5, 11)
    assert np.allclose(eta(s), c * base(c * s), rtol=1e-10, atol=1e-14)


def test_l2_normalisation_map():
    eta = build_eta_star(0.7)
    tilde, l1 = eta.l2_normalized()
    from scipy.integrate import quad
    sq, _ = quad(lambda s: tilde(s) ** 2, 0, eta.s_max, limit=200)
    assert sq == pytest.approx(1.0, rel=1e-8)
    s = np.linspace(0, 10, 7)
    assert np.allclose(tilde(s) / l1, eta(s), rtol=1e-12)


def test_quantile():
    eta = build_eta_star(1.0)
    K = eta.quantile(0.99)
    assert eta.mass(K) == pytest.approx(0.99, abs=1e-10)
    assert eta.quantile(0.5) < K


@pytest.mark.parametrize("a1", [0.0, -1.0])
def test_invalid_a1(a1):
    with pytest.raises(InvalidA1):
        build_eta_star(a1)
