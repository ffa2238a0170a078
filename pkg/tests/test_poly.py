from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fixtwin.pi import QuadratureGrid
from fixtwin.poly import (DomainError, Interval, MatPoly1, MatPoly2, affine_remap, eval1, eval2,
                          integrate, linear_combine, multiply)


def P1(*c, domain=Interval(0.0, 1.0)):
    return MatPoly1(np.array(c, dtype=float), domain)


def P2(grid):
    return MatPoly2(np.array(grid, dtype=float)[:, :, None, None])


def scalar(x):
    return float(np.asarray(x).reshape(-1)[0])


# -- evaluation ---------------------------------------------------------------

def test_eval_identity_monomial():
    assert scalar(eval1(P1(0, 1), 0.5)) == 0.5


def test_eval_root():
    assert scalar(eval1(P1(1, 0, -1), 1.0)) == 0.0


def test_eval2_linear_kernel():
    # s - r: coefficient of s^1 r^0 is 1, of s^0 r^1 is -1
    assert scalar(eval2(P2([[0, -1], [1, 0]]), 0.7, 0.2)) == pytest.approx(0.5, abs=1e-15)


def test_eval_outside_domain_raises():
    with pytest.raises(DomainError):
        eval1(P1(0, 1), 1.5)
    with pytest.raises(DomainError):
        eval2(P2([[1.0]]), 0.5, -0.1)


# -- multiply -----------------------------------------------------------------

def test_multiply_difference_of_squares():
    out = multiply(P1(1, 1), P1(1, -1))
    np.testing.assert_array_equal(out.coeffs[:, 0, 0], [1, 0, -1])


def test_multiply_s_times_kernel():
    out = multiply(P1(0, 1), P2([[0, -1], [1, 0]]))
    assert isinstance(out, MatPoly2)
    c = np.zeros_like(out.coeffs[..., 0, 0])
    c[2, 0], c[1, 1] = 1.0, -1.0
    np.testing.assert_array_equal(out.coeffs[..., 0, 0], c)


def test_multiply_identity(rng):
    p = MatPoly1(rng.standard_normal((4, 2, 3)))
    out = multiply(MatPoly1.identity(2), p)
    np.testing.assert_array_equal(out.coeffs, p.coeffs)


def test_multiply_dimension_mismatch():
    with pytest.raises(ValueError):
        multiply(MatPoly1.identity(2), MatPoly1.identity(3))


def test_mixed_domain_is_an_error():
    with pytest.raises(DomainError):
        multiply(P1(1, 1), P1(1, 1, domain=Interval(0.0, 2.0)))


# -- linear_combine -----------------------------------------------------------

def test_linear_combine_cancel_trims_to_degree_zero():
    p = P1(1, 2, 3)
    out = linear_combine(1.0, p, -1.0, p)
    assert out.degree == 0
    assert out.is_zero()


def test_linear_combine_sum():
    out = linear_combine(2.0, P1(0, 1), 3.0, P1(0, 0, 1))
    np.testing.assert_array_equal(out.coeffs[:, 0, 0], [0, 2, 3])


def test_linear_combine_zero_weight():
    q = P1(4, 5, 6)
    out = linear_combine(0.0, P1(1, 1), 1.0, q)
    np.testing.assert_array_equal(out.coeffs, q.coeffs)


def test_linear_combine_shape_mismatch():
    with pytest.raises(ValueError):
        linear_combine(1.0, MatPoly1.identity(2), 1.0, MatPoly1.identity(3))


# -- integrate ----------------------------------------------------------------

def test_definite_integral_of_s():
    assert scalar(integrate(P1(0, 1), "definite")) == 0.5


def test_lower_s_of_constant():
    out = integrate(P1(1.0), "lower_s")
    np.testing.assert_array_equal(out.coeffs[:, 0, 0], [0, 1])


def test_nested_lower_integral_matches_quadrature():
    # int_0^s int_0^t dr dt = s^2 / 2
    inner = integrate(P2([[1.0]]), "over_r", "lower")  # t
    outer = integrate(inner, "lower_s")
    np.testing.assert_allclose(outer.coeffs[:, 0, 0], [0, 0, 0.5], atol=1e-15)
    # independent oracle: 64-node Gauss rule on the triangle
    g = QuadratureGrid.gauss(64)
    for s in (0.3, 0.8, 1.0):
        t, wt = s * g.nodes, s * g.weights
        val = np.sum(wt * t)  # inner integral over [0, t] of 1 is t
        assert scalar(eval1(outer, s)) == pytest.approx(val, abs=1e-14)


def test_integrate_mode_mismatch():
    with pytest.raises(ValueError):
        integrate(P1(1.0), "over_r")
    with pytest.raises(ValueError):
        integrate(P2([[1.0]]), "lower_s")


# -- affine_remap -------------------------------------------------------------

def test_affine_remap_scale():
    out = affine_remap(P1(0, 1), 0.5, 0.0)
    np.testing.assert_array_equal(out.coeffs[:, 0, 0], [0, 0.5])


def test_affine_remap_to_unit_interval():
    p = P1(0, 0, 1, domain=Interval(0.0, 2.0))
    out = affine_remap(p, 2.0, 0.0)
    assert out.domain == Interval(0.0, 1.0)
    np.testing.assert_array_equal(out.coeffs[:, 0, 0], [0, 0, 4])


def test_affine_remap_round_trip(rng):
    p = MatPoly1(rng.standard_normal((6, 2, 2)), Interval(1.0, 3.0))
    q = affine_remap(p, 2.0, 1.0)  # lives on [0, 1]
    back = affine_remap(q, 0.5, -0.5)
    assert back.domain == p.domain
    np.testing.assert_allclose(back.coeffs, p.coeffs, atol=1e-14)


def test_affine_remap_rejects_zero_slope():
    with pytest.raises(ValueError):
        affine_remap(P1(0, 1), 0.0, 1.0)


# -- properties ---------------------------------------------------------------

coeffs = st.lists(st.integers(-8, 8), min_size=1, max_size=7)


@given(coeffs)
def test_derivative_of_lower_integral_is_identity(c):
    p = P1(*c)
    back = integrate(p, "lower_s").derivative()
    np.testing.assert_allclose(back.pad(p.degree)[: p.degree + 1], p.coeffs, atol=1e-13)


@given(coeffs, coeffs, coeffs)
def test_multiply_associative(a, b, c):
    pa, pb, pc = P1(*a), P1(*b), P1(*c)
    left = multiply(multiply(pa, pb), pc)
    right = multiply(pa, multiply(pb, pc))
    np.testing.assert_array_equal(left.coeffs, right.coeffs)


@given(coeffs, coeffs, coeffs, st.integers(-4, 4), st.integers(-4, 4))
def test_multiply_distributes(a, b, c, alpha, beta):
    pa, pb, pc = P1(*a), P1(*b), P1(*c)
    left = multiply(pa, linear_combine(alpha, pb, beta, pc))
    right = linear_combine(alpha, multiply(pa, pb), beta, multiply(pa, pc))
    d = max(left.degree, right.degree)
    np.testing.assert_array_equal(left.pad(d), right.pad(d))


def test_split_integral_equals_definite(rng):
    for _ in range(20):
        p = MatPoly1(rng.standard_normal((rng.integers(1, 8), 1, 1)))
        s = rng.uniform()
        lo = scalar(eval1(integrate(p, "lower_s"), s))
        hi = scalar(eval1(integrate(p, "upper_s"), s))
        assert lo + hi == pytest.approx(scalar(integrate(p, "definite")), abs=1e-13)
