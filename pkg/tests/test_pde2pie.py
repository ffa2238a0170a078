from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as npleg
import pytest

from fixtwin.benchmarks import double_neumann, heat_dirichlet, heat_pie
from fixtwin.fixation import fixation_model
from fixtwin.graph import make_pde
from fixtwin.pde2pie import (SingularBoundaryError, boundary_residual, compute_BT, convert_to_pie,
                             dump_system, primal_poly, reconstruct_primal)
from fixtwin.pi import FourPI, discretize_galerkin
from fixtwin.poly import MatPoly1, MatPoly2, eval2


@pytest.fixture(scope="module")
def fixation():
    return fixation_model()


@pytest.fixture(scope="module")
def dirichlet():
    return heat_pie("dirichlet")


# -- B_T gate -----------------------------------------------------------------

def test_fixation_bt_invertible(fixation):
    assert fixation.sys.bt.invertible


def test_double_neumann_bt_singular():
    bt = compute_BT(double_neumann())
    assert not bt.invertible
    with pytest.raises(SingularBoundaryError):
        convert_to_pie(double_neumann())


def test_dirichlet_bt_structure():
    # core vector (x(0), x_s(0)); rows x(0) = 0 and x(1) = 0
    bt = compute_BT(heat_dirichlet())
    assert bt.invertible
    M = bt.matrix / np.max(np.abs(bt.matrix), axis=1, keepdims=True)
    np.testing.assert_array_equal(M, [[1, 0], [1, 1]])


def test_bt_rejects_miscount():
    pde = make_pde([1.0], [[1, 0, 0, 0]])
    with pytest.raises(Exception):
        compute_BT(pde)


# -- conversion ---------------------------------------------------------------

def test_dirichlet_kernels(dirichlet):
    T = dirichlet.T
    for s, r in ((0.8, 0.3), (0.5, 0.1), (0.9, 0.9)):
        assert float(eval2(T.R1, s, r)[0, 0]) == pytest.approx((s - r) - s * (1 - r), abs=1e-14)
    for s, r in ((0.2, 0.7), (0.0, 0.5)):
        assert float(eval2(T.R2, s, r)[0, 0]) == pytest.approx(-s * (1 - r), abs=1e-14)


def test_dirichlet_A_is_diffusivity_multiplier():
    sys = heat_pie("dirichlet", D=0.7)
    A = sys.A
    assert A.R1.is_zero() and A.R2.is_zero()
    np.testing.assert_allclose(A.R0.coeffs.ravel(), [0.7], atol=1e-15)


def test_fixation_Tw_single_input(fixation):
    Tw = fixation.sys.Tw
    assert Tw.dims_in == (1, 0)
    assert not Tw.is_zero()


def test_second_derivative_of_Tv_is_v(rng, fixation):
    for sys in (heat_pie("dirichlet"), fixation.sys):
        p = sys.state_dims[1]
        for _ in range(10):
            v = MatPoly1(rng.standard_normal((5, p, 1)))
            x = primal_poly(sys, v)
            back = x.derivative().derivative()
            np.testing.assert_allclose(back.pad(v.degree)[: v.degree + 1], v.coeffs, atol=1e-9)


def test_dirichlet_random_v_boundary_residual(rng, dirichlet):
    for _ in range(50):
        v = MatPoly1(rng.standard_normal((int(rng.integers(1, 7)), 1, 1)))
        assert np.max(np.abs(boundary_residual(dirichlet, v))) <= 1e-12


def test_fixation_boundary_residual(rng, fixation):
    sys = fixation.sys
    for _ in range(50):
        v = MatPoly1(rng.standard_normal((4, 8, 1)))
        res = boundary_residual(sys, v, rng.standard_normal(1), rng.standard_normal(3))
        assert res.shape == (16,)
        assert np.max(np.abs(res)) <= 1e-10


def _d2_orthonormal(M: int) -> np.ndarray:
    """Second derivative on orthonormal shifted Legendre coefficients, degree M -> M - 2."""
    scale = np.sqrt(2 * np.arange(M + 1) + 1)
    out = np.zeros((M - 1, M + 1))
    for j in range(M + 1):
        c = np.zeros(M + 1)
        c[j] = scale[j]
        d = npleg.legder(c, 2) * 4.0  # d/ds = 2 d/dy on [0, 1]
        out[: len(d), j] = d / scale[: len(d)]
    return out


def test_T_inverts_second_derivative_galerkin(dirichlet, fixation):
    # T maps degree-N functions into degree N + 2, so the Galerkin matrix at
    # N + 2 holds T phi_j exactly; the second derivative must give back phi_j
    N = 16
    for sys in (dirichlet, fixation.sys):
        p = sys.state_dims[1]
        MT = discretize_galerkin(sys.T, N + 2)
        D2 = _d2_orthonormal(N + 2)
        nb = N + 3
        worst = 0.0
        for c in range(p):
            for k in range(p):
                blk = MT[c * nb:(c + 1) * nb, k * nb:k * nb + N + 1]
                target = np.eye(N + 1) if c == k else np.zeros((N + 1, N + 1))
                worst = max(worst, np.max(np.abs(D2 @ blk - target)))
        assert worst <= 1e-6


# -- reconstruction -----------------------------------------------------------

def test_reconstruct_zero(fixation):
    x = reconstruct_primal(fixation.sys, MatPoly1(np.zeros((1, 8, 1))))
    assert np.all(x == 0.0)


def test_reconstruct_dirichlet_constant(dirichlet):
    s = np.linspace(0, 1, 9)
    x = reconstruct_primal(dirichlet, MatPoly1.constant([[2.0]]), points=s)
    np.testing.assert_allclose(x[0], s**2 - s, atol=1e-14)
    assert np.max(np.abs(boundary_residual(dirichlet, MatPoly1.constant([[2.0]])))) == pytest.approx(0, abs=1e-15)
    # quadrature path agrees with the exact path
    xq = reconstruct_primal(dirichlet, lambda t: 2.0 * np.ones((len(t), 1)), points=s)
    np.testing.assert_allclose(xq, x, atol=1e-12)


def test_reconstruct_dim_mismatch(dirichlet):
    with pytest.raises(Exception):
        reconstruct_primal(dirichlet, MatPoly1(np.zeros((1, 2, 1))))


def test_dump_system_is_deterministic(dirichlet):
    assert dump_system(dirichlet) == dump_system(heat_pie("dirichlet"))
