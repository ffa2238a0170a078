from __future__ import annotations

import numpy as np
import pytest

from fixtwin.benchmarks import heat_pie, multi_state_ode, scalar_ode
from fixtwin.hinf.cone import PosPIVar, monomial_basis
from fixtwin.hinf.estimator import (build_error_system, default_family, ic_sweep, simulate_error,
                                    verify_gain)
from fixtwin.hinf.gain import GainOperator, InversionError, invert_apply
from fixtwin.hinf.sdp import StandardSDP, solve_cvxopt
from fixtwin.hinf.synthesis import (ZVar, certificate_check, lpi_operator, margin_operator,
                                    quadratic_form_poly, rayleigh_min, synthesize_continuation, synthesize_estimator,
                                    transcribe_lpi)
from fixtwin.pi import FourPI, adjoint
from fixtwin.poly import MatPoly1
from fixtwin.signals import Constant
from fixtwin.simulate import SimConfig

QUICK = SimConfig(t_final=5.0, dt=0.01, N=8)


@pytest.fixture(scope="module")
def heat():
    return heat_pie("boundary_sensed")


def _random_psd(rng, K):
    X = rng.standard_normal((K, K))
    return X @ X.T


def _random_state(rng, dims, deg=5):
    m, p = dims
    return rng.standard_normal(m), MatPoly1(rng.standard_normal((deg + 1, p, 1)), trim=False)


# cone


def test_degree_zero_identity_q_is_positive(rng):
    var = PosPIVar((1, 1), degree=0, eps=1e-3)
    P = var.operator(np.eye(var.size))
    # the multiplier part is the identity scaled by 1 + eps
    assert P.R0.degree == 0
    assert P.R0.coeffs[0, 0, 0] == pytest.approx(1.0 + 1e-3, abs=1e-14)
    for _ in range(100):
        u, v = _random_state(rng, (1, 1))
        q, n = quadratic_form_poly(P, u, v)
        assert q >= 1e-3 * n * (1 - 1e-12)


def test_zero_q_gives_eps_identity():
    var = PosPIVar((2, 1), degree=2, eps=0.25)
    P = var.operator(np.zeros((var.size, var.size)))
    assert P.allclose(FourPI.identity(2, 1).scale(0.25), atol=1e-15)


def test_cone_operator_is_self_adjoint(rng):
    var = PosPIVar((1, 2), degree=1)
    P = var.operator(_random_psd(rng, var.size))
    assert P.allclose(adjoint(P), atol=1e-10)


def test_monomial_basis_shape():
    Z = monomial_basis((1, 2), 2)
    # per channel: 3 multipliers and 6 monomials in each half
    assert Z.dims_out == (1, 2 * (3 + 2 * 6))
    with pytest.raises(ValueError):
        monomial_basis((1, 1), -1)


def test_lift_preserves_operator(rng):
    lo, hi = PosPIVar((1, 1), 1), PosPIVar((1, 1), 3)
    Q = _random_psd(rng, lo.size)
    assert lo.operator(Q).allclose(hi.operator(lo.lift(Q, hi)), atol=1e-12)
    with pytest.raises(ValueError):
        hi.lift(np.eye(hi.size), lo)


# SDP backend


def test_sdp_backend_small_problem():
    # minimize a subject to [[a, b], [b, c]] >= 0, b = 1, a = c: optimum a = 1
    sdp = StandardSDP(3, np.array([1.0, 0.0, 0.0]), np.array([[0.0, 1.0, 0.0], [1.0, 0.0, -1.0]]),
                      np.array([1.0, 0.0]), [(0, 2)])
    sol = solve_cvxopt(sdp, tol=1e-9)
    assert sol.feasible
    assert sol.x[0] == pytest.approx(1.0, abs=1e-6)
    assert "blocks 2" in sdp.to_text()


def test_sdp_inconsistent_equalities():
    sdp = StandardSDP(3, np.zeros(3), np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]), np.array([1.0, 2.0]),
                      [(0, 2)])
    assert solve_cvxopt(sdp).status == "infeasible_equalities"


# transcription


def test_transcription_counts(heat):
    lpi = transcribe_lpi(heat, degree=1)
    nq, nz, nc = lpi.Pvar.n_vars, lpi.Zvar.n_vars, lpi.Cvar.n_vars
    assert lpi.A.shape[1] == nq + nz + nc
    assert nq == lpi.Pvar.size * (lpi.Pvar.size + 1) // 2
    assert nz == 1 * 2  # one output, linear polynomial on one channel
    assert lpi.b0.shape == lpi.b1.shape == (lpi.A.shape[0],)
    assert not np.any(np.all(lpi.A == 0, axis=1) & (lpi.b0 == 0) & (lpi.b1 == 0))


def test_transcription_matches_operator(heat, rng):
    # A x + b0 + g b1 lists the coefficients of M(P, Z, g) + eta margin + Zb* Q2 Zb
    lpi = transcribe_lpi(heat, degree=0)
    for _ in range(3):
        x = rng.standard_normal(lpi.A.shape[1])
        g = rng.uniform(0.1, 2.0)
        xq, xz, xc = lpi.split(x)
        total = (lpi_operator(heat, lpi.Pvar.operator(lpi.Pvar.matrix(xq)), lpi.Zvar.operator(xz), g)
                 + margin_operator(heat).scale(lpi.eta) + lpi.Cvar.gram(lpi.Cvar.matrix(xc)))
        resid = lpi.A @ x + lpi.b0 + g * lpi.b1
        assert np.linalg.norm(resid) == pytest.approx(np.linalg.norm(total.coefficient_vector(total.degrees())),
                                                      rel=1e-10)


def test_lifted_point_has_same_residual(heat, rng):
    lo, hi = transcribe_lpi(heat, degree=0), transcribe_lpi(heat, degree=1)
    for _ in range(5):
        x = rng.standard_normal(lo.A.shape[1])
        g = rng.uniform(0.1, 2.0)
        r_lo = np.linalg.norm(lo.A @ x + lo.b0 + g * lo.b1)
        xl = lo.lift(x, hi)
        r_hi = np.linalg.norm(hi.A @ xl + hi.b0 + g * hi.b1)
        assert r_hi == pytest.approx(r_lo, rel=1e-10)


def test_synthesis_rejects_nonlinear_channels():
    from fixtwin.fixation import fixation_model
    from fixtwin.hinf.synthesis import SynthesisError

    model = fixation_model()
    with pytest.raises(SynthesisError):
        transcribe_lpi(model.sys, degree=0)


# gain recovery


def _random_z(rng, dims=(0, 1), n_y=1, degree=2):
    zv = ZVar(dims, n_y, degree)
    return zv.operator(rng.standard_normal(zv.n_vars))


def test_invert_identity_gives_z(rng):
    Z = _random_z(rng)
    L, res = invert_apply(FourPI.identity(0, 1), Z, 32)
    ref = GainOperator.from_fourpi(Z, 32)
    # equal up to the round-off of the Galerkin solve
    np.testing.assert_allclose(L.coeffs, ref.coeffs, rtol=0, atol=1e-13)
    assert res <= 1e-13


def test_invert_twice_identity_halves(rng):
    Z = _random_z(rng)
    L, _ = invert_apply(FourPI.identity(0, 1).scale(2.0), Z, 32)
    np.testing.assert_allclose(L.coeffs, 0.5 * GainOperator.from_fourpi(Z, 32).coeffs, rtol=0, atol=1e-13)


def test_invert_random_certified_p(rng):
    var = PosPIVar((0, 1), degree=2, eps=1e-2)
    P = var.operator(_random_psd(rng, var.size))
    assert rayleigh_min(P) > 0
    L, res = invert_apply(P, _random_z(rng), 32)
    assert res <= 1e-6
    assert L.coeffs.shape == (33, 1)


def test_invert_refuses_above_tolerance(rng):
    var = PosPIVar((0, 1), degree=1)
    P = var.operator(_random_psd(rng, var.size))
    with pytest.raises(InversionError):
        invert_apply(P, _random_z(rng), 8, tol=1e-300)


# error system


def test_zero_gain_keeps_a(heat):
    err = build_error_system(heat, None)
    nom = heat.nominal()
    np.testing.assert_array_equal(err.A.coefficient_vector(err.A.degrees()),
                                  nom.A.coefficient_vector(err.A.degrees()))
    with pytest.raises(ValueError):
        build_error_system(heat, FourPI.zero((0, 1), (2, 0)))


def test_zero_disturbance_zero_error(heat):
    err = build_error_system(heat, None)
    tr = simulate_error(err, QUICK)
    assert np.max(np.abs(tr.z)) == 0.0


def test_ic_sweep_linearity(heat):
    err = build_error_system(heat, None)
    e0 = lambda s: np.sin(np.pi * np.asarray(s))[:, None]  # noqa: E731
    sweep = ic_sweep(err, QUICK, e0, w=Constant(1.0))
    assert sweep.ratio(0.10, 0.05) == pytest.approx(2.0, abs=1e-6)
    assert sweep.superposition_residual <= 1e-8
    assert sweep.field_superposition_residual <= 1e-8


def test_verify_gain_zero_signal(heat):
    err = build_error_system(heat, None)
    rep = verify_gain(err, [Constant(0.0)], QUICK, include_paper_signal=False)
    assert rep.ratios == [] and rep.peaks == [] and rep.skipped == [0]
    assert rep.max_ratio == 0.0


# synthesis


@pytest.fixture(scope="module")
def scalar_result():
    return synthesize_estimator(scalar_ode())


def test_scalar_ode_bound_dominates_true_norm(scalar_result):
    # e' = (-1 + l) e + (1 + 0.1 l) w, z = e: the H-infinity norm is |1 + 0.1 l| / (1 - l)
    ell = float(scalar_result.gain.coeffs[0, 0])
    assert ell < 1.0
    assert abs(1 + 0.1 * ell) / (1 - ell) <= scalar_result.gamma
    assert scalar_result.diagnostics["certificate_max_form"] <= 1e-7


def test_scalar_ode_empirical_ratio(scalar_result):
    err = build_error_system(scalar_ode(), scalar_result.gain)
    rep = verify_gain(err, default_family(5), SimConfig(20.0, 0.01, N=4))
    assert rep.max_ratio <= scalar_result.gamma


def test_full_state_not_worse_than_boundary():
    g_full = synthesize_estimator(multi_state_ode(True)).gamma
    g_bdry = synthesize_estimator(multi_state_ode(False)).gamma
    assert g_full <= 1.05 * g_bdry


def test_result_serializes(scalar_result):
    d = scalar_result.as_dict()
    assert d["gamma"] == scalar_result.gamma
    assert "bisection" in d and d["gain"]["n_y"] == 1


@pytest.mark.slow
def test_degree_monotone_with_continuation(heat):
    lo = synthesize_estimator(heat, degree=0)
    hi = synthesize_estimator(heat, degree=1, warm=lo)
    assert hi.gamma <= lo.gamma * (1 + 1e-3)
    assert hi.diagnostics["bisection"][0][1] == "lifted"
    assert certificate_check(lpi_operator(heat, hi.P, hi.Z, hi.gamma)) <= 1e-7
    assert synthesize_continuation(heat, degree=1, start_degree=0).gamma == pytest.approx(hi.gamma)
