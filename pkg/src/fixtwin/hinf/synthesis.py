"""H-infinity optimal PI estimator synthesis.

For the error dynamics ``T e' + Tw w' = (A + L C2) e + (B1 + L D21) w`` and
``z_e = C1 e + D11 w`` the storage ``V = <T e + Tw w, P (T e + Tw w)>`` with
``Z = P L`` gives, after a Schur complement on the output, the operator
inequality ``M <= 0`` with blocks ordered ``(w, v, e)``::

    M11 = -g I + Tw* G + G* Tw     M12 = D11^T        M13 = (T* G + F* Tw)*
    M22 = -g I                      M23 = C1
    M33 = T* F + F* T

where ``F = P A + Z C2`` and ``G = P B1 + Z D21``.  Every block is affine in
``(P, Z, g)``.  Negativity is certified by ``-M - eta diag(I, I, T* T) =
Zb* Q2 Zb`` with ``Q2 >= 0``; the polynomial coefficients of both sides are
matched, giving an SDP.  ``g`` is minimized by bisection.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..pde2pie import PIESystem
from ..pi import FourPI, adjoint, compose, concat
from ..poly import MatPoly1
from .cone import PosPIVar
from .gain import GainOperator, invert_apply, inversion_residual
from .sdp import ACCEPT_TOL, SDPSolution, StandardSDP, solve_cvxopt

logger = logging.getLogger(__name__)

MAX_BLOCK = 400
SOLVER_TOL = 1e-6


class SynthesisError(RuntimeError):
    """Infeasible LPI, solver failure or rejected gain recovery."""


@dataclass
class ZVar:
    """Free decision operator ``Z: R^ny -> R^m x L2^p`` (matrix plus polynomial in s)."""

    dims: tuple[int, int]
    n_y: int
    degree: int = 2
    domain: object = None

    @property
    def n_vars(self) -> int:
        m, p = self.dims
        return m * self.n_y + p * self.n_y * (self.degree + 1)

    def operator(self, z: np.ndarray) -> FourPI:
        m, p = self.dims
        z = np.asarray(z, dtype=float)
        P = z[: m * self.n_y].reshape(m, self.n_y)
        Q2 = z[m * self.n_y:].reshape(self.degree + 1, p, self.n_y)
        kw = {} if self.domain is None else {"domain": self.domain}
        return FourPI.build((m, p), (self.n_y, 0), P=P, Q2=MatPoly1(Q2, **kw), **kw)

    def basis(self) -> list[FourPI]:
        out = []
        for k in range(self.n_vars):
            e = np.zeros(self.n_vars)
            e[k] = 1.0
            out.append(self.operator(e))
        return out


def lpi_operator(sys: PIESystem, P: FourPI | None, Z: FourPI | None, gamma: float = 0.0,
                 constant: bool = True) -> FourPI:
    """The block operator ``M(P, Z, gamma)`` on ``(w, v, e)``.

    With ``constant=False`` the ``P``/``Z``-independent blocks (``-g I``,
    ``D11``, ``C1``) are left out, which makes the map linear in ``(P, Z)``.
    """
    T, Tw, A, B1, C1, D11, C2, D21 = (sys.T, sys.Tw, sys.A, sys.B1, sys.C1, sys.D11, sys.C2, sys.D21)
    m, p = sys.state_dims
    n_w, n_z = Tw.dims_in[0], C1.dims_out[0]
    dom = T.domain
    F = FourPI.zero((m, p), (m, p), dom)
    G = FourPI.zero((m, p), (n_w, 0), dom)
    if P is not None:
        F = F + compose(P, A)
        G = G + compose(P, B1)
    if Z is not None:
        F = F + compose(Z, C2)
        G = G + compose(Z, D21)
    Ts, Tws, Fs, Gs = adjoint(T), adjoint(Tw), adjoint(F), adjoint(G)
    M11 = compose(Tws, G) + compose(Gs, Tw)
    M31 = compose(Ts, G) + compose(Fs, Tw)
    M33 = compose(Ts, F) + compose(Fs, T)
    I_w = FourPI.matrix(np.eye(n_w))
    I_z = FourPI.matrix(np.eye(n_z))
    if constant:
        M11 = M11 - I_w.scale(gamma)
        M22 = I_z.scale(-gamma)
        M21, M32 = D11, adjoint(C1)
    else:
        M22 = I_z.scale(0.0)
        M21 = D11.scale(0.0)
        M32 = adjoint(C1).scale(0.0)
    return concat([[M11, adjoint(M21), adjoint(M31)],
                   [M21, M22, adjoint(M32)],
                   [M31, M32, M33]])


def margin_operator(sys: PIESystem) -> FourPI:
    """``diag(I, I, T* T)``: the strictness weight of the certificate."""
    n_w, n_z = sys.Tw.dims_in[0], sys.C1.dims_out[0]
    TT = compose(adjoint(sys.T), sys.T)
    return concat([[FourPI.matrix(np.eye(n_w)), None, None],
                   [None, FourPI.matrix(np.eye(n_z)), None],
                   [None, None, TT]])


def _degs(ops):
    dq1 = max(o.Q1.degree for o in ops)
    dq2 = max(o.Q2.degree for o in ops)
    dr0 = max(o.R0.degree for o in ops)
    ds = max(max(o.R1.degree[0], o.R2.degree[0]) for o in ops)
    dr = max(max(o.R1.degree[1], o.R2.degree[1]) for o in ops)
    return dq1, dq2, dr0, (ds, dr), (ds, dr)


@dataclass
class LPIProblem:
    """Coefficient-matched LPI: ``A_lin x + b0 + gamma * b1 = 0`` plus PSD blocks."""

    sys: PIESystem
    Pvar: PosPIVar
    Zvar: ZVar
    Cvar: PosPIVar
    eta: float
    A: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    build_seconds: float = 0.0

    @property
    def offsets(self) -> dict:
        nq, nz = self.Pvar.n_vars, self.Zvar.n_vars
        return {"Q": (0, nq), "Z": (nq, nq + nz), "Q2": (nq + nz, nq + nz + self.Cvar.n_vars)}

    def sdp(self, gamma: float, objective: str = "feasibility") -> StandardSDP:
        n = self.A.shape[1]
        c = np.zeros(n)
        if objective == "trace":
            K = self.Pvar.size
            from .cone import svec_basis
            for k, (a, b) in enumerate(svec_basis(K)):
                if a == b:
                    c[k] = 1.0
        off = self.offsets
        return StandardSDP(n, c, self.A, -(self.b0 + gamma * self.b1),
                           [(off["Q"][0], self.Pvar.size), (off["Q2"][0], self.Cvar.size)],
                           labels={"gamma": gamma})

    def split(self, x: np.ndarray):
        off = self.offsets
        return tuple(x[slice(*off[k])] for k in ("Q", "Z", "Q2"))

    def lift(self, x: np.ndarray, other: "LPIProblem") -> np.ndarray:
        """Decision vector of ``other`` (same system, higher degrees) with the same ``P, Z, Q2``."""
        xq, xz, xc = self.split(x)
        zs, zo = self.Zvar, other.Zvar
        if zo.degree < zs.degree:
            raise ValueError("can only lift to higher degrees")
        m, p = zs.dims
        head = m * zs.n_y
        z = np.zeros(zo.n_vars)
        z[:head] = xz[:head]
        z[head: head + len(xz) - head] = xz[head:]
        return np.concatenate([other.Pvar.svec(self.Pvar.lift(self.Pvar.matrix(xq), other.Pvar)), z,
                               other.Cvar.svec(self.Cvar.lift(self.Cvar.matrix(xc), other.Cvar))])

    def check(self, x: np.ndarray, gamma: float) -> SDPSolution:
        """Residuals of a candidate point, labelled ``lifted`` when it is feasible."""
        sdp = self.sdp(gamma)
        eq = float(np.linalg.norm(sdp.A @ x - sdp.b) / max(1.0, np.linalg.norm(sdp.b)))
        eigs = tuple(float(np.linalg.eigvalsh(sdp.block_matrix(x, l)).min()) for l in range(len(sdp.blocks)))
        ok = eq < ACCEPT_TOL and all(e > -ACCEPT_TOL for e in eigs)
        return SDPSolution("lifted" if ok else "infeasible_lift", x, equality_residual=eq, min_eigs=eigs)


def transcribe_lpi(sys: PIESystem, degree: int = 2, eps: float = 1e-3, z_degree: int | None = None,
                   cert_degree: int | None = None, eta: float = 1e-6) -> LPIProblem:
    """Assemble the coefficient-matching equalities of the estimator LPI."""
    t0 = time.perf_counter()
    dims = sys.dims()
    if dims["n_q"] or dims["n_p"]:
        raise SynthesisError("synthesis needs the nominal system (no nonlinear channels)")
    m, p = sys.state_dims
    n_w, n_z, n_y = dims["n_w"], dims["n_z"], dims["n_y"]
    dom = sys.T.domain
    Pvar = PosPIVar((m, p), degree, eps, True, dom)
    Zvar = ZVar((m, p), n_y, degree if z_degree is None else z_degree, dom)
    if cert_degree is None:
        cert_degree = degree + 2 if p else 0
    # the certificate may only carry a multiplier if M33 can have one
    mult = bool(p) and not sys.T.R0.is_zero()
    Cvar = PosPIVar((n_w + n_z + m, p), cert_degree, 0.0, mult, dom)
    if Pvar.size > MAX_BLOCK or Cvar.size > MAX_BLOCK:
        raise SynthesisError(f"PSD block of size {max(Pvar.size, Cvar.size)} exceeds the embedded "
                             f"solver limit {MAX_BLOCK}; lower the degree")
    lin = [lpi_operator(sys, Pk, None, constant=False) for Pk in Pvar.basis()]
    lin += [lpi_operator(sys, None, Zk, constant=False) for Zk in Zvar.basis()]
    cert = Cvar.basis()
    const0 = lpi_operator(sys, Pvar.shift(), None, 0.0) + margin_operator(sys).scale(eta)
    const1 = lpi_operator(sys, None, None, 1.0) - lpi_operator(sys, None, None, 0.0)
    ops = lin + cert + [const0, const1]
    degs = _degs(ops)
    cols = [o.coefficient_vector(degs) for o in lin + cert]
    A = np.stack(cols, axis=1)
    b0 = const0.coefficient_vector(degs)
    b1 = const1.coefficient_vector(degs)
    keep = np.any(A != 0, axis=1) | (b0 != 0) | (b1 != 0)
    lpi = LPIProblem(sys, Pvar, Zvar, Cvar, eta, A[keep], b0[keep], b1[keep], time.perf_counter() - t0)
    logger.info("LPI: %d equalities x %d variables (Q %d, Z %d, Q2 %d) in %.2fs", lpi.A.shape[0],
                lpi.A.shape[1], Pvar.n_vars, Zvar.n_vars, Cvar.n_vars, lpi.build_seconds)
    return lpi


@dataclass
class EstimatorResult:
    gamma: float
    gain: GainOperator
    P: FourPI
    Z: FourPI
    Q: np.ndarray
    Q2: np.ndarray
    degree: int
    eps: float
    diagnostics: dict = field(default_factory=dict)
    lpi: LPIProblem | None = field(default=None, repr=False)
    x: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "degree": self.degree,
            "eps": self.eps,
            "inversion_residual": self.diagnostics.get("inversion_residual"),
            "truncation_residual": self.diagnostics.get("truncation_residual"),
            "certificate_max_form": self.diagnostics.get("certificate_max_form"),
            "min_rayleigh_P": self.diagnostics.get("min_rayleigh_P"),
            "bisection": self.diagnostics.get("bisection", []),
            "solver": self.diagnostics.get("solver", {}),
            "gain": self.gain.as_dict(),
            "Z_coefficients": self.diagnostics.get("Z_coefficients", []),
            "Q_min_eig": float(np.linalg.eigvalsh(self.Q).min()) if self.Q.size else 0.0,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _psd_clip(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return (V * np.clip(w, 0.0, None)) @ V.T


def _solve(lpi: LPIProblem, gamma: float) -> SDPSolution:
    # a zero objective keeps the iterates central; trace objectives push Q onto
    # the cone boundary where the interior-point method stalls
    sol = solve_cvxopt(lpi.sdp(gamma), tol=SOLVER_TOL)
    logger.debug("gamma %.6g -> %s", gamma, sol.status)
    return sol


def bisect_gamma(lpi: LPIProblem, rtol: float = 1e-3, g_start: float = 1.0, g_max: float = 1e6,
                 g_min: float = 1e-8, upper: tuple[float, SDPSolution] | None = None):
    """Smallest feasible ``gamma`` to relative tolerance ``rtol``.

    ``upper`` is a known feasible pair ``(gamma, solution)`` used as the
    starting bracket instead of probing from ``g_start``.
    """
    history = []

    def feas(g):
        sol = _solve(lpi, g)
        history.append((g, sol.status))
        return sol if sol.feasible else None

    if upper is not None:
        hi, sol_hi = upper
        history.append((hi, sol_hi.status))
    else:
        hi, sol_hi = g_start, feas(g_start)
    lo = None
    while sol_hi is None:
        lo = hi
        hi *= 8.0
        if hi > g_max:
            raise SynthesisError(f"LPI infeasible up to gamma = {g_max:g}; raise the degree")
        sol_hi = feas(hi)
    if lo is None:
        lo = hi
        while True:
            lo /= 8.0
            if lo < g_min:
                lo = 0.0
                break
            s = feas(lo)
            if s is None:
                break
            hi, sol_hi = lo, s
    while hi - lo > rtol * hi:
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        s = feas(mid)
        if s is None:
            lo = mid
        else:
            hi, sol_hi = mid, s
    return hi, sol_hi, history


def _random_state(rng, dims, deg, domain):
    m, p = dims
    u = rng.standard_normal(m)
    v = MatPoly1(rng.standard_normal((deg + 1, p, 1)), domain, trim=False)
    return u, v


def quadratic_form_poly(op: FourPI, u, v: MatPoly1) -> tuple[float, float]:
    """``(<x, op x>, |x|^2)`` for a polynomial state ``x = (u, v)`` (exact)."""
    from ..poly import integrate, multiply

    f, g = op.apply_poly(u, v)
    q = float(np.dot(u, f.ravel()))
    nrm = float(np.dot(u, u))
    if v.shape[0]:
        q += float(integrate(multiply(v.T(), g), "definite").ravel()[0])
        nrm += float(integrate(multiply(v.T(), v), "definite").ravel()[0])
    return q, nrm


def certificate_check(M: FourPI, samples: int = 200, seed: int = 0, degree: int = 5) -> float:
    """Largest normalized quadratic form of ``M`` over random polynomial states."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(samples):
        u, v = _random_state(rng, M.dims_in, degree, M.domain)
        q, n = quadratic_form_poly(M, u, v)
        worst = max(worst, q / n)
    return float(worst)


def rayleigh_min(P: FourPI, samples: int = 200, seed: int = 1, degree: int = 5) -> float:
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(samples):
        u, v = _random_state(rng, P.dims_in, degree, P.domain)
        q, n = quadratic_form_poly(P, u, v)
        best = min(best, q / n)
    return float(best)


def synthesize_estimator(sys: PIESystem, eps: float = 1e-3, degree: int = 2, N_inv: int = 32,
                         rtol: float = 1e-3, z_degree: int | None = None, cert_degree: int | None = None,
                         eta: float = 1e-6, inv_tol: float = 1e-6, lpi: LPIProblem | None = None,
                         g_start: float = 1.0, g_max: float = 1e6, g_min: float = 1e-8,
                         warm: EstimatorResult | None = None) -> EstimatorResult:
    """Minimize the certified L2 gain and recover ``L = P^{-1} Z``.

    ``warm`` is a result at lower degrees for the same system.  Its decision
    variables are lifted into this problem (the monomial cones are nested) and
    bracket the bisection from above, so the returned gain is never worse
    than the warm one even where the interior-point method stalls.
    """
    t0 = time.perf_counter()
    lpi = lpi or transcribe_lpi(sys, degree, eps, z_degree, cert_degree, eta)
    upper = None
    if warm is not None:
        if warm.lpi is None or warm.x is None:
            raise SynthesisError("warm result carries no decision vector")
        lifted = lpi.check(warm.lpi.lift(warm.x, lpi), warm.gamma)
        if not lifted.feasible:
            raise SynthesisError(f"lifted warm point is infeasible (equality residual "
                                 f"{lifted.equality_residual:.3g}, eigs {lifted.min_eigs})")
        upper = (warm.gamma, lifted)
    gamma, sol, hist = bisect_gamma(lpi, rtol, g_start, g_max, g_min, upper)
    xq, xz, xc = lpi.split(sol.x)
    Q = _psd_clip(lpi.Pvar.matrix(xq))
    Q2 = lpi.Cvar.matrix(xc)
    P = lpi.Pvar.operator(Q)
    Z = lpi.Zvar.operator(xz)
    M = lpi_operator(sys, P, Z, gamma)
    worst = certificate_check(M)
    rq = rayleigh_min(P)
    gain, resid = invert_apply(P, Z, N_inv, tol=inv_tol)
    diag = {
        "bisection": [[float(g), s] for g, s in hist],
        "solver": {"status": sol.status, "iterations": sol.iterations,
                   "equality_residual": sol.equality_residual, "min_eigs": list(sol.min_eigs)},
        "certificate_max_form": worst,
        "min_rayleigh_P": rq,
        "inversion_residual": resid,
        "truncation_residual": inversion_residual(P, Z, gain, projected=False),
        "lpi_shape": list(lpi.A.shape),
        "seconds": time.perf_counter() - t0,
        "Z_coefficients": xz.tolist(),
    }
    logger.info("synthesis: gamma %.6g, certificate %.3g, inversion residual %.3g", gamma, worst, resid)
    return EstimatorResult(float(gamma), gain, P, Z, Q, Q2, degree, eps, diag, lpi, sol.x)


def synthesize_continuation(sys: PIESystem, eps: float = 1e-3, degree: int = 2, start_degree: int = 1,
                            **kwargs) -> EstimatorResult:
    """Synthesize at ``start_degree, ..., degree``, each run warm-started from the previous one.

    The certified gain is then nonincreasing in the degree.  Gain recovery
    runs at every step, which also screens each intermediate ``P``.
    """
    if not 0 <= start_degree <= degree:
        raise ValueError("need 0 <= start_degree <= degree")
    res = None
    for d in range(start_degree, degree + 1):
        res = synthesize_estimator(sys, eps, d, warm=res, **kwargs)
        logger.info("continuation: degree %d gamma %.6g", d, res.gamma)
    return res
