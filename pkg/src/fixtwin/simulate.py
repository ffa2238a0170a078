"""PIE-Galerkin projection (PGP) time simulation.

The fundamental state is expanded in the orthonormal Legendre basis of each
function channel, which turns the PIE into the descriptor system::

    E a' + F u' = A a + B u + Bq q,     out = C a + D u + Dq q,     q = Delta(p)

with ``u = col(w, d)``.  It is integrated by the trapezoidal rule written in
increment form (``F (u_{n+1} - u_n)``), so input derivatives are never
needed.  The static nonlinearity is resolved per step by fixed-point
iteration; a step that does not converge is retried as two half steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .pde2pie import PIESystem
from .pi import FourPI, discretize_galerkin, project, sample_matrix
from .poly import MatPoly1
from .signals import as_bank

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Time stepping failed (singular stepping matrix or LFR divergence)."""


@dataclass(frozen=True)
class SimConfig:
    t_final: float
    dt: float
    N: int = 16
    k_max: int = 10
    tol: float = 1e-9
    max_halvings: int = 6
    points: int = 11
    store_every: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if self.N < 4:
            raise ValueError("basis degree N must be >= 4")
        if not self.tol > 0 or self.k_max < 1:
            raise ValueError("fixed-point settings must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Trajectory:
    """Sampled simulation result.

    ``fields`` has shape ``(n_times, n_channels, n_points)`` on the normalized
    report points ``points``; ``positions[c]`` holds their physical
    coordinates for channel ``c``.
    """

    times: np.ndarray
    outputs: dict
    fields: np.ndarray | None = None
    points: np.ndarray | None = None
    channels: tuple = ()
    positions: np.ndarray | None = None
    names: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def y(self):
        return self.outputs.get("y")

    @property
    def z(self):
        return self.outputs.get("z")

    @property
    def p(self):
        return self.outputs.get("p")

    @property
    def q(self):
        return self.outputs.get("q")


@dataclass
class DescriptorModel:
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    Bq: np.ndarray
    outputs: dict  # name -> (C, Du, Dq)
    n_w: int
    n_d: int
    N: int = 0
    state_dims: tuple = (0, 0)
    sample: tuple | None = None  # (S, Su) for field reconstruction
    points: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.E.shape[0]

    def with_A(self, A: np.ndarray, B: np.ndarray | None = None) -> "DescriptorModel":
        return DescriptorModel(self.E, A, self.B if B is None else B, self.F, self.Bq, self.outputs,
                               self.n_w, self.n_d, self.N, self.state_dims, self.sample, self.points,
                               self.extras)


def _gal(op: FourPI, N: int) -> np.ndarray:
    return discretize_galerkin(op, N)


def build_galerkin(sys: PIESystem, N: int = 16, points=None) -> DescriptorModel:
    """Project every operator of ``sys`` onto the degree-``N`` basis."""
    m, p = sys.state_dims
    points = np.linspace(0.0, 1.0, 11) if points is None else np.asarray(points, dtype=float)
    E = _gal(sys.T, N)
    A = _gal(sys.A, N)
    B = np.hstack([_gal(sys.B1, N), _gal(sys.B2, N)])
    F = np.hstack([_gal(sys.Tw, N), _gal(sys.Td, N)])
    Bq = _gal(sys.Bq, N)
    outs = {}
    for name, (C, Dw, Dd, Dq) in {"z": (sys.C1, sys.D11, sys.D12, sys.D1q),
                                   "y": (sys.C2, sys.D21, sys.D22, sys.D2q),
                                   "p": (sys.Cp, sys.Dp1, sys.Dp2, sys.Dpq)}.items():
        outs[name] = (_gal(C, N), np.hstack([Dw.P, Dd.P]), Dq.P)
    sample = None
    if p:
        S = sample_matrix(sys.T, N, points)[m:]
        Su = np.hstack([sample_matrix(sys.Tw, N, points)[m:], sample_matrix(sys.Td, N, points)[m:]])
        sample = (S, Su)
    # channel integrals int_0^1 x_c ds and int_0^1 v_c ds as linear functionals
    extras = {}
    if p:
        ones = FourPI.build((p, 0), (0, p), Q1=np.eye(p), domain=sys.T.domain)
        Ix = _gal(ones @ sys.T, N)
        Iu = np.hstack([_gal(ones @ sys.Tw, N), _gal(ones @ sys.Td, N)])
        Iv = _gal(ones, N)
        extras = {"int_x": (Ix, Iu), "int_v": Iv}
    return DescriptorModel(E, A, B, F, Bq, outs, sys.Tw.dims_in[0], sys.Td.dims_in[0], N, (m, p),
                           sample, points, extras)


def initial_coefficients(sys: PIESystem, N: int, v0=None, u0=None) -> np.ndarray:
    """Basis coefficients of the initial fundamental state.

    ``v0`` is ``None`` (zero), a ``MatPoly1`` (p x 1), a callable returning
    ``(len(s), p)`` samples, or a ready coefficient vector.  ``u0`` is the
    finite-dimensional part when the state has one.
    """
    m, p = sys.state_dims
    size = m + p * (N + 1)
    if isinstance(v0, np.ndarray) and v0.ndim == 1 and v0.size == size:
        return v0.astype(float)
    a = np.zeros(size)
    if m:
        a[:m] = 0.0 if u0 is None else np.asarray(u0, dtype=float).reshape(m)
    if v0 is None or p == 0:
        return a
    if isinstance(v0, MatPoly1):
        f = lambda s: v0(s)[..., 0]  # noqa: E731
    else:
        f = v0
    a[m:] = project(f, p, N, sys.T.domain)
    return a


class _Stepper:
    def __init__(self, model: DescriptorModel, evap, k_max: int, tol: float, max_halvings: int):
        self.m = model
        self.evap = evap
        self.k_max, self.tol, self.max_halvings = k_max, tol, max_halvings
        self._lu = {}
        self.halvings = 0
        self.max_iters = 0
        self.nq = model.Bq.shape[1]
        if self.nq and evap is not None:
            self.Cp, self.Dpu, self.Dpq = model.outputs["p"]

    def factors(self, h: float):
        key = float(h)
        if key not in self._lu:
            M = self.m.E - 0.5 * h * self.m.A
            lu = sla.lu_factor(M, check_finite=True)
            if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(M).max())):
                raise SimulationError("singular stepping matrix")
            W = sla.lu_solve(lu, 0.5 * h * self.m.Bq) if self.nq else np.zeros((M.shape[0], 0))
            self._lu[key] = (lu, W)
        return self._lu[key]

    def step(self, a, q, u0, u1, h, level=0):
        m = self.m
        lu, W = self.factors(h)
        rhs = m.E @ a + 0.5 * h * (m.A @ a) + 0.5 * h * (m.B @ (u0 + u1)) - m.F @ (u1 - u0)
        if self.nq:
            rhs = rhs + 0.5 * h * (m.Bq @ q)
        base = sla.lu_solve(lu, rhs)
        if not self.nq or self.evap is None:
            return base, np.zeros(self.nq)
        qk = q.copy()
        for k in range(self.k_max):
            a1 = base + W @ qk
            p1 = self.Cp @ a1 + self.Dpu @ u1 + self.Dpq @ qk
            qn = np.asarray(self.evap(p1), dtype=float)
            if np.all(np.abs(qn - qk) <= self.tol * (1.0 + np.abs(qn))):
                self.max_iters = max(self.max_iters, k + 1)
                # keep the q used in the solve so the discrete balance is exact
                return a1, qk
            qk = qn
        if level >= self.max_halvings:
            raise SimulationError(f"LFR fixed point did not converge after {self.max_halvings} dt halvings")
        self.halvings += 1
        um = self._u_mid(u0, u1)
        a_mid, q_mid = self.step(a, q, u0, um, 0.5 * h, level + 1)
        return self.step(a_mid, q_mid, um, u1, 0.5 * h, level + 1)

    @staticmethod
    def _u_mid(u0, u1):
        return 0.5 * (u0 + u1)


def integrate_descriptor(model: DescriptorModel, cfg: SimConfig, u_fn, a0: np.ndarray, evap=None,
                         q0=None) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Trapezoidal integration; returns ``(times, states, q, diagnostics)``."""
    n = cfg.n_steps
    times = np.arange(n + 1) * cfg.dt
    st = _Stepper(model, evap, cfg.k_max, cfg.tol, cfg.max_halvings)
    nq = model.Bq.shape[1]
    a = np.asarray(a0, dtype=float).copy()
    u_prev = np.asarray(u_fn(times[0]), dtype=float)
    if nq and evap is not None:
        q = np.zeros(nq) if q0 is None else np.asarray(q0, dtype=float)
        Cp, Dpu, Dpq = model.outputs["p"]
        for _ in range(cfg.k_max):
            q = np.asarray(evap(Cp @ a + Dpu @ u_prev + Dpq @ q), dtype=float)
    else:
        q = np.zeros(nq)
    states = np.empty((n + 1, a.size))
    qs = np.empty((n + 1, nq))
    states[0], qs[0] = a, q
    for k in range(n):
        u_next = np.asarray(u_fn(times[k + 1]), dtype=float)
        a, q = st.step(a, q, u_prev, u_next, cfg.dt)
        if not np.all(np.isfinite(a)):
            raise SimulationError(f"non-finite state at t = {times[k + 1]:.6g}")
        states[k + 1], qs[k + 1] = a, q
        u_prev = u_next
    diag = {"dt_halvings": st.halvings, "max_fixed_point_iterations": st.max_iters, "steps": n}
    return times, states, qs, diag


def _outputs(model: DescriptorModel, states, us, qs) -> dict:
    out = {}
    for name, (C, Du, Dq) in model.outputs.items():
        out[name] = states @ C.T + us @ Du.T + (qs @ Dq.T if Dq.size else 0.0)
    out["q"] = qs
    return out


def simulate_pie(sys: PIESystem, cfg: SimConfig, w=None, d=None, v0=None, evap=None,
                 model: DescriptorModel | None = None, u0=None) -> Trajectory:
    """PGP simulation of ``sys`` with optional evaporation closure ``evap``."""
    dims = sys.dims()
    m, p = sys.state_dims
    points = np.linspace(0.0, 1.0, cfg.points)
    if model is None:
        model = build_galerkin(sys, cfg.N, points)
    if model.N != cfg.N:
        raise ValueError("Galerkin model degree differs from the configuration")
    wb, db = as_bank(w, dims["n_w"]), as_bank(d, dims["n_d"])

    def u_fn(t):
        return np.concatenate([np.atleast_1d(wb(t)), np.atleast_1d(db(t))])

    if evap is not None and dims["n_q"] == 0:
        evap = None
    a0 = initial_coefficients(sys, cfg.N, v0, u0)
    times, states, qs, diag = integrate_descriptor(model, cfg, u_fn, a0, evap)
    us = np.array([u_fn(t) for t in times]).reshape(len(times), -1)
    outs = _outputs(model, states, us, qs)
    sel = slice(None, None, cfg.store_every)
    fields = None
    if model.sample is not None:
        S, Su = model.sample
        flat = states @ S.T + us @ Su.T
        fields = flat.reshape(len(times), p, len(model.points))[sel]
    if "int_x" in model.extras:
        Ix, Iu = model.extras["int_x"]
        diag["integrals"] = states @ Ix.T + us @ Iu.T
        diag["integrals_v"] = states @ model.extras["int_v"].T
    chans, positions = (), None
    if sys.pde is not None:
        chans = sys.pde.channels
        positions = sys.pde.scales[:, None] * model.points[None, :] + sys.pde.offsets[:, None]
    return Trajectory(times[sel], {k: v[sel] for k, v in outs.items()}, fields, model.points, chans,
                      positions, dict(sys.names), states[sel], diag)


def relative_l2(a, b) -> float:
    """``||a - b|| / ||b||`` over all samples."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / den) if den > 0 else float(np.linalg.norm(a - b))
