"""Conversion of a boundary-coupled diffusion PDE into PIE form.

Every channel is second order on ``[0, 1]``.  With the fundamental state
``v = x_ss`` and core values ``c = col(x(0), x_s(0))`` one has::

    x(s)  = x(0) + s x_s(0) + int_0^s (s - t) v(t) dt
    xb    = K c + int_0^1 H(t) v(t) dt

so the boundary rows ``B xb + B_w w + B_d d = 0`` determine ``c`` as soon as
``B_T = B K`` is invertible.  Substituting back gives the operators ``T``,
``T_w``, ``T_d`` and the output maps, all with polynomial kernels of degree
at most one in each variable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import CoupledPDE, ModelError
from .pi import FourPI, QuadratureGrid, apply, dump
from .poly import UNIT, MatPoly1, MatPoly2

logger = logging.getLogger(__name__)

COND_THRESHOLD = 1e10


class SingularBoundaryError(ModelError):
    """Boundary conditions do not determine the core values (``B_T`` singular)."""

    def __init__(self, cond: float):
        super().__init__(f"B_T is singular or ill-conditioned (condition number {cond:.3e})")
        self.cond = cond


@dataclass(frozen=True)
class BTMatrix:
    matrix: np.ndarray
    cond: float
    threshold: float = COND_THRESHOLD

    @property
    def invertible(self) -> bool:
        return bool(np.isfinite(self.cond) and self.cond < self.threshold)

    def as_dict(self) -> dict:
        return {"invertible": self.invertible, "condition_number": float(self.cond)
                if np.isfinite(self.cond) else "inf", "threshold": self.threshold}


def _selectors(n: int):
    I, Z = np.eye(n), np.zeros((n, n))
    K = np.block([[I, Z], [I, I], [Z, I], [Z, I]])
    H0 = np.vstack([Z, I, Z, I])  # H(t) = H0 + t H1
    H1 = np.vstack([Z, -I, Z, Z])
    G0 = np.hstack([I, Z])  # G(s) = G0 + s G1
    G1 = np.hstack([Z, I])
    return K, H0, H1, G0, G1


def compute_BT(pde: CoupledPDE, threshold: float = COND_THRESHOLD) -> BTMatrix:
    """``B_T = B K`` with its condition number."""
    n = pde.n_x
    if pde.B.shape != (2 * n, 4 * n):
        raise ModelError(f"boundary matrix has shape {pde.B.shape}; need {(2 * n, 4 * n)} "
                         f"(two conditions per state)")
    K = _selectors(n)[0]
    BT = pde.B @ K
    with np.errstate(all="ignore"):
        try:
            cond = float(np.linalg.cond(BT))
        except np.linalg.LinAlgError:
            cond = np.inf
    if not np.isfinite(cond):
        cond = np.inf
    return BTMatrix(BT, cond, threshold)


@dataclass(frozen=True)
class PIESystem:
    """Operators of ``T v' + T_w w' + T_d d' = A v + B1 w + B2 d + Bq q`` and outputs."""

    T: FourPI
    Tw: FourPI
    Td: FourPI
    A: FourPI
    B1: FourPI
    B2: FourPI
    Bq: FourPI
    C1: FourPI
    D11: FourPI
    D12: FourPI
    D1q: FourPI
    C2: FourPI
    D21: FourPI
    D22: FourPI
    D2q: FourPI
    Cp: FourPI
    Dp1: FourPI
    Dp2: FourPI
    Dpq: FourPI
    pde: CoupledPDE | None = None
    bt: BTMatrix | None = None
    names: dict = field(default_factory=dict)

    @property
    def state_dims(self) -> tuple[int, int]:
        """``(finite, function)`` channel counts of the fundamental state."""
        return self.T.dims_in

    def dims(self) -> dict[str, int]:
        m, p = self.state_dims
        return {"n_x": m + p, "n_w": self.Tw.dims_in[0], "n_d": self.Td.dims_in[0],
                "n_q": self.Bq.dims_in[0], "n_z": self.C1.dims_out[0], "n_y": self.C2.dims_out[0],
                "n_p": self.Cp.dims_out[0]}

    def operators(self) -> dict[str, FourPI]:
        keys = ("T", "Tw", "Td", "A", "B1", "B2", "Bq", "C1", "D11", "D12", "D1q",
                "C2", "D21", "D22", "D2q", "Cp", "Dp1", "Dp2", "Dpq")
        return {k: getattr(self, k) for k in keys}

    def nominal(self) -> "PIESystem":
        """Copy with the nonlinear channels removed (``n_p = n_q = 0``)."""
        m, p = self.state_dims
        dom = self.T.domain
        n_w, n_d = self.Tw.dims_in[0], self.Td.dims_in[0]
        n_z, n_y = self.C1.dims_out[0], self.C2.dims_out[0]
        Z = FourPI.zero
        return PIESystem(
            self.T, self.Tw, self.Td, self.A, self.B1, self.B2, Z((m, p), (0, 0), dom),
            self.C1, self.D11, self.D12, Z((n_z, 0), (0, 0), dom),
            self.C2, self.D21, self.D22, Z((n_y, 0), (0, 0), dom),
            Z((0, 0), (m, p), dom), Z((0, 0), (n_w, 0), dom), Z((0, 0), (n_d, 0), dom),
            Z((0, 0), (0, 0), dom), self.pde, self.bt, dict(self.names, p=(), q=()),
        )

    @classmethod
    def from_state_space(cls, A, B1, C1, D11, C2, D21, B2=None, D12=None, D22=None,
                         T=None, names=None) -> "PIESystem":
        """Finite-dimensional system embedded as matrix-only operators."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        B1 = np.asarray(B1, dtype=float).reshape(n, -1)
        C1 = np.atleast_2d(np.asarray(C1, dtype=float))
        C2 = np.atleast_2d(np.asarray(C2, dtype=float))
        n_w = B1.shape[1]
        B2 = np.zeros((n, 0)) if B2 is None else np.asarray(B2, dtype=float).reshape(n, -1)
        n_d = B2.shape[1]
        n_z, n_y = C1.shape[0], C2.shape[0]

        def mat(X, r, c):
            return FourPI.build((r, 0), (c, 0), P=np.zeros((r, c)) if X is None else np.asarray(X, dtype=float).reshape(r, c))

        Z = FourPI.zero
        return cls(
            mat(np.eye(n) if T is None else T, n, n), Z((n, 0), (n_w, 0)), Z((n, 0), (n_d, 0)),
            mat(A, n, n), mat(B1, n, n_w), mat(B2, n, n_d), Z((n, 0), (0, 0)),
            mat(C1, n_z, n), mat(D11, n_z, n_w), mat(D12, n_z, n_d), Z((n_z, 0), (0, 0)),
            mat(C2, n_y, n), mat(D21, n_y, n_w), mat(D22, n_y, n_d), Z((n_y, 0), (0, 0)),
            Z((0, 0), (n, 0)), Z((0, 0), (n_w, 0)), Z((0, 0), (n_d, 0)), Z((0, 0), (0, 0)),
            names=names or {},
        )


def convert_to_pie(pde: CoupledPDE, threshold: float = COND_THRESHOLD) -> PIESystem:
    """Build the PIE operators of a normalized :class:`CoupledPDE`."""
    if not pde.normalized:
        raise ModelError("convert_to_pie expects channels normalized to [0, 1]")
    bt = compute_BT(pde, threshold)
    if not bt.invertible:
        raise SingularBoundaryError(bt.cond)
    n = pde.n_x
    K, H0, H1, G0, G1 = _selectors(n)
    solve = np.linalg.solve
    F = solve(bt.matrix, pde.B)  # core = -F int H v - BTinv (B_w w + B_d d)
    Fw = solve(bt.matrix, pde.B_w)
    Fd = solve(bt.matrix, pde.B_d)
    dom = UNIT

    # T: kernels in (s, t); R2 = -G(s) F H(t), R1 = R2 + (s - t) I
    R2 = np.zeros((2, 2, n, n))
    R2[0, 0] = -G0 @ F @ H0
    R2[0, 1] = -G0 @ F @ H1
    R2[1, 0] = -G1 @ F @ H0
    R2[1, 1] = -G1 @ F @ H1
    R1 = R2.copy()
    R1[1, 0] += np.eye(n)
    R1[0, 1] -= np.eye(n)
    T = FourPI.build((0, n), (0, n), R1=MatPoly2(R1, dom), R2=MatPoly2(R2, dom), domain=dom)

    def lift(Fx):
        c = np.stack([-G0 @ Fx, -G1 @ Fx])
        return FourPI.build((0, n), (Fx.shape[1], 0), Q2=MatPoly1(c, dom), domain=dom)

    Tw, Td = lift(Fw), lift(Fd)
    n_w, n_d, n_q = pde.B_w.shape[1], pde.B_d.shape[1], pde.B_delta.shape[1]
    A = FourPI.build((0, n), (0, n), R0=np.diag(pde.D), domain=dom)
    B1 = FourPI.zero((0, n), (n_w, 0), dom)
    B2 = FourPI.zero((0, n), (n_d, 0), dom)
    Bq = FourPI.build((0, n), (n_q, 0), Q2=pde.B_delta, domain=dom)
    proj = np.eye(4 * n) - K @ F

    def outputs(C, Dw, Dd):
        r = C.shape[0]
        q1 = MatPoly1(np.stack([C @ proj @ H0, C @ proj @ H1]), dom)
        Cv = FourPI.build((r, 0), (0, n), Q1=q1, domain=dom)
        Dw_ = FourPI.build((r, 0), (n_w, 0), P=Dw - C @ K @ Fw, domain=dom)
        Dd_ = FourPI.build((r, 0), (n_d, 0), P=Dd - C @ K @ Fd, domain=dom)
        Dq_ = FourPI.zero((r, 0), (n_q, 0), dom)
        return Cv, Dw_, Dd_, Dq_

    C1, D11, D12, D1q = outputs(pde.C_z, pde.D_zw, pde.D_zd)
    C2, D21, D22, D2q = outputs(pde.C_y, pde.D_yw, pde.D_yd)
    Cp, Dp1, Dp2, Dpq = outputs(pde.C_p, pde.D_pw, pde.D_pd)
    names = {"w": pde.w_names, "d": pde.d_names, "q": pde.q_names, "y": pde.y_names,
             "z": pde.z_names, "p": pde.p_names, "x": tuple(f"{a}:{b}" for a, b, _ in pde.channels)}
    logger.info("converted PDE with %d channels (cond B_T = %.3e)", n, bt.cond)
    return PIESystem(T, Tw, Td, A, B1, B2, Bq, C1, D11, D12, D1q, C2, D21, D22, D2q,
                     Cp, Dp1, Dp2, Dpq, pde=pde, bt=bt, names=names)


# ---------------------------------------------------------------------------
# primal reconstruction


def primal_poly(sys: PIESystem, v: MatPoly1, w=None, d=None) -> MatPoly1:
    """Exact primal state ``T v + T_w w + T_d d`` for polynomial ``v`` (n x 1)."""
    m, p = sys.state_dims
    n_w, n_d = sys.Tw.dims_in[0], sys.Td.dims_in[0]
    w = np.zeros(n_w) if w is None else np.asarray(w, dtype=float).reshape(n_w)
    d = np.zeros(n_d) if d is None else np.asarray(d, dtype=float).reshape(n_d)
    _, x = sys.T.apply_poly(np.zeros(m), v)
    x = x + MatPoly1(np.einsum("kij,j->ki", sys.Tw.Q2.coeffs, w)[:, :, None], v.domain)
    x = x + MatPoly1(np.einsum("kij,j->ki", sys.Td.Q2.coeffs, d)[:, :, None], v.domain)
    return x


def reconstruct_primal(sys: PIESystem, v, w=None, d=None, points=None) -> np.ndarray:
    """Sampled primal state ``x = T v + T_w w + T_d d`` with shape ``(n_x, len(points))``.

    ``v`` may be a ``MatPoly1`` (exact path) or a callable returning
    ``(len(s), n_x)`` samples (quadrature path).
    """
    points = np.linspace(0.0, 1.0, 21) if points is None else np.asarray(points, dtype=float)
    m, p = sys.state_dims
    if m:
        raise ModelError("reconstruct_primal handles function-valued states only")
    if isinstance(v, MatPoly1):
        if v.shape != (p, 1):
            raise ModelError(f"v must be a {p} x 1 polynomial, got {v.shape}")
        return primal_poly(sys, v, w, d)(points)[:, :, 0].T
    n_w, n_d = sys.Tw.dims_in[0], sys.Td.dims_in[0]
    w = np.zeros(n_w) if w is None else np.asarray(w, dtype=float).reshape(n_w)
    d = np.zeros(n_d) if d is None else np.asarray(d, dtype=float).reshape(n_d)
    grid = QuadratureGrid.gauss(64, sys.T.domain)
    _, xg = apply(sys.T, np.zeros(0), v, grid)
    xg = xg + sys.Tw.Q2(grid.nodes) @ w + sys.Td.Q2(grid.nodes) @ d
    return grid.interpolant(xg)(points).T


def boundary_values(x: MatPoly1) -> np.ndarray:
    """``col(x(0), x(1), x_s(0), x_s(1))`` of a column polynomial."""
    dx = x.derivative()
    lo, hi = x.domain.lo, x.domain.hi
    return np.concatenate([x(lo)[:, 0], x(hi)[:, 0], dx(lo)[:, 0], dx(hi)[:, 0]])


def boundary_residual(sys: PIESystem, v: MatPoly1, w=None, d=None) -> np.ndarray:
    """Residual of every boundary row on the reconstructed state."""
    pde = sys.pde
    n_w, n_d = pde.B_w.shape[1], pde.B_d.shape[1]
    w = np.zeros(n_w) if w is None else np.asarray(w, dtype=float).reshape(n_w)
    d = np.zeros(n_d) if d is None else np.asarray(d, dtype=float).reshape(n_d)
    xb = boundary_values(primal_poly(sys, v, w, d))
    return pde.B @ xb + pde.B_w @ w + pde.B_d @ d


def fundamental_from_profiles(profiles: list, domain=UNIT) -> MatPoly1:
    """Second derivative of per-channel polynomial profiles (ascending coefficients)."""
    deg = max(len(c) for c in profiles) - 1
    coeffs = np.zeros((max(deg + 1, 1), len(profiles), 1))
    for k, c in enumerate(profiles):
        coeffs[: len(c), k, 0] = c
    x = MatPoly1(coeffs, domain)
    return x.derivative().derivative()


def dump_system(sys: PIESystem) -> str:
    """Kernel tables of every operator, in a fixed order."""
    parts = [f"# PIESystem dims {sys.dims()}\n"]
    if sys.bt is not None:
        parts.append(f"# B_T condition number {sys.bt.cond:.17g}\n")
    for k, op in sys.operators().items():
        parts.append(dump(op, k))
    return "".join(parts)


def as_callable(v) -> Callable:
    if isinstance(v, MatPoly1):
        return lambda s: v(s)[..., 0]
    return v
