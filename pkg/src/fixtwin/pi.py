"""Partial-integral (4-PI) operators with polynomial kernels.

A :class:`FourPI` maps ``(u, v)`` with ``u`` in ``R^m`` and ``v`` a
``p``-vector of functions on ``[lo, hi]`` to ``(u', v')`` with ``u'`` in
``R^n`` and ``v'`` a ``q``-vector of functions::

    u'    = P u + int Q1(r) v(r) dr
    v'(s) = Q2(s) u + R0(s) v(s) + int_lo^s R1(s, r) v(r) dr + int_s^hi R2(s, r) v(r) dr

Composition, adjoint (for ``<(u, v), (u', v')> = u.u' + int v.v'``), sums and
block assembly are closed-form on the kernel coefficients.  Discretization
uses an orthonormal Legendre basis per function channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.interpolate import BarycentricInterpolator

from .poly import (
    UNIT,
    Interval,
    MatPoly1,
    MatPoly2,
    chain_integral,
    integrate,
    linear_combine,
    multiply,
)


class SignatureError(ValueError):
    """Operator dimensions or intervals do not line up."""


def _as_matrix(P, n: int, m: int) -> np.ndarray:
    if P is None:
        return np.zeros((n, m))
    P = np.asarray(P, dtype=float).reshape(n, m)
    return P


class FourPI:
    """Immutable 4-PI operator ``R^m x L2^p -> R^n x L2^q``."""

    __slots__ = ("P", "Q1", "Q2", "R0", "R1", "R2", "domain")

    def __init__(self, P, Q1: MatPoly1, Q2: MatPoly1, R0: MatPoly1, R1: MatPoly2, R2: MatPoly2):
        n, p = Q1.shape
        q, m = Q2.shape
        P = np.array(P, dtype=float).reshape(n, m)
        for name, k, want in (("R0", R0, (q, p)), ("R1", R1, (q, p)), ("R2", R2, (q, p))):
            if k.shape != want:
                raise SignatureError(f"{name} has shape {k.shape}, expected {want}")
        doms = {Q1.domain, Q2.domain, R0.domain, R1.domain, R2.domain}
        if len(doms) != 1:
            raise SignatureError("kernels live on different intervals")
        P.setflags(write=False)
        self.P, self.Q1, self.Q2, self.R0, self.R1, self.R2 = P, Q1, Q2, R0, R1, R2
        self.domain = Q1.domain

    # -- dimensions ----------------------------------------------------------
    @property
    def dims_in(self) -> tuple[int, int]:
        """``(m, p)``: finite and function input channels."""
        return self.Q2.shape[1], self.Q1.shape[1]

    @property
    def dims_out(self) -> tuple[int, int]:
        """``(n, q)``: finite and function output channels."""
        return self.Q1.shape[0], self.Q2.shape[0]

    def __repr__(self):
        return f"FourPI(out={self.dims_out}, in={self.dims_in}, domain=[{self.domain.lo}, {self.domain.hi}])"

    # -- constructors --------------------------------------------------------
    @classmethod
    def build(cls, dims_out, dims_in, *, P=None, Q1=None, Q2=None, R0=None, R1=None, R2=None,
              domain: Interval = UNIT) -> "FourPI":
        """Assemble from optional parts; missing parts are zero.

        Matrices are accepted wherever a constant kernel is meant.
        """
        n, q = dims_out
        m, p = dims_in

        def one(x, r, c):
            if x is None:
                return MatPoly1.zeros(r, c, domain)
            if isinstance(x, MatPoly1):
                return x
            return MatPoly1.constant(np.asarray(x, dtype=float).reshape(r, c), domain)

        def two(x, r, c):
            if x is None:
                return MatPoly2.zeros(r, c, domain)
            if isinstance(x, MatPoly2):
                return x
            return MatPoly2.constant(np.asarray(x, dtype=float).reshape(r, c), domain)

        return cls(_as_matrix(P, n, m), one(Q1, n, p), one(Q2, q, m), one(R0, q, p),
                   two(R1, q, p), two(R2, q, p))

    @classmethod
    def zero(cls, dims_out, dims_in, domain: Interval = UNIT) -> "FourPI":
        return cls.build(dims_out, dims_in, domain=domain)

    @classmethod
    def identity(cls, m: int, p: int, domain: Interval = UNIT) -> "FourPI":
        return cls.build((m, p), (m, p), P=np.eye(m), R0=np.eye(p), domain=domain)

    @classmethod
    def multiplier(cls, R0, domain: Interval = UNIT) -> "FourPI":
        R0 = R0 if isinstance(R0, MatPoly1) else MatPoly1.constant(R0, domain)
        q, p = R0.shape
        return cls.build((0, q), (0, p), R0=R0, domain=R0.domain)

    @classmethod
    def integral(cls, R1=None, R2=None, shape=None, domain: Interval = UNIT) -> "FourPI":
        ref = R1 if R1 is not None else R2
        q, p = shape if shape is not None else ref.shape
        if ref is not None:
            domain = ref.domain
        return cls.build((0, q), (0, p), R1=R1, R2=R2, domain=domain)

    @classmethod
    def matrix(cls, P) -> "FourPI":
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return cls.build((P.shape[0], 0), (P.shape[1], 0), P=P)

    # -- arithmetic ----------------------------------------------------------
    def _same_signature(self, other: "FourPI"):
        if self.dims_in != other.dims_in or self.dims_out != other.dims_out:
            raise SignatureError(f"signature mismatch {self} vs {other}")
        if self.domain != other.domain:
            raise SignatureError("interval mismatch")

    def lincomb(self, alpha: float, other: "FourPI", beta: float) -> "FourPI":
        self._same_signature(other)
        return FourPI(
            alpha * self.P + beta * other.P,
            linear_combine(alpha, self.Q1, beta, other.Q1),
            linear_combine(alpha, self.Q2, beta, other.Q2),
            linear_combine(alpha, self.R0, beta, other.R0),
            linear_combine(alpha, self.R1, beta, other.R1),
            linear_combine(alpha, self.R2, beta, other.R2),
        )

    def __add__(self, other):
        return self.lincomb(1.0, other, 1.0)

    def __sub__(self, other):
        return self.lincomb(1.0, other, -1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, alpha: float) -> "FourPI":
        return FourPI(alpha * self.P, self.Q1.scale(alpha), self.Q2.scale(alpha),
                      self.R0.scale(alpha), self.R1.scale(alpha), self.R2.scale(alpha))

    def __matmul__(self, other: "FourPI") -> "FourPI":
        return compose(self, other)

    @property
    def H(self) -> "FourPI":
        return adjoint(self)

    def max_degree(self) -> int:
        return max(self.Q1.degree, self.Q2.degree, self.R0.degree, *self.R1.degree, *self.R2.degree)

    def coefficient_vector(self, degs=None) -> np.ndarray:
        """Flatten ``P, Q1, Q2, R0, R1, R2`` padded to ``degs`` (default own)."""
        if degs is None:
            degs = self.degrees()
        dq1, dq2, dr0, dr1, dr2 = degs
        return np.concatenate([
            self.P.ravel(), self.Q1.pad(dq1).ravel(), self.Q2.pad(dq2).ravel(),
            self.R0.pad(dr0).ravel(), self.R1.pad(*dr1).ravel(), self.R2.pad(*dr2).ravel(),
        ])

    def degrees(self):
        return (self.Q1.degree, self.Q2.degree, self.R0.degree, self.R1.degree, self.R2.degree)

    def is_zero(self, tol: float = 1e-14) -> bool:
        return (self.P.size == 0 or np.max(np.abs(self.P)) < tol) and all(
            k.is_zero(tol) for k in (self.Q1, self.Q2, self.R0, self.R1, self.R2))

    def allclose(self, other: "FourPI", atol: float = 1e-12) -> bool:
        diff = self - other
        return diff.is_zero(atol)

    # -- channel selection ---------------------------------------------------
    def select(self, out_fin=None, out_fun=None, in_fin=None, in_fun=None) -> "FourPI":
        """Sub-operator on the given channel index lists (``None`` keeps all)."""
        n, q = self.dims_out
        m, p = self.dims_in
        of = np.arange(n) if out_fin is None else np.asarray(out_fin, dtype=int)
        ou = np.arange(q) if out_fun is None else np.asarray(out_fun, dtype=int)
        inf = np.arange(m) if in_fin is None else np.asarray(in_fin, dtype=int)
        inu = np.arange(p) if in_fun is None else np.asarray(in_fun, dtype=int)
        d = self.domain
        return FourPI(
            self.P[np.ix_(of, inf)],
            MatPoly1(self.Q1.coeffs[:, of][:, :, inu], d),
            MatPoly1(self.Q2.coeffs[:, ou][:, :, inf], d),
            MatPoly1(self.R0.coeffs[:, ou][:, :, inu], d),
            MatPoly2(self.R1.coeffs[:, :, ou][:, :, :, inu], d),
            MatPoly2(self.R2.coeffs[:, :, ou][:, :, :, inu], d),
        )

    # -- application ---------------------------------------------------------
    def apply_poly(self, u, v: MatPoly1):
        """Exact action on a polynomial input ``v`` (a ``p x k`` MatPoly1)."""
        k = v.shape[1]
        m = self.dims_in[0]
        u = np.asarray(u, dtype=float).reshape(m, -1) if m else np.zeros((0, k))
        if u.shape[1] != k:
            u = np.broadcast_to(u, (m, k)) if u.shape[1] == 1 else u
        first = self.P @ u + integrate(multiply(self.Q1, v), "definite")
        vr = MatPoly2.from_r(v)
        second = (
            multiply(self.Q2, MatPoly1.constant(u, self.domain))
            + multiply(self.R0, v)
            + integrate(multiply(self.R1, vr), "over_r", "lower")
            + integrate(multiply(self.R2, vr), "over_r", "upper")
        )
        return first, second


# ---------------------------------------------------------------------------
# closed-form algebra


def compose(a: FourPI, b: FourPI) -> FourPI:
    """Closed-form kernels of ``a o b`` (order of integration exchanged)."""
    if a.dims_in != b.dims_out:
        raise SignatureError(f"cannot compose {a} with {b}")
    if a.domain != b.domain:
        raise SignatureError("interval mismatch")
    d = a.domain
    n, qa = a.dims_out
    m, pb = b.dims_in
    Z1 = MatPoly1.zeros

    def nz(*ks):
        return all(not k.is_zero() for k in ks)

    # finite-dimensional output
    P = a.P @ b.P
    if nz(a.Q1, b.Q2):
        P = P + integrate(multiply(a.Q1, b.Q2), "definite")

    Q1 = Z1(n, pb, d)
    if nz(b.Q1):
        Q1 = Q1 + multiply(MatPoly1.constant(a.P, d), b.Q1) if a.P.size else Q1
    if nz(a.Q1, b.R0):
        Q1 = Q1 + multiply(a.Q1, b.R0)
    qa1 = MatPoly2.from_r(a.Q1) if nz(a.Q1) else None
    if qa1 is not None and nz(b.R1):
        Q1 = Q1 + MatPoly1(chain_integral(qa1, b.R1, "r", "hi").coeffs[0], d)
    if qa1 is not None and nz(b.R2):
        Q1 = Q1 + MatPoly1(chain_integral(qa1, b.R2, "lo", "r").coeffs[0], d)

    Q2 = Z1(qa, m, d)
    if nz(a.Q2) and b.P.size:
        Q2 = Q2 + multiply(a.Q2, MatPoly1.constant(b.P, d))
    if nz(a.R0, b.Q2):
        Q2 = Q2 + multiply(a.R0, b.Q2)
    qb2 = MatPoly2.from_s(b.Q2) if nz(b.Q2) else None
    if qb2 is not None and nz(a.R1):
        Q2 = Q2 + MatPoly1(chain_integral(a.R1, qb2, "lo", "s").coeffs[:, 0], d)
    if qb2 is not None and nz(a.R2):
        Q2 = Q2 + MatPoly1(chain_integral(a.R2, qb2, "s", "hi").coeffs[:, 0], d)

    R0 = multiply(a.R0, b.R0) if nz(a.R0, b.R0) else Z1(qa, pb, d)

    R1 = MatPoly2.zeros(qa, pb, d)
    R2 = MatPoly2.zeros(qa, pb, d)
    if nz(a.Q2, b.Q1):
        sep = multiply(MatPoly2.from_s(a.Q2), MatPoly2.from_r(b.Q1))
        R1 = R1 + sep
        R2 = R2 + sep
    if nz(a.R0, b.R1):
        R1 = R1 + multiply(a.R0, b.R1)
    if nz(a.R0, b.R2):
        R2 = R2 + multiply(a.R0, b.R2)
    if nz(a.R1, b.R0):
        R1 = R1 + multiply(a.R1, MatPoly2.from_r(b.R0))
    if nz(a.R2, b.R0):
        R2 = R2 + multiply(a.R2, MatPoly2.from_r(b.R0))
    if nz(a.R1, b.R1):
        R1 = R1 + chain_integral(a.R1, b.R1, "r", "s")
    if nz(a.R1, b.R2):
        R1 = R1 + chain_integral(a.R1, b.R2, "lo", "r")
        R2 = R2 + chain_integral(a.R1, b.R2, "lo", "s")
    if nz(a.R2, b.R1):
        R1 = R1 + chain_integral(a.R2, b.R1, "s", "hi")
        R2 = R2 + chain_integral(a.R2, b.R1, "r", "hi")
    if nz(a.R2, b.R2):
        R2 = R2 + chain_integral(a.R2, b.R2, "s", "r")
    return FourPI(P, Q1, Q2, R0, R1, R2)


def adjoint(op: FourPI) -> FourPI:
    """Adjoint for the unweighted inner product ``u.u' + int v.v'``."""
    return FourPI(op.P.T, op.Q2.T(), op.Q1.T(), op.R0.T(),
                  op.R2.swap_transpose(), op.R1.swap_transpose())


def concat(blocks: Sequence[Sequence[FourPI | None]]) -> FourPI:
    """Single operator realizing a block layout; ``None`` marks a zero block.

    Inputs and outputs are regrouped so that all finite channels come first
    (in block order) followed by all function channels (in block order).
    """
    if not blocks or not blocks[0]:
        raise SignatureError("empty block layout")
    ncols = len(blocks[0])
    if any(len(row) != ncols for row in blocks):
        raise SignatureError("ragged block layout")
    row_dims: list = [None] * len(blocks)
    col_dims: list = [None] * ncols
    domain = None
    for i, row in enumerate(blocks):
        for j, op in enumerate(row):
            if op is None:
                continue
            if domain is None:
                domain = op.domain
            elif op.domain != domain:
                raise SignatureError("interval mismatch in block layout")
            for dims, k, val in ((row_dims, i, op.dims_out), (col_dims, j, op.dims_in)):
                if dims[k] is None:
                    dims[k] = val
                elif dims[k] != val:
                    raise SignatureError(f"inconsistent block dimensions at ({i}, {j})")
    if any(d is None for d in row_dims) or any(d is None for d in col_dims):
        raise SignatureError("a block row or column has no operator to fix its dimensions")
    domain = domain or UNIT
    rn = np.cumsum([0] + [d[0] for d in row_dims])
    rq = np.cumsum([0] + [d[1] for d in row_dims])
    cm = np.cumsum([0] + [d[0] for d in col_dims])
    cp = np.cumsum([0] + [d[1] for d in col_dims])
    ops = [op for row in blocks for op in row if op is not None]
    dq1 = max(op.Q1.degree for op in ops)
    dq2 = max(op.Q2.degree for op in ops)
    dr0 = max(op.R0.degree for op in ops)
    d1s = max(max(op.R1.degree[0], op.R2.degree[0]) for op in ops)
    d1r = max(max(op.R1.degree[1], op.R2.degree[1]) for op in ops)
    P = np.zeros((rn[-1], cm[-1]))
    Q1 = np.zeros((dq1 + 1, rn[-1], cp[-1]))
    Q2 = np.zeros((dq2 + 1, rq[-1], cm[-1]))
    R0 = np.zeros((dr0 + 1, rq[-1], cp[-1]))
    R1 = np.zeros((d1s + 1, d1r + 1, rq[-1], cp[-1]))
    R2 = np.zeros_like(R1)
    for i, row in enumerate(blocks):
        for j, op in enumerate(row):
            if op is None:
                continue
            fi, fu = slice(rn[i], rn[i + 1]), slice(rq[i], rq[i + 1])
            gi, gu = slice(cm[j], cm[j + 1]), slice(cp[j], cp[j + 1])
            P[fi, gi] = op.P
            Q1[:, fi, gu] = op.Q1.pad(dq1)
            Q2[:, fu, gi] = op.Q2.pad(dq2)
            R0[:, fu, gu] = op.R0.pad(dr0)
            R1[:, :, fu, gu] = op.R1.pad(d1s, d1r)
            R2[:, :, fu, gu] = op.R2.pad(d1s, d1r)
    return FourPI(P, MatPoly1(Q1, domain), MatPoly1(Q2, domain), MatPoly1(R0, domain),
                  MatPoly2(R1, domain), MatPoly2(R2, domain))


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=64)
def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = npleg.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite Gauss-Legendre rule on an interval."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: Interval
    per_panel: int

    @classmethod
    def gauss(cls, n: int = 64, domain: Interval = UNIT, panels: int = 1) -> "QuadratureGrid":
        x, w = _gauss01(n)
        edges = np.linspace(domain.lo, domain.hi, panels + 1)
        nodes = np.concatenate([a + (b - a) * x for a, b in zip(edges[:-1], edges[1:])])
        weights = np.concatenate([(b - a) * w for a, b in zip(edges[:-1], edges[1:])])
        return cls(nodes, weights, domain, n)

    def exactness(self) -> int:
        return 2 * self.per_panel - 1

    def interpolant(self, samples: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Piecewise polynomial interpolant of samples taken at the nodes."""
        samples = np.asarray(samples, dtype=float)
        npan = len(self.nodes) // self.per_panel
        edges = np.linspace(self.domain.lo, self.domain.hi, npan + 1)
        pieces = [
            BarycentricInterpolator(self.nodes[k * self.per_panel:(k + 1) * self.per_panel],
                                    samples[k * self.per_panel:(k + 1) * self.per_panel])
            for k in range(npan)
        ]

        def f(x):
            x = np.asarray(x, dtype=float)
            flat = x.ravel()
            idx = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, npan - 1)
            out = np.empty((flat.size,) + samples.shape[1:])
            for k in range(npan):
                sel = idx == k
                if np.any(sel):
                    out[sel] = pieces[k](flat[sel])
            return out.reshape(x.shape + samples.shape[1:])

        return f


def apply(op: FourPI, u, v, grid: QuadratureGrid | None = None):
    """Quadrature action of ``op`` on ``(u, v)``.

    ``v`` is either an array of samples at ``grid.nodes`` with shape
    ``(len(nodes), p)`` or a callable mapping points to that shape.  The
    function output is returned as samples at the grid nodes.  Volterra terms
    use the grid's panel rule remapped onto ``[lo, s]`` and ``[s, hi]``.
    """
    grid = grid or QuadratureGrid.gauss(64, op.domain)
    if grid.domain != op.domain:
        raise SignatureError("grid interval differs from operator interval")
    m, p = op.dims_in
    u = np.asarray(u, dtype=float).reshape(m)
    if callable(v):
        vf = v
    else:
        v = np.asarray(v, dtype=float).reshape(len(grid.nodes), p)
        vf = grid.interpolant(v)
    need = max(op.Q1.degree, op.R0.degree, *op.R1.degree, *op.R2.degree)
    if need >= grid.exactness():
        raise ValueError("quadrature grid too coarse for the kernel degrees")
    x, w = grid.nodes, grid.weights
    vx = vf(x).reshape(len(x), p)
    first = op.P @ u + np.einsum("a,aij,aj->i", w, op.Q1(x), vx)
    second = op.Q2(x) @ u + np.einsum("aij,aj->ai", op.R0(x), vx)
    t, wt = _gauss01(grid.per_panel)
    lo, hi = op.domain.lo, op.domain.hi
    for k, s in enumerate(x):
        if not op.R1.is_zero() and s > lo:
            r = lo + (s - lo) * t
            second[k] += np.einsum("b,bij,bj->i", (s - lo) * wt, op.R1(np.full_like(r, s), r),
                                   vf(r).reshape(len(r), p))
        if not op.R2.is_zero() and s < hi:
            r = s + (hi - s) * t
            second[k] += np.einsum("b,bij,bj->i", (hi - s) * wt, op.R2(np.full_like(r, s), r),
                                   vf(r).reshape(len(r), p))
    return first, second


def inner(grid: QuadratureGrid, x, y) -> float:
    """``<(u, v), (u', v')>`` with ``v`` sampled on ``grid``."""
    (u1, v1), (u2, v2) = x, y
    return float(np.dot(u1, u2) + np.einsum("a,ai,ai->", grid.weights, v1, v2))


def _random_poly_vector(rng: np.random.Generator, p: int, deg: int, domain: Interval) -> MatPoly1:
    return MatPoly1(rng.standard_normal((deg + 1, p, 1)), domain, trim=False)


def quadrature_oracle(op: FourPI, trials: int = 10, grid: QuadratureGrid | None = None,
                      seed: int = 0, input_degree: int = 4) -> float:
    """Max relative gap between the exact polynomial action and quadrature.

    Random polynomial inputs are pushed through :meth:`FourPI.apply_poly`
    (coefficient arithmetic only) and through :func:`apply` (quadrature only).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = grid or QuadratureGrid.gauss(64, op.domain)
    rng = np.random.default_rng(seed)
    m, p = op.dims_in
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(m)
        v = _random_poly_vector(rng, p, input_degree, op.domain)
        f_exact, g_exact = op.apply_poly(u, v)
        f_exact = f_exact.ravel()
        g_exact = g_exact(grid.nodes)[..., 0]
        f_q, g_q = apply(op, u, lambda x: v(x)[..., 0], grid)
        scale = max(np.max(np.abs(f_exact), initial=0.0), np.max(np.abs(g_exact), initial=0.0))
        gap = max(np.max(np.abs(f_q - f_exact), initial=0.0), np.max(np.abs(g_q - g_exact), initial=0.0))
        if gap == 0.0:
            continue
        worst = max(worst, gap / scale if scale > 0 else np.inf)
    return worst


# ---------------------------------------------------------------------------
# Galerkin discretization


def legendre_basis(N: int, domain: Interval = UNIT) -> Callable[[np.ndarray], np.ndarray]:
    """Orthonormal shifted Legendre functions ``phi_0 .. phi_N`` on ``domain``."""
    scale = np.sqrt((2 * np.arange(N + 1) + 1) / domain.width)

    def phi(x):
        x = np.asarray(x, dtype=float)
        y = 2.0 * (x - domain.lo) / domain.width - 1.0
        return npleg.legvander(y, N) * scale

    return phi


def project(f: Callable[[np.ndarray], np.ndarray], channels: int, N: int,
            domain: Interval = UNIT, nquad: int | None = None) -> np.ndarray:
    """Basis coefficients (channel-major) of the L2 projection of ``f``."""
    nquad = nquad or max(2 * N + 8, 64)
    t, w = _gauss01(nquad)
    x = domain.lo + domain.width * t
    w = domain.width * w
    vals = np.asarray(f(x), dtype=float).reshape(len(x), channels)
    Phi = legendre_basis(N, domain)(x)
    return np.einsum("a,ac,ai->ci", w, vals, Phi).ravel()


def discretize_galerkin(op: FourPI, N: int) -> np.ndarray:
    """Matrix of ``op`` in the orthonormal basis of degree ``N`` per channel.

    Row/column layout: finite channels first, then each function channel's
    ``N + 1`` coefficients.  Entries are Gauss rules chosen exact for the
    polynomial integrands (Duffy-collapsed on the two triangles).
    """
    if N < 1:
        raise ValueError("basis degree must be >= 1")
    n, q = op.dims_out
    m, p = op.dims_in
    dom = op.domain
    nb = N + 1
    kdeg = max(op.R0.degree, op.Q1.degree, op.Q2.degree,
               sum(op.R1.degree), sum(op.R2.degree))
    nq = N + kdeg // 2 + 3
    t, wt = _gauss01(nq)
    x = dom.lo + dom.width * t
    w = dom.width * wt
    phi = legendre_basis(N, dom)
    Phi = phi(x)
    out = np.zeros((n + q * nb, m + p * nb))
    out[:n, :m] = op.P
    if not op.Q1.is_zero():
        out[:n, m:] = np.einsum("a,aic,aj->icj", w, op.Q1(x), Phi).reshape(n, p * nb)
    if not op.Q2.is_zero():
        out[n:, :m] = np.einsum("a,ai,ack->cik", w, Phi, op.Q2(x)).reshape(q * nb, m)
    R = np.zeros((q, nb, p, nb))
    if not op.R0.is_zero():
        R += np.einsum("a,ai,acd,aj->cidj", w, Phi, op.R0(x), Phi, optimize=True)
    S = np.broadcast_to(x[:, None], (nq, nq))
    if not op.R1.is_zero():
        th = dom.lo + (x[:, None] - dom.lo) * t[None, :]
        W = np.outer(w, wt) * (x[:, None] - dom.lo)
        R += np.einsum("ab,ai,abcd,abj->cidj", W, Phi, op.R1(S, th), phi(th), optimize=True)
    if not op.R2.is_zero():
        th = x[:, None] + (dom.hi - x[:, None]) * t[None, :]
        W = np.outer(w, wt) * (dom.hi - x[:, None])
        R += np.einsum("ab,ai,abcd,abj->cidj", W, Phi, op.R2(S, th), phi(th), optimize=True)
    out[n:, m:] = R.reshape(q * nb, p * nb)
    return out


def sample_matrix(op: FourPI, N: int, points) -> np.ndarray:
    """Matrix taking ``(u, basis coefficients)`` to ``(finite out, values at points)``.

    The function rows are channel-major over ``points``.  Used to reconstruct
    sampled fields from Galerkin coefficients.
    """
    points = np.asarray(points, dtype=float)
    n, q = op.dims_out
    m, p = op.dims_in
    dom = op.domain
    nb = N + 1
    npt = len(points)
    kdeg = max(op.Q1.degree, op.R0.degree, *op.R1.degree, *op.R2.degree)
    nq = N + kdeg + 4
    t, wt = _gauss01(nq)
    x = dom.lo + dom.width * t
    w = dom.width * wt
    phi = legendre_basis(N, dom)
    out = np.zeros((n + q * npt, m + p * nb))
    out[:n, :m] = op.P
    if not op.Q1.is_zero():
        out[:n, m:] = np.einsum("a,aic,aj->icj", w, op.Q1(x), phi(x)).reshape(n, p * nb)
    if npt == 0 or q == 0:
        return out
    out[n:, :m] = np.transpose(op.Q2(points), (1, 0, 2)).reshape(q * npt, m)
    R = np.einsum("kcd,kj->ckdj", op.R0(points), phi(points))
    S = np.broadcast_to(points[:, None], (npt, nq))
    if not op.R1.is_zero():
        th = dom.lo + (points[:, None] - dom.lo) * t[None, :]
        W = (points[:, None] - dom.lo) * wt[None, :]
        R += np.einsum("kb,kbcd,kbj->ckdj", W, op.R1(S, th), phi(th), optimize=True)
    if not op.R2.is_zero():
        th = points[:, None] + (dom.hi - points[:, None]) * t[None, :]
        W = (dom.hi - points[:, None]) * wt[None, :]
        R += np.einsum("kb,kbcd,kbj->ckdj", W, op.R2(S, th), phi(th), optimize=True)
    out[n:, m:] = R.reshape(q * npt, p * nb)
    return out


# ---------------------------------------------------------------------------
# text dump


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dump(op: FourPI, name: str = "op") -> str:
    """Human-readable kernel coefficient tables (stable, golden-file friendly)."""
    lines = [f"# FourPI {name}: out={op.dims_out} in={op.dims_in} "
             f"domain=[{_fmt(op.domain.lo)}, {_fmt(op.domain.hi)}]"]
    lines.append("P")
    for row in op.P:
        lines.append("  " + " ".join(_fmt(v) for v in row))
    for label, k in (("Q1", op.Q1), ("Q2", op.Q2), ("R0", op.R0)):
        lines.append(f"{label} degree={k.degree}")
        for d in range(k.degree + 1):
            for i in range(k.shape[0]):
                for j in range(k.shape[1]):
                    if k.coeffs[d, i, j] != 0.0:
                        lines.append(f"  s^{d} [{i},{j}] {_fmt(k.coeffs[d, i, j])}")
    for label, k in (("R1", op.R1), ("R2", op.R2)):
        lines.append(f"{label} degree={k.degree}")
        ds, dr = k.degree
        for a in range(ds + 1):
            for b in range(dr + 1):
                for i in range(k.shape[0]):
                    for j in range(k.shape[1]):
                        if k.coeffs[a, b, i, j] != 0.0:
                            lines.append(f"  s^{a} r^{b} [{i},{j}] {_fmt(k.coeffs[a, b, i, j])}")
    return "\n".join(lines) + "\n"
