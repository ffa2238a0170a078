"""Matrix-valued polynomials in one and two variables on a bounded interval.

Coefficients are stored densely in the monomial basis.  ``MatPoly1`` holds an
array of shape ``(deg + 1, rows, cols)`` where entry ``k`` multiplies ``s**k``;
``MatPoly2`` holds ``(deg_s + 1, deg_r + 1, rows, cols)`` where entry ``(j, k)``
multiplies ``s**j * r**k``.  Both carry the interval they live on, and mixing
intervals is an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

MAX_DEGREE = 24
TRIM_TOL = 1e-14
_DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """Raised for out-of-interval evaluation or mixed-interval arithmetic."""


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, s) -> bool:
        s = np.asarray(s, dtype=float)
        slack = _DOMAIN_SLACK * max(1.0, abs(self.lo), abs(self.hi))
        return bool(np.all((s >= self.lo - slack) & (s <= self.hi + slack)))


UNIT = Interval(0.0, 1.0)


def _check_domain(a, b):
    if a.domain != b.domain:
        raise DomainError(f"interval mismatch: {a.domain} vs {b.domain}")


def _trim1(c: np.ndarray) -> np.ndarray:
    k = c.shape[0]
    while k > 1 and (c[k - 1].size == 0 or np.max(np.abs(c[k - 1])) < TRIM_TOL):
        k -= 1
    return c[:k]


def _trim2(c: np.ndarray) -> np.ndarray:
    def negligible(block):
        return block.size == 0 or np.max(np.abs(block)) < TRIM_TOL

    js, kr = c.shape[0], c.shape[1]
    while js > 1 and negligible(c[js - 1, :kr]):
        js -= 1
    while kr > 1 and negligible(c[:js, kr - 1]):
        kr -= 1
    return c[:js, :kr]


def _powers(x: np.ndarray, deg: int) -> np.ndarray:
    """Stack x**0 .. x**deg along a new leading axis."""
    out = np.empty((deg + 1,) + x.shape)
    out[0] = 1.0
    for k in range(1, deg + 1):
        out[k] = out[k - 1] * x
    return out


class MatPoly1:
    """Matrix polynomial ``p(s) = sum_k C_k s^k`` on an interval."""

    __slots__ = ("coeffs", "domain")

    def __init__(self, coeffs, domain: Interval = UNIT, trim: bool = True):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None, None]
        if c.ndim != 3 or c.shape[0] == 0:
            raise ValueError("MatPoly1 coefficients must have shape (deg+1, rows, cols)")
        if trim:
            c = _trim1(c)
        if c.shape[0] - 1 > MAX_DEGREE:
            raise ValueError(f"degree {c.shape[0] - 1} exceeds cap {MAX_DEGREE}")
        c.setflags(write=False)
        self.coeffs = c
        self.domain = domain

    # construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, rows: int, cols: int, domain: Interval = UNIT) -> "MatPoly1":
        return cls(np.zeros((1, rows, cols)), domain)

    @classmethod
    def constant(cls, mat, domain: Interval = UNIT) -> "MatPoly1":
        m = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(m[None], domain)

    @classmethod
    def identity(cls, n: int, domain: Interval = UNIT) -> "MatPoly1":
        return cls.constant(np.eye(n), domain)

    @classmethod
    def monomial(cls, k: int, rows: int = 1, cols: int = 1, domain: Interval = UNIT) -> "MatPoly1":
        c = np.zeros((k + 1, rows, cols))
        c[k] = np.eye(rows) if rows == cols else np.ones((rows, cols))
        return cls(c, domain)

    # properties -----------------------------------------------------------
    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1], self.coeffs.shape[2]

    def is_zero(self, tol: float = TRIM_TOL) -> bool:
        return self.coeffs.size == 0 or float(np.max(np.abs(self.coeffs))) < tol

    def __repr__(self):
        return f"MatPoly1(shape={self.shape}, degree={self.degree}, domain=[{self.domain.lo}, {self.domain.hi}])"

    # evaluation -----------------------------------------------------------
    def __call__(self, s):
        return eval1(self, s)

    def T(self) -> "MatPoly1":
        return MatPoly1(np.swapaxes(self.coeffs, 1, 2), self.domain)

    def scale(self, alpha: float) -> "MatPoly1":
        return MatPoly1(alpha * self.coeffs, self.domain)

    def __add__(self, other: "MatPoly1") -> "MatPoly1":
        return linear_combine(1.0, self, 1.0, other)

    def __sub__(self, other: "MatPoly1") -> "MatPoly1":
        return linear_combine(1.0, self, -1.0, other)

    def __neg__(self) -> "MatPoly1":
        return self.scale(-1.0)

    def __matmul__(self, other):
        return multiply(self, other)

    def derivative(self) -> "MatPoly1":
        if self.degree == 0:
            return MatPoly1.zeros(*self.shape, domain=self.domain)
        k = np.arange(1, self.degree + 1, dtype=float)[:, None, None]
        return MatPoly1(self.coeffs[1:] * k, self.domain)

    def pad(self, degree: int) -> np.ndarray:
        """Coefficient array zero-padded to ``degree`` (no trimming)."""
        out = np.zeros((degree + 1,) + self.shape)
        out[: self.degree + 1] = self.coeffs
        return out

    def block(self, rows: slice, cols: slice) -> "MatPoly1":
        return MatPoly1(self.coeffs[:, rows, cols], self.domain)


class MatPoly2:
    """Matrix polynomial kernel ``K(s, r) = sum_{j,k} C_jk s^j r^k``."""

    __slots__ = ("coeffs", "domain")

    def __init__(self, coeffs, domain: Interval = UNIT, trim: bool = True):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[:, :, None, None]
        if c.ndim != 4 or c.shape[0] == 0 or c.shape[1] == 0:
            raise ValueError("MatPoly2 coefficients must have shape (deg_s+1, deg_r+1, rows, cols)")
        if trim:
            c = _trim2(c)
        if max(c.shape[0], c.shape[1]) - 1 > MAX_DEGREE:
            raise ValueError(f"degree {max(c.shape[:2]) - 1} exceeds cap {MAX_DEGREE}")
        c.setflags(write=False)
        self.coeffs = c
        self.domain = domain

    @classmethod
    def zeros(cls, rows: int, cols: int, domain: Interval = UNIT) -> "MatPoly2":
        return cls(np.zeros((1, 1, rows, cols)), domain)

    @classmethod
    def constant(cls, mat, domain: Interval = UNIT) -> "MatPoly2":
        m = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(m[None, None], domain)

    @classmethod
    def from_s(cls, p: MatPoly1) -> "MatPoly2":
        """Lift ``p(s)`` to a kernel constant in ``r``."""
        return cls(p.coeffs[:, None], p.domain)

    @classmethod
    def from_r(cls, p: MatPoly1) -> "MatPoly2":
        """Lift ``p(r)`` to a kernel constant in ``s``."""
        return cls(p.coeffs[None, :], p.domain)

    @property
    def degree(self) -> tuple[int, int]:
        return self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[2], self.coeffs.shape[3]

    def is_zero(self, tol: float = TRIM_TOL) -> bool:
        return self.coeffs.size == 0 or float(np.max(np.abs(self.coeffs))) < tol

    def __repr__(self):
        return f"MatPoly2(shape={self.shape}, degree={self.degree}, domain=[{self.domain.lo}, {self.domain.hi}])"

    def __call__(self, s, r):
        return eval2(self, s, r)

    def scale(self, alpha: float) -> "MatPoly2":
        return MatPoly2(alpha * self.coeffs, self.domain)

    def __add__(self, other: "MatPoly2") -> "MatPoly2":
        return linear_combine(1.0, self, 1.0, other)

    def __sub__(self, other: "MatPoly2") -> "MatPoly2":
        return linear_combine(1.0, self, -1.0, other)

    def __neg__(self) -> "MatPoly2":
        return self.scale(-1.0)

    def __matmul__(self, other):
        return multiply(self, other)

    def swap_transpose(self) -> "MatPoly2":
        """Return ``K(r, s)^T`` as a kernel in ``(s, r)``."""
        return MatPoly2(np.transpose(self.coeffs, (1, 0, 3, 2)), self.domain)

    def pad(self, deg_s: int, deg_r: int) -> np.ndarray:
        out = np.zeros((deg_s + 1, deg_r + 1) + self.shape)
        js, kr = self.coeffs.shape[:2]
        out[:js, :kr] = self.coeffs
        return out

    def block(self, rows: slice, cols: slice) -> "MatPoly2":
        return MatPoly2(self.coeffs[:, :, rows, cols], self.domain)

    def partial_s(self) -> "MatPoly2":
        ds, _ = self.degree
        if ds == 0:
            return MatPoly2.zeros(*self.shape, domain=self.domain)
        j = np.arange(1, ds + 1, dtype=float)[:, None, None, None]
        return MatPoly2(self.coeffs[1:] * j, self.domain)

    def restrict_s(self, s: float) -> MatPoly1:
        """Kernel with ``s`` fixed, as a polynomial in ``r``."""
        ps = _powers(np.asarray(float(s)), self.degree[0])
        return MatPoly1(np.einsum("j,jkab->kab", ps, self.coeffs), self.domain)

    def restrict_r(self, r: float) -> MatPoly1:
        """Kernel with ``r`` fixed, as a polynomial in ``s``."""
        pr = _powers(np.asarray(float(r)), self.degree[1])
        return MatPoly1(np.einsum("k,jkab->jab", pr, self.coeffs), self.domain)


AnyPoly = Union[MatPoly1, MatPoly2]


# ---------------------------------------------------------------------------
# evaluation


def eval1(p: MatPoly1, s):
    """Horner evaluation.  Scalar ``s`` gives a matrix, arrays give a stack."""
    if not p.domain.contains(s):
        raise DomainError(f"point outside [{p.domain.lo}, {p.domain.hi}]")
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + p.shape)
    for k in range(p.degree, -1, -1):
        out = out * s[..., None, None] + p.coeffs[k]
    return out


def eval2(p: MatPoly2, s, r):
    if not (p.domain.contains(s) and p.domain.contains(r)):
        raise DomainError(f"point outside [{p.domain.lo}, {p.domain.hi}]")
    s, r = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
    ds, dr = p.degree
    # Horner in r for each s-coefficient, then Horner in s
    out = np.zeros(s.shape + p.shape)
    for j in range(ds, -1, -1):
        inner = np.zeros(s.shape + p.shape)
        for k in range(dr, -1, -1):
            inner = inner * r[..., None, None] + p.coeffs[j, k]
        out = out * s[..., None, None] + inner
    return out


# ---------------------------------------------------------------------------
# algebra


def multiply(a: AnyPoly, b: AnyPoly) -> AnyPoly:
    """Matrix product with coefficient convolution.

    Two ``MatPoly1`` give a ``MatPoly1``; any ``MatPoly2`` operand promotes the
    other (read as a function of ``s``) and the result is a ``MatPoly2``.
    """
    _check_domain(a, b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimension mismatch: {a.shape} @ {b.shape}")
    if isinstance(a, MatPoly1) and isinstance(b, MatPoly1):
        ca, cb = a.coeffs, b.coeffs
        out = np.zeros((ca.shape[0] + cb.shape[0] - 1, a.shape[0], b.shape[1]))
        for i in range(ca.shape[0]):
            out[i : i + cb.shape[0]] += np.matmul(ca[i], cb)
        return MatPoly1(out, a.domain)
    if isinstance(a, MatPoly1):
        a = MatPoly2.from_s(a)
    if isinstance(b, MatPoly1):
        b = MatPoly2.from_s(b)
    ca, cb = a.coeffs, b.coeffs
    out = np.zeros(
        (ca.shape[0] + cb.shape[0] - 1, ca.shape[1] + cb.shape[1] - 1, a.shape[0], b.shape[1])
    )
    for j in range(ca.shape[0]):
        for k in range(ca.shape[1]):
            out[j : j + cb.shape[0], k : k + cb.shape[1]] += np.matmul(ca[j, k], cb)
    return MatPoly2(out, a.domain)


def linear_combine(alpha: float, a: AnyPoly, beta: float, b: AnyPoly) -> AnyPoly:
    """Coefficient-wise ``alpha * a + beta * b`` (same kind, shape, interval)."""
    _check_domain(a, b)
    if type(a) is not type(b):
        raise TypeError("linear_combine needs operands of the same kind")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if isinstance(a, MatPoly1):
        d = max(a.degree, b.degree)
        return MatPoly1(alpha * a.pad(d) + beta * b.pad(d), a.domain)
    ds = max(a.degree[0], b.degree[0])
    dr = max(a.degree[1], b.degree[1])
    return MatPoly2(alpha * a.pad(ds, dr) + beta * b.pad(ds, dr), a.domain)


def _antiderivative_coeffs(c: np.ndarray, axis: int) -> np.ndarray:
    """Coefficients of the antiderivative along ``axis`` with zero constant."""
    n = c.shape[axis]
    shape = list(c.shape)
    shape[axis] = n + 1
    out = np.zeros(shape)
    div = np.arange(1, n + 1, dtype=float)
    bshape = [1] * c.ndim
    bshape[axis] = n
    idx = [slice(None)] * c.ndim
    idx[axis] = slice(1, n + 1)
    out[tuple(idx)] = c / div.reshape(bshape)
    return out


def integrate(p: AnyPoly, mode: str = "definite", limits: str = "full"):
    """Exact integration by the power rule.

    ``MatPoly1`` modes: ``definite`` (matrix, over the whole interval),
    ``lower_s`` (``int_lo^s``) and ``upper_s`` (``int_s^hi``), both returning a
    ``MatPoly1``.  ``MatPoly2`` mode ``over_r`` integrates out ``r`` with
    ``limits`` one of ``full``, ``lower`` (``int_lo^s``) or ``upper``
    (``int_s^hi``), returning a ``MatPoly1`` in ``s``.
    """
    lo, hi = p.domain.lo, p.domain.hi
    if isinstance(p, MatPoly1):
        anti = _antiderivative_coeffs(p.coeffs, 0)

        def at(x):
            return np.einsum("k,kab->ab", _powers(np.asarray(x), anti.shape[0] - 1), anti)

        if mode == "definite":
            return at(hi) - at(lo)
        if mode == "lower_s":
            c = anti.copy()
            c[0] -= at(lo)
            return MatPoly1(c, p.domain)
        if mode == "upper_s":
            c = -anti
            c[0] += at(hi)
            return MatPoly1(c, p.domain)
        raise ValueError(f"mode {mode!r} not valid for MatPoly1")
    if mode != "over_r":
        raise ValueError(f"mode {mode!r} not valid for MatPoly2")
    anti = _antiderivative_coeffs(p.coeffs, 1)  # (ds+1, dr+2, a, b), in r

    def at_const(x):
        return np.einsum("k,jkab->jab", _powers(np.asarray(x), anti.shape[1] - 1), anti)

    def at_s():
        # substitute r = s: s^j r^k -> s^(j+k)
        ds, dr = anti.shape[0], anti.shape[1]
        out = np.zeros((ds + dr - 1,) + anti.shape[2:])
        for j in range(ds):
            out[j : j + dr] += anti[j]
        return out

    def sub(x, y):
        n = max(x.shape[0], y.shape[0])
        out = np.zeros((n,) + x.shape[1:])
        out[: x.shape[0]] += x
        out[: y.shape[0]] -= y
        return out

    if limits == "full":
        return MatPoly1(sub(at_const(hi), at_const(lo)), p.domain)
    if limits == "lower":
        return MatPoly1(sub(at_s(), at_const(lo)), p.domain)
    if limits == "upper":
        return MatPoly1(sub(at_const(hi), at_s()), p.domain)
    raise ValueError(f"unknown limits {limits!r}")


def affine_remap(p: AnyPoly, m: float, c: float) -> AnyPoly:
    """Substitute ``s <- m*s + c`` (both variables for kernels).

    The result lives on the preimage of the original interval, so a
    polynomial on ``[0, 2]`` remapped with ``m=2, c=0`` lives on ``[0, 1]``.
    """
    if m == 0:
        raise ValueError("affine_remap needs m != 0")
    a, b = sorted(((p.domain.lo - c) / m, (p.domain.hi - c) / m))
    dom = Interval(a, b)
    # T[k, i]: coefficient of s^i in (m s + c)^k
    deg = p.degree if isinstance(p, MatPoly1) else max(p.degree)
    T = np.zeros((deg + 1, deg + 1))
    row = np.zeros(deg + 1)
    row[0] = 1.0
    T[0] = row
    for k in range(1, deg + 1):
        new = np.zeros(deg + 1)
        new[1:] += m * T[k - 1][:-1]
        new += c * T[k - 1]
        T[k] = new
    if isinstance(p, MatPoly1):
        return MatPoly1(np.einsum("ki,kab->iab", T[: p.degree + 1, : p.degree + 1], p.coeffs), dom)
    ds, dr = p.degree
    out = np.einsum("ji,lk,jlab->ikab", T[: ds + 1, : ds + 1], T[: dr + 1, : dr + 1], p.coeffs)
    return MatPoly2(out, dom)


def chain_integral(ka: MatPoly2, kb: MatPoly2, lower, upper) -> MatPoly2:
    """``K(s, r) = int_{lower}^{upper} ka(s, t) kb(t, r) dt``.

    Limits are ``"s"``, ``"r"``, ``"lo"``, ``"hi"`` or a number.  This is the
    single building block of the closed-form composition of PI operators.
    """
    _check_domain(ka, kb)
    if ka.shape[1] != kb.shape[0]:
        raise ValueError(f"inner dimension mismatch: {ka.shape} @ {kb.shape}")
    ca, cb = ka.coeffs, kb.coeffs
    js, kt = ca.shape[:2]
    lt, mr = cb.shape[:2]
    nt = kt + lt - 1
    rows, cols = ka.shape[0], kb.shape[1]
    # prod[j, n, m] = sum_{k + l = n} ca[j, k] @ cb[l, m]
    prod = np.zeros((js, nt, mr, rows, cols))
    for k in range(kt):
        prod[:, k : k + lt] += np.einsum("jab,lmbc->jlmac", ca[:, k], cb)
    dom = ka.domain

    def bound(x):
        if x == "lo":
            return float(dom.lo)
        if x == "hi":
            return float(dom.hi)
        return x

    lower, upper = bound(lower), bound(upper)
    ext = nt + 1
    out = np.zeros((js + ext, mr + ext, rows, cols))
    inv = 1.0 / np.arange(1, nt + 1, dtype=float)
    for lim, sign in ((upper, 1.0), (lower, -1.0)):
        for n in range(nt):
            term = sign * inv[n] * prod[:, n]  # (js, mr, rows, cols)
            if lim == "s":
                out[n + 1 : n + 1 + js, :mr] += term
            elif lim == "r":
                out[:js, n + 1 : n + 1 + mr] += term
            else:
                out[:js, :mr] += term * float(lim) ** (n + 1)
    return MatPoly2(out, dom)
