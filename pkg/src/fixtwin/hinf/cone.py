"""Cone of positive PI operators ``P = eps I + Zb* Q Zb`` with ``Q >= 0``.

``Zb`` stacks, per function channel, the monomial multipliers ``s^k`` and
the monomial kernels ``s^i r^j`` in both Volterra halves.  Every quadratic
form ``<x, Zb* Q Zb x> = <Zb x, Q Zb x>`` is nonnegative when ``Q`` is, so the
cone is parameterized linearly by the symmetric matrix ``Q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pi import FourPI, adjoint, compose
from ..poly import UNIT, Interval, MatPoly1, MatPoly2


def monomials2(d: int) -> list[tuple[int, int]]:
    """Exponent pairs ``(i, j)`` with ``i + j <= d``, graded order."""
    return [(i, t - i) for t in range(d + 1) for i in range(t, -1, -1)]


def monomial_basis(dims: tuple[int, int], degree: int, multiplier: bool = True,
                   domain: Interval = UNIT) -> FourPI:
    """The fixed operator ``Zb`` from ``R^m x L2^p`` to ``R^m x L2^K``."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    m, p = dims
    nm = degree + 1 if multiplier else 0
    mons = monomials2(degree)
    nk = len(mons)
    K = p * (nm + 2 * nk)
    R0 = np.zeros((max(nm, 1), K, p))
    R1 = np.zeros((degree + 1, degree + 1, K, p))
    R2 = np.zeros_like(R1)
    row = 0
    for c in range(p):
        for k in range(nm):
            R0[k, row, c] = 1.0
            row += 1
    for c in range(p):
        for i, j in mons:
            R1[i, j, row, c] = 1.0
            row += 1
    for c in range(p):
        for i, j in mons:
            R2[i, j, row, c] = 1.0
            row += 1
    return FourPI(np.eye(m), MatPoly1.zeros(m, p, domain), MatPoly1.zeros(K, m, domain),
                  MatPoly1(R0, domain), MatPoly2(R1, domain), MatPoly2(R2, domain))


def middle_operator(Q: np.ndarray, m: int, domain: Interval = UNIT) -> FourPI:
    """Constant operator on ``R^m x L2^K`` with block matrix ``Q``."""
    Q = np.asarray(Q, dtype=float)
    return FourPI.build((m, Q.shape[0] - m), (m, Q.shape[0] - m), P=Q[:m, :m], Q1=Q[:m, m:],
                        Q2=Q[m:, :m], R0=Q[m:, m:], domain=domain)


def svec_basis(K: int) -> list[tuple[int, int]]:
    """Index pairs ``(a, b)``, ``a <= b``, of the symmetric decision entries."""
    return [(a, b) for b in range(K) for a in range(b + 1)]


def smat(x: np.ndarray, K: int) -> np.ndarray:
    """Symmetric matrix with ``Q[a, b] = Q[b, a] = x[k]`` in :func:`svec_basis` order."""
    Q = np.zeros((K, K))
    for k, (a, b) in enumerate(svec_basis(K)):
        Q[a, b] = Q[b, a] = x[k]
    return Q


@dataclass
class PosPIVar:
    """Positive PI decision variable on ``R^m x L2^p``."""

    dims: tuple[int, int]
    degree: int = 2
    eps: float = 1e-3
    multiplier: bool = True
    domain: Interval = UNIT
    Z: FourPI = field(init=False)
    _basis: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        self.Z = monomial_basis(self.dims, self.degree, self.multiplier, self.domain)

    @property
    def size(self) -> int:
        """Side of the matrix ``Q``."""
        n, q = self.Z.dims_out
        return n + q

    @property
    def n_vars(self) -> int:
        K = self.size
        return K * (K + 1) // 2

    def gram(self, Q: np.ndarray) -> FourPI:
        """``Zb* Q Zb`` (without the ``eps`` shift)."""
        m = self.dims[0]
        return compose(adjoint(self.Z), compose(middle_operator(Q, m, self.domain), self.Z))

    def shift(self) -> FourPI:
        m, p = self.dims
        return FourPI.identity(m, p, self.domain).scale(self.eps)

    def operator(self, Q: np.ndarray) -> FourPI:
        """``P = eps I + Zb* Q Zb``."""
        return self.shift() + self.gram(Q)

    def basis(self) -> list[FourPI]:
        """``Zb* E_k Zb`` for each symmetric unit matrix ``E_k`` (cached)."""
        if self._basis is None:
            K, m = self.size, self.dims[0]
            Zs = adjoint(self.Z)
            out = []
            for a, b in svec_basis(K):
                E = np.zeros((K, K))
                E[a, b] = E[b, a] = 1.0
                out.append(compose(Zs, compose(middle_operator(E, m, self.domain), self.Z)))
            self._basis = out
        return self._basis

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return smat(x, self.size)

    def row_labels(self) -> list[tuple]:
        """Meaning of each row of ``Zb``: finite, multiplier or kernel monomial."""
        m, p = self.dims
        labels = [("finite", i) for i in range(m)]
        if self.multiplier:
            labels += [("mult", c, k) for c in range(p) for k in range(self.degree + 1)]
        for half in ("lower", "upper"):
            labels += [(half, c, i, j) for c in range(p) for i, j in monomials2(self.degree)]
        return labels

    def lift(self, Q: np.ndarray, other: "PosPIVar") -> np.ndarray:
        """``Q`` padded with zeros so that ``other`` gives the same ``Zb* Q Zb``."""
        if other.dims != self.dims or other.multiplier != self.multiplier or other.degree < self.degree:
            raise ValueError("can only lift to a variable of equal shape and higher degree")
        where = {lab: k for k, lab in enumerate(other.row_labels())}
        idx = np.array([where[lab] for lab in self.row_labels()], dtype=int)
        out = np.zeros((other.size, other.size))
        out[np.ix_(idx, idx)] = Q
        return out

    def svec(self, Q: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`matrix`."""
        return np.array([Q[a, b] for a, b in svec_basis(self.size)])
