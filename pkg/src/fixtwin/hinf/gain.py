"""Galerkin realization of the estimator gain ``L = P^{-1} Z``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pi import FourPI, QuadratureGrid, apply, discretize_galerkin, legendre_basis
from ..poly import UNIT, Interval


class InversionError(RuntimeError):
    """Sampled residual of ``P L - Z`` above tolerance."""


@dataclass
class GainOperator:
    """``L: R^ny -> R^m x L2^p`` stored as orthonormal-basis coefficients.

    ``coeffs`` has shape ``(m + p (N + 1), ny)``; column ``k`` is the image of
    the ``k``-th unit output.
    """

    coeffs: np.ndarray
    dims: tuple[int, int]
    N: int
    domain: Interval = UNIT

    @classmethod
    def from_fourpi(cls, L: FourPI, N: int) -> "GainOperator":
        """Exact coefficients of a finite-input operator (``Q2`` polynomial of degree <= N)."""
        if L.dims_in[1]:
            raise ValueError("gain must act on finite-dimensional outputs")
        return cls(discretize_galerkin(L, N), L.dims_out, N, L.domain)

    @property
    def n_y(self) -> int:
        return self.coeffs.shape[1]

    def matrix(self, N: int) -> np.ndarray:
        """Coefficients on the degree-``N`` basis (truncated or zero-padded)."""
        m, p = self.dims
        out = np.zeros((m + p * (N + 1), self.n_y))
        out[:m] = self.coeffs[:m]
        k = min(N, self.N) + 1
        src = self.coeffs[m:].reshape(p, self.N + 1, self.n_y)
        dst = out[m:].reshape(p, N + 1, self.n_y)
        dst[:, :k] = src[:, :k]
        return out

    def function(self, y) -> tuple[np.ndarray, callable]:
        """``(finite part, s -> (len(s), p) samples)`` of ``L y``."""
        m, p = self.dims
        a = self.coeffs @ np.asarray(y, dtype=float).reshape(self.n_y)
        phi = legendre_basis(self.N, self.domain)
        C = a[m:].reshape(p, self.N + 1)
        return a[:m], lambda s: phi(np.asarray(s, dtype=float)) @ C.T

    def as_dict(self) -> dict:
        return {"N": self.N, "dims": list(self.dims), "n_y": self.n_y,
                "coefficients": self.coeffs.tolist()}


def inversion_residual(P: FourPI, Z: FourPI, L: GainOperator, trials: int = 10, seed: int = 0,
                       projected: bool = True) -> float:
    """Max over random ``y`` of ``|P L y - Z y| / |Z y|`` by quadrature.

    With ``projected`` the function part of the residual is first projected
    onto the degree-``L.N`` basis, which is the subspace the realization lives
    on; otherwise the full residual is measured, which also contains the
    truncation of ``P^{-1} Z`` to that basis.
    """
    rng = np.random.default_rng(seed)
    grid = QuadratureGrid.gauss(64, P.domain, panels=2)
    Phi = legendre_basis(L.N, P.domain)(grid.nodes)
    worst = 0.0
    for _ in range(trials):
        y = rng.standard_normal(L.n_y)
        u, f = L.function(y)
        pu, pv = apply(P, u, f, grid)
        zu, zv = apply(Z, y, np.zeros((len(grid.nodes), 0)), grid)
        dv = pv - zv
        if projected:
            c = np.einsum("a,ac,ai->ci", grid.weights, dv, Phi)
            fn_err = np.sum(c ** 2)
        else:
            fn_err = np.sum(grid.weights[:, None] * dv ** 2)
        num = np.sqrt(np.sum((pu - zu) ** 2) + fn_err)
        den = np.sqrt(np.sum(zu ** 2) + np.sum(grid.weights[:, None] * zv ** 2))
        if den > 0:
            worst = max(worst, float(num / den))
        elif num > 0:
            worst = np.inf
    return worst


def invert_apply(P: FourPI, Z: FourPI, N_inv: int = 32, tol: float = 1e-6) -> tuple[GainOperator, float]:
    """Solve ``M_P M_L = M_Z`` on the degree-``N_inv`` basis; refuse above ``tol``.

    The returned residual is the sampled one on the realization subspace.
    :func:`inversion_residual` with ``projected=False`` gives the truncation
    part as a diagnostic.
    """
    MP = discretize_galerkin(P, N_inv)
    MZ = discretize_galerkin(Z, N_inv)
    ML = np.linalg.solve(MP, MZ)
    L = GainOperator(ML, P.dims_out, N_inv, P.domain)
    resid = inversion_residual(P, Z, L)
    if not resid <= tol:
        raise InversionError(f"gain inversion residual {resid:.3g} exceeds {tol:g}")
    return L, resid
