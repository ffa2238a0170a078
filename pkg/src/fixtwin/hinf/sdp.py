"""SDP standard form, text export and the interior-point backend.

Problem::

    minimize    c.x
    subject to  A x = b
                S_l(x) = sum_k x_k G_lk  is PSD for every block l

Each block owns a contiguous range of ``x`` holding its symmetric entries
(see :func:`fixtwin.hinf.cone.svec_basis`); the remaining entries are free.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cone import smat, svec_basis

logger = logging.getLogger(__name__)

# residual and eigenvalue slack under which a returned point counts as feasible
ACCEPT_TOL = 1e-6


class SDPError(RuntimeError):
    """Backend failure (not infeasibility)."""


@dataclass
class StandardSDP:
    n: int
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: list = field(default_factory=list)  # (offset, size)
    labels: dict = field(default_factory=dict)

    def block_matrix(self, x: np.ndarray, l: int) -> np.ndarray:
        off, K = self.blocks[l]
        return smat(x[off: off + K * (K + 1) // 2], K)

    def to_text(self) -> str:
        """Sparse block format: sizes, objective, ``block,i,j,var,value`` entries, equalities."""
        lines = ["# sdp standard form", f"n_vars {self.n}",
                 "blocks " + " ".join(str(K) for _, K in self.blocks), "objective"]
        lines += [f"{k},{v:.17g}" for k, v in enumerate(self.c) if v != 0.0]
        lines.append("block_entries")
        for l, (off, K) in enumerate(self.blocks):
            for k, (a, b) in enumerate(svec_basis(K)):
                lines.append(f"{l},{b},{a},{off + k},1")
        lines.append(f"equalities {self.A.shape[0]}")
        rows, cols = np.nonzero(self.A)
        lines += [f"{r},{k},{self.A[r, k]:.17g}" for r, k in zip(rows, cols)]
        lines.append("rhs")
        lines += [f"{r},{v:.17g}" for r, v in enumerate(self.b) if v != 0.0]
        return "\n".join(lines) + "\n"


def reduce_equalities(A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
    """Independent row set via SVD.  Returns ``(A_r, b_r, inconsistency)``.

    ``inconsistency`` is the relative size of the part of ``b`` outside the
    range of ``A``; a value well above ``rtol`` means no ``x`` satisfies the
    equalities.
    """
    if A.shape[0] == 0:
        return A, b, 0.0
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    Ur = U[:, :r]
    proj = Ur.T @ b
    resid = b - Ur @ proj
    inc = float(np.linalg.norm(resid) / max(1.0, np.linalg.norm(b)))
    return Vt[:r], proj / s[:r], inc


@dataclass
class SDPSolution:
    status: str
    x: np.ndarray | None
    primal_objective: float = float("nan")
    iterations: int = 0
    equality_residual: float = float("nan")
    min_eigs: tuple = ()

    @property
    def feasible(self) -> bool:
        # "lifted" marks a point checked by hand rather than returned by the solver
        return self.status in ("optimal", "lifted")


def solve_cvxopt(sdp: StandardSDP, tol: float = 1e-9, max_iters: int = 100, equality_tol: float = 1e-7) -> SDPSolution:
    """Solve with cvxopt's cone solver after removing dependent equalities."""
    import cvxopt
    from cvxopt import solvers

    A, b, inc = reduce_equalities(sdp.A, sdp.b)
    if inc > equality_tol:
        return SDPSolution("infeasible_equalities", None, equality_residual=inc)
    n = sdp.n
    Gs, hs, dims_s = [], [], []
    for off, K in sdp.blocks:
        G = np.zeros((K * K, n))
        for k, (a, bb) in enumerate(svec_basis(K)):
            # s = h - G x must equal vec(S(x)) column-major
            G[a + bb * K, off + k] -= 1.0
            if a != bb:
                G[bb + a * K, off + k] -= 1.0
        Gs.append(G)
        hs.append(np.zeros(K * K))
        dims_s.append(K)
    G = np.vstack(Gs) if Gs else np.zeros((0, n))
    h = np.concatenate(hs) if hs else np.zeros(0)
    # directions touching no constraint make the KKT system singular; drop them
    _, sv, Vt = np.linalg.svd(np.vstack([A, G]), full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    W = Vt[:rank].T
    c, A, G = W.T @ sdp.c, A @ W, G @ W
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": max_iters}
    try:
        res = solvers.conelp(cvxopt.matrix(c), cvxopt.matrix(G), cvxopt.matrix(h),
                             {"l": 0, "q": [], "s": dims_s},
                             cvxopt.matrix(A) if A.shape[0] else None,
                             cvxopt.matrix(b) if A.shape[0] else None, options=opts)
    except ArithmeticError as exc:
        # breakdown of the scaling update happens on (near) infeasible instances
        logger.debug("cone solver breakdown: %s", exc)
        return SDPSolution("breakdown", None)
    except ValueError as exc:
        raise SDPError(f"cone solver failed: {exc}") from exc
    status = res["status"]
    if res["x"] is None:
        return SDPSolution(status, None, iterations=int(res.get("iterations", 0)))
    x = W @ np.array(res["x"]).ravel()
    eq = float(np.linalg.norm(sdp.A @ x - sdp.b) / max(1.0, np.linalg.norm(sdp.b)))
    eigs = tuple(float(np.linalg.eigvalsh(sdp.block_matrix(x, l)).min()) for l in range(len(sdp.blocks)))
    # near-optimal answers that still satisfy the constraints are usable certificates
    if status == "unknown" and eq < ACCEPT_TOL and all(e > -ACCEPT_TOL for e in eigs):
        status = "optimal"
    return SDPSolution(status, x, float(res["primal objective"] or np.nan), int(res.get("iterations", 0)), eq, eigs)
