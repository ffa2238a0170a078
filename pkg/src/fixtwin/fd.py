"""Finite-difference reference simulator for the coupled PDE.

Each channel is sampled on a uniform node grid of its normalized interval
with one ghost node beyond each end.  Interior and end nodes carry the
diffusion equation with second-order central differences; the boundary
rows are imposed algebraically with central first differences.  The
resulting index-1 DAE is advanced by implicit Euler with one sparse LU.
The trapezoid-weighted channel integral is conserved exactly by this
scheme when the boundary fluxes cancel.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import CoupledPDE
from .signals import as_bank
from .simulate import SimulationError, Trajectory

logger = logging.getLogger(__name__)


class FDGrid:
    """Index bookkeeping: channel ``c`` owns nodes ``-1 .. M+1``."""

    def __init__(self, n: int, cells: int, widths=None):
        if cells < 4:
            raise ValueError("need at least 4 cells per channel")
        self.n, self.M = n, cells
        self.widths = np.ones(n) if widths is None else np.asarray(widths, dtype=float)
        self.h = self.widths / cells
        self.stride = cells + 3
        self.s = np.linspace(0.0, 1.0, cells + 1)  # fraction of each channel interval

    @property
    def size(self) -> int:
        return self.n * self.stride

    def idx(self, c: int, i):
        return c * self.stride + 1 + np.asarray(i)

    def nodes(self, X):
        """``(n, M + 1)`` node values (ghosts dropped)."""
        return X.reshape(self.n, self.stride)[:, 1:-1]

    def trapezoid(self) -> np.ndarray:
        """``(n, M + 1)`` trapezoid weights on each channel interval."""
        w = np.ones((self.n, self.M + 1)) * self.h[:, None]
        w[:, [0, -1]] *= 0.5
        return w

    def boundary_rows(self) -> sp.csr_matrix:
        """Map from the unknown vector to ``xb = col(x(0), x(1), x_s(0), x_s(1))``."""
        n, M = self.n, self.M
        rows, cols, vals = [], [], []
        for c in range(n):
            h = self.h[c]
            rows += [c, n + c]
            cols += [int(self.idx(c, 0)), int(self.idx(c, M))]
            vals += [1.0, 1.0]
            rows += [2 * n + c] * 2 + [3 * n + c] * 2
            cols += [int(self.idx(c, 1)), int(self.idx(c, -1)), int(self.idx(c, M + 1)), int(self.idx(c, M - 1))]
            vals += [0.5 / h, -0.5 / h, 0.5 / h, -0.5 / h]
        return sp.csr_matrix((vals, (rows, cols)), shape=(4 * n, self.size))


def _assemble(pde: CoupledPDE, grid: FDGrid, dt: float):
    n, M = grid.n, grid.M
    rows, cols, vals = [], [], []
    mass = np.zeros(grid.size)
    node_rows = []
    for c in range(n):
        k = pde.D[c] / grid.h[c] ** 2
        for i in range(M + 1):
            r = int(grid.idx(c, i))
            node_rows.append(r)
            mass[r] = 1.0
            rows += [r, r, r]
            cols += [int(grid.idx(c, i - 1)), r, int(grid.idx(c, i + 1))]
            vals += [-k, 1.0 / dt + 2 * k, -k]
    # boundary rows live on the ghost slots
    ghost_rows = [int(grid.idx(c, -1)) for c in range(n)] + [int(grid.idx(c, M + 1)) for c in range(n)]
    S = grid.boundary_rows()
    BS = sp.csr_matrix(pde.B) @ S
    BS = BS.tocoo()
    for r, cidx, v in zip(BS.row, BS.col, BS.data):
        rows.append(ghost_rows[r])
        cols.append(cidx)
        vals.append(v)
    K = sp.csc_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))
    return K, mass, np.array(node_rows), np.array(ghost_rows), S


def fd_reference_simulate(pde: CoupledPDE, t_final: float, dt: float, cells: int = 200, w=None, d=None,
                          x0=None, evap=None, points=None, k_max: int = 20, tol: float = 1e-10) -> Trajectory:
    """Implicit-Euler finite-difference simulation of ``pde``.

    Works on normalized and physical-width systems alike.  ``x0`` maps the
    fraction ``s`` in [0, 1] of each channel interval (array) to
    ``(len(s), n_x)`` primal values; ``None`` starts from zero.
    ``diagnostics['integrals']`` holds the trapezoid integrals of each
    channel over its own interval.
    """
    if not dt > 0 or not t_final > 0:
        raise ValueError("dt and t_final must be positive")
    dims = pde.dims()
    n = pde.n_x
    if cells < 50:
        raise ValueError("the reference solver needs at least 50 cells per channel")
    grid = FDGrid(n, cells, pde.widths)
    K, mass, node_rows, ghost_rows, S = _assemble(pde, grid, dt)
    lu = spla.splu(K)
    wb, db = as_bank(w, dims["n_w"]), as_bank(d, dims["n_d"])
    n_q = dims["n_q"]
    if evap is not None and n_q == 0:
        evap = None
    X = np.zeros(grid.size)
    if x0 is not None:
        vals = np.asarray(x0(grid.s), dtype=float).reshape(M1 := grid.M + 1, n)
        for c in range(n):
            X[grid.idx(c, np.arange(M1))] = vals[:, c]
    points = np.linspace(0.0, 1.0, 11) if points is None else np.asarray(points, dtype=float)
    Bq_nodes = np.zeros((grid.size, n_q))
    for c in range(n):
        Bq_nodes[grid.idx(c, np.arange(grid.M + 1))] = pde.B_delta[c]
    Bb = np.hstack([pde.B_w, pde.B_d])
    outs = {"y": (pde.C_y, np.hstack([pde.D_yw, pde.D_yd])), "z": (pde.C_z, np.hstack([pde.D_zw, pde.D_zd])),
            "p": (pde.C_p, np.hstack([pde.D_pw, pde.D_pd]))}

    def u_at(t):
        return np.concatenate([np.atleast_1d(wb(t)), np.atleast_1d(db(t))])

    def solve(Xn, u1, q):
        rhs = mass * Xn / dt
        if n_q:
            rhs = rhs + Bq_nodes @ q
        rhs[ghost_rows] = -(Bb @ u1)
        return lu.solve(rhs)

    def p_of(X1, u1):
        C, Du = outs["p"]
        return C @ (S @ X1) + Du @ u1

    nsteps = int(round(t_final / dt))
    times = np.arange(nsteps + 1) * dt
    wts = grid.trapezoid()
    u = u_at(0.0)
    q = np.zeros(n_q)
    if evap is not None:
        q = np.asarray(evap(p_of(X, u)), dtype=float)
    rec_x, rec_q, rec_u, rec_b = [], [], [], []

    def record(X, u, q):
        rec_x.append(grid.nodes(X).copy())
        rec_q.append(q.copy())
        rec_u.append(u.copy())
        rec_b.append(S @ X)

    record(X, u, q)
    for k in range(nsteps):
        u1 = u_at(times[k + 1])
        if evap is None:
            X = solve(X, u1, q)
        else:
            qk = q
            for it in range(k_max):
                X1 = solve(X, u1, qk)
                qn = np.asarray(evap(p_of(X1, u1)), dtype=float)
                if np.all(np.abs(qn - qk) <= tol * (1.0 + np.abs(qn))):
                    break
                qk = qn
            else:
                raise SimulationError("finite-difference fixed point did not converge")
            X, q = X1, qk
        if not np.all(np.isfinite(X)):
            raise SimulationError(f"non-finite finite-difference state at t = {times[k + 1]:.6g}")
        record(X, u1, q)
    nodes = np.array(rec_x)  # (nt, n, M+1)
    xb = np.array(rec_b)
    us = np.array(rec_u)
    qs = np.array(rec_q).reshape(len(times), n_q)
    outputs = {name: xb @ C.T + us @ Du.T for name, (C, Du) in outs.items()}
    outputs["q"] = qs
    fields = np.stack([np.stack([np.interp(points, grid.s, nodes[t, c]) for c in range(n)])
                       for t in range(len(times))])
    positions = (pde.scales * grid.widths)[:, None] * points[None, :] + pde.offsets[:, None]
    diag = {"integrals": np.einsum("tcm,cm->tc", nodes, wts), "cells": cells, "steps": nsteps, "nodes": nodes}
    names = {"w": pde.w_names, "d": pde.d_names, "q": pde.q_names, "y": pde.y_names,
             "z": pde.z_names, "p": pde.p_names}
    return Trajectory(times, outputs, fields, points, pde.channels, positions, names, None, diag)
