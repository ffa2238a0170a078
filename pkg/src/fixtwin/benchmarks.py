"""Small reference problems with known behaviour."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .graph import CoupledPDE, make_pde
from .pde2pie import PIESystem, convert_to_pie
from .pi import FourPI, compose


def heat_dirichlet(D: float = 1.0) -> CoupledPDE:
    """``x_t = D x_ss`` with ``x(0) = x(1) = 0``; senses the end fluxes.

    ``y = x_s(1)``, ``z = x_s(0)``.  ``sin(pi s)`` decays as ``exp(-D pi^2 t)``.
    """
    B = [[1, 0, 0, 0], [0, 1, 0, 0]]
    return make_pde([D], B, C_y=[[0, 0, 0, 1]], C_z=[[0, 0, 1, 0]], names={"y": ["flux1"], "z": ["flux0"]})


def heat_dirichlet_exact(s, t, D: float = 1.0, mode: int = 1):
    return np.sin(mode * np.pi * np.asarray(s)) * np.exp(-D * (mode * np.pi) ** 2 * t)


def double_neumann(D: float = 1.0) -> CoupledPDE:
    """Insulated rod; the boundary map has no unique inverse."""
    return make_pde([D], [[0, 0, 1, 0], [0, 0, 0, 1]])


def heat_boundary_sensed(D: float = 1.0) -> CoupledPDE:
    """Rod with ``x(0) = 0`` and flux disturbance ``x_s(1) = w``.

    Measurement ``y = x(1) + 0.1 w``.  The regulated output (mean
    temperature) is not a boundary value; :func:`heat_boundary_sensed_pie`
    adds it on the PIE side.
    """
    return make_pde([D], [[1, 0, 0, 0], [0, 0, 0, 1]], B_w=[[0.0], [-1.0]],
                    C_y=[[0, 1, 0, 0]], D_yw=[[0.1]], names={"w": ["w1"], "y": ["x1"]})


def with_mean_output(sys: PIESystem) -> PIESystem:
    """Replace the regulated output by the channel means ``z = int_0^1 x ds``.

    A boundary flux is not bounded by any quadratic storage built from a
    bounded PI operator, so estimator benchmarks regulate the mean instead.
    """
    m, p = sys.state_dims
    dom = sys.T.domain
    mean = FourPI.build((p, 0), (m, p), P=np.zeros((p, m)), Q1=np.eye(p), domain=dom)
    n_w, n_d = sys.Tw.dims_in[0], sys.Td.dims_in[0]
    C1 = compose(mean, sys.T)
    D11 = compose(mean, sys.Tw)
    D12 = compose(mean, sys.Td)
    names = dict(sys.names, z=tuple(f"mean{k + 1}" for k in range(p)))
    return replace(sys, C1=C1, D11=D11, D12=D12, D1q=FourPI.zero((p, 0), (sys.Bq.dims_in[0], 0), dom),
                   names=names)


def heat_boundary_sensed_pie(D: float = 1.0) -> PIESystem:
    """Estimator benchmark: boundary sensor ``y = x(1) + 0.1 w``, ``z`` = mean temperature."""
    return with_mean_output(convert_to_pie(heat_boundary_sensed(D)))


def scalar_ode() -> PIESystem:
    """``x' = -x + w``, ``y = x + 0.1 w``, ``z = x``.  The optimal L2 gain is known in closed form."""
    return PIESystem.from_state_space(A=[[-1.0]], B1=[[1.0]], C1=[[1.0]], D11=[[0.0]],
                                      C2=[[1.0]], D21=[[0.1]])


def multi_state_ode(full_state: bool = False) -> PIESystem:
    """Three-state damped chain sensed at one end (or fully when ``full_state``)."""
    A = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]])
    B1 = np.array([[0.0], [0.0], [1.0]])
    C1 = np.array([[1.0, 0.0, 0.0]])
    C2 = np.eye(3) if full_state else np.array([[0.0, 0.0, 1.0]])
    D21 = 0.1 * np.ones((C2.shape[0], 1))
    return PIESystem.from_state_space(A=A, B1=B1, C1=C1, D11=[[0.0]], C2=C2, D21=D21)


def heat_pie(kind: str = "dirichlet", D: float = 1.0) -> PIESystem:
    if kind == "boundary_sensed":
        return heat_boundary_sensed_pie(D)
    pdes = {"dirichlet": heat_dirichlet, "double_neumann": double_neumann}
    return convert_to_pie(pdes[kind](D))
