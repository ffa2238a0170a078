"""Error dynamics, estimator co-simulation and empirical gain checks.

With ``e = v - v_hat`` the estimator ``T v_hat' + Td d' = A v_hat + B2 d -
L (y - y_hat)`` yields::

    T e' + Tw w' = (A + L C2) e + (B1 + L D21) w,      z_e = C1 e + D11 w.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..pde2pie import PIESystem
from ..pi import FourPI, compose, discretize_galerkin, sample_matrix
from ..signals import DampedSinusoid, as_bank, band_limited_family
from ..simulate import (DescriptorModel, SimConfig, build_galerkin, initial_coefficients,
                        integrate_descriptor)
from .gain import GainOperator

logger = logging.getLogger(__name__)


@dataclass
class ErrorSystem:
    """Error dynamics of ``sys`` under gain ``L`` (exact PI operator or Galerkin gain)."""

    sys: PIESystem
    gain: FourPI | GainOperator | None
    A: FourPI | None = None
    B1: FourPI | None = None
    _models: dict = field(default_factory=dict, repr=False)

    @property
    def pie(self) -> PIESystem | None:
        """Error system as a PIE when ``L`` is an exact PI operator."""
        if self.A is None:
            return None
        return replace(self.sys, A=self.A, B1=self.B1)

    def descriptor(self, N: int, points=None) -> DescriptorModel:
        key = (N, None if points is None else tuple(np.asarray(points, dtype=float)))
        if key in self._models:
            return self._models[key]
        nom = self.sys.nominal()
        base = build_galerkin(nom, N, points)
        n_w = base.n_w
        Bw = base.B[:, :n_w]
        Fw = base.F[:, :n_w]
        A = base.A
        if isinstance(self.gain, GainOperator):
            G = self.gain.matrix(N)
            MC2 = discretize_galerkin(nom.C2, N)
            A = A + G @ MC2
            Bw = Bw + G @ nom.D21.P
        elif self.A is not None:
            A = discretize_galerkin(self.A, N)
            Bw = discretize_galerkin(self.B1, N)
        C, Du, Dq = base.outputs["z"]
        outs = {"z": (C, Du[:, :n_w], Dq)}
        sample = None
        if base.sample is not None:
            S, Su = base.sample
            sample = (S, Su[:, :n_w])
        model = DescriptorModel(base.E, A, Bw, Fw, base.Bq[:, :0], outs, n_w, 0, N, base.state_dims,
                                sample, base.points, base.extras)
        self._models[key] = model
        return model


def build_error_system(sys: PIESystem, L) -> ErrorSystem:
    """Error system for gain ``L`` (``None`` or ``0`` means no output injection)."""
    nom = sys.nominal()
    m, p = nom.state_dims
    n_y = nom.C2.dims_out[0]
    if L is None or (np.isscalar(L) and L == 0):
        L = FourPI.zero((m, p), (n_y, 0), nom.T.domain)
    if isinstance(L, FourPI):
        if L.dims_out != (m, p) or L.dims_in != (n_y, 0):
            raise ValueError(f"gain signature {L} does not match state {(m, p)} and {n_y} outputs")
        return ErrorSystem(nom, L, nom.A + compose(L, nom.C2), nom.B1 + compose(L, nom.D21))
    if isinstance(L, GainOperator):
        if L.dims != (m, p) or L.n_y != n_y:
            raise ValueError("gain dimensions do not match the system")
        return ErrorSystem(nom, L)
    raise TypeError("gain must be a FourPI or a GainOperator")


@dataclass
class ErrorTrajectory:
    times: np.ndarray
    z: np.ndarray  # (nt, n_z)
    coeffs: np.ndarray
    fields: np.ndarray | None  # primal error samples (nt, p, npts)
    points: np.ndarray | None


def simulate_error(err: ErrorSystem, cfg: SimConfig, w=None, e0=None) -> ErrorTrajectory:
    """Trapezoidal run of the error system from initial fundamental error ``e0``."""
    points = np.linspace(0.0, 1.0, cfg.points)
    model = err.descriptor(cfg.N, points)
    wb = as_bank(w, model.n_w)
    a0 = initial_coefficients(err.sys, cfg.N, e0)
    times, states, _, _ = integrate_descriptor(model, cfg, lambda t: np.atleast_1d(wb(t)), a0)
    us = np.array([np.atleast_1d(wb(t)) for t in times]).reshape(len(times), -1)
    C, Du, _ = model.outputs["z"]
    z = states @ C.T + us @ Du.T
    fields = None
    if model.sample is not None:
        S, Su = model.sample
        p = model.state_dims[1]
        fields = (states @ S.T + us @ Su.T).reshape(len(times), p, len(points))
    return ErrorTrajectory(times, z, states, fields, points)


def l2_norm(times, x) -> float:
    """Trapezoidal ``L2(0, T)`` norm of a (possibly vector) trace."""
    x = np.asarray(x, dtype=float).reshape(len(times), -1)
    return float(np.sqrt(np.trapezoid(np.sum(x ** 2, axis=1), times)))


def paper_disturbance() -> DampedSinusoid:
    """``w(t) = 10 exp(-0.1 t) sin(t)``."""
    return DampedSinusoid(10.0, 0.1, 1.0)


@dataclass
class GainReport:
    ratios: list
    peaks: list
    skipped: list
    max_ratio: float
    descriptions: list

    def as_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "ratios": self.ratios, "peaks": self.peaks,
                "skipped": self.skipped, "signals": self.descriptions}


def _gain_point(args):
    err, cfg, sig = args
    tr = simulate_error(err, cfg, w=sig)
    wv = np.asarray(sig(tr.times), dtype=float)
    return l2_norm(tr.times, tr.z), l2_norm(tr.times, wv), float(np.max(np.abs(tr.z), initial=0.0))


def verify_gain(err: ErrorSystem, family, cfg: SimConfig, include_paper_signal: bool = True,
                workers: int = 1) -> GainReport:
    """Empirical ``|z_e|_2 / |w|_2`` over a disturbance family, zero initial error."""
    sigs = list(family)
    if include_paper_signal:
        sigs = [paper_disturbance()] + sigs
    jobs = [(err, cfg, s) for s in sigs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_gain_point, jobs))
    else:
        res = [_gain_point(j) for j in jobs]
    ratios, peaks, skipped = [], [], []
    for k, (nz, nw, pk) in enumerate(res):
        if nw == 0.0:
            skipped.append(k)
            continue
        ratios.append(nz / nw)
        peaks.append(pk)
    return GainReport(ratios, peaks, skipped, max(ratios) if ratios else 0.0,
                      [s.describe() for s in sigs])


def default_family(n: int = 20, seed: int = 0) -> list:
    return band_limited_family(n, seed=seed)


@dataclass
class ICSweep:
    offsets: list
    peaks_ic: list  # peak |z_e| of the pure initial-condition response per offset
    peaks_total: list
    superposition_residual: float
    field_superposition_residual: float

    def ratio(self, a: float, b: float) -> float:
        return self.peaks_ic[self.offsets.index(a)] / self.peaks_ic[self.offsets.index(b)]

    def as_dict(self) -> dict:
        return {"offsets": self.offsets, "peaks_ic": self.peaks_ic, "peaks_total": self.peaks_total,
                "superposition_residual": self.superposition_residual,
                "field_superposition_residual": self.field_superposition_residual}


def ic_sweep(err: ErrorSystem, cfg: SimConfig, e0, w=None, offsets=(0.05, 0.10, 1.0)) -> ICSweep:
    """Error responses to scaled initial offsets ``alpha e0`` under a fixed ``w``.

    Checks ``e(alpha e0, w) = e(0, w) + alpha e(e0, 0)`` on outputs and fields.
    """
    base = simulate_error(err, cfg, w=w)
    unit = simulate_error(err, cfg, e0=e0)
    a_unit = unit.coeffs[0]
    res_z = res_f = 0.0
    peaks_ic, peaks_tot = [], []
    for a in offsets:
        full = simulate_error(err, cfg, w=w, e0=a * a_unit)
        pure = simulate_error(err, cfg, e0=a * a_unit)
        peaks_ic.append(float(np.max(np.abs(pure.z))))
        peaks_tot.append(float(np.max(np.abs(full.z))))
        pred = base.z + a * unit.z
        res_z = max(res_z, float(np.max(np.abs(full.z - pred)) / max(1.0, np.max(np.abs(full.z)))))
        if full.fields is not None:
            pf = base.fields + a * unit.fields
            res_f = max(res_f, float(np.max(np.abs(full.fields - pf)) / max(1.0, np.max(np.abs(full.fields)))))
    return ICSweep(list(offsets), peaks_ic, peaks_tot, res_z, res_f)


@dataclass
class CoSimulation:
    times: np.ndarray
    z_true: np.ndarray
    z_hat: np.ndarray
    fields_true: np.ndarray | None
    fields_hat: np.ndarray | None
    points: np.ndarray | None

    @property
    def z_error(self) -> np.ndarray:
        return self.z_true - self.z_hat

    @property
    def field_error(self):
        if self.fields_true is None:
            return None
        return self.fields_true - self.fields_hat


def estimator_model(sys: PIESystem, gain: GainOperator | FourPI, N: int, points=None) -> DescriptorModel:
    """Estimator driven by ``u = col(y, d)``; shares the plant's Galerkin basis."""
    nom = sys.nominal()
    base = build_galerkin(nom, N, points)
    G = gain.matrix(N) if isinstance(gain, GainOperator) else discretize_galerkin(gain, N)
    MC2 = discretize_galerkin(nom.C2, N)
    n_w, n_d, n_y = base.n_w, base.n_d, nom.C2.dims_out[0]
    A = base.A + G @ MC2
    B = np.hstack([-G, base.B[:, n_w:] + G @ nom.D22.P])
    F = np.hstack([np.zeros((base.size, n_y)), base.F[:, n_w:]])
    C, Du, Dq = base.outputs["z"]
    outs = {"z": (C, np.hstack([np.zeros((C.shape[0], n_y)), Du[:, n_w:]]), Dq[:, :0])}
    sample = None
    if base.sample is not None:
        S, Su = base.sample
        sample = (S, np.hstack([np.zeros((S.shape[0], n_y)), Su[:, n_w:]]))
    return DescriptorModel(base.E, A, B, F, base.Bq[:, :0], outs, n_y, n_d, N, base.state_dims, sample,
                           base.points, base.extras)


def cosimulate(sys: PIESystem, gain, cfg: SimConfig, w=None, d=None, v0=None, v0_hat=None) -> CoSimulation:
    """True plant (nominal) and estimator side by side on one time grid."""
    nom = sys.nominal()
    points = np.linspace(0.0, 1.0, cfg.points)
    plant = build_galerkin(nom, cfg.N, points)
    wb, db = as_bank(w, plant.n_w), as_bank(d, plant.n_d)

    def u_plant(t):
        return np.concatenate([np.atleast_1d(wb(t)), np.atleast_1d(db(t))])

    a0 = initial_coefficients(nom, cfg.N, v0)
    times, xs, _, _ = integrate_descriptor(plant, cfg, u_plant, a0)
    us = np.array([u_plant(t) for t in times]).reshape(len(times), -1)
    Cy, Duy, _ = plant.outputs["y"]
    ys = xs @ Cy.T + us @ Duy.T
    est = estimator_model(nom, gain, cfg.N, points)
    idx = {round(t / cfg.dt): k for k, t in enumerate(times)}

    def u_est(t):
        k = idx.get(round(t / cfg.dt))
        y = ys[k] if k is not None else np.array([np.interp(t, times, ys[:, j]) for j in range(ys.shape[1])])
        return np.concatenate([y, np.atleast_1d(db(t))])

    b0 = initial_coefficients(nom, cfg.N, v0_hat)
    _, xh, _, _ = integrate_descriptor(est, cfg, u_est, b0)
    ue = np.array([u_est(t) for t in times]).reshape(len(times), -1)
    Cz, Duz, _ = plant.outputs["z"]
    z_true = xs @ Cz.T + us @ Duz.T
    Ce, Due, _ = est.outputs["z"]
    z_hat = xh @ Ce.T + ue @ Due.T
    ft = fh = None
    if plant.sample is not None:
        S, Su = plant.sample
        p = plant.state_dims[1]
        ft = (xs @ S.T + us @ Su.T).reshape(len(times), p, len(points))
        S2, Su2 = est.sample
        fh = (xh @ S2.T + ue @ Su2.T).reshape(len(times), p, len(points))
    return CoSimulation(times, z_true, z_hat, ft, fh, points)
