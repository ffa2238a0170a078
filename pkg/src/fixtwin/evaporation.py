"""Pluggable evaporation closure ``q = Delta(p)``.

The shipped model is a generic stand-in: a Hertz-Knudsen style mass flux
driven by the excess of the Antoine saturation pressure over an ambient
partial pressure, and the matching latent-heat sink.  Any object with
``n_p``, ``n_q`` and ``__call__(p) -> q`` can replace it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

T_CLAMP = (-50.0, 250.0)


class EvapModel(Protocol):
    n_p: int
    n_q: int

    def __call__(self, p: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class EvaporationParams:
    a: float = 5e-7  # flux per mmHg of driving pressure
    p_amb: float = 150.0  # mmHg
    A: float = 8.14019  # Antoine constants for water, mmHg and deg C
    B: float = 1810.94
    C: float = 244.485
    L0: float = 2257.0  # latent heat at T_ref
    L1: float = 2.4  # decrease of latent heat per kelvin
    T_ref: float = 100.0


def saturation_pressure(T, params: EvaporationParams = EvaporationParams()):
    """Antoine equation, ``log10 p_sat = A - B / (C + T)`` (mmHg)."""
    T = np.clip(np.asarray(T, dtype=float), *T_CLAMP)
    return 10.0 ** (params.A - params.B / (params.C + T))


def latent_heat(T, params: EvaporationParams = EvaporationParams()):
    T = np.clip(np.asarray(T, dtype=float), *T_CLAMP)
    return params.L0 - params.L1 * (T - params.T_ref)


def default_evaporation(p, params: EvaporationParams = EvaporationParams()) -> np.ndarray:
    """``q = (mass flux, enthalpy)`` for ``p = (temperature, moisture)``."""
    T, m = float(p[0]), float(p[1])
    if m <= 0.0:
        return np.zeros(2)
    drive = saturation_pressure(T, params) - params.p_amb
    if drive <= 0.0:
        return np.zeros(2)
    flux = params.a * float(drive)
    return np.array([flux, -float(latent_heat(T, params)) * flux])


class AntoineEvaporation:
    """Callable wrapper of :func:`default_evaporation`."""

    n_p = 2
    n_q = 2

    def __init__(self, params: EvaporationParams | None = None):
        self.params = params or EvaporationParams()

    def __call__(self, p):
        return default_evaporation(p, self.params)

    def threshold_temperature(self) -> float:
        """Temperature where the saturation pressure reaches the ambient value."""
        pr = self.params
        return pr.B / (pr.A - np.log10(pr.p_amb)) - pr.C

    def lipschitz_bound(self, T_max: float = 200.0) -> float:
        """Bound on the flux slope in temperature over ``[T_clamp_lo, T_max]``."""
        pr = self.params
        T = np.linspace(T_CLAMP[0], T_max, 2001)
        ps = saturation_pressure(T, pr)
        slope = ps * np.log(10.0) * pr.B / (pr.C + T) ** 2
        return float(pr.a * slope.max())
