"""One-call pipeline for the fixation instance: graph, PDE, PIE and initial state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .evaporation import AntoineEvaporation
from .graph import (CoupledPDE, FixationGraph, FixationParams, assemble_pde, build_fixation_default,
                    fixation_initial_profiles, nominal_inputs, normalize_domains)
from .pde2pie import PIESystem, convert_to_pie, fundamental_from_profiles
from .simulate import SimConfig, Trajectory, simulate_pie


@dataclass
class FixationModel:
    params: FixationParams
    graph: FixationGraph
    pde: CoupledPDE
    sys: PIESystem
    profiles: list  # ascending polynomial coefficients per channel, normalized coordinate

    @property
    def d_nominal(self) -> np.ndarray:
        return nominal_inputs(self.graph)

    def v0(self):
        return fundamental_from_profiles(self.profiles)

    def x0(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([npoly.polyval(s, c) for c in self.profiles], axis=-1)

    def evaporation(self):
        return AntoineEvaporation() if self.params.evaporation else None


def fixation_model(params: FixationParams | None = None, graph: FixationGraph | None = None) -> FixationModel:
    params = params or FixationParams()
    g = graph if graph is not None else build_fixation_default(params)
    pde = assemble_pde(normalize_domains(g))
    sys = convert_to_pie(pde)
    prof = fixation_initial_profiles(g, params)
    profiles = [prof.get((nid, st), [0.0]) for nid, st, _ in pde.channels]
    return FixationModel(params, g, pde, sys, profiles)


def simulate_fixation(model: FixationModel, cfg: SimConfig, w=None, d=None, evap="default") -> Trajectory:
    """PGP run from the boundary-consistent initial state under nominal ``d``."""
    if isinstance(evap, str) and evap == "default":
        evap = model.evaporation()
    d = model.d_nominal if d is None else d
    return simulate_pie(model.sys, cfg, w=w, d=d, v0=model.v0(), evap=evap)
