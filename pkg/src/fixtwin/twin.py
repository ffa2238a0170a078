"""Build graph, PDE, PIE, signals and initial state from a :class:`TwinConfig`."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .benchmarks import with_mean_output
from .config import NodeCfg, SignalCfg, TermCfg, TwinConfig
from .evaporation import AntoineEvaporation, EvaporationParams
from .expr import ExpressionError, Namespace
from .graph import (BoundarySpec, BoundaryTerm, CoupledPDE, Edge, FixationGraph, Material, ModelError,
                    Node, OutputSpec, StateSpec, assemble_pde, normalize_domains)
from .pde2pie import PIESystem, convert_to_pie, fundamental_from_profiles
from .sensors import ingest_sensor_csv
from .signals import Constant, DampedSinusoid, Sampled, Signal, SignalBank, Sinusoid
from .simulate import SimConfig, Trajectory, simulate_pie

logger = logging.getLogger(__name__)


def _expr(x) -> str:
    return repr(float(x)) if isinstance(x, (int, float)) else f"({x})"


def namespace(cfg: TwinConfig) -> Namespace:
    """Parameters, node widths ``L_<id>`` and material fields."""
    scalars = dict(cfg.parameters)
    for n in cfg.nodes:
        key = f"L_{n.id}"
        if key in scalars:
            raise ModelError(f"parameter {key} clashes with the width of node {n.id}")
        scalars[key] = f"{_expr(n.domain[1])} - {_expr(n.domain[0])}"
    groups = {name: m.model_dump() for name, m in cfg.materials.items()}
    return Namespace(scalars, groups)


class _Eval:
    def __init__(self, ns: Namespace):
        self.ns = ns

    def __call__(self, value, where: str) -> float:
        try:
            out = self.ns.evaluate(value)
        except ExpressionError as exc:
            raise ModelError(f"{where}: {exc}") from None
        if not np.isfinite(out):
            raise ModelError(f"{where}: value is not finite")
        return out


def _terms(ev: _Eval, terms: list[TermCfg], where: str) -> tuple[BoundaryTerm, ...]:
    return tuple(BoundaryTerm(t.node, t.state, t.end, t.order, ev(t.coeff, f"{where}.terms[{k}]"))
                 for k, t in enumerate(terms))


def _inputs(ev: _Eval, cfg: TwinConfig, inputs, where: str):
    names = {"w": [s.name for s in cfg.signals.w], "d": [s.name for s in cfg.signals.d]}
    out = []
    for k, i in enumerate(inputs):
        if i.name not in names[i.channel]:
            raise ModelError(f"{where}.inputs[{k}]: no {i.channel}-signal named {i.name!r}")
        out.append((i.channel, names[i.channel].index(i.name), ev(i.coeff, f"{where}.inputs[{k}]")))
    return tuple(out)


def _node(ev: _Eval, cfg: TwinConfig, n: NodeCfg, materials: dict) -> Node:
    lo, hi = (ev(x, f"nodes.{n.id}.domain") for x in n.domain)
    mat = materials[n.material]
    states = []
    for st in n.states:
        if st.kind == "temperature":
            diff = mat.thermal_diffusivity
        else:
            if mat.delta is None:
                raise ModelError(f"node {n.id}: moisture state needs delta on material {n.material}")
            diff = mat.delta
        states.append(StateSpec(st.name, st.kind, diff))
    return Node(n.id, (lo, hi), tuple(states), n.material)


def build_graph(cfg: TwinConfig, ns: Namespace | None = None) -> FixationGraph:
    ev = _Eval(ns or namespace(cfg))
    materials = {}
    for name, m in cfg.materials.items():
        where = f"materials.{name}"
        delta = None if m.delta is None else ev(m.delta, f"{where}.delta")
        materials[name] = Material(name, ev(m.kappa, f"{where}.kappa"), ev(m.rho, f"{where}.rho"),
                                   ev(m.chi, f"{where}.chi"), delta)
    nodes = tuple(_node(ev, cfg, n, materials) for n in cfg.nodes)
    bcs, outputs, b_delta = [], {"y": [], "z": [], "p": []}, []
    q_names = list(cfg.signals.q)
    for n in cfg.nodes:
        for bc in n.bcs:
            where = f"nodes.{n.id}.bcs.{bc.label}"
            bcs.append(BoundarySpec(bc.form, (n.id, bc.state), _terms(ev, bc.terms, where),
                                    _inputs(ev, cfg, bc.inputs, where), tuple(bc.symbols), bc.label))
        for tap in n.taps:
            where = f"nodes.{n.id}.taps.{tap.name}"
            outputs[tap.signal].append(OutputSpec(tap.signal, tap.name, _terms(ev, tap.terms, where),
                                                  _inputs(ev, cfg, tap.inputs, where)))
        for k, inj in enumerate(n.injections):
            if inj.q not in q_names:
                raise ModelError(f"nodes.{n.id}.injections[{k}]: no q-channel named {inj.q!r}")
            b_delta.append((n.id, inj.state, q_names.index(inj.q),
                            ev(inj.coeff, f"nodes.{n.id}.injections[{k}]")))
    edges = []
    for e in cfg.edges:
        i, j = e.pair
        h = None if e.h is None else ev(e.h, f"edges.{i}-{j}.h")
        E = tuple(tuple(int(v) for v in row) for row in e.E)
        ET = tuple(zip(*E)) if E else ()
        edges += [Edge(i, j, E, e.contact, h), Edge(j, i, ET, e.contact, h)]
    return FixationGraph(
        nodes=nodes, edges=tuple(edges), bcs=tuple(bcs),
        outputs=tuple(outputs["y"] + outputs["z"] + outputs["p"]), materials=materials,
        w_names=tuple(s.name for s in cfg.signals.w), d_names=tuple(s.name for s in cfg.signals.d),
        q_names=tuple(q_names), b_delta=tuple(b_delta),
    )


def build_signal(cfg: TwinConfig, s: SignalCfg, ev: _Eval) -> Signal:
    where = f"signals.{s.name}"
    if s.kind == "constant":
        return Constant(ev(s.value, f"{where}.value"))
    if s.kind == "sinusoid":
        return Sinusoid(ev(s.amplitude, where), ev(s.frequency, where), ev(s.phase, where), ev(s.offset, where))
    if s.kind == "damped_sinusoid":
        return DampedSinusoid(ev(s.a, where), ev(s.b, where), ev(s.c, where))
    series = ingest_sensor_csv(cfg.resolve(s.file))
    return Sampled(series.times, series.values)


@dataclass
class TwinModel:
    config: TwinConfig
    graph: FixationGraph
    pde: CoupledPDE
    sys: PIESystem
    profiles: list  # ascending coefficients per channel, normalized coordinate
    w: SignalBank
    d: SignalBank
    evap: object | None

    def sim_config(self, **overrides) -> SimConfig:
        s = self.config.simulation
        kw = dict(t_final=s.t_final, dt=s.dt, N=s.N, k_max=s.k_max, tol=s.tol, max_halvings=s.max_halvings,
                  points=s.points, store_every=s.store_every)
        kw.update(overrides)
        return SimConfig(**kw)

    def v0(self):
        return fundamental_from_profiles(self.profiles)

    @property
    def d_nominal(self) -> np.ndarray:
        return np.atleast_1d(self.d(0.0)) if len(self.d) else np.zeros(0)

    def simulate(self, cfg: SimConfig | None = None) -> Trajectory:
        return simulate_pie(self.sys, cfg or self.sim_config(), w=self.w, d=self.d, v0=self.v0(),
                            evap=self.evap)

    def output_kinds(self) -> dict:
        """``name -> state kind`` for taps reading a single kind, else ``mixed``."""
        kinds = {}
        for o in self.graph.outputs:
            ks = {self.graph.node(t.node).state(t.state).kind for t in o.terms}
            kinds[o.name] = ks.pop() if len(ks) == 1 else "mixed"
        return kinds

    def select_output(self, tr: Trajectory, signal: str, name: str | None = None) -> np.ndarray:
        vals = tr.outputs[signal]
        if name is None:
            return vals[:, 0] if vals.shape[1] == 1 else vals
        names = list(tr.names.get(signal, ()))
        if name not in names:
            raise ModelError(f"no {signal}-output named {name!r}")
        return vals[:, names.index(name)]

    def synthesis_system(self) -> PIESystem:
        """PIE used by synthesis and estimation (regulated output per ``[synthesis]``)."""
        sys = self.sys.nominal()
        if self.config.synthesis.regulated == "mean":
            sys = with_mean_output(sys)
        if sys.dims()["n_z"] == 0:
            raise ModelError("estimation needs a regulated output (a z-tap or regulated = 'mean')")
        if sys.dims()["n_y"] == 0:
            raise ModelError("estimation needs at least one measured output (a y-tap)")
        return sys


def build_pde(cfg: TwinConfig) -> tuple[FixationGraph, CoupledPDE, Namespace]:
    ns = namespace(cfg)
    g = build_graph(cfg, ns)
    return g, assemble_pde(normalize_domains(g)), ns


def build_model(cfg: TwinConfig) -> TwinModel:
    g, pde, ns = build_pde(cfg)
    sys = convert_to_pie(pde)
    ev = _Eval(ns)
    init = {(n.id, st.name): [ev(c, f"nodes.{n.id}.states.{st.name}.initial") for c in st.initial]
            for n in cfg.nodes for st in n.states}
    profiles = [init[(nid, st)] or [0.0] for nid, st, _ in pde.channels]
    w = SignalBank([build_signal(cfg, s, ev) for s in cfg.signals.w])
    d = SignalBank([build_signal(cfg, s, ev) for s in cfg.signals.d])
    evap = None
    ec = cfg.simulation.evaporation
    if ec.enabled:
        if pde.dims()["n_q"] != 2 or pde.dims()["n_p"] != 2:
            raise ModelError("evaporation needs two p-taps (temperature, moisture) and two q-channels")
        evap = AntoineEvaporation(EvaporationParams(**ec.model_dump(exclude={"enabled"})))
    return TwinModel(cfg, g, pde, sys, profiles, w, d, evap)
