"""Graph description of the fixation unit and its flattening to one coupled PDE.

Nodes are 1-D diffusion domains holding one or more second-order states
(temperature, moisture).  Boundary and interface conditions are stored as
linear rows over boundary values and first derivatives of the states, plus
input channels (unknown disturbance ``w``, known inputs ``d``).  Derivative
coefficients are expressed in the node's own coordinate, so normalizing a node
to ``[0, 1]`` divides them by the node width.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("temperature", "moisture")
ENDS = ("lower", "upper")

DEFAULT_SYMBOLS = (
    "kappa_1", "kappa_p", "kappa_4", "kappa_b", "kappa_6", "delta_1", "delta_p",
    "h_t", "h_pb", "h_b", "g", "T_hai", "T_a", "m_a",
)


class ModelError(ValueError):
    """Invalid model description."""


@dataclass(frozen=True)
class Material:
    name: str
    kappa: float
    rho: float
    chi: float
    delta: float | None = None

    def __post_init__(self):
        for key in ("kappa", "rho", "chi"):
            if not getattr(self, key) > 0:
                raise ModelError(f"material {self.name}: {key} must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ModelError(f"material {self.name}: delta must be positive")

    @property
    def thermal_diffusivity(self) -> float:
        return self.kappa / (self.rho * self.chi)


@dataclass(frozen=True)
class StateSpec:
    name: str
    kind: str
    diffusivity: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown state kind {self.kind!r}")


@dataclass(frozen=True)
class Node:
    """Spatial node.  ``scale``/``offset`` map the stored coordinate to meters."""

    id: str
    domain: tuple[float, float]
    states: tuple[StateSpec, ...]
    material: str = ""
    scale: float = 1.0
    offset: float = 0.0

    def state(self, name: str) -> StateSpec:
        for st in self.states:
            if st.name == name:
                return st
        raise KeyError(f"node {self.id} has no state {name!r}")

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def physical(self, s):
        """Physical coordinate (meters) of stored coordinate ``s``."""
        return self.scale * np.asarray(s, dtype=float) + self.offset


@dataclass(frozen=True)
class BoundaryTerm:
    node: str
    state: str
    end: str  # lower | upper
    order: int  # 0 value, 1 first derivative
    coeff: float

    def __post_init__(self):
        if self.end not in ENDS or self.order not in (0, 1):
            raise ModelError(f"bad boundary term {self}")


@dataclass(frozen=True)
class BoundarySpec:
    """Linear row ``sum terms + sum inputs = 0``.

    ``owner`` is the ``(node, state)`` the condition is counted against, and
    ``symbols`` names the physical parameters that appear in it.
    """

    form: str
    owner: tuple[str, str]
    terms: tuple[BoundaryTerm, ...]
    inputs: tuple[tuple[str, int, float], ...] = ()
    symbols: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        forms = ("dirichlet", "neumann", "robin", "interface_flux", "interface_continuity",
                 "imperfect_contact")
        if self.form not in forms:
            raise ModelError(f"unknown boundary form {self.form!r}")
        for ch, _, _ in self.inputs:
            if ch not in ("w", "d"):
                raise ModelError(f"boundary input channel must be 'w' or 'd', got {ch!r}")


@dataclass(frozen=True)
class OutputSpec:
    """Output channel as a linear map of boundary values plus inputs."""

    signal: str  # y | z | p
    name: str
    terms: tuple[BoundaryTerm, ...]
    inputs: tuple[tuple[str, int, float], ...] = ()


@dataclass(frozen=True)
class Edge:
    i: str
    j: str
    E: tuple[tuple[int, ...], ...]
    contact: str = "perfect"
    h: float | None = None

    def __post_init__(self):
        if self.contact not in ("perfect", "imperfect"):
            raise ModelError(f"unknown contact type {self.contact!r}")
        if self.contact == "imperfect" and not (self.h is not None and np.isfinite(self.h) and self.h > 0):
            raise ModelError(f"imperfect contact on edge ({self.i},{self.j}) needs finite h > 0")


@dataclass(frozen=True)
class FixationGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    bcs: tuple[BoundarySpec, ...]
    outputs: tuple[OutputSpec, ...]
    materials: dict = field(default_factory=dict)
    w_names: tuple[str, ...] = ()
    d_names: tuple[str, ...] = ()
    q_names: tuple[str, ...] = ()
    b_delta: tuple[tuple[str, str, int, float], ...] = ()
    required_symbols: tuple[str, ...] = ()
    normalized: bool = False
    params: object = None

    def node(self, nid: str) -> Node:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(f"no node {nid!r}")

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def adjacency(self) -> np.ndarray:
        ids = self.node_ids
        A = np.zeros((len(ids), len(ids)), dtype=int)
        for e in self.edges:
            if e.i in ids and e.j in ids:
                A[ids.index(e.i), ids.index(e.j)] = 1
        return A

    def state_list(self) -> list[tuple[str, str]]:
        """All ``(node, state)`` pairs in node-major order."""
        return [(n.id, st.name) for n in self.nodes for st in n.states]

    def interconnection_matrix(self) -> np.ndarray:
        """State-level matrix assembled from the edge blocks (node-major order)."""
        idx = {ns: k for k, ns in enumerate(self.state_list())}
        E = np.zeros((len(idx), len(idx)), dtype=int)
        for e in self.edges:
            ni, nj = self.node(e.i), self.node(e.j)
            for a, sa in enumerate(ni.states):
                for b, sb in enumerate(nj.states):
                    if e.E[a][b]:
                        E[idx[(e.i, sa.name)], idx[(e.j, sb.name)]] = 1
        return E

    def signal_dims(self) -> dict[str, int]:
        outs = {"y": 0, "z": 0, "p": 0}
        for o in self.outputs:
            outs[o.signal] += 1
        n_x = sum(len(n.states) for n in self.nodes)
        return {"n_x": n_x, "n_w": len(self.w_names), "n_d": len(self.d_names),
                "n_q": len(self.q_names), "n_y": outs["y"], "n_z": outs["z"], "n_p": outs["p"]}

    def count_bcs(self) -> dict[str, int]:
        counts = {k: 0 for k in KINDS}
        for bc in self.bcs:
            kind = self.node(bc.owner[0]).state(bc.owner[1]).kind
            counts[kind] += 1
        return counts

    def without_bc(self, label: str) -> "FixationGraph":
        return replace(self, bcs=tuple(b for b in self.bcs if b.label != label))


# ---------------------------------------------------------------------------
# default instance


@dataclass(frozen=True)
class FixationParams:
    """Synthetic stand-in parameter set (SI units, temperatures in deg C).

    Real machine values are not public; the defaults are plausible
    desk-scale numbers: 100 um paper layers, 1 mm air layers and a 0.5 mm
    steel conveyor.
    """

    L_air_top: float = 1e-3
    L_paper_wet: float = 1e-4
    L_paper_dry: float = 1e-4
    L_air_gap: float = 1e-3
    L_conveyor: float = 5e-4
    L_air_below: float = 1e-3
    kappa_1: float = 0.026
    rho_1: float = 1.1
    chi_1: float = 1007.0
    delta_1: float = 2.5e-5
    kappa_p: float = 0.12
    rho_p: float = 800.0
    chi_p: float = 1300.0
    delta_p: float = 1e-9
    kappa_4: float = 0.026
    rho_4: float = 1.1
    chi_4: float = 1007.0
    kappa_b: float = 16.0
    rho_b: float = 7900.0
    chi_b: float = 500.0
    kappa_6: float = 0.026
    rho_6: float = 1.1
    chi_6: float = 1007.0
    h_t: float = 150.0
    h_pb: float = 500.0
    h_b: float = 10.0
    g: float = 2e-4
    T_hai: float = 140.0
    T_a: float = 25.0
    m_a: float = 10.0
    T_paper: float = 25.0
    omega: float = 10.0
    T_b: float = 60.0
    evaporation: bool = True

    def with_(self, **kw) -> "FixationParams":
        return replace(self, **kw)


def _T(node, end, order, c):
    return BoundaryTerm(node, "T", end, order, float(c))


def _M(node, end, order, c):
    return BoundaryTerm(node, "m", end, order, float(c))


def _robin(h: float) -> str:
    # a zero transfer coefficient leaves a pure flux condition
    return "robin" if h > 0 else "neumann"


def build_fixation_default(params: FixationParams | None = None) -> FixationGraph:
    """Six-node fixation graph: air / wet paper / dry paper / air gap / conveyor / air."""
    p = params or FixationParams()
    mats = {
        "air_top": Material("air_top", p.kappa_1, p.rho_1, p.chi_1, p.delta_1),
        "paper": Material("paper", p.kappa_p, p.rho_p, p.chi_p, p.delta_p),
        "air_gap": Material("air_gap", p.kappa_4, p.rho_4, p.chi_4),
        "conveyor": Material("conveyor", p.kappa_b, p.rho_b, p.chi_b),
        "air_below": Material("air_below", p.kappa_6, p.rho_6, p.chi_6),
    }
    for x in (p.h_t, p.h_pb, p.h_b, p.g):
        if not x >= 0:
            raise ModelError("transfer coefficients must be nonnegative")
    widths = [p.L_air_top, p.L_paper_wet, p.L_paper_dry, p.L_air_gap, p.L_conveyor, p.L_air_below]
    if min(widths) <= 0:
        raise ModelError("layer thicknesses must be positive")
    edges_pos = np.concatenate([[0.0], np.cumsum(widths)])
    layout = [
        ("N1", "air_top", True), ("N2", "paper", True), ("N3", "paper", False),
        ("N4", "air_gap", False), ("N5", "conveyor", False), ("N6", "air_below", False),
    ]
    nodes = []
    for k, (nid, mname, wet) in enumerate(layout):
        m = mats[mname]
        states = [StateSpec("T", "temperature", m.thermal_diffusivity)]
        if wet:
            states.append(StateSpec("m", "moisture", m.delta))
        nodes.append(Node(nid, (float(edges_pos[k]), float(edges_pos[k + 1])), tuple(states), mname))

    k1, kp, k4, kb, k6 = p.kappa_1, p.kappa_p, p.kappa_4, p.kappa_b, p.kappa_6
    bcs = (
        BoundarySpec(_robin(p.h_t), ("N1", "T"),
                     (_T("N1", "lower", 1, -k1), _T("N1", "lower", 0, p.h_t)),
                     (("d", 0, -p.h_t), ("w", 0, -p.h_t)), ("kappa_1", "h_t", "T_hai"), "T1_lower_robin"),
        BoundarySpec("interface_flux", ("N1", "T"),
                     (_T("N1", "upper", 1, -k1), _T("N2", "lower", 1, kp)), (), ("kappa_1", "kappa_p"), "T12_flux"),
        BoundarySpec("interface_continuity", ("N2", "T"),
                     (_T("N1", "upper", 0, -1), _T("N2", "lower", 0, 1)), (), (), "T12_continuity"),
        BoundarySpec("interface_flux", ("N2", "T"),
                     (_T("N2", "upper", 1, -kp), _T("N3", "lower", 1, kp)), (), ("kappa_p",), "T23_flux"),
        BoundarySpec("interface_continuity", ("N3", "T"),
                     (_T("N2", "upper", 0, -1), _T("N3", "lower", 0, 1)), (), (), "T23_continuity"),
        BoundarySpec("interface_flux", ("N3", "T"),
                     (_T("N3", "upper", 1, -kp), _T("N4", "lower", 1, k4)), (), ("kappa_p", "kappa_4"), "T34_flux"),
        BoundarySpec("interface_continuity", ("N4", "T"),
                     (_T("N3", "upper", 0, -1), _T("N4", "lower", 0, 1)), (), (), "T34_continuity"),
        # imperfect contact: heat leaves the warmer side through the film resistance 1/h_pb
        BoundarySpec("imperfect_contact", ("N4", "T"),
                     (_T("N4", "upper", 1, k4), _T("N4", "upper", 0, p.h_pb), _T("N5", "lower", 0, -p.h_pb)),
                     (), ("kappa_4", "h_pb"), "T45_contact_upper"),
        BoundarySpec("imperfect_contact", ("N5", "T"),
                     (_T("N5", "lower", 1, -kb), _T("N5", "lower", 0, p.h_pb), _T("N4", "upper", 0, -p.h_pb)),
                     (), ("kappa_b", "h_pb"), "T45_contact_lower"),
        BoundarySpec("interface_flux", ("N5", "T"),
                     (_T("N5", "upper", 1, -kb), _T("N6", "lower", 1, k6)), (), ("kappa_b", "kappa_6"), "T56_flux"),
        BoundarySpec("interface_continuity", ("N6", "T"),
                     (_T("N5", "upper", 0, -1), _T("N6", "lower", 0, 1)), (), (), "T56_continuity"),
        BoundarySpec(_robin(p.h_b), ("N6", "T"),
                     (_T("N6", "upper", 1, k6), _T("N6", "upper", 0, p.h_b)),
                     (("d", 2, -p.h_b),), ("kappa_6", "h_b", "T_a"), "T6_upper_robin"),
        BoundarySpec(_robin(p.g), ("N1", "m"),
                     (_M("N1", "lower", 1, -p.delta_1), _M("N1", "lower", 0, p.g)),
                     (("d", 1, -p.g),), ("delta_1", "g", "m_a"), "m1_lower_robin"),
        BoundarySpec("interface_flux", ("N1", "m"),
                     (_M("N1", "upper", 1, -p.delta_1), _M("N2", "lower", 1, p.delta_p)), (),
                     ("delta_1", "delta_p"), "m12_flux"),
        BoundarySpec("interface_continuity", ("N2", "m"),
                     (_M("N1", "upper", 0, -1), _M("N2", "lower", 0, 1)), (), (), "m12_continuity"),
        BoundarySpec("neumann", ("N2", "m"), (_M("N2", "upper", 1, 1.0),), (), (), "m2_upper_neumann"),
    )
    two = ((1, 0), (0, 1))
    t_two = ((1, 0),)  # one-state node on the left, two-state on the right
    two_t = ((1,), (0,))
    one = ((1,),)
    edges = (
        Edge("N1", "N2", two), Edge("N2", "N1", two),
        Edge("N2", "N3", two_t), Edge("N3", "N2", t_two),
        Edge("N3", "N4", one), Edge("N4", "N3", one),
        Edge("N4", "N5", one, "imperfect", p.h_pb), Edge("N5", "N4", one, "imperfect", p.h_pb),
        Edge("N5", "N6", one), Edge("N6", "N5", one),
    )
    outputs = [
        OutputSpec("y", "y1", (_T("N1", "lower", 0, 1.0),)),
        OutputSpec("y", "y6", (_T("N6", "upper", 0, 1.0),)),
        OutputSpec("z", "z3", (_T("N3", "upper", 0, 1.0),)),
    ]
    q_names: tuple[str, ...] = ()
    b_delta: tuple = ()
    if p.evaporation:
        outputs += [
            OutputSpec("p", "T1_upper", (_T("N1", "upper", 0, 1.0),)),
            OutputSpec("p", "m1_upper", (_M("N1", "upper", 0, 1.0),)),
        ]
        q_names = ("mass_flux", "enthalpy")
        b_delta = (
            ("N1", "T", 1, 1.0 / (p.rho_1 * p.chi_1 * p.L_air_top)),
            ("N1", "m", 0, -1.0 / p.L_air_top),
        )
    return FixationGraph(
        nodes=tuple(nodes), edges=edges, bcs=bcs, outputs=tuple(outputs), materials=mats,
        w_names=("w1",), d_names=("T_hai", "m_a", "T_a"), q_names=q_names, b_delta=b_delta,
        required_symbols=DEFAULT_SYMBOLS, params=p,
    )


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations), "notes": list(self.notes)}


def _param_symbols(g: FixationGraph) -> set[str]:
    """Symbols carried by material fields (kappa/delta) of the default naming."""
    found = set()
    alias = {"air_top": "1", "paper": "p", "air_gap": "4", "conveyor": "b", "air_below": "6"}
    for name, m in g.materials.items():
        tag = alias.get(name, name)
        found.add(f"kappa_{tag}")
        if m.delta is not None:
            found.add(f"delta_{tag}")
    return found


def validate(g: FixationGraph) -> ValidationReport:
    """Structural checks; never raises, returns the list of violations."""
    rep = ValidationReport()
    ids = g.node_ids
    if len(set(ids)) != len(ids):
        rep.violations.append("duplicate node ids")
    states = {}
    for n in g.nodes:
        if not n.width > 0:
            rep.violations.append(f"node {n.id} has an empty domain")
        for st in n.states:
            states[(n.id, st.name)] = st
            if not st.diffusivity > 0:
                rep.violations.append(f"state {n.id}:{st.kind} has nonpositive diffusivity")
    counts = {k: 0 for k in states}
    for bc in g.bcs:
        if bc.owner not in states:
            rep.violations.append(f"condition {bc.label or bc.form} owned by unknown state {bc.owner}")
            continue
        counts[bc.owner] += 1
        for t in bc.terms:
            if (t.node, t.state) not in states:
                rep.violations.append(f"condition {bc.label} references unknown state {t.node}:{t.state}")
            if not np.isfinite(t.coeff):
                rep.violations.append(f"condition {bc.label} has a non-finite coefficient")
        for ch, idx, c in bc.inputs:
            names = g.w_names if ch == "w" else g.d_names
            if not 0 <= idx < len(names):
                rep.violations.append(f"condition {bc.label} references missing {ch}-channel {idx}")
            if not np.isfinite(c):
                rep.violations.append(f"condition {bc.label} has a non-finite input coefficient")
        if bc.form == "robin" and not any(t.order == 0 and t.coeff != 0 for t in bc.terms):
            rep.violations.append(f"robin condition {bc.label} lacks a transfer coefficient")
    for (nid, sname), c in counts.items():
        if c != 2:
            rep.violations.append(f"state {nid}:{states[(nid, sname)].kind} has {c} of 2 BCs")

    # edges and adjacency
    A = g.adjacency
    pairs = {(e.i, e.j) for e in g.edges}
    for e in g.edges:
        if e.i not in ids or e.j not in ids:
            rep.violations.append(f"edge ({e.i},{e.j}) has an unknown endpoint")
            continue
        if (e.j, e.i) not in pairs:
            rep.violations.append(f"edge ({e.i},{e.j}) has no reverse edge; adjacency is asymmetric")
        ni, nj = g.node(e.i), g.node(e.j)
        E = np.asarray(e.E)
        if E.shape != (len(ni.states), len(nj.states)):
            rep.violations.append(f"edge ({e.i},{e.j}) block has shape {E.shape}, "
                                  f"expected {(len(ni.states), len(nj.states))}")
            continue
        if not np.all(np.isin(E, (0, 1))):
            rep.violations.append(f"edge ({e.i},{e.j}) block has entries outside {{0,1}}")
        for a, b in zip(*np.nonzero(E)):
            if ni.states[a].kind != nj.states[b].kind:
                rep.violations.append(f"edge ({e.i},{e.j}) couples unlike states")
        rev = [f for f in g.edges if f.i == e.j and f.j == e.i]
        if rev and np.asarray(rev[0].E).shape == E.T.shape and not np.array_equal(np.asarray(rev[0].E), E.T):
            rep.violations.append(f"edge blocks ({e.i},{e.j}) and ({e.j},{e.i}) are not transposes")
        if rev and rev[0].contact != e.contact:
            rep.violations.append(f"edge ({e.i},{e.j}) and its reverse disagree on contact type")
        kinds_i = {s.kind for s in ni.states}
        kinds_j = {s.kind for s in nj.states}
        if kinds_i != kinds_j and ids.index(e.i) < ids.index(e.j):
            extra = sorted(kinds_i ^ kinds_j)
            closures = [bc.label for bc in g.bcs
                        if any(t.node in (e.i, e.j) and g.node(t.node).state(t.state).kind in extra
                               for t in bc.terms if (t.node, t.state) in states)
                        and len({t.node for t in bc.terms}) == 1]
            rep.notes.append(f"edge ({e.i},{e.j}) joins unequal state sets; {', '.join(extra)} "
                             f"closed by {', '.join(closures) or 'nothing'}")
    if not np.array_equal(A, A.T):
        rep.violations.append("adjacency matrix is not symmetric")

    # parameter symbol coverage
    if g.required_symbols:
        used = set(_param_symbols(g))
        for bc in g.bcs:
            used.update(bc.symbols)
        missing = [s for s in g.required_symbols if s not in used]
        if missing:
            rep.violations.append(f"parameters without a boundary/material field: {', '.join(missing)}")

    # LFR injection
    for nid, sname, qi, _ in g.b_delta:
        if (nid, sname) not in states or not 0 <= qi < len(g.q_names):
            rep.violations.append(f"injection entry ({nid},{sname},{qi}) is dangling")
    for o in g.outputs:
        for t in o.terms:
            if (t.node, t.state) not in states:
                rep.violations.append(f"output {o.name} taps unknown state {t.node}:{t.state}")
    return rep


# ---------------------------------------------------------------------------
# normalization and assembly


def normalize_domains(g: FixationGraph) -> FixationGraph:
    """Map every node onto ``[0, 1]`` via ``s_i = m_i s + c_i``.

    Diffusivities are divided by ``m_i**2`` and first-derivative coefficients in
    conditions and outputs by ``m_i``.  The physical map is kept on each node.
    """
    widths = {}
    nodes = []
    for n in g.nodes:
        lo, hi = n.domain
        m = hi - lo
        if not m > 0:
            raise ModelError(f"node {n.id} has a zero-width domain")
        widths[n.id] = m
        states = tuple(replace(st, diffusivity=st.diffusivity / m**2) for st in n.states)
        nodes.append(replace(n, domain=(0.0, 1.0), states=states,
                             scale=n.scale * m, offset=n.offset + n.scale * lo))

    def fix(terms):
        return tuple(replace(t, coeff=t.coeff / widths[t.node]) if t.order == 1 else t for t in terms)

    bcs = tuple(replace(bc, terms=fix(bc.terms)) for bc in g.bcs)
    outs = tuple(replace(o, terms=fix(o.terms)) for o in g.outputs)
    return replace(g, nodes=tuple(nodes), bcs=bcs, outputs=outs, normalized=True)


@dataclass(frozen=True)
class CoupledPDE:
    """Stacked boundary-coupled diffusion system on ``[0, L_c]`` per channel.

    Dynamics ``x_t = diag(D) x_ss + B_delta q``.  Boundary rows read
    ``B xb + B_w w + B_d d = 0`` with ``xb = col(x(0), x(L), x_s(0), x_s(L))``
    (each block has one entry per channel).  Outputs are
    ``C xb + D_w w + D_d d`` for ``y``, ``z`` and ``p``.  The physical
    position of coordinate ``s`` on channel ``c`` is ``scales[c]*s + offsets[c]``.
    """

    channels: tuple[tuple[str, str, str], ...]
    D: np.ndarray
    B: np.ndarray
    B_w: np.ndarray
    B_d: np.ndarray
    B_delta: np.ndarray
    C_y: np.ndarray
    D_yw: np.ndarray
    D_yd: np.ndarray
    C_z: np.ndarray
    D_zw: np.ndarray
    D_zd: np.ndarray
    C_p: np.ndarray
    D_pw: np.ndarray
    D_pd: np.ndarray
    widths: np.ndarray
    scales: np.ndarray
    offsets: np.ndarray
    w_names: tuple[str, ...] = ()
    d_names: tuple[str, ...] = ()
    q_names: tuple[str, ...] = ()
    y_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    p_names: tuple[str, ...] = ()
    bc_labels: tuple[str, ...] = ()

    @property
    def n_x(self) -> int:
        return len(self.D)

    def dims(self) -> dict[str, int]:
        return {"n_x": self.n_x, "n_w": self.B_w.shape[1], "n_d": self.B_d.shape[1],
                "n_q": self.B_delta.shape[1], "n_y": self.C_y.shape[0], "n_z": self.C_z.shape[0],
                "n_p": self.C_p.shape[0]}

    @property
    def normalized(self) -> bool:
        return bool(np.all(self.widths == 1.0))

    def node_ids(self) -> list[str]:
        seen = []
        for nid, _, _ in self.channels:
            if nid not in seen:
                seen.append(nid)
        return seen


def _zeros(r, c):
    return np.zeros((r, c))


def make_pde(D, B, *, B_w=None, B_d=None, B_delta=None, C_y=None, D_yw=None, D_yd=None,
             C_z=None, D_zw=None, D_zd=None, C_p=None, D_pw=None, D_pd=None,
             channels=None, widths=None, scales=None, offsets=None, names=None,
             equilibrate: bool = True) -> CoupledPDE:
    """Programmatic constructor for small problems (missing maps are zero)."""
    D = np.atleast_1d(np.asarray(D, dtype=float))
    n = len(D)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != 4 * n:
        raise ModelError(f"boundary matrix needs {4 * n} columns, got {B.shape[1]}")
    nbc = B.shape[0]

    def mat(x, r, c):
        if x is None:
            return _zeros(r, c)
        return np.asarray(x, dtype=float).reshape(r, c)

    def cols(x, default=0):
        return default if x is None else np.atleast_2d(np.asarray(x)).shape[1]

    n_w = cols(B_w, cols(D_yw, cols(D_zw, cols(D_pw))))
    n_d = cols(B_d, cols(D_yd, cols(D_zd, cols(D_pd))))
    n_q = cols(B_delta)
    n_y = 0 if C_y is None else np.atleast_2d(C_y).shape[0]
    n_z = 0 if C_z is None else np.atleast_2d(C_z).shape[0]
    n_p = 0 if C_p is None else np.atleast_2d(C_p).shape[0]
    B_w, B_d = mat(B_w, nbc, n_w), mat(B_d, nbc, n_d)
    if equilibrate:
        B, B_w, B_d = _equilibrate(B, B_w, B_d)
    names = names or {}
    pde = CoupledPDE(
        channels=tuple(channels or [(f"x{k}", "x", "temperature") for k in range(n)]),
        D=D, B=B, B_w=B_w, B_d=B_d, B_delta=mat(B_delta, n, n_q),
        C_y=mat(C_y, n_y, 4 * n), D_yw=mat(D_yw, n_y, n_w), D_yd=mat(D_yd, n_y, n_d),
        C_z=mat(C_z, n_z, 4 * n), D_zw=mat(D_zw, n_z, n_w), D_zd=mat(D_zd, n_z, n_d),
        C_p=mat(C_p, n_p, 4 * n), D_pw=mat(D_pw, n_p, n_w), D_pd=mat(D_pd, n_p, n_d),
        widths=np.ones(n) if widths is None else np.asarray(widths, dtype=float),
        scales=np.ones(n) if scales is None else np.asarray(scales, dtype=float),
        offsets=np.zeros(n) if offsets is None else np.asarray(offsets, dtype=float),
        w_names=tuple(names.get("w", [f"w{k + 1}" for k in range(n_w)])),
        d_names=tuple(names.get("d", [f"d{k + 1}" for k in range(n_d)])),
        q_names=tuple(names.get("q", [f"q{k + 1}" for k in range(n_q)])),
        y_names=tuple(names.get("y", [f"y{k + 1}" for k in range(n_y)])),
        z_names=tuple(names.get("z", [f"z{k + 1}" for k in range(n_z)])),
        p_names=tuple(names.get("p", [f"p{k + 1}" for k in range(n_p)])),
        bc_labels=tuple(names.get("bc", [f"bc{k + 1}" for k in range(nbc)])),
    )
    return pde


def _equilibrate(B, B_w, B_d):
    """Scale each boundary row so its largest state coefficient is 1."""
    scale = np.max(np.abs(B), axis=1)
    scale[scale == 0] = 1.0
    return B / scale[:, None], B_w / scale[:, None], B_d / scale[:, None]


def channel_order(g: FixationGraph) -> list[tuple[str, str, str]]:
    """Stacking order: all temperatures by node, then all moisture states by node."""
    out = []
    for kind in KINDS:
        for n in g.nodes:
            for st in n.states:
                if st.kind == kind:
                    out.append((n.id, st.name, kind))
    return out


def assemble_pde(g: FixationGraph, require_normalized: bool = True) -> CoupledPDE:
    """Flatten a graph into a :class:`CoupledPDE`.

    With ``require_normalized=False`` the graph may keep physical domains; the
    result is then posed on ``[0, width]`` per channel, which the
    finite-difference oracle accepts.
    """
    rep = validate(g)
    if not rep.ok:
        raise ModelError("; ".join(rep.violations))
    if require_normalized and not g.normalized:
        raise ModelError("assemble_pde expects a normalized graph (call normalize_domains)")
    chans = channel_order(g)
    idx = {(nid, st): k for k, (nid, st, _) in enumerate(chans)}
    n = len(chans)
    D = np.array([g.node(nid).state(st).diffusivity for nid, st, _ in chans])
    widths = np.array([g.node(nid).width for nid, _, _ in chans])

    def col(t: BoundaryTerm) -> int:
        base = {("lower", 0): 0, ("upper", 0): 1, ("lower", 1): 2, ("upper", 1): 3}[(t.end, t.order)]
        return base * n + idx[(t.node, t.state)]

    def rows(specs):
        C = np.zeros((len(specs), 4 * n))
        Dw = np.zeros((len(specs), len(g.w_names)))
        Dd = np.zeros((len(specs), len(g.d_names)))
        for r, spec in enumerate(specs):
            for t in spec.terms:
                C[r, col(t)] += t.coeff
            for ch, k, c in spec.inputs:
                (Dw if ch == "w" else Dd)[r, k] += c
        return C, Dw, Dd

    B, B_w, B_d = rows(g.bcs)
    B, B_w, B_d = _equilibrate(B, B_w, B_d)
    outs = {s: [o for o in g.outputs if o.signal == s] for s in ("y", "z", "p")}
    Cy, Dyw, Dyd = rows(outs["y"])
    Cz, Dzw, Dzd = rows(outs["z"])
    Cp, Dpw, Dpd = rows(outs["p"])
    Bq = np.zeros((n, len(g.q_names)))
    for nid, st, qi, c in g.b_delta:
        Bq[idx[(nid, st)], qi] += c
    pde = CoupledPDE(
        channels=tuple(chans), D=D, B=B, B_w=B_w, B_d=B_d, B_delta=Bq,
        C_y=Cy, D_yw=Dyw, D_yd=Dyd, C_z=Cz, D_zw=Dzw, D_zd=Dzd, C_p=Cp, D_pw=Dpw, D_pd=Dpd,
        widths=widths,
        scales=np.array([g.node(nid).scale for nid, _, _ in chans]),
        offsets=np.array([g.node(nid).physical(g.node(nid).domain[0]) for nid, _, _ in chans]),
        w_names=g.w_names, d_names=g.d_names, q_names=g.q_names,
        y_names=tuple(o.name for o in outs["y"]), z_names=tuple(o.name for o in outs["z"]),
        p_names=tuple(o.name for o in outs["p"]), bc_labels=tuple(b.label for b in g.bcs),
    )
    logger.debug("assembled PDE with %d channels and %d boundary rows", n, B.shape[0])
    return pde


def fixation_initial_profiles(g: FixationGraph, params: FixationParams | None = None) -> dict:
    """Boundary-consistent initial profiles as polynomial coefficient lists.

    Returns ``{(node, state): coeffs}`` with coefficients in the normalized
    coordinate (ascending powers).  Paper and conveyor start uniform; the air
    layers carry the quadratic/cubic profiles that satisfy every condition at
    ``w = 0`` and the nominal ``d``.
    """
    p = params or g.params or FixationParams()
    m1 = p.L_air_top
    m6 = p.L_air_below
    a1 = p.h_t * (p.T_hai - p.T_paper) / (p.h_t + 2 * p.kappa_1 / m1)
    am = p.g * (p.m_a - p.omega) / (p.g + 2 * p.delta_1 / m1) if p.g > 0 else 0.0
    a6 = p.h_b * (p.T_a - p.T_b) / (p.h_b + 2 * p.kappa_6 / m6)
    dT = p.T_b - p.T_paper
    prof = {
        ("N1", "T"): [p.T_paper + a1, -2 * a1, a1],
        ("N1", "m"): [p.omega + am, -2 * am, am],
        ("N2", "T"): [p.T_paper],
        ("N2", "m"): [p.omega],
        ("N3", "T"): [p.T_paper],
        ("N4", "T"): [p.T_paper, 0.0, 3 * dT, -2 * dT],
        ("N5", "T"): [p.T_b],
        ("N6", "T"): [p.T_b, 0.0, a6],
    }
    have = set(g.state_list())
    return {k: v for k, v in prof.items() if k in have}


def nominal_inputs(g: FixationGraph) -> np.ndarray:
    p = g.params or FixationParams()
    return np.array([p.T_hai, p.m_a, p.T_a])[: len(g.d_names)]


def scaled_params(p: FixationParams, lam: float) -> FixationParams:
    """Same physics with every length multiplied by ``lam``.

    Conductivities and transfer coefficients of derivative type scale with
    ``lam``, volumetric heat capacity with ``1/lam`` and moisture diffusivity
    with ``lam**2`` so that all normalized coefficients are unchanged up to a
    common row factor.
    """
    kw = {}
    for f in ("L_air_top", "L_paper_wet", "L_paper_dry", "L_air_gap", "L_conveyor", "L_air_below"):
        kw[f] = getattr(p, f) * lam
    for f in ("kappa_1", "kappa_p", "kappa_4", "kappa_b", "kappa_6"):
        kw[f] = getattr(p, f) * lam
    for f in ("rho_1", "rho_p", "rho_4", "rho_b", "rho_6"):
        kw[f] = getattr(p, f) / lam
    kw["delta_1"] = p.delta_1 * lam**2
    kw["delta_p"] = p.delta_p * lam**2
    kw["g"] = p.g * lam
    return replace(p, **kw)
