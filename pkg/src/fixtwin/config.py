"""TOML configuration of a twin: model graph, signals, run settings, outputs.

Coefficients may be numbers or arithmetic expressions over the
``[parameters]`` table, node widths ``L_<node>`` and ``material.field``
lookups, so a parameter sweep only has to touch ``[parameters]``.  Unknown
keys anywhere are rejected, and ``parse(serialize(cfg)) == cfg``.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal, Optional, Union

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, PrivateAttr, ValidationError, field_validator, model_validator

logger = logging.getLogger(__name__)

Coeff = Union[float, str]
BC_FORMS = Literal["dirichlet", "neumann", "robin", "interface_flux", "interface_continuity",
                   "imperfect_contact"]


class ConfigError(ValueError):
    """Unreadable, malformed or schema-violating configuration."""

    def __init__(self, message: str, kind: str = "schema", path: str = ""):
        super().__init__(message)
        self.kind = kind
        self.path = path


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MaterialCfg(_Strict):
    kappa: Coeff
    rho: Coeff
    chi: Coeff
    delta: Optional[Coeff] = None


class TermCfg(_Strict):
    node: str
    state: str
    end: Literal["lower", "upper"]
    order: Literal[0, 1]
    coeff: Coeff


class InputCfg(_Strict):
    channel: Literal["w", "d"]
    name: str
    coeff: Coeff


class BoundaryCfg(_Strict):
    label: str
    form: BC_FORMS
    state: str
    terms: list[TermCfg]
    inputs: list[InputCfg] = []
    symbols: list[str] = []


class TapCfg(_Strict):
    signal: Literal["y", "z", "p"]
    name: str
    terms: list[TermCfg]
    inputs: list[InputCfg] = []


class InjectionCfg(_Strict):
    state: str
    q: str
    coeff: Coeff


class StateCfg(_Strict):
    name: str
    kind: Literal["temperature", "moisture"]
    initial: list[Coeff] = [0.0]  # ascending powers of the normalized coordinate


class NodeCfg(_Strict):
    id: str
    domain: tuple[Coeff, Coeff]
    material: str
    states: list[StateCfg]
    bcs: list[BoundaryCfg] = []
    taps: list[TapCfg] = []
    injections: list[InjectionCfg] = []


class EdgeCfg(_Strict):
    """Undirected pair; the reverse edge carries the transposed block."""

    pair: tuple[str, str]
    E: list[list[int]]
    contact: Literal["perfect", "imperfect"] = "perfect"
    h: Optional[Coeff] = None


class SignalCfg(_Strict):
    name: str
    kind: Literal["constant", "sinusoid", "damped_sinusoid", "samples"] = "constant"
    value: Coeff = 0.0
    amplitude: Coeff = 1.0
    frequency: Coeff = 1.0
    phase: Coeff = 0.0
    offset: Coeff = 0.0
    a: Coeff = 10.0
    b: Coeff = 0.1
    c: Coeff = 1.0
    file: Optional[str] = None

    @model_validator(mode="after")
    def _file_for_samples(self):
        if self.kind == "samples" and not self.file:
            raise ValueError(f"signal {self.name}: kind 'samples' needs a file")
        return self


class SignalsCfg(_Strict):
    w: list[SignalCfg] = []
    d: list[SignalCfg] = []
    q: list[str] = []


class EvaporationCfg(_Strict):
    enabled: bool = False
    a: float = 5e-7
    p_amb: float = 150.0
    A: float = 8.14019
    B: float = 1810.94
    C: float = 244.485
    L0: float = 2257.0
    L1: float = 2.4
    T_ref: float = 100.0


class TuneCfg(_Strict):
    parameters: dict[str, list[float]]
    reference: Optional[str] = None  # sensor CSV; self-generated from the config when absent
    signal: Literal["y", "z"] = "y"
    output: Optional[str] = None  # output name; all channels of ``signal`` when absent

    @field_validator("parameters")
    @classmethod
    def _two(cls, v):
        if len(v) != 2:
            raise ValueError("tuning takes exactly two parameters")
        if any(len(g) == 0 for g in v.values()):
            raise ValueError("parameter grids must be nonempty")
        return v


class SimulationCfg(_Strict):
    t_final: float
    dt: float
    N: int = 16
    k_max: int = 10
    tol: float = 1e-9
    max_halvings: int = 6
    points: int = 11
    store_every: int = 1
    evaporation: EvaporationCfg = EvaporationCfg()
    tune: Optional[TuneCfg] = None


class SynthesisCfg(_Strict):
    eps: float = 1e-3
    degree: int = 2
    continuation: bool = True
    N_inv: int = 32
    rtol: float = 1e-3
    gamma_start: float = 1.0
    gamma_max: float = 1e6
    gamma_min: float = 1e-8
    regulated: Literal["taps", "mean"] = "taps"
    gain: Literal["synthesize", "zero"] = "synthesize"
    ic_offsets: list[float] = [0.05, 0.10, 1.0]
    family_size: int = 20
    verify_t_final: float = 50.0
    verify_dt: float = 0.01


class OutputsCfg(_Strict):
    dir: str = "out"
    normalize: bool = False
    nominal_temperature: float = 0.0


class TwinConfig(_Strict):
    parameters: dict[str, Coeff] = {}
    materials: dict[str, MaterialCfg]
    nodes: list[NodeCfg]
    edges: list[EdgeCfg] = []
    signals: SignalsCfg = SignalsCfg()
    simulation: SimulationCfg
    synthesis: SynthesisCfg = SynthesisCfg()
    outputs: OutputsCfg = OutputsCfg()

    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)

    @model_validator(mode="after")
    def _references(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        for n in self.nodes:
            if n.material not in self.materials:
                raise ValueError(f"node {n.id} references unknown material {n.material!r}")
        for e in self.edges:
            for end in e.pair:
                if end not in ids:
                    raise ValueError(f"edge {list(e.pair)} references unknown node {end!r}")
        return self

    @property
    def base_dir(self) -> Path:
        return self._base_dir

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self._base_dir / p

    def with_(self, **values) -> "TwinConfig":
        """Copy with entries of ``[parameters]`` replaced (names must exist)."""
        missing = [k for k in values if k not in self.parameters]
        if missing:
            raise KeyError(f"not a parameter: {', '.join(missing)}")
        out = self.model_copy(update={"parameters": {**self.parameters, **values}}, deep=True)
        out._base_dir = self._base_dir
        return out

    def simulate_outputs(self, cfg, signal: str = "y"):
        """Tuning hook: simulated ``(times, outputs[signal])`` of this configuration."""
        from .twin import build_model

        model = build_model(self)
        tr = model.simulate(cfg)
        return tr.times, model.select_output(tr, signal, self.simulation.tune.output
                                             if self.simulation.tune else None)


def _loc(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"])


def from_dict(tree: dict, base_dir: Path | None = None) -> TwinConfig:
    try:
        cfg = TwinConfig.model_validate(tree)
    except ValidationError as exc:
        first = exc.errors()[0]
        msg = "; ".join(f"{_loc(e) or '<root>'}: {e['msg']}" for e in exc.errors())
        raise ConfigError(msg, "schema", _loc(first)) from None
    if base_dir is not None:
        cfg._base_dir = Path(base_dir)
    return cfg


def loads(text: str, base_dir: Path | None = None) -> TwinConfig:
    try:
        tree = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)" in the message
        raise ConfigError(f"syntax error: {exc}", "syntax") from None
    return from_dict(tree, base_dir)


def parse_config(path) -> TwinConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "io") from None
    cfg = loads(text, path.resolve().parent)
    logger.debug("parsed %s: %d nodes, %d edges", path, len(cfg.nodes), len(cfg.edges))
    return cfg


def to_dict(cfg: TwinConfig) -> dict:
    return cfg.model_dump(mode="python", exclude_none=True)


def dumps(cfg: TwinConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def write_config(cfg: TwinConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")
