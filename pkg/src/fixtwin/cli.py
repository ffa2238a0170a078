"""``twin`` command-line front end.

Exit codes: 0 success, 1 usage, 2 invalid model, 3 numerical failure.  Every
failure also prints a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import __version__
from .artifacts import dumps_json, write_field_csv, write_json, write_signal_csv, write_table_csv, write_text
from .config import ConfigError, TwinConfig, parse_config
from .expr import ExpressionError
from .graph import ModelError, validate
from .hinf.estimator import build_error_system, cosimulate, default_family, ic_sweep, verify_gain
from .hinf.gain import InversionError
from .hinf.sdp import SDPError
from .hinf.synthesis import SynthesisError, synthesize_continuation, synthesize_estimator
from .pde2pie import compute_BT, dump_system, reconstruct_primal
from .pi import FourPI, QuadratureGrid, adjoint, inner, quadrature_oracle
from .poly import MatPoly1
from .sensors import SensorError, ingest_sensor_csv
from .simulate import SimConfig, SimulationError, build_galerkin
from .tuning import MetricError, grid_search_tune
from .twin import TwinModel, build_graph, build_model, build_pde

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("check-bt", "convert", "simulate", "tune", "synthesize", "estimate", "validate")
U64_MAX = 2**64 - 1


class CommandFailure(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twin", description="Digital twin of a fixation unit: PIE simulation, "
                                         "tuning and estimator synthesis.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML configuration file")
    p.add_argument("--out", help="output directory (default: [outputs].dir next to the config)")
    p.add_argument("--seed", type=_u64, default=0, help="seed for randomized checks and disturbance families")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes for tuning and verification")
    p.add_argument("--version", action="version", version=f"twin {__version__}")
    return p


def _error(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}, sort_keys=True) + "\n")
    return code


# ---------------------------------------------------------------------------
# commands


def _temperature_offsets(model: TwinModel) -> np.ndarray | None:
    oc = model.config.outputs
    if not oc.normalize:
        return None
    return np.array([oc.nominal_temperature if kind == "temperature" else 0.0
                     for _, _, kind in model.pde.channels])


def _signal_offset(model: TwinModel, name: str) -> float:
    oc = model.config.outputs
    if oc.normalize and model.output_kinds().get(name) == "temperature":
        return oc.nominal_temperature
    return 0.0


def _positions(model: TwinModel, points) -> np.ndarray:
    pde = model.pde
    return pde.scales[:, None] * np.asarray(points)[None, :] + pde.offsets[:, None]


def cmd_check_bt(cfg: TwinConfig, args, out: Path) -> int:
    _, pde, _ = build_pde(cfg)
    bt = compute_BT(pde)
    write_json(out / "check_bt.json", {**bt.as_dict(), "n_x": pde.n_x, "boundary_rows": int(pde.B.shape[0])})
    verdict = "invertible" if bt.invertible else "singular"
    print(f"{verdict} (condition number {bt.cond:.6g})")
    if not bt.invertible:
        raise CommandFailure(EXIT_MODEL, "singular_boundary",
                             f"B_T is singular (condition number {bt.cond:.6g}); boundary conditions "
                             "do not determine the core values")
    return EXIT_OK


def cmd_convert(cfg: TwinConfig, args, out: Path) -> int:
    model = build_model(cfg)
    write_text(out / "pie.txt", dump_system(model.sys))
    write_json(out / "convert.json", {"dims": model.sys.dims(), "names": model.sys.names,
                                      "B_T": model.sys.bt.as_dict() if model.sys.bt is not None else None})
    print(" ".join(f"{k}={v}" for k, v in model.sys.dims().items()))
    return EXIT_OK


def cmd_simulate(cfg: TwinConfig, args, out: Path) -> int:
    model = build_model(cfg)
    tr = model.simulate()
    chans = [(nid, st) for nid, st, _ in model.pde.channels]
    write_field_csv(out / "trajectory.csv", tr.times, tr.fields, chans, tr.positions,
                    _temperature_offsets(model))
    signals = []
    for sig in ("y", "z", "p", "q"):
        vals = tr.outputs.get(sig)
        if vals is None or vals.shape[1] == 0:
            continue
        for k, name in enumerate(tr.names.get(sig, ())):
            signals.append((name, vals[:, k] - _signal_offset(model, name)))
    write_signal_csv(out / "signals.csv", tr.times, signals)
    diag = {k: v for k, v in tr.diagnostics.items() if np.isscalar(v)}
    write_json(out / "simulate.json", {
        "dims": model.sys.dims(), "times": len(tr.times), "channels": [list(c) for c in chans],
        "points": len(tr.points), "diagnostics": diag, "normalized": cfg.outputs.normalize,
        "final": {name: float(v[-1]) for name, v in signals},
    })
    print(f"{len(tr.times)} samples, {len(chans)} channels, {tr.diagnostics['steps']} steps")
    return EXIT_OK


def cmd_tune(cfg: TwinConfig, args, out: Path) -> int:
    tc = cfg.simulation.tune
    if tc is None:
        raise ModelError("tune needs a [simulation.tune] section")
    model = build_model(cfg)
    simcfg = model.sim_config()
    if tc.reference:
        series = ingest_sensor_csv(cfg.resolve(tc.reference))
        n_ch = model.sys.dims()["n_" + tc.signal]
        if tc.output is None and n_ch != 1:
            raise ModelError(f"a single-series reference needs [simulation.tune].output "
                             f"({n_ch} {tc.signal}-channels)")
        ref_t, ref_v, source = series.times, series.values, str(tc.reference)
    else:
        ref_t, ref_v = cfg.simulate_outputs(simcfg, tc.signal)
        source = "self-generated"
    res = grid_search_tune(cfg, tc.parameters, ref_t, ref_v, simcfg, signal=tc.signal, workers=args.workers)
    write_table_csv(out / "tune_surface.csv", [*res.names, "rmse"], res.table())
    write_json(out / "tune.json", {"parameters": list(res.names), "best": res.best, "best_rmse": res.best_rmse,
                                   "grids": [g.tolist() for g in res.grids], "reference": source,
                                   "failed_points": int(res.invalid.sum())})
    print(" ".join(f"{k}={v:.17g}" for k, v in res.best.items()) + f" rmse={res.best_rmse:.6g}")
    return EXIT_OK


def _synthesize(model: TwinModel, seed: int, workers: int, verify: bool):
    sc = model.config.synthesis
    sys_e = model.synthesis_system()
    kw = dict(N_inv=sc.N_inv, rtol=sc.rtol, g_start=sc.gamma_start, g_max=sc.gamma_max, g_min=sc.gamma_min)
    if sc.continuation:
        res = synthesize_continuation(sys_e, sc.eps, sc.degree, min(1, sc.degree), **kw)
    else:
        res = synthesize_estimator(sys_e, sc.eps, sc.degree, **kw)
    lpi = res.lpi
    report = None
    if verify:
        err = build_error_system(sys_e, res.gain)
        vcfg = SimConfig(t_final=sc.verify_t_final, dt=sc.verify_dt, N=model.config.simulation.N)
        report = verify_gain(err, default_family(sc.family_size, seed), vcfg, workers=workers)
    return sys_e, lpi, res, report


def cmd_synthesize(cfg: TwinConfig, args, out: Path) -> int:
    model = build_model(cfg)
    _, lpi, res, report = _synthesize(model, args.seed, args.workers, verify=True)
    write_text(out / "estimator.json", dumps_json(res.as_dict()))
    write_text(out / "sdp.txt", lpi.sdp(res.gamma).to_text())
    write_json(out / "gain_report.json", {**report.as_dict(), "gamma": res.gamma,
                                          "bound_ratio": report.max_ratio / res.gamma if res.gamma > 0 else None,
                                          "seed": args.seed})
    print(f"gamma={res.gamma:.6g} empirical={report.max_ratio:.6g}")
    return EXIT_OK


def cmd_estimate(cfg: TwinConfig, args, out: Path) -> int:
    model = build_model(cfg)
    sc = cfg.synthesis
    if sc.gain == "synthesize":
        sys_e, _, res, _ = _synthesize(model, args.seed, args.workers, verify=False)
        gain, gamma = res.gain, res.gamma
    else:
        sys_e = model.synthesis_system()
        m, p = sys_e.state_dims
        gain = FourPI.zero((m, p), (sys_e.C2.dims_out[0], 0), sys_e.T.domain)
        gamma = None
    simcfg = model.sim_config()
    v0 = model.v0()
    co = cosimulate(sys_e, gain, simcfg, w=model.w, d=model.d, v0=v0, v0_hat=v0)
    sel = slice(None, None, simcfg.store_every)
    chans = [(nid, st) for nid, st, _ in model.pde.channels]
    write_field_csv(out / "error_field.csv", co.times[sel], co.field_error[sel], chans,
                    _positions(model, co.points))
    z_names = sys_e.names.get("z", ())
    ze = co.z_error
    write_signal_csv(out / "z_error.csv", co.times[sel], [(f"e_{n}", ze[sel, k]) for k, n in enumerate(z_names)])
    sweep = ic_sweep(build_error_system(sys_e, gain), simcfg, e0=v0, w=model.w, offsets=tuple(sc.ic_offsets))
    sweep_d = sweep.as_dict()
    if 0.05 in sc.ic_offsets and 0.10 in sc.ic_offsets:
        sweep_d["ratio_10_over_5"] = sweep.ratio(0.10, 0.05)
    write_json(out / "ic_sweep.json", sweep_d)
    peak = float(np.max(np.abs(ze))) if ze.size else 0.0
    write_json(out / "estimate.json", {"gain": sc.gain, "gamma": gamma, "peak_z_error": peak,
                                       "regulated": list(z_names), "times": len(co.times[sel])})
    print(f"peak |z_e| = {peak:.6g}")
    return EXIT_OK


def _adjoint_gap(op: FourPI, rng: np.random.Generator, grid: QuadratureGrid, trials: int = 5) -> float:
    """Max of ``|<op x, y> - <x, op* y>|`` relative to ``|op x||y| + |x||op* y|``."""
    adj = adjoint(op)
    (mo, po), (mi, pi_) = op.dims_out, op.dims_in
    worst = 0.0
    for _ in range(trials):
        u1 = rng.standard_normal(mi)
        v1 = MatPoly1(rng.standard_normal((4, pi_, 1)), op.domain, trim=False)
        u2 = rng.standard_normal(mo)
        v2 = MatPoly1(rng.standard_normal((4, po, 1)), op.domain, trim=False)
        f1, g1 = op.apply_poly(u1, v1)
        f2, g2 = adj.apply_poly(u2, v2)
        x = (u1, v1(grid.nodes)[..., 0])
        y = (u2, v2(grid.nodes)[..., 0])
        ox = (f1.ravel(), g1(grid.nodes)[..., 0])
        oy = (f2.ravel(), g2(grid.nodes)[..., 0])
        lhs, rhs = inner(grid, ox, y), inner(grid, x, oy)
        scale = np.sqrt(inner(grid, ox, ox) * inner(grid, y, y)) + np.sqrt(inner(grid, x, x) * inner(grid, oy, oy))
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)
    return float(worst)


def invariant_suite(cfg: TwinConfig, seed: int = 0) -> dict:
    """Structural and numerical checks of a configuration; see ``cmd_validate``."""
    g = build_graph(cfg)
    rep = validate(g)
    counts = g.count_bcs()
    result = {
        "structure": {"nodes": len(g.nodes), "edges": len(g.edges), "bcs": counts,
                      "dims": g.signal_dims(), "violations": rep.violations, "notes": rep.notes},
        "checks": [],
    }
    if not rep.ok:
        return result
    _, pde, _ = build_pde(cfg)
    bt = compute_BT(pde)
    result["checks"].append({"name": "B_T invertible", "value": bt.cond, "limit": bt.threshold,
                             "pass": bt.invertible, "kind": "model"})
    if not bt.invertible:
        return result
    model = build_model(cfg)
    s = model.sys
    pts = np.linspace(0.0, 1.0, 21)
    x_rec = reconstruct_primal(s, model.v0(), w=np.atleast_1d(model.w(0.0)) if len(model.w) else None,
                               d=model.d_nominal if len(model.d) else None, points=pts)
    x_cfg = np.stack([npoly.polyval(pts, c) for c in model.profiles])
    scale = max(1.0, float(np.max(np.abs(x_cfg))))
    gap = float(np.max(np.abs(x_rec - x_cfg))) / scale
    result["checks"].append({"name": "initial profiles satisfy the boundary conditions", "value": gap,
                             "limit": 1e-8, "pass": gap <= 1e-8, "kind": "model"})
    rng = np.random.default_rng(seed)
    grid = QuadratureGrid.gauss(64, s.T.domain)
    for name in ("T", "A", "B1", "C2"):
        op = s.operators()[name]
        gap = _adjoint_gap(op, rng, grid)
        result["checks"].append({"name": f"adjoint identity {name}", "value": gap, "limit": 1e-10,
                                 "pass": gap <= 1e-10, "kind": "numeric"})
        qo = quadrature_oracle(op, trials=3, seed=seed % (2**32))
        result["checks"].append({"name": f"quadrature oracle {name}", "value": qo, "limit": 1e-9,
                                 "pass": qo <= 1e-9, "kind": "numeric"})
    gal = build_galerkin(s, cfg.simulation.N)
    cond = float(np.linalg.cond(gal.E - 0.5 * cfg.simulation.dt * gal.A))
    result["checks"].append({"name": "trapezoid stepping matrix well posed", "value": cond, "limit": 1e12,
                             "pass": bool(np.isfinite(cond) and cond < 1e12), "kind": "numeric"})
    return result


def cmd_validate(cfg: TwinConfig, args, out: Path) -> int:
    res = invariant_suite(cfg, args.seed)
    write_json(out / "validate.json", res)
    viol = res["structure"]["violations"]
    failed = [c for c in res["checks"] if not c["pass"]]
    for c in res["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['value']:.3g} (limit {c['limit']:.3g})")
    if viol:
        raise CommandFailure(EXIT_MODEL, "model_invalid", "; ".join(viol))
    model_fail = [c for c in failed if c["kind"] == "model"]
    if model_fail:
        raise CommandFailure(EXIT_MODEL, "model_invalid", "; ".join(c["name"] for c in model_fail))
    if failed:
        raise CommandFailure(EXIT_NUMERIC, "check_failed", "; ".join(c["name"] for c in failed))
    print("valid")
    return EXIT_OK


HANDLERS = {
    "check-bt": cmd_check_bt, "convert": cmd_convert, "simulate": cmd_simulate, "tune": cmd_tune,
    "synthesize": cmd_synthesize, "estimate": cmd_estimate, "validate": cmd_validate,
}

MODEL_ERRORS = (ModelError, ExpressionError, SensorError)
NUMERIC_ERRORS = (SimulationError, SynthesisError, InversionError, SDPError, MetricError,
                  np.linalg.LinAlgError, ArithmeticError, RuntimeError)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        return _error(EXIT_USAGE, "usage", str(exc))
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        code = EXIT_USAGE if exc.kind == "io" else EXIT_MODEL
        return _error(code, f"config_{exc.kind}", str(exc))
    out = Path(args.out) if args.out else cfg.resolve(cfg.outputs.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _error(EXIT_USAGE, "output", f"cannot create {out}: {exc.strerror}")
    try:
        return HANDLERS[args.command](cfg, args, out)
    except CommandFailure as exc:
        return _error(exc.code, exc.kind, str(exc))
    except MODEL_ERRORS as exc:
        return _error(EXIT_MODEL, "model_invalid", str(exc))
    except NUMERIC_ERRORS as exc:
        return _error(EXIT_NUMERIC, "numerical_failure", f"{type(exc).__name__}: {exc}")
    except OSError as exc:
        return _error(EXIT_USAGE, "output", str(exc))


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
