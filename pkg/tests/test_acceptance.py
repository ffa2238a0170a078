"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the verdict lines are
printed even without ``-s``.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest
import tomli
import tomli_w
from scipy.integrate import trapezoid

from fixtwin.benchmarks import heat_dirichlet, heat_dirichlet_exact, heat_pie, scalar_ode
from fixtwin.cli import main
from fixtwin.config import parse_config
from fixtwin.evaporation import latent_heat
from fixtwin.fd import fd_reference_simulate
from fixtwin.fixation import fixation_model, simulate_fixation
from fixtwin.graph import (FixationParams, assemble_pde, build_fixation_default, fixation_initial_profiles,
                           nominal_inputs, normalize_domains)
from fixtwin.hinf.estimator import build_error_system, default_family, ic_sweep, verify_gain
from fixtwin.hinf.synthesis import (certificate_check, lpi_operator, synthesize_continuation,
                                    synthesize_estimator)
from fixtwin.pde2pie import SingularBoundaryError, boundary_residual, compute_BT, convert_to_pie, primal_poly
from fixtwin.pi import FourPI, QuadratureGrid, adjoint, apply, compose, inner
from fixtwin.poly import MatPoly1, MatPoly2
from fixtwin.simulate import SimConfig, relative_l2, simulate_pie
from fixtwin.tuning import grid_search_tune
from fixtwin.twin import build_model

pytestmark = pytest.mark.acceptance


def _verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def _random_op(rng, dims_out, dims_in, deg):
    (n, q), (m, p) = dims_out, dims_in
    return FourPI.build(
        dims_out, dims_in,
        P=rng.standard_normal((n, m)),
        Q1=MatPoly1(rng.standard_normal((deg + 1, n, p))),
        Q2=MatPoly1(rng.standard_normal((deg + 1, q, m))),
        R0=MatPoly1(rng.standard_normal((deg + 1, q, p))),
        R1=MatPoly2(rng.standard_normal((deg + 1, deg + 1, q, p))),
        R2=MatPoly2(rng.standard_normal((deg + 1, deg + 1, q, p))),
    )


def _poly_state(rng, m, p, deg=4):
    c = rng.standard_normal((deg + 1, p))
    return rng.standard_normal(m), (lambda x: np.polynomial.polynomial.polyval(np.asarray(x), c).T
                                    .reshape(np.shape(x) + (p,)))


def test_criterion_1_pi_algebra_closure(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    grid = QuadratureGrid.gauss(48, panels=2)
    comp = 0.0
    for _ in range(50):
        mid = (int(rng.integers(0, 3)), int(rng.integers(1, 3)))
        dims_in = (int(rng.integers(0, 3)), int(rng.integers(1, 3)))
        dims_out = (int(rng.integers(0, 3)), int(rng.integers(1, 3)))
        a = _random_op(rng, dims_out, mid, int(rng.integers(0, 4)))
        b = _random_op(rng, mid, dims_in, int(rng.integers(0, 4)))
        ab = compose(a, b)
        u, vf = _poly_state(rng, *dims_in)
        f1, g1 = apply(ab, u, vf, grid)
        fb, gb = apply(b, u, vf, grid)
        f2, g2 = apply(a, fb, grid.interpolant(gb), grid)
        scale = max(np.max(np.abs(f2), initial=0.0), np.max(np.abs(g2), initial=0.0))
        gap = max(np.max(np.abs(f1 - f2), initial=0.0), np.max(np.abs(g1 - g2), initial=0.0))
        comp = max(comp, gap / scale)
    adj = 0.0
    for _ in range(50):
        op = _random_op(rng, (1, 2), (2, 2), int(rng.integers(0, 4)))
        x, y = _poly_state(rng, 2, 2), _poly_state(rng, 1, 2)
        ox, ay = apply(op, *x, grid), apply(adjoint(op), *y, grid)
        lhs = inner(grid, ox, (y[0], y[1](grid.nodes)))
        rhs = inner(grid, (x[0], x[1](grid.nodes)), ay)
        adj = max(adj, abs(lhs - rhs) / max(1.0, abs(lhs)))
    dt = time.perf_counter() - t0
    _verdict(capsys, 1, comp <= 1e-9 and adj <= 1e-10 and dt < 30,
             f"compose residual {comp:.2e} (<= 1e-9), adjoint identity {adj:.2e} (<= 1e-10), {dt:.1f}s (< 30s)")


def test_criterion_2_bt_gate(capsys):
    t0 = time.perf_counter()
    fix = compute_BT(assemble_pde(normalize_domains(build_fixation_default())))
    from fixtwin.benchmarks import double_neumann

    dn = compute_BT(double_neumann())
    try:
        convert_to_pie(double_neumann())
        refused = False
    except SingularBoundaryError:
        refused = True
    dt = time.perf_counter() - t0
    _verdict(capsys, 2, fix.invertible and not dn.invertible and refused and dt < 1,
             f"fixation invertible (cond {fix.cond:.3g}), double Neumann singular and refused, {dt:.2f}s (< 1s)")


def test_criterion_3_conversion(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    sys = heat_pie("dirichlet")
    d2 = bc = 0.0
    for _ in range(50):
        v = MatPoly1(rng.standard_normal((int(rng.integers(1, 7)), 1, 1)))
        back = primal_poly(sys, v).derivative().derivative()
        d2 = max(d2, float(np.max(np.abs(back.pad(v.degree)[: v.degree + 1] - v.coeffs))))
        bc = max(bc, float(np.max(np.abs(boundary_residual(sys, v)))))
    v0 = lambda s: (-np.pi**2 * np.sin(np.pi * np.asarray(s)))[..., None]  # noqa: E731
    tr = simulate_pie(sys, SimConfig(0.1, 1e-3, N=16), v0=v0)
    sim = float(np.max(np.abs(tr.fields[-1, 0] - heat_dirichlet_exact(tr.points, 0.1))))
    dt = time.perf_counter() - t0
    ok = d2 <= 1e-12 and bc <= 1e-12 and sim <= 1e-4 and dt < 10
    _verdict(capsys, 3, ok, f"d2(Tv) - v {d2:.1e}, BC residual {bc:.1e}, PGP vs analytic {sim:.2e} (<= 1e-4), "
                            f"{dt:.1f}s (< 10s)")


def _nodelta(g_value=None):
    p = FixationParams(evaporation=False) if g_value is None else FixationParams(evaporation=False, g=g_value)
    g = build_fixation_default(p)
    pde = assemble_pde(normalize_domains(g))
    prof = fixation_initial_profiles(g)
    coeffs = [prof[(c[0], c[1])] for c in pde.channels]
    x0 = lambda s: np.stack([np.polynomial.polynomial.polyval(s, c) for c in coeffs], axis=-1)  # noqa: E731
    return g, pde, x0


def test_criterion_4_cross_oracle(capsys):
    t0 = time.perf_counter()
    g, pde, x0 = _nodelta()
    pgp = simulate_fixation(fixation_model(FixationParams(evaporation=False)), SimConfig(50.0, 0.01, N=16))
    fd = fd_reference_simulate(pde, 50.0, 0.01, cells=200, d=nominal_inputs(g), x0=x0)
    errs = {s: relative_l2(pgp.outputs[s], fd.outputs[s]) for s in ("y", "z")}
    dt = time.perf_counter() - t0
    _verdict(capsys, 4, max(errs.values()) <= 0.01 and dt < 120,
             f"relative L2 y {errs['y']:.2e}, z {errs['z']:.2e} (<= 1e-2), {dt:.1f}s (< 120s)")


def test_criterion_5_conservation(capsys):
    g, pde, x0 = _nodelta(0.0)
    tr = fd_reference_simulate(pde, 50.0, 0.01, cells=200, d=nominal_inputs(g), x0=x0)
    mois = [k for k, c in enumerate(pde.channels) if c[2] == "moisture"]
    total = tr.diagnostics["integrals"][:, mois] @ pde.scales[mois]
    drift = float(np.max(np.abs(total - total[0])) / abs(total[0]))
    m = fixation_model()
    ev = simulate_fixation(m, SimConfig(50.0, 0.01, N=16))
    flux, enth = ev.q[:, 0], ev.q[:, 1]
    expected = trapezoid(latent_heat(ev.p[:, 0]) * flux, ev.times)
    enthalpy = abs(trapezoid(-enth, ev.times) - expected) / expected
    # moisture balance: change of the integral equals diffusion plus the evaporation sink, step by step
    I, V, q = ev.diagnostics["integrals"], ev.diagnostics["integrals_v"], ev.q
    res = I[1:] - I[:-1] - 0.005 * (m.pde.D * (V[1:] + V[:-1]) + (q[1:] + q[:-1]) @ m.pde.B_delta.T)
    mass = float(np.max(np.abs(res)) / np.max(np.abs(I)))
    ok = drift <= 1e-8 and enthalpy <= 1e-6 and mass <= 1e-6 and expected > 0
    _verdict(capsys, 5, ok, f"insulated moisture drift {drift:.1e} (<= 1e-8), enthalpy {enthalpy:.1e} (<= 1e-6), "
                            f"mass balance {mass:.1e} (<= 1e-6)")


def test_criterion_6_synthesis_soundness(capsys):
    t0 = time.perf_counter()
    family = default_family(20)
    lines, ok = [], True
    cases = [("scalar ODE", scalar_ode(), lambda s: synthesize_estimator(s, degree=2, N_inv=32), 4),
             ("boundary-sensed heat", heat_pie("boundary_sensed"),
              lambda s: synthesize_continuation(s, degree=2, N_inv=32), 16)]
    for name, sys, run, N in cases:
        res = run(sys)
        cert = certificate_check(lpi_operator(sys, res.P, res.Z, res.gamma))
        rep = verify_gain(build_error_system(sys, res.gain), family, SimConfig(50.0, 0.01, N=N))
        good = np.isfinite(res.gamma) and cert <= 1e-7 and rep.max_ratio <= 1.05 * res.gamma
        ok &= bool(good)
        lines.append(f"{name}: gamma {res.gamma:.3e}, certificate {cert:.2e}, empirical {rep.max_ratio:.3e}")
    dt = time.perf_counter() - t0
    _verdict(capsys, 6, ok and dt < 300, "; ".join(lines) + f"; {dt:.0f}s (< 300s)")


def test_criterion_7_ic_sweep(capsys, fixation_toml):
    t0 = time.perf_counter()
    model = build_model(parse_config(fixation_toml))
    sys = model.synthesis_system()
    sweep = ic_sweep(build_error_system(sys, None), model.sim_config(), e0=model.v0(), w=model.w,
                     offsets=(0.05, 0.10, 1.0))
    ratio = sweep.ratio(0.10, 0.05)
    sup = max(sweep.superposition_residual, sweep.field_superposition_residual)
    dt = time.perf_counter() - t0
    _verdict(capsys, 7, abs(ratio - 2.0) <= 1e-6 and sup <= 1e-8 and dt < 120,
             f"peak ratio 10%/5% {ratio:.9f}, superposition {sup:.1e} (<= 1e-8), {dt:.1f}s (< 120s)")


def test_criterion_8_tuning_round_trip(capsys, fixation_toml):
    t0 = time.perf_counter()
    cfg = parse_config(fixation_toml)
    grids = cfg.simulation.tune.parameters
    truth = {"kappa_1": 0.03, "kappa_6": 0.022}
    assert all(truth[k] in grids[k] for k in truth) and all(len(g) == 8 for g in grids.values())
    simcfg = build_model(cfg).sim_config()
    ref_t, ref_v = cfg.with_(**truth).simulate_outputs(simcfg, "y")
    res = grid_search_tune(cfg, grids, ref_t, ref_v, simcfg, signal="y", workers=2)
    dt = time.perf_counter() - t0
    _verdict(capsys, 8, res.best == truth and res.best_rmse <= 1e-8 and dt < 180,
             f"best {res.best}, RMSE {res.best_rmse:.1e} (<= 1e-8), 8x8 grid, {dt:.0f}s (< 180s)")


def _variant(src, dst, edit):
    tree = tomli.loads(src.read_text())
    edit(tree)
    dst.write_text(tomli_w.dumps(tree))
    return dst


def test_criterion_9_cli_determinism(capsys, tmp_path, data_dir):
    fix, heat = data_dir / "fixation_default.toml", data_dir / "heat_estimator.toml"

    def small_tune(t):
        t["simulation"].update(t_final=5.0)
        t["simulation"]["tune"]["parameters"] = {"kappa_1": [0.026, 0.03], "kappa_6": [0.022, 0.026]}

    def small_synthesis(t):
        t["synthesis"].update(degree=1, verify_t_final=5.0, family_size=5)

    tune_cfg = _variant(fix, tmp_path / "tune.toml", small_tune)
    syn_cfg = _variant(heat, tmp_path / "syn.toml", small_synthesis)
    runs = [("check-bt", fix), ("convert", fix), ("simulate", fix), ("validate", fix), ("estimate", fix),
            ("tune", tune_cfg), ("synthesize", syn_cfg), ("estimate", syn_cfg)]
    differing = []
    for k, (cmd, cfg) in enumerate(runs):
        outs = []
        for rep in range(2):
            out = tmp_path / f"{k}_{rep}"
            code = main([cmd, "--config", str(cfg), "--out", str(out), "--seed", "11", "--workers", "2"])
            stdout = capsys.readouterr().out
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
            outs.append((code, stdout, files))
        if outs[0] != outs[1] or outs[0][0] != 0:
            differing.append(cmd)
    rep = json.loads((tmp_path / "3_0" / "validate.json").read_text())["structure"]
    d = rep["dims"]
    counts_ok = (rep["nodes"] == 6 and rep["edges"] == 10 and rep["bcs"] == {"temperature": 12, "moisture": 4}
                 and (d["n_y"], d["n_z"], d["n_w"], d["n_d"]) == (2, 1, 1, 3))
    meta = json.loads((tmp_path / "2_0" / "simulate.json").read_text())
    rows = len((tmp_path / "2_0" / "trajectory.csv").read_text().splitlines()) - 1
    rows_ok = rows == meta["times"] * len(meta["channels"]) * meta["points"]
    _verdict(capsys, 9, not differing and counts_ok and rows_ok,
             f"{len(runs)} commands byte-identical across two runs (differing: {differing or 'none'}); "
             f"6 nodes, 10 edges, 12+4 BCs, dims (2,1,1,3): {counts_ok}; trajectory rows {rows}")
