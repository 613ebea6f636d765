"""Acceptance criteria 1-10.

Each test prints one ``PASS``/``FAIL`` line through the terminal reporter, so
the lines show up in ``pytest -v`` output, then asserts.
"""
import math
import time

import numpy as np
import pytest

from adept import track
from adept.chain import GateLocation, Kind, build_chain, default_registry, gate_locations
from adept.emulation import (CampaignConfig, EmulationClock, emulated_time, experiment_time,
                             run_optimization_campaign, run_tracking_campaign, tracking_bandwidth)
from adept.optimize import NMConfig
from adept.patterns import (analytic_probe, discover_patterns, propagation_map, standard_patterns,
                            validate_independence)
from adept.scenarios import all_drift, measure_gate_plan, single_drift
from adept.sim import analytic_zeta, run_batch, uniform_model

L = GateLocation.parse


@pytest.fixture
def report(request):
    tr = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)

    return emit


# 1 --------------------------------------------------------------------------

def test_c01_tracker_formulas(report):
    cfg = track.TrackerConfig(a=0.0015, zeta0=0.15, F=0.1, P=1 / 25)
    n = track.required_samples(cfg)
    worst = 0.0
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = track.TrackerConfig(a=rng.uniform(1e-4, 1), zeta0=rng.uniform(0.01, 0.45), F=rng.uniform(0.01, 1))
        dx = track.sample_offset(c)
        x1 = rng.uniform(-50, 50)
        target = c.zeta0 * (1 + c.F)
        for x in (x1 + dx, x1 - dx):
            worst = max(worst, abs(track.predicted_zeta(c, x, x1) - target) / target)
    ok = n == 52_084 and abs(n - 50_000) / 50_000 <= 0.05 and worst <= 1e-12
    report(1, ok, f"N={n} (|N-50000|/50000={abs(n - 50_000) / 50_000:.3f}), probe zeta rel err {worst:.1e}")
    assert ok


# 2 --------------------------------------------------------------------------

def test_c02_exact_shift_recovery(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        cfg = track.TrackerConfig(a=10 ** rng.uniform(-4, 0), zeta0=rng.uniform(0.02, 0.4),
                                  F=rng.uniform(0.02, 0.5))
        state = track.new_state(cfg, x0=rng.uniform(-20, 20))
        x1 = state.x0 + rng.uniform(-2, 2) * state.dx_probe
        zp, zm = (track.predicted_zeta(cfg, x, x1) for x in state.probes)
        track.tracker_update(cfg, state, zp, zm, clamp=False)
        worst = max(worst, abs(state.x0 - x1) / max(abs(x1), state.dx_probe))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    report(2, ok, f"10000 parabolas, worst relative error {worst:.1e}, {dt:.2f} s")
    assert ok


# 3 --------------------------------------------------------------------------

def test_c03_shift_noise_statistics(report):
    cfg = track.TrackerConfig(a=0.0015, zeta0=0.15, F=0.1, P=1 / 25)
    n = 48_000
    rng = np.random.default_rng(3)
    state = track.new_state(cfg, x0=0.0, n_samples=n)
    p = track.predicted_zeta(cfg, state.dx_probe, 0.0)
    deltas = []
    for _ in range(1000):
        zp, zm = rng.binomial(n, p) / n, rng.binomial(n, p) / n
        s = track.TrackerState(0.0, state.dx_probe, n)
        deltas.append(track.tracker_update(cfg, s, zp, zm, clamp=False))
    emp = float(np.std(deltas, ddof=1))
    se, ratio = track.delta_x_stderr(cfg, state.dx_probe, n)
    ok = abs(emp / se - 1) <= 0.15 and abs(ratio / cfg.P - 1) <= 0.15
    report(3, ok, f"std {emp:.4f} vs predicted {se:.4f} ({emp / se - 1:+.1%}); SE/dx = {ratio:.4f} vs P=0.04")
    assert ok


# 4 --------------------------------------------------------------------------

def _model_grid(layout):
    grid = []
    for scale in (0.0, 0.3, 1.0, 3.0):
        for split in (1.0, 0.5, 0.0):
            base = {Kind.SQ_DATA: 0.015 * scale, Kind.SQ_MEASURE: 0.008 * scale, Kind.CZ: 0.015 * scale,
                    Kind.READOUT: 0.03 * scale}
            grid.append((uniform_model(layout, base, cz_split=split), {}))
    # parameter offsets and crosstalk on top of the default model
    for loc, name, off, xt in [
        ("sq_data:4", "angle", 0.8, None), ("sq_measure:3:1", "angle", -1.0, None),
        ("cz:5:6", "angle", 0.6, None), ("readout:7", "threshold", 3.0, None),
        ("sq_data:2", "freq", 4.0, None), ("sq_data:4", "angle", 0.8, {7: 0.5}),
        ("sq_measure:1:0", "angle", 1.2, {3: 0.3}), ("cz:3:2", "angle", 0.9, {5: 1.0, 7: 0.2}),
    ]:
        model = uniform_model(layout, crosstalk={L(loc): xt} if xt else None)
        grid.append((model, {(L(loc), name): off}))
    return grid


def test_c04_oracle_equivalence(report):
    layout = build_chain(9)
    t0 = time.perf_counter()
    worst, configs = 0.0, 0
    for k, (model, offsets) in enumerate(_model_grid(layout)):
        reg = default_registry(layout)
        for (loc, name), off in offsets.items():
            reg.set_value(loc, name, reg.get(loc, name).optimum + off)
        stats = run_batch(layout, reg, model, 8, 12_500, seed=404, tag=(k,))
        exact = analytic_zeta(layout, reg, model, 8)
        se = np.sqrt(exact * (1 - exact) / stats.opportunities)
        # a noiseless qubit must be exactly zero; tiny floor turns any miss into a huge deviation
        dev = np.abs(stats.zeta - exact) / np.maximum(se, 1e-300)
        worst = max(worst, float(dev.max()))
        configs += 1
    dt = time.perf_counter() - t0
    ok = configs >= 20 and worst <= 4.0 and dt < 60
    report(4, ok, f"{configs} models x 1e5 rounds, worst |sim - exact| = {worst:.2f} SE, {dt:.1f} s")
    assert ok


# 5 --------------------------------------------------------------------------

def test_c05_locality(report):
    layout = build_chain(9)
    model = uniform_model(layout)
    reg = default_registry(layout)
    base = analytic_zeta(layout, reg, model, 8)

    def response(loc):
        r = reg.snapshot()
        r.set_value(L(loc), "angle", 0.7)
        d = analytic_zeta(layout, r, model, 8) - base
        return {q for q, v in zip(layout.measure_qubits, d) if v != 0.0}, d

    hit_d, d_data = response("sq_data:4")
    hit_m, d_meas = response("sq_measure:3:0")
    ok = hit_d == {3, 5} and hit_m == {3} and np.all(d_data[[1, 2]] > 0) and d_meas[1] > 0
    report(5, ok, f"SQ_data(4) moves {sorted(hit_d)}, SQ_measure(3) moves {sorted(hit_m)}; others bitwise 0")
    assert ok


# 6 --------------------------------------------------------------------------

def test_c06_randomisation_limit(report):
    layout = build_chain(9)
    reg = default_registry(layout)
    model = uniform_model(layout)
    for m in layout.measure_qubits:
        model.p_base[GateLocation(Kind.READOUT, (m,))] = 0.5
    exact = analytic_zeta(layout, reg, model, 8)
    stats = run_batch(layout, reg, model, 8, 6000, seed=6)
    dev = np.abs(stats.zeta - 0.5) / stats.stderr
    ok = np.all(exact == 0.5) and np.all(dev <= 3)
    report(6, ok, f"analytic {exact.tolist()}, simulated {np.round(stats.zeta, 4).tolist()} "
                  f"(max {dev.max():.2f} SE)")
    assert ok


# 7 --------------------------------------------------------------------------

def test_c07_patterns(report):
    t0 = time.perf_counter()
    problems = []
    for n in (5, 9, 25, 101):
        layout = build_chain(n)
        pats = standard_patterns(layout)
        prop = propagation_map(layout)
        if len(pats) != 3:
            problems.append(f"n={n}: {len(pats)} patterns")
        covered = sorted(loc for p in pats for g in p for loc in g.tunable_locations)
        if covered != sorted(gate_locations(layout)):
            problems.append(f"n={n}: coverage")
        problems += [f"n={n}: {r.reason}" for p in pats if not (r := validate_independence(p, prop))]
        reg = default_registry(layout)
        found = discover_patterns(layout, reg, analytic_probe(layout, reg, uniform_model(layout)), 0.01)
        if found.propagation != prop:
            problems.append(f"n={n}: discovered map differs")
    n_p1 = len(standard_patterns(build_chain(9))[0])
    if n_p1 != 4:
        problems.append(f"pattern 1 of n=9 has {n_p1} groupings")
    dt = time.perf_counter() - t0
    ok = not problems and dt < 10
    report(7, ok, f"n in 5,9,25,101: 3 patterns, full cover, independent, discovery exact; {dt:.1f} s"
           if ok else "; ".join(problems))
    assert ok


# 8 --------------------------------------------------------------------------

def test_c08_parallel_optimisation(report):
    layout = build_chain(9)
    model = uniform_model(layout)
    baseline = analytic_zeta(layout, default_registry(layout), model, 8)
    reg = default_registry(layout)
    plan = measure_gate_plan(layout, reg)
    start = analytic_zeta(layout, reg, model, 8)
    nm = NMConfig(step=0.2, max_iterations=50, lower=-math.pi, upper=math.pi)

    # exact independence on the oracle: each group alone reproduces its joint trace
    joint = run_optimization_campaign(layout, reg.snapshot(), model, plan, nm, evaluator="analytic")
    independent = True
    for gid in plan.groups:
        solo_plan = type(plan)({gid: plan.groups[gid]}, {gid: plan.keys[gid]})
        solo = run_optimization_campaign(layout, reg.snapshot(), model, solo_plan, nm, evaluator="analytic")
        independent &= [r.zeta for r in solo[gid].trace] == [r.zeta for r in joint[gid].trace]

    t0 = time.perf_counter()
    results = run_optimization_campaign(layout, reg, model, plan, nm, evaluator="sim", instances=4500,
                                        rounds=8, seed=0)
    dt = time.perf_counter() - t0
    final = analytic_zeta(layout, reg, model, 8)
    se = np.sqrt(baseline * (1 - baseline) / 36_000)
    excess = (final - baseline) / se
    inflated = start.mean() / baseline.mean()
    monotone = all(np.all(np.diff(r.best_seen()) <= 0) and r.best_seen()[-1] < r.trace[0].zeta
                   for r in results.values())
    ok = inflated >= 1.5 and np.all(excess <= 3) and independent and monotone and dt < 300
    report(8, ok, f"start {inflated:.2f}x baseline; after 50 evals true excess "
                  f"{np.round(excess, 2).tolist()} SE; solo==joint traces: {independent}; {dt:.1f} s")
    assert ok


# 9 --------------------------------------------------------------------------

WARMUP = 3


def _zeta_margin(res, qubits, baseline, F):
    """Largest (zeta - (zeta0 (1+F) + 5 SE)) / SE after warmup over ``qubits``."""
    lay = res.emulation.layout
    worst = -np.inf
    for q in qubits:
        s = res.series(q)
        thr = baseline[lay.measure_index(q)] * (1 + F) + 5 * s["stderr"]
        worst = max(worst, float(np.max(((s["zeta"] - thr) / s["stderr"])[WARMUP:])))
    return worst


def test_c09_tracking_campaigns(report):
    t0 = time.perf_counter()
    layout = build_chain(9)
    period = 400

    reg, model, drift = single_drift(layout, 3, amplitude=10.0, period=period)
    comp = run_tracking_campaign(CampaignConfig(steps=period, seed=0), drift, reg.snapshot(), model)
    base1 = comp.emulation.baseline_zeta()
    margin1 = _zeta_margin(comp, layout.measure_qubits, base1, 0.1)
    s3 = comp.series(3)
    r_single = float(np.corrcoef(s3["compensation"], -s3["inserted"])[0, 1])

    ctrl = run_tracking_campaign(CampaignConfig(steps=period, seed=0, compensate=False), drift,
                                 reg.snapshot(), model)
    peak = float(np.max(ctrl.series(3)["zeta"]))
    doubled = peak >= 2 * base1[1]

    reg, model, drift = all_drift(layout, period=300)
    multi = run_tracking_campaign(CampaignConfig(steps=300, seed=0), drift, reg, model)
    base9 = multi.emulation.baseline_zeta()
    margin9 = _zeta_margin(multi, layout.measure_qubits, base9, 0.1)
    rs = []
    for q in range(layout.n_qubits):
        s = multi.series(q)
        rs.append(float(np.corrcoef(s["compensation"], -s["inserted"])[0, 1]))
    dt = time.perf_counter() - t0

    ok = margin1 <= 0 and doubled and margin9 <= 0 and min(rs) >= 0.95 and dt < 300
    report(9, ok, f"single: worst margin {margin1:+.2f} SE, r={r_single:.4f}; control peak {peak:.3f} "
                  f"vs 2x zeta0={2 * base1[1]:.3f}; all-qubit: worst margin {margin9:+.2f} SE, "
                  f"min r={min(rs):.4f}; {dt:.0f} s")
    assert ok


# 10 -------------------------------------------------------------------------

def test_c10_time_and_bandwidth(report):
    t36 = emulated_time(36)
    texp = experiment_time(36, EmulationClock(rounds_per_experiment=12))
    tbig = emulated_time(48 * 10**6)
    bw = tracking_bandwidth()
    ok = (abs(t36 - 31.608e-6) < 1e-15 and round(texp * 1e6) == 785 and round(tbig, 1) == 42.1
          and round(bw.update_rate, 2) == 3.82 and round(bw.max_drift, 2) == 0.30)
    report(10, ok, f"{t36 * 1e6:.3f} us, {texp * 1e6:.1f} us, {tbig:.2f} s, {bw.update_rate:.3f} Hz, "
                   f"{bw.max_drift:.3f} Hz")
    assert ok
