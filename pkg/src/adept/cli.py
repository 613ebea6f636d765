"""Command-line drivers. Every command writes CSV files plus one JSON manifest per CSV."""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, scenarios
from .chain import GateLocation, LayoutError, Role, freq_location
from .config import Config, ConfigError, load_config
from .detect import STATS_COLUMNS, DetectionStats
from .emulation import (CampaignConfig, Drift, DriftProgram, EmulationClock, experiment_time,
                        emulated_time, run_optimization_campaign, run_tracking_campaign,
                        tracking_bandwidth, write_campaign_csv)
from .optimize import NMConfig, write_trace_csv
from .patterns import (analytic_probe, crosstalk_patterns, discover_patterns, propagation_map,
                       validate_independence, write_patterns_csv)
from .sim import analytic_zeta, run_batch

log = logging.getLogger("adept")


class CommandError(Exception):
    pass


def _pick(flag, cfg: Config, section: str, key: str, default):
    if flag is not None:
        return flag
    return cfg.get(section, key, default)


def parse_range(text: str) -> np.ndarray:
    """``start:stop:count`` inclusive grid, or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise argparse.ArgumentTypeError("count must be >= 1")
        return np.linspace(start, stop, count)
    return np.array([float(v) for v in text.split(",")])


class Run:
    """Collects outputs of one command and writes them with manifests."""

    def __init__(self, args, cfg: Config, argv):
        self.args = args
        self.cfg = cfg
        self.argv = list(argv)
        self.out = Path(args.out)
        self.started = time.time()
        self.resolved: dict = {}
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CommandError(f"cannot create output directory {self.out}: {exc}") from None

    def write(self, name: str, body: str) -> Path:
        path = self.out / f"{name}.csv"
        manifest = {
            "subcommand": self.args.command,
            "argv": self.argv,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "config_path": self.cfg.source,
            "config": self.cfg.as_dict(),
            "resolved": self.resolved,
            "output": str(path),
            "start_time": self.started,
            "end_time": time.time(),
            "version": __version__,
        }
        try:
            path.write_text(body)
            (self.out / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
        except OSError as exc:
            raise CommandError(f"cannot write {path}: {exc}") from None
        return path


# --- subcommands --------------------------------------------------------------

def cmd_sweep(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout()
    reg, model = cfg.registry(layout), cfg.model(layout)
    try:
        loc = GateLocation.parse(a.location)
    except LayoutError as exc:
        raise CommandError(str(exc)) from None
    params = reg.at(loc)
    if not params:
        raise CommandError(f"no tunable parameter at {a.location}")
    name = a.param or params[0].name
    param = reg.get(loc, name)
    rounds = _pick(a.rounds, cfg, "campaign", "rounds", 8)
    instances = _pick(a.instances, cfg, "campaign", "instances", 6000)
    include_terminal = cfg.get("detect", "include_terminal_round", False)
    run.resolved.update(location=loc.id, param=name, values=a.values.tolist(), rounds=rounds,
                        instances=instances, method=a.method)
    buf = io.StringIO()
    buf.write(",".join(("value",) + STATS_COLUMNS + ("analytic_zeta",)) + "\n")
    for i, v in enumerate(a.values):
        param.value = param.optimum + float(v)
        exact = analytic_zeta(layout, reg, model, rounds, include_terminal)
        if a.method == "sim":
            stats = run_batch(layout, reg, model, rounds, instances, a.seed, tag=(i,),
                              threads=a.threads, include_terminal=include_terminal)
        else:
            n = instances * (rounds + include_terminal)
            ev = np.rint(exact * n).astype(np.int64)
            stats = DetectionStats(layout.measure_qubits, ev, np.full(len(ev), n))
        for j, m in enumerate(layout.measure_qubits):
            buf.write(f"{float(v)!r},{m},{float(stats.zeta[j])!r},{float(stats.stderr[j])!r},"
                      f"{int(stats.events[j])},{int(stats.opportunities[j])},{float(exact[j])!r}\n")
    path = run.write("sweep", buf.getvalue())
    print(f"sweep of {loc.id}.{name}: {len(a.values)} values x {len(layout.measure_qubits)} qubits -> {path}")


def cmd_optimize(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout()
    reg, model = cfg.registry(layout), cfg.model(layout)
    plan = (scenarios.measure_gate_plan if a.target == "measure" else scenarios.cz_gate_plan)(layout, reg)
    default_iters = 50 if a.target == "measure" else 80
    opt = cfg.sections.get("optimize", {})
    nm = NMConfig(
        alpha=opt.get("alpha", 1.0), gamma=opt.get("gamma", 2.0), rho=opt.get("rho", 0.5),
        sigma=opt.get("sigma", 0.5), step=opt.get("step", 0.2 if a.target == "measure" else 0.4),
        max_iterations=_pick(a.iterations, cfg, "optimize", "max_iterations", default_iters),
        reeval_every=opt.get("reeval_every", 5), lower=opt.get("lower", -math.pi),
        upper=opt.get("upper", math.pi),
    )
    instances = _pick(a.instances, cfg, "optimize", "instances", 4500)
    rounds = _pick(a.rounds, cfg, "optimize", "rounds", 8)
    evaluator = _pick(a.evaluator, cfg, "optimize", "evaluator", "sim")
    run.resolved.update(target=a.target, nm=nm.__dict__, instances=instances, rounds=rounds, evaluator=evaluator)
    results = run_optimization_campaign(layout, reg, model, plan, nm, evaluator=evaluator,
                                        instances=instances, rounds=rounds, seed=a.seed, threads=a.threads)
    buf = io.StringIO()
    write_trace_csv(results, buf)
    path = run.write(f"optimize_{a.target}", buf.getvalue())
    for gid, res in results.items():
        print(f"{gid}: zeta {res.trace[0].zeta:.4f} -> best {res.best_zeta:.4f} at {np.round(res.best_params, 4)}")
    print(f"trace -> {path}")


def _campaign(run: Run, registry, model, drift: DriftProgram, name: str, compensate: bool):
    a, cfg = run.args, run.cfg
    camp = cfg.sections.get("campaign", {})
    tr = cfg.sections.get("tracker", {})
    for q, d in cfg.drifts.items():
        drift.drifts[q] = Drift(d.get("amplitude", 0.0), d.get("period", 300.0), d.get("phase", 0.0))
    config = CampaignConfig(
        n_qubits=cfg.get("chain", "n_qubits", 9),
        instances=_pick(a.instances, cfg, "campaign", "instances", 6000),
        rounds=camp.get("rounds", 8),
        steps=_pick(a.steps, cfg, "campaign", "steps", 300),
        seed=a.seed,
        pattern_order=camp.get("pattern_order", (1, 2, 3)),
        compensate=compensate and camp.get("compensate", True),
        tracked_param=camp.get("tracked_param", "freq"),
        F=tr.get("F", 0.1), P=tr.get("P"), a=tr.get("a"), zeta0=tr.get("zeta0"),
        N=tr.get("N", None if "P" in tr else 48_000),
        threads=a.threads,
        include_terminal=cfg.get("detect", "include_terminal_round", False),
        clock=_clock(cfg),
    )
    run.resolved.update(campaign={k: v for k, v in config.__dict__.items() if k != "clock"},
                        drift={q: d.__dict__ for q, d in drift.drifts.items()})
    result = run_tracking_campaign(config, drift, registry, model)
    buf = io.StringIO()
    write_campaign_csv(result, buf)
    path = run.write(name, buf.getvalue())
    summary = result.summary()
    for q in range(result.emulation.layout.n_qubits):
        line = f"q{q}: max |tracking error| {summary['max_tracking_error'][q]:.3f}"
        if q in summary["mean_zeta"]:
            line += f", mean zeta {summary['mean_zeta'][q]:.4f}"
        print(line)
    print(f"campaign log -> {path}")


def cmd_track(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout()
    if layout.role(a.qubit) is not Role.MEASURE:
        raise CommandError(f"qubit {a.qubit} is not a measure qubit")
    reg, model, drift = scenarios.single_drift(layout, a.qubit, a.amplitude, a.period, a.sensitivity)
    if cfg.params or cfg.locations or "error_model" in cfg.sections:
        reg, model = cfg.registry(layout), cfg.model(layout)
        reg.get(freq_location(layout, a.qubit), "freq").sensitivity = a.sensitivity
    _campaign(run, reg, model, drift, "track" if not a.no_compensate else "track_uncompensated",
              not a.no_compensate)


def cmd_track_all(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout()
    reg, model, drift = scenarios.all_drift(layout, period=a.period)
    if cfg.params or cfg.locations or "error_model" in cfg.sections:
        reg, model = cfg.registry(layout), cfg.model(layout)
    _campaign(run, reg, model, drift, "track_all", not a.no_compensate)


def cmd_patterns(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout(a.n_qubits)
    pats = crosstalk_patterns(layout, a.radius)
    prop = propagation_map(layout)
    for p in pats:
        rep = validate_independence(p, prop)
        if not rep:
            raise CommandError(f"pattern {p.name} is not independent: {rep.reason}")
    run.resolved.update(n_qubits=layout.n_qubits, radius=a.radius)
    buf = io.StringIO()
    write_patterns_csv(pats, buf)
    path = run.write("patterns", buf.getvalue())
    print(f"{len(pats)} patterns for {layout.n_qubits} qubits (radius {a.radius}) -> {path}")


def cmd_discover(run: Run):
    a, cfg = run.args, run.cfg
    layout = cfg.layout(a.n_qubits)
    reg, model = cfg.registry(layout), cfg.model(layout)
    oracle = analytic_probe(layout, reg, model, delta_p=a.delta_p)
    try:
        found = discover_patterns(layout, reg, oracle, a.threshold)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    run.resolved.update(n_qubits=layout.n_qubits, threshold=a.threshold, delta_p=a.delta_p)
    buf = io.StringIO()
    write_patterns_csv(found.patterns, buf)
    path = run.write("discover", buf.getvalue())
    mbuf = io.StringIO()
    mbuf.write("location_id,measure_qubits,expected\n")
    expected = propagation_map(layout)
    for loc in sorted(found.propagation):
        got = " ".join(map(str, sorted(found.propagation[loc])))
        exp = " ".join(map(str, sorted(expected[loc])))
        mbuf.write(f"{loc.id},{got},{exp}\n")
    run.write("discover_map", mbuf.getvalue())
    same = all(found.propagation[l] == expected[l] for l in expected)
    print(f"{len(found.patterns)} patterns discovered; propagation map "
          f"{'matches' if same else 'differs from'} the circuit rules -> {path}")


def _clock(cfg: Config, rounds_per_experiment=None) -> EmulationClock:
    c = cfg.sections.get("clock", {})
    return EmulationClock(
        round_time=c.get("round_time_ns", 878.0) * 1e-9,
        init_time=c.get("init_time_ns", 25.0) * 1e-9,
        end_time=c.get("end_time_ns", 1000.0) * 1e-9,
        reset_time=c.get("reset_time_ns", 250_000.0) * 1e-9,
        rounds_per_experiment=rounds_per_experiment or c.get("rounds_per_experiment", 8),
    )


def cmd_timing(run: Run):
    a, cfg = run.args, run.cfg
    clock = _clock(cfg, a.rounds_per_experiment)
    emu = emulated_time(a.rounds, clock)
    exp = experiment_time(a.rounds, clock)
    n_exp = math.ceil(a.rounds / clock.rounds_per_experiment)
    run.resolved.update(rounds=a.rounds, clock=clock.__dict__)
    body = ("rounds,rounds_per_experiment,experiments,emulated_s,experiment_s\n"
            f"{a.rounds},{clock.rounds_per_experiment},{n_exp},{emu!r},{exp!r}\n")
    path = run.write("timing", body)
    print(f"{a.rounds} rounds: emulated {emu * 1e6:.3f} us, experiment {exp * 1e6:.1f} us "
          f"({n_exp} experiments) -> {path}")


def cmd_bandwidth(run: Run):
    a, cfg = run.args, run.cfg
    kw = dict(
        detection_rate=_pick(a.detection_rate, cfg, "bandwidth", "detection_rate", 1.1e6),
        n_samples=_pick(a.n_samples, cfg, "bandwidth", "n_samples", 48_000),
        measurements_per_update=_pick(a.measurements_per_update, cfg, "bandwidth", "measurements_per_update", 2),
        n_patterns=_pick(a.patterns, cfg, "bandwidth", "n_patterns", 3),
        safety_factor=_pick(a.safety_factor, cfg, "bandwidth", "safety_factor", 12.7),
    )
    bw = tracking_bandwidth(**kw)
    run.resolved.update(kw)
    body = (",".join(list(kw) + ["update_rate_hz", "max_drift_hz"]) + "\n"
            + ",".join(repr(v) for v in kw.values()) + f",{bw.update_rate!r},{bw.max_drift!r}\n")
    path = run.write("bandwidth", body)
    print(f"update rate {bw.update_rate:.2f} Hz per qubit, max drift {bw.max_drift:.2f} Hz -> {path}")


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config file")
    common.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="adept", description="Detection-event driven calibration emulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="zeta versus one parameter offset")
    p.add_argument("--location", required=True, help="location id, e.g. sq_data:4 or sq_measure:3:0")
    p.add_argument("--param", help="parameter name (default: first at the location)")
    p.add_argument("--values", type=parse_range, default=parse_range("-1:1:41"),
                   help="offsets start:stop:count or a comma list (default -1:1:41)")
    p.add_argument("--instances", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--method", choices=("sim", "analytic"), default="sim")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", parents=[common], help="parallel Nelder-Mead over independent groupings")
    p.add_argument("--target", choices=("measure", "cz"), default="measure")
    p.add_argument("--iterations", type=int, help="evaluations per grouping (default 50 measure, 80 cz)")
    p.add_argument("--instances", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--evaluator", choices=("sim", "analytic"))
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("track", parents=[common], help="single measure-qubit drift campaign")
    p.add_argument("--qubit", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=10.0, help="drift amplitude, MHz")
    p.add_argument("--period", type=float, default=300.0, help="drift period, emulation steps")
    p.add_argument("--sensitivity", type=float, default=0.0035, help="flip probability per MHz^2")
    p.add_argument("--steps", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--no-compensate", action="store_true", help="control run without tracking")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("track-all", parents=[common], help="independent drift on every qubit")
    p.add_argument("--period", type=float, default=300.0)
    p.add_argument("--steps", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--no-compensate", action="store_true")
    p.set_defaults(func=cmd_track_all)

    p = sub.add_parser("patterns", parents=[common], help="list independent hardware patterns")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--radius", type=int, default=0, help="crosstalk radius in qubit positions")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("discover", parents=[common], help="find patterns by probing every parameter")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--threshold", type=float, default=0.01, help="zeta rise counted as a response")
    p.add_argument("--delta-p", type=float, default=0.05, help="flip probability added by each probe")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("timing", parents=[common], help="emulated versus experiment time")
    p.add_argument("--rounds", type=int, default=36)
    p.add_argument("--rounds-per-experiment", type=int)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("bandwidth", parents=[common], help="tracker update rate and drift bandwidth")
    p.add_argument("--detection-rate", type=float, help="detection rounds per second (default 1.1e6)")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--measurements-per-update", type=int)
    p.add_argument("--patterns", type=int)
    p.add_argument("--safety-factor", type=float)
    p.set_defaults(func=cmd_bandwidth)
    return ap


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let ``--values -1:1:41`` through; argparse would read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--values" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--values={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def run_command(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        args.func(Run(args, cfg, argv))
    except (CommandError, ConfigError, LayoutError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command())
