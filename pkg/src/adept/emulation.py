"""Emulated continuous operation: ensembles, drift insertion and pattern cycling.

Parameters only change between ensembles. Each emulation step advances the
inserted drift, activates one hardware pattern and lets that pattern's
engine (bias tracker or Nelder-Mead) act on its groupings.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import track
from .chain import ChainLayout, ParameterRegistry, Role, build_chain, default_registry, freq_location
from .detect import DetectionStats, group_metric
from .optimize import GroupResult, NelderMead, NMConfig, TraceRow, apply_params, finish_group
from .patterns import Grouping, Pattern, standard_patterns
from .sim import ErrorModelConfig, analytic_zeta, channel_zeta, compile_channels, run_channels, uniform_model

log = logging.getLogger(__name__)


# --- clock and bandwidth ----------------------------------------------------

@dataclass(frozen=True)
class EmulationClock:
    """Durations in seconds."""

    round_time: float = 878e-9
    init_time: float = 25e-9
    end_time: float = 1e-6
    reset_time: float = 250e-6
    rounds_per_experiment: int = 8

    def __post_init__(self):
        if min(self.round_time, self.init_time, self.end_time, self.reset_time) <= 0:
            raise ValueError("all durations must be > 0")
        if self.rounds_per_experiment < 1:
            raise ValueError("rounds_per_experiment must be >= 1")

    @property
    def overhead(self) -> float:
        return self.init_time + self.end_time + self.reset_time


def emulated_time(total_rounds: int, clock: EmulationClock = EmulationClock()) -> float:
    """Time a continuously running device would spend on ``total_rounds``."""
    if total_rounds < 0:
        raise ValueError("total_rounds must be >= 0")
    return clock.round_time * total_rounds


def experiment_time(total_rounds: int, clock: EmulationClock = EmulationClock()) -> float:
    """Wall time when the rounds are split into separately initialised experiments."""
    n_exp = math.ceil(total_rounds / clock.rounds_per_experiment)
    return emulated_time(total_rounds, clock) + n_exp * clock.overhead


@dataclass(frozen=True)
class Bandwidth:
    update_rate: float
    max_drift: float


def tracking_bandwidth(detection_rate: float = 1.1e6, n_samples: int = 48_000,
                       measurements_per_update: int = 2, n_patterns: int = 3,
                       safety_factor: float = 12.7) -> Bandwidth:
    """Per-qubit update rate (Hz) and the fastest drift frequency it can follow.

    ``safety_factor`` converts update rate into trackable drift frequency;
    the default 12.7 maps the default inputs (3.82 Hz) to about 0.30 Hz.
    """
    for name, v in (("detection_rate", detection_rate), ("n_samples", n_samples),
                    ("measurements_per_update", measurements_per_update),
                    ("n_patterns", n_patterns), ("safety_factor", safety_factor)):
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v}")
    rate = detection_rate / (n_patterns * measurements_per_update * n_samples)
    return Bandwidth(rate, rate / safety_factor)


# --- drift ------------------------------------------------------------------

@dataclass(frozen=True)
class Drift:
    amplitude: float
    period: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drift amplitude must be >= 0")
        if self.period <= 0:
            raise ValueError("drift period must be > 0")


@dataclass
class DriftProgram:
    """Sinusoidal bias drift per qubit, period in emulation steps."""

    drifts: dict[int, Drift] = field(default_factory=dict)

    def offset(self, qubit: int, step: int) -> float:
        d = self.drifts.get(qubit)
        if d is None:
            return 0.0
        return d.amplitude * math.sin(2 * math.pi * step / d.period + d.phase)


def inject_drift(program: DriftProgram, step: int, qubits: Sequence[int]) -> dict[int, float]:
    if step < 0:
        raise ValueError("step must be >= 0")
    return {q: program.offset(q, step) for q in qubits}


# --- campaign configuration -------------------------------------------------

@dataclass
class CampaignConfig:
    """One campaign. ``instances`` x ``rounds`` rounds make one zeta measurement.

    A tracker step spends two measurements (one per probe); an optimizer
    step spends one.
    """

    n_qubits: int = 9
    instances: int = 6000
    rounds: int = 8
    steps: int = 300
    seed: int = 0
    pattern_order: tuple[int, ...] = (1, 2, 3)
    engine: str = "tracker"
    compensate: bool = True
    tracked_param: str = "freq"
    F: float = 0.1
    P: float | None = None
    # fixed curvature / background; None calibrates each grouping from the model
    a: float | None = None
    zeta0: float | None = None
    N: int | None = 48_000
    threads: int = 1
    include_terminal: bool = False
    clock: EmulationClock = field(default_factory=EmulationClock)

    def __post_init__(self):
        if self.engine not in ("tracker", "optimizer"):
            raise ValueError(f"engine must be 'tracker' or 'optimizer', got {self.engine!r}")
        if self.instances < 1 or self.rounds < 1 or self.steps < 0:
            raise ValueError("instances and rounds must be >= 1 and steps >= 0")
        if not self.pattern_order:
            raise ValueError("pattern_order must not be empty")

    @property
    def samples_per_measurement(self) -> int:
        return self.instances * self.rounds

    def required_samples(self, cfg: track.TrackerConfig | None = None) -> int:
        if self.N is not None:
            return int(self.N)
        if self.P is None or cfg is None:
            raise ValueError("set either N or P for the tracker")
        return track.required_samples(cfg)


@dataclass
class StepLog:
    step: int
    pattern: str
    inserted: dict[int, float]
    compensation: dict[int, float]
    stats: DetectionStats
    updates: dict[int, float]
    total_rounds: int


@dataclass
class GroupTracker:
    group: Grouping
    qubit: int
    cfg: track.TrackerConfig
    state: track.TrackerState


def calibrate_group(layout: ChainLayout, registry: ParameterRegistry, model: ErrorModelConfig,
                    group: Grouping, qubit: int, param: str, F: float, rounds: int):
    """Curvature and background of a grouping's metric versus one bias parameter.

    The three-point fit is refined once with the probe offset itself as the
    step, so the model is exact at the points the tracker will sample.
    """
    loc = freq_location(layout, qubit)
    reg = registry.snapshot()
    opt = reg.get(loc, param).optimum
    idx = [layout.measure_index(q) for q in sorted(group.metric_qubits)]

    def metric(x):
        reg.set_value(loc, param, x)
        return float(np.mean(analytic_zeta(layout, reg, model, rounds)[idx]))

    zeta0 = metric(opt)
    a, _ = track.fit_curvature(metric, opt, 1.0)
    dx = math.sqrt(zeta0 * F / a)
    a, _ = track.fit_curvature(metric, opt, dx)
    return a, zeta0


def _home_qubit(group: Grouping) -> int:
    homes = {loc.home for loc in group.tunable_locations}
    if len(homes) != 1:
        raise ValueError(f"grouping {group.label} spans several qubits; cannot pick a tracked qubit")
    return homes.pop()


class Emulation:
    """Sequential feedback loop over emulation steps."""

    def __init__(self, config: CampaignConfig, drift: DriftProgram | None = None,
                 registry: ParameterRegistry | None = None, model: ErrorModelConfig | None = None,
                 patterns: list[Pattern] | None = None):
        self.config = config
        self.layout = build_chain(config.n_qubits)
        self.registry = registry if registry is not None else default_registry(self.layout)
        self.model = model if model is not None else uniform_model(self.layout)
        self.patterns = patterns if patterns is not None else standard_patterns(self.layout)
        self.drift = drift or DriftProgram()
        for p in config.pattern_order:
            if not 1 <= p <= len(self.patterns):
                raise ValueError(f"pattern {p} out of range 1..{len(self.patterns)}")
        self.base_optimum = {
            q: self.registry.get(freq_location(self.layout, q), config.tracked_param).optimum
            for q in range(self.layout.n_qubits)
        }
        self.step_index = 0
        self.total_rounds = 0
        self.logs: list[StepLog] = []
        self.trackers: dict[int, GroupTracker] = {}
        if config.engine == "tracker":
            self._setup_trackers()

    # --- setup ---------------------------------------------------------------

    def _setup_trackers(self):
        cfg = self.config
        n_have = cfg.samples_per_measurement
        for pat_no in dict.fromkeys(cfg.pattern_order):
            for g in self.patterns[pat_no - 1]:
                q = _home_qubit(g)
                a, zeta0 = calibrate_group(self.layout, self.registry, self.model, g, q,
                                           cfg.tracked_param, cfg.F, cfg.rounds)
                a = cfg.a if cfg.a is not None else a
                zeta0 = cfg.zeta0 if cfg.zeta0 is not None else zeta0
                P = cfg.P if cfg.P is not None else 0.5
                tcfg = track.TrackerConfig(a=a, zeta0=zeta0, F=cfg.F, P=P)
                n_need = cfg.required_samples(tcfg)
                if n_have < n_need:
                    raise ValueError(
                        f"{cfg.instances} instances x {cfg.rounds} rounds = {n_have} samples per "
                        f"probe, tracker on qubit {q} needs {n_need}")
                if cfg.P is None:
                    tcfg = track.TrackerConfig(a=a, zeta0=zeta0, F=cfg.F,
                                               P=min(0.999, track.implied_precision(tcfg, n_have)))
                x0 = self.registry.get(freq_location(self.layout, q), cfg.tracked_param).value
                state = track.TrackerState(x0=x0, dx_probe=track.sample_offset(tcfg), n_samples=n_have)
                self.trackers[q] = GroupTracker(g, q, tcfg, state)
                log.debug("tracker q%d: a=%.5g zeta0=%.4f dx=%.4g", q, a, zeta0, state.dx_probe)

    # --- helpers -------------------------------------------------------------

    def _set_bias(self, qubit: int, value: float):
        self.registry.set_value(freq_location(self.layout, qubit), self.config.tracked_param, value)

    def bias(self, qubit: int) -> float:
        return self.registry.get(freq_location(self.layout, qubit), self.config.tracked_param).value

    def _apply_drift(self, step: int) -> dict[int, float]:
        inserted = inject_drift(self.drift, step, range(self.layout.n_qubits))
        for q, off in inserted.items():
            # the inserted bias shifts the qubit; the best setting moves the other way
            self.registry.set_optimum(freq_location(self.layout, q), self.config.tracked_param,
                                      self.base_optimum[q] - off)
        return inserted

    def _measure(self, tag) -> DetectionStats:
        cfg = self.config
        ch = compile_channels(self.layout, self.registry, self.model)
        stats = run_channels(self.layout, ch, cfg.rounds, cfg.instances, cfg.seed, tag=tag,
                             threads=cfg.threads, include_terminal=cfg.include_terminal)
        self.total_rounds += cfg.rounds * cfg.instances
        return stats

    def active_pattern(self, step: int) -> int:
        order = self.config.pattern_order
        return order[step % len(order)]

    # --- one step -----------------------------------------------------------

    def run_tracking_step(self) -> StepLog:
        if self.config.engine != "tracker":
            raise ValueError("tracking steps need engine='tracker'; "
                             "gate optimisation runs through run_optimization_campaign")
        s = self.step_index
        pat_no = self.active_pattern(s)
        inserted = self._apply_drift(s)
        active = [self.trackers[_home_qubit(g)] for g in self.patterns[pat_no - 1]]
        updates = {}
        if self.config.compensate:
            for t in active:
                self._set_bias(t.qubit, t.state.probes[0])
            plus = self._measure((s, 0))
            for t in active:
                self._set_bias(t.qubit, t.state.probes[1])
            minus = self._measure((s, 1))
            for t in active:
                zp, _ = group_metric(plus, t.group)
                zm, _ = group_metric(minus, t.group)
                updates[t.qubit] = track.tracker_update(t.cfg, t.state, zp, zm)
                self._set_bias(t.qubit, t.state.x0)
        else:
            plus = self._measure((s, 0))
            minus = self._measure((s, 1))
        return self._record(s, pat_no, inserted, plus + minus, updates)

    def _record(self, s, pat_no, inserted, stats, updates) -> StepLog:
        comp = {q: self.bias(q) - self.base_optimum[q] for q in range(self.layout.n_qubits)}
        entry = StepLog(s, str(pat_no), inserted, comp, stats, updates, self.total_rounds)
        self.logs.append(entry)
        self.step_index += 1
        return entry

    def run(self, steps: int | None = None) -> list[StepLog]:
        for _ in range(self.config.steps if steps is None else steps):
            self.run_tracking_step()
        return self.logs

    # --- reporting ----------------------------------------------------------

    def baseline_zeta(self) -> np.ndarray:
        reg = self.registry.snapshot()
        reg.reset_to_optimum()
        for q in range(self.layout.n_qubits):
            reg.set_optimum(freq_location(self.layout, q), self.config.tracked_param, self.base_optimum[q])
            reg.set_value(freq_location(self.layout, q), self.config.tracked_param, self.base_optimum[q])
        return analytic_zeta(self.layout, reg, self.model, self.config.rounds, self.config.include_terminal)


def run_emulation_step(emulation: Emulation) -> StepLog:
    return emulation.run_tracking_step()


@dataclass
class CampaignResult:
    emulation: Emulation
    logs: list[StepLog]

    def series(self, qubit: int) -> dict[str, np.ndarray]:
        lay = self.emulation.layout
        out = {
            "step": np.array([l.step for l in self.logs]),
            "inserted": np.array([l.inserted[qubit] for l in self.logs]),
            "compensation": np.array([l.compensation[qubit] for l in self.logs]),
        }
        if lay.role(qubit) is Role.MEASURE:
            out["zeta"] = np.array([l.stats.zeta_of(qubit) for l in self.logs])
            out["stderr"] = np.array([l.stats.stderr_of(qubit) for l in self.logs])
        return out

    def summary(self) -> dict:
        lay = self.emulation.layout
        max_err = {q: float(np.max(np.abs(self.series(q)["compensation"] + self.series(q)["inserted"])))
                   if self.logs else 0.0 for q in range(lay.n_qubits)}
        mean_zeta = {m: float(np.mean(self.series(m)["zeta"])) if self.logs else float("nan")
                     for m in lay.measure_qubits}
        return {"max_tracking_error": max_err, "mean_zeta": mean_zeta}


def run_tracking_campaign(config: CampaignConfig, drift: DriftProgram | None = None,
                          registry: ParameterRegistry | None = None,
                          model: ErrorModelConfig | None = None) -> CampaignResult:
    emu = Emulation(config, drift, registry, model)
    emu.run()
    return CampaignResult(emu, emu.logs)


CAMPAIGN_COLUMNS = ("step", "pattern_id", "qubit", "inserted_bias", "compensation", "zeta", "stderr",
                    "emulated_time_s")


def write_campaign_csv(result: CampaignResult, fh: IO[str]):
    """One row per step and qubit; zeta/stderr are blank for data qubits."""
    emu = result.emulation
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CAMPAIGN_COLUMNS)
    for entry in result.logs:
        t = emulated_time(entry.total_rounds, emu.config.clock)
        for q in range(emu.layout.n_qubits):
            if emu.layout.role(q) is Role.MEASURE:
                z, se = repr(entry.stats.zeta_of(q)), repr(entry.stats.stderr_of(q))
            else:
                z = se = ""
            w.writerow([entry.step, entry.pattern, q, repr(entry.inserted[q]),
                        repr(entry.compensation[q]), z, se, repr(t)])


# --- parallel gate optimisation ---------------------------------------------

@dataclass
class OptimizationPlan:
    """Groupings optimised together and the parameter keys each one tunes."""

    groups: dict[str, Grouping]
    keys: dict[str, list]


def run_optimization_campaign(layout: ChainLayout, registry: ParameterRegistry, model: ErrorModelConfig,
                              plan: OptimizationPlan, nm: NMConfig, *, evaluator: str = "sim",
                              instances: int = 4500, rounds: int = 8, seed: int = 0,
                              threads: int = 1) -> dict[str, GroupResult]:
    """Optimise every grouping of a plan at once, one shared ensemble per step.

    ``registry`` is updated in place to each group's best vertex at the end.
    """
    if evaluator not in ("sim", "analytic"):
        raise ValueError(f"evaluator must be 'sim' or 'analytic', got {evaluator!r}")
    opts = {}
    results = {}
    for gid, keys in plan.keys.items():
        x0 = [registry.get(loc, name).value for loc, name in keys]
        opts[gid] = NelderMead(x0, nm)
        results[gid] = GroupResult(list(keys))
    step = 0
    while not all(o.done for o in opts.values()):
        xs = {gid: o.propose() for gid, o in opts.items() if not o.done}
        for gid, x in xs.items():
            apply_params(registry, plan.keys[gid], x)
        ch = compile_channels(layout, registry, model)
        if evaluator == "sim":
            stats = run_channels(layout, ch, rounds, instances, seed, tag=(step,), threads=threads)
            metrics = {gid: group_metric(stats, plan.groups[gid]) for gid in xs}
        else:
            zeta = channel_zeta(layout, ch, rounds)
            metrics = {}
            for gid in xs:
                idx = [layout.measure_index(q) for q in sorted(plan.groups[gid].metric_qubits)]
                metrics[gid] = (float(np.mean(zeta[idx])), 0.0)
        for gid, x in xs.items():
            z, se = metrics[gid]
            results[gid].trace.append(TraceRow(opts[gid].state.evaluations, x.copy(), z, se))
            opts[gid].observe(z)
        step += 1
    for gid, o in opts.items():
        finish_group(results[gid], o)
        apply_params(registry, plan.keys[gid], results[gid].best_params)
    return results
