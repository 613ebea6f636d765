"""Ask/tell Nelder-Mead for noisy detection-fraction objectives.

The optimizer never calls the objective. :meth:`NelderMead.propose` hands out
the next point, the caller measures it however it likes (alone, or inside an
ensemble shared with other groupings) and reports back through
:meth:`NelderMead.observe`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from .chain import ParameterRegistry, ParamKey


class NMError(RuntimeError):
    pass


@dataclass(frozen=True)
class NMConfig:
    """Simplex coefficients and budget.

    ``max_iterations`` counts objective evaluations; each one is one
    emulation step. ``reeval_every`` re-measures the best vertex after that
    many completed simplex iterations (0 disables it).
    """

    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5
    step: float | tuple[float, ...] = 0.1
    max_iterations: int = 50
    reeval_every: int = 5
    lower: float | tuple[float, ...] = -np.inf
    upper: float | tuple[float, ...] = np.inf

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.gamma > 1:
            raise ValueError("gamma must be > 1")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SimplexState:
    vertices: list[np.ndarray]
    values: list[float]
    phase: str = "init"
    iteration: int = 0
    evaluations: int = 0
    pending: np.ndarray | None = None
    # scratch for the iteration in progress
    centroid: np.ndarray | None = None
    reflected: tuple[np.ndarray, float] | None = None
    shrink_index: int = 0
    reevaluated_at: int = 0

    @property
    def dim(self) -> int:
        return len(self.vertices[0])

    @property
    def best(self) -> tuple[np.ndarray, float]:
        i = int(np.argmin(self.values))
        return self.vertices[i], self.values[i]


class NelderMead:
    def __init__(self, x0: Sequence[float], config: NMConfig = NMConfig()):
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim != 1 or len(x0) < 1:
            raise ValueError("x0 must be a non-empty vector")
        self.config = config
        d = len(x0)
        self._lo = np.broadcast_to(np.asarray(config.lower, dtype=float), (d,))
        self._hi = np.broadcast_to(np.asarray(config.upper, dtype=float), (d,))
        step = np.broadcast_to(np.asarray(config.step, dtype=float), (d,))
        verts = [self._clip(x0)]
        for i in range(d):
            v = x0.copy()
            v[i] += step[i]
            verts.append(self._clip(v))
        # values filled in during the init phase
        self.state = SimplexState(verts, [np.nan] * (d + 1))

    def _clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self._lo, self._hi)

    @property
    def done(self) -> bool:
        return self.state.evaluations >= self.config.max_iterations

    def propose(self) -> np.ndarray:
        s = self.state
        if s.pending is not None:
            return s.pending.copy()
        cfg = self.config
        if s.phase == "init":
            s.pending = s.vertices[s.evaluations]
        elif s.phase == "shrink":
            s.pending = s.vertices[s.shrink_index]
        else:
            if (cfg.reeval_every and s.iteration > 0 and s.iteration % cfg.reeval_every == 0
                    and s.reevaluated_at != s.iteration):
                s.phase = "reeval"
                s.pending = self.state.best[0]
            else:
                self._sort()
                s.centroid = np.mean(s.vertices[:-1], axis=0)
                s.phase = "reflect"
                s.pending = self._clip(s.centroid + cfg.alpha * (s.centroid - s.vertices[-1]))
        return s.pending.copy()

    def observe(self, value: float) -> SimplexState:
        s = self.state
        if s.pending is None:
            raise NMError("observe() called without a pending proposal")
        x, f = s.pending, float(value)
        s.pending = None
        s.evaluations += 1
        handler = getattr(self, f"_after_{s.phase}")
        handler(x, f)
        return s

    # --- transitions ---------------------------------------------------------

    def _sort(self):
        s = self.state
        order = np.argsort(s.values, kind="stable")
        s.vertices = [s.vertices[i] for i in order]
        s.values = [s.values[i] for i in order]

    def _finish_iteration(self):
        s = self.state
        s.iteration += 1
        s.phase = "reflect"
        self._sort()

    def _after_init(self, x, f):
        s = self.state
        s.values[s.evaluations - 1] = f
        if s.evaluations == len(s.vertices):
            self._sort()
            s.phase = "reflect"

    def _after_reeval(self, x, f):
        s = self.state
        i = int(np.argmin(s.values))
        s.values[i] = f
        s.reevaluated_at = s.iteration
        self._sort()
        s.phase = "reflect"

    def _replace_worst(self, x, f):
        s = self.state
        s.vertices[-1] = x
        s.values[-1] = f
        self._finish_iteration()

    def _after_reflect(self, x, f):
        s, cfg = self.state, self.config
        f_best, f_second, f_worst = s.values[0], s.values[-2], s.values[-1]
        if f_best <= f < f_second:
            self._replace_worst(x, f)
        elif f < f_best:
            s.reflected = (x, f)
            s.phase = "expand"
            s.pending = self._clip(s.centroid + cfg.gamma * (x - s.centroid))
        elif f < f_worst:
            s.reflected = (x, f)
            s.phase = "contract_out"
            s.pending = self._clip(s.centroid + cfg.rho * (x - s.centroid))
        else:
            s.reflected = (x, f)
            s.phase = "contract_in"
            s.pending = self._clip(s.centroid + cfg.rho * (s.vertices[-1] - s.centroid))

    def _after_expand(self, x, f):
        xr, fr = self.state.reflected
        if f < fr:
            self._replace_worst(x, f)
        else:
            self._replace_worst(xr, fr)

    def _after_contract_out(self, x, f):
        if f <= self.state.reflected[1]:
            self._replace_worst(x, f)
        else:
            self._start_shrink()

    def _after_contract_in(self, x, f):
        if f < self.state.values[-1]:
            self._replace_worst(x, f)
        else:
            self._start_shrink()

    def _start_shrink(self):
        s, cfg = self.state, self.config
        best = s.vertices[0]
        s.vertices = [best] + [self._clip(best + cfg.sigma * (v - best)) for v in s.vertices[1:]]
        s.phase = "shrink"
        s.shrink_index = 1
        s.pending = s.vertices[1]

    def _after_shrink(self, x, f):
        s = self.state
        s.values[s.shrink_index] = f
        s.shrink_index += 1
        if s.shrink_index == len(s.vertices):
            self._finish_iteration()
        else:
            s.pending = s.vertices[s.shrink_index]


def nm_propose(opt: NelderMead) -> np.ndarray:
    return opt.propose()


def nm_observe(opt: NelderMead, value: float) -> SimplexState:
    return opt.observe(value)


def minimize(f: Callable[[np.ndarray], float], x0, config: NMConfig = NMConfig()) -> NelderMead:
    """Run the ask/tell loop on a plain callable until the budget is spent."""
    opt = NelderMead(x0, config)
    while not opt.done:
        opt.observe(f(opt.propose()))
    return opt


# --- gate-parameter optimisation -------------------------------------------

Evaluator = Callable[[np.ndarray], tuple[float, float]]


@dataclass
class TraceRow:
    iteration: int
    params: np.ndarray
    zeta: float
    stderr: float


@dataclass
class GroupResult:
    keys: list[ParamKey]
    trace: list[TraceRow] = field(default_factory=list)
    best_params: np.ndarray | None = None
    best_zeta: float = np.nan

    def best_seen(self) -> np.ndarray:
        return np.minimum.accumulate([r.zeta for r in self.trace])


def group_parameters(group, registry: ParameterRegistry, names: Sequence[str] | None = None) -> list[ParamKey]:
    """Registered parameters of a grouping's locations, in location order."""
    keys = []
    for loc in sorted(group.tunable_locations):
        for p in registry.at(loc):
            if names is None or p.name in names:
                keys.append((loc, p.name))
    return keys


def apply_params(registry: ParameterRegistry, keys: Sequence[ParamKey], x: np.ndarray):
    for (loc, name), v in zip(keys, x):
        registry.set_value(loc, name, v)


def finish_group(result: GroupResult, opt: NelderMead):
    x, f = opt.state.best
    result.best_params = np.array(x, dtype=float)
    result.best_zeta = float(f)


def optimize_group(keys: Sequence[ParamKey], x0, evaluator: Evaluator,
                   config: NMConfig = NMConfig()) -> GroupResult:
    """Tune one grouping's parameters, one evaluation per emulation step."""
    opt = NelderMead(x0, config)
    result = GroupResult(list(keys))
    while not opt.done:
        x = opt.propose()
        z, se = evaluator(x)
        result.trace.append(TraceRow(opt.state.evaluations, x.copy(), float(z), float(se)))
        opt.observe(z)
    finish_group(result, opt)
    return result


def analytic_evaluator(layout, registry: ParameterRegistry, model, group, keys: Sequence[ParamKey],
                       rounds: int = 8, opportunities: int | None = None) -> Evaluator:
    """Exact group metric; the reported SE is what ``opportunities`` rounds would give."""
    from .sim import analytic_zeta

    reg = registry.snapshot()
    idx = [layout.measure_index(q) for q in sorted(group.metric_qubits)]

    def evaluate(x):
        apply_params(reg, keys, x)
        z = analytic_zeta(layout, reg, model, rounds)[idx]
        if opportunities:
            se = float(np.sqrt(np.sum(z * (1 - z) / opportunities)) / len(z))
        else:
            se = 0.0
        return float(np.mean(z)), se

    return evaluate


def simulated_evaluator(layout, registry: ParameterRegistry, model, group, keys: Sequence[ParamKey],
                        rounds: int, instances: int, seed: int, threads: int = 1) -> Evaluator:
    """Monte Carlo group metric; every call draws a fresh ensemble."""
    from .detect import group_metric
    from .sim import run_batch

    reg = registry.snapshot()
    calls = [0]

    def evaluate(x):
        apply_params(reg, keys, x)
        stats = run_batch(layout, reg, model, rounds, instances, seed, tag=(calls[0],), threads=threads)
        calls[0] += 1
        return group_metric(stats, group)

    return evaluate


def trace_columns(n_params: int) -> list[str]:
    return ["group_id", "iteration"] + [f"param_{i}" for i in range(n_params)] + ["zeta_mean", "stderr"]


def write_trace_csv(results: dict[str, GroupResult], fh: IO[str]):
    width = max((len(r.keys) for r in results.values()), default=0)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_columns(width))
    for gid, res in results.items():
        for row in res.trace:
            vals = [repr(float(v)) for v in row.params] + [""] * (width - len(row.params))
            w.writerow([gid, row.iteration] + vals + [repr(row.zeta), repr(row.stderr)])
