"""Independent groupings of gates and the hardware patterns that hold them.

A grouping pairs tunable gate locations with the measure qubits that detect
their errors. Groupings in one pattern share neither gates nor metric
qubits, so all of them can be tuned at the same time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Mapping

import numpy as np

from .chain import ChainLayout, GateLocation, Kind, ParameterRegistry, ParamType, gate_locations


@dataclass(frozen=True)
class Grouping:
    tunable_locations: frozenset[GateLocation]
    metric_qubits: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "tunable_locations", frozenset(self.tunable_locations))
        object.__setattr__(self, "metric_qubits", frozenset(self.metric_qubits))
        if not self.tunable_locations:
            raise ValueError("a grouping needs at least one tunable location")
        if not self.metric_qubits:
            raise ValueError("a grouping needs at least one metric qubit")

    @property
    def qubits(self) -> frozenset[int]:
        """Every qubit touched by the grouping's gates or metric."""
        q = set(self.metric_qubits)
        for loc in self.tunable_locations:
            q.update(loc.qubits)
        return frozenset(q)

    @property
    def label(self) -> str:
        homes = sorted({loc.home for loc in self.tunable_locations})
        return "+".join(f"q{h}" for h in homes) or "m" + "+".join(map(str, sorted(self.metric_qubits)))


@dataclass(frozen=True)
class Pattern:
    groupings: tuple[Grouping, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "groupings", tuple(self.groupings))

    @property
    def locations(self) -> frozenset[GateLocation]:
        return frozenset().union(*(g.tunable_locations for g in self.groupings))

    def __len__(self):
        return len(self.groupings)

    def __iter__(self):
        return iter(self.groupings)


def propagation_map(layout: ChainLayout) -> dict[GateLocation, frozenset[int]]:
    """Measure qubits on which errors of each gate location show up."""
    out = {}
    for loc in gate_locations(layout):
        if loc.kind in (Kind.SQ_MEASURE, Kind.READOUT):
            out[loc] = frozenset({loc.qubit})
        else:
            out[loc] = frozenset(layout.neighbors(loc.home))
    return out


def _data_grouping(layout: ChainLayout, d: int) -> Grouping:
    locs = {GateLocation(Kind.SQ_DATA, (d,))}
    for m in layout.neighbors(d):
        locs.add(GateLocation(Kind.CZ, (m, d), 0 if d < m else 1))
    return Grouping(frozenset(locs), frozenset(layout.neighbors(d)))


def standard_patterns(layout: ChainLayout) -> list[Pattern]:
    """The three patterns of the ideal repetition code.

    1. one grouping per measure qubit holding its own gates and readout;
    2. one grouping per data qubit at positions 0, 4, 8, ... holding its
       single-qubit gate and both of its CZs;
    3. the same for the remaining data qubits (2, 6, ...).
    """
    first = [
        Grouping(frozenset({GateLocation(Kind.SQ_MEASURE, (m,), 0), GateLocation(Kind.SQ_MEASURE, (m,), 1),
                            GateLocation(Kind.READOUT, (m,))}), frozenset({m}))
        for m in layout.measure_qubits
    ]
    second = [_data_grouping(layout, d) for d in layout.data_qubits if d % 4 == 0]
    third = [_data_grouping(layout, d) for d in layout.data_qubits if d % 4 == 2]
    return [Pattern(tuple(first), "1"), Pattern(tuple(second), "2"), Pattern(tuple(third), "3")]


def _gap(a: Grouping, b: Grouping) -> int:
    return min(abs(i - j) for i in a.qubits for j in b.qubits)


def _split_by_gap(pattern: Pattern, radius: int) -> list[list[Grouping]]:
    bins: list[list[Grouping]] = []
    for g in sorted(pattern.groupings, key=lambda g: min(g.qubits)):
        for b in bins:
            if all(_gap(g, other) > radius for other in b):
                b.append(g)
                break
        else:
            bins.append([g])
    return bins


def crosstalk_patterns(layout: ChainLayout, radius: int) -> list[Pattern]:
    """Standard patterns split so that concurrent groupings sit farther apart.

    Two groupings may share a pattern only if every qubit of one is more than
    ``radius`` positions from every qubit of the other. Splitting is greedy
    first-fit in chain order; ``radius`` 0 leaves the standard patterns as is.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    out = []
    for base in standard_patterns(layout):
        bins = _split_by_gap(base, radius)
        if len(bins) == 1:
            out.append(base)
            continue
        for k, b in enumerate(bins):
            out.append(Pattern(tuple(b), f"{base.name}{chr(ord('a') + k)}"))
    return out


@dataclass(frozen=True)
class IndependenceReport:
    ok: bool
    reason: str = ""
    location: GateLocation | None = None
    qubit: int | None = None

    def __bool__(self):
        return self.ok


def validate_independence(pattern: Pattern,
                          prop: Mapping[GateLocation, Iterable[int]]) -> IndependenceReport:
    """Check one pattern; the first violation found is reported, not raised."""
    seen_q: dict[int, int] = {}
    seen_loc: dict[GateLocation, int] = {}
    for gi, g in enumerate(pattern.groupings):
        for loc in sorted(g.tunable_locations):
            for q in sorted(prop.get(loc, ())):
                if q not in g.metric_qubits:
                    return IndependenceReport(
                        False, f"errors of {loc} reach qubit {q} outside grouping {gi}", loc, q)
            if loc in seen_loc:
                return IndependenceReport(
                    False, f"{loc} appears in groupings {seen_loc[loc]} and {gi}", loc, None)
            seen_loc[loc] = gi
        for q in sorted(g.metric_qubits):
            if q in seen_q:
                return IndependenceReport(
                    False, f"metric qubit {q} shared by groupings {seen_q[q]} and {gi}", None, q)
            seen_q[q] = gi
    return IndependenceReport(True)


# --- empirical discovery ----------------------------------------------------

Oracle = Callable[[GateLocation, str], np.ndarray]


@dataclass
class PatternSet:
    patterns: list[Pattern]
    propagation: dict[GateLocation, frozenset[int]]
    unobservable: list[GateLocation] = field(default_factory=list)


def probe_offset(ptype: ParamType, sensitivity: float, delta_p: float) -> float | None:
    """Offset at which a parameter adds ``delta_p`` flip probability; None if it cannot."""
    if sensitivity <= 0:
        return None
    if ptype is ParamType.ANGLE:
        frac = min(1.0, delta_p / sensitivity)
        return 2.0 * math.asin(math.sqrt(frac))
    return math.sqrt(delta_p / sensitivity)


def analytic_probe(layout: ChainLayout, registry: ParameterRegistry, model, rounds: int = 8,
                   delta_p: float = 0.05) -> Oracle:
    """Oracle returning the exact zeta change when one parameter is pushed off optimum."""
    from .sim import analytic_zeta

    base_reg = registry.snapshot()
    base_reg.reset_to_optimum()
    base = analytic_zeta(layout, base_reg, model, rounds)

    def oracle(location: GateLocation, name: str) -> np.ndarray:
        p = base_reg.get(location, name)
        off = probe_offset(p.type, p.sensitivity, delta_p)
        if off is None:
            return np.zeros_like(base)
        reg = base_reg.snapshot()
        reg.set_value(location, name, p.optimum + off)
        return analytic_zeta(layout, reg, model, rounds) - base

    return oracle


def discover_patterns(layout: ChainLayout, registry: ParameterRegistry, oracle: Oracle,
                      threshold: float) -> PatternSet:
    """Build patterns from measured responses instead of the circuit rules.

    Each registered parameter is probed once; a measure qubit joins the
    parameter's response set when its zeta rises by more than ``threshold``.
    Locations are grouped by owning qubit and groupings are packed first-fit
    in chain order into patterns with disjoint metric qubits.
    """
    measure = layout.measure_qubits
    prop: dict[GateLocation, set[int]] = {loc: set() for loc in gate_locations(layout)}
    for (loc, name), _ in registry:
        resp = np.asarray(oracle(loc, name))
        hit = {measure[j] for j in np.flatnonzero(resp > threshold)}
        # with two measure qubits an ordinary data qubit already reaches both
        if len(measure) > 2 and len(hit) == len(measure):
            raise ValueError(
                f"parameter {name!r} at {loc} raises zeta on every measure qubit; "
                "no independent pattern exists")
        prop.setdefault(loc, set()).update(hit)

    by_home: dict[int, tuple[set, set]] = {}
    unobservable = []
    for loc in sorted(prop, key=lambda l: (l.home, l)):
        if not prop[loc]:
            unobservable.append(loc)
            continue
        locs, metric = by_home.setdefault(loc.home, (set(), set()))
        locs.add(loc)
        metric.update(prop[loc])

    bins: list[list[Grouping]] = []
    for home in sorted(by_home):
        locs, metric = by_home[home]
        g = Grouping(frozenset(locs), frozenset(metric))
        for b in bins:
            if all(not (g.metric_qubits & o.metric_qubits) for o in b):
                b.append(g)
                break
        else:
            bins.append([g])
    patterns = [Pattern(tuple(b), str(k + 1)) for k, b in enumerate(bins)] or [Pattern((), "1")]
    return PatternSet(patterns, {loc: frozenset(s) for loc, s in prop.items()}, unobservable)


PATTERN_COLUMNS = ("pattern_id", "group_id", "location_id", "metric_qubits")


def write_patterns_csv(patterns: list[Pattern], fh: IO[str]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATTERN_COLUMNS)
    for pi, pat in enumerate(patterns):
        for gi, g in enumerate(pat.groupings):
            metric = " ".join(str(q) for q in sorted(g.metric_qubits))
            for loc in sorted(g.tunable_locations):
                w.writerow([pat.name or str(pi + 1), gi, loc.id, metric])
