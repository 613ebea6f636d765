"""Bit-flip channel model of the repetition-code circuit.

Every gate location turns into one or more independent flip channels. A
channel either toggles a data qubit (persistent, seen by both measure
neighbours from that round on) or flips one round's reported outcome of a
measure qubit (transient). The Monte Carlo path samples these channels;
:func:`analytic_zeta` computes the exact expected detection fraction from the
same channel list.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import ChainLayout, GateLocation, Kind, ParameterRegistry, ParamType, gate_locations
from .detect import DetectionStats, compute_zeta, extract_events

DATA, MEASURE = 0, 1

# Instances simulated per vectorised block; only affects memory use.
BLOCK = 1024


@dataclass
class ErrorModelConfig:
    """Base flip probabilities and routing rules.

    ``crosstalk`` maps a source location to ``{measure_qubit: fraction}``: that
    fraction of the source's parameter-induced excess flip probability is
    added as an outcome flip on the named measure qubit.
    """

    p_base: dict[GateLocation, float]
    cz_split: float = 1.0
    crosstalk: dict[GateLocation, dict[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.cz_split <= 1.0:
            raise ValueError(f"cz_split must lie in [0, 1], got {self.cz_split}")
        for loc, p in self.p_base.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"p_base of {loc} must lie in [0, 1], got {p}")
        for loc, bleed in self.crosstalk.items():
            if any(f < 0 for f in bleed.values()):
                raise ValueError(f"crosstalk fractions of {loc} must be >= 0")


# Per-kind base flip probabilities giving an interior background zeta of
# about 0.15 with cz_split = 1.
DEFAULT_P_BASE = {
    Kind.SQ_DATA: 0.015,
    Kind.SQ_MEASURE: 0.008,
    Kind.CZ: 0.015,
    Kind.READOUT: 0.03,
}


def uniform_model(layout: ChainLayout, p_base: dict | float | None = None,
                  cz_split: float = 1.0, crosstalk=None) -> ErrorModelConfig:
    """Model with one base probability per location kind (or one for all)."""
    if p_base is None:
        p_base = DEFAULT_P_BASE
    if not isinstance(p_base, dict):
        p_base = {k: float(p_base) for k in Kind}
    p_base = {Kind(k): v for k, v in p_base.items()}
    return ErrorModelConfig(
        {loc: float(p_base[loc.kind]) for loc in gate_locations(layout)},
        cz_split=cz_split,
        crosstalk=dict(crosstalk or {}),
    )


def law(ptype: ParamType, sensitivity: float, offset: float) -> float:
    """Flip probability added by a parameter sitting ``offset`` from its optimum."""
    if ptype is ParamType.ANGLE:
        return sensitivity * math.sin(offset / 2.0) ** 2
    return sensitivity * offset * offset


def excess_probability(location: GateLocation, registry: ParameterRegistry) -> float:
    return sum(law(p.type, p.sensitivity, p.offset) for p in registry.at(location))


def flip_probability(location: GateLocation, registry: ParameterRegistry,
                     model: ErrorModelConfig) -> float:
    try:
        base = model.p_base[location]
    except KeyError:
        raise KeyError(f"location {location} has no entry in the error model") from None
    return min(1.0, max(0.0, base + excess_probability(location, registry)))


@dataclass(frozen=True)
class Channels:
    """Flattened flip channels: probability, target kind and target index.

    Target index is a position in ``layout.data_qubits`` for data channels
    and in ``layout.measure_qubits`` for measure channels.
    """

    prob: np.ndarray
    target_kind: np.ndarray
    target: np.ndarray
    n_data: int
    n_measure: int

    def __len__(self):
        return len(self.prob)

    def matrix(self, kind: int) -> np.ndarray:
        width = self.n_data if kind == DATA else self.n_measure
        a = np.zeros((len(self), width), dtype=np.float32)
        rows = np.flatnonzero(self.target_kind == kind)
        a[rows, self.target[rows]] = 1.0
        return a


def compile_channels(layout: ChainLayout, registry: ParameterRegistry,
                     model: ErrorModelConfig) -> Channels:
    """Expand every gate location into its flip channels, in schedule order.

    The channel count and order depend on the layout and crosstalk keys only,
    never on parameter values, so random streams line up across settings.
    """
    prob, kind, target = [], [], []

    def add(p, k, t):
        prob.append(min(1.0, max(0.0, p)))
        kind.append(k)
        target.append(t)

    for loc in gate_locations(layout):
        p = flip_probability(loc, registry, model)
        if loc.kind is Kind.SQ_DATA:
            add(p, DATA, layout.data_index(loc.qubit))
        elif loc.kind is Kind.CZ:
            m, d = loc.qubits
            add(p * model.cz_split, DATA, layout.data_index(d))
            add(p * (1.0 - model.cz_split), MEASURE, layout.measure_index(m))
        else:
            add(p, MEASURE, layout.measure_index(loc.qubit))
    for loc in sorted(model.crosstalk):
        excess = min(1.0, excess_probability(loc, registry))
        for q in sorted(model.crosstalk[loc]):
            add(excess * model.crosstalk[loc][q], MEASURE, layout.measure_index(q))
    return Channels(np.array(prob), np.array(kind, dtype=np.int8), np.array(target, dtype=np.int64),
                    len(layout.data_qubits), len(layout.measure_qubits))


@dataclass
class TrialRecord:
    """Measure-qubit outcomes of one experiment (or a batch, on leading axes).

    ``outcomes``/``reference`` have shape ``(..., T, M)``. ``terminal`` is the
    parity inferred from a final error-free readout of the data qubits.
    """

    outcomes: np.ndarray
    reference: np.ndarray
    terminal: np.ndarray
    terminal_reference: np.ndarray

    @property
    def rounds(self) -> int:
        return self.outcomes.shape[-2]


# --- counter-based random streams -------------------------------------------

def stream_key(seed: int, tag: Sequence[int] = ()) -> np.ndarray:
    """128-bit Philox key for ``seed`` and an ensemble tag such as ``(step, probe)``."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(t) for t in tag)).generate_state(
        2, np.uint64)


@dataclass(frozen=True)
class Stream:
    """Random stream of one experiment instance: Philox counter word 3 is the index."""

    key: np.ndarray
    instance: int

    def uniforms(self, count: int) -> np.ndarray:
        return _uniforms(self.key, [self.instance], count)[0]


def instance_stream(seed: int, instance: int, tag: Sequence[int] = ()) -> Stream:
    return Stream(stream_key(seed, tag), int(instance))


def _uniforms(key: np.ndarray, instances, count: int) -> np.ndarray:
    bg = np.random.Philox(key=key)
    gen = np.random.Generator(bg)
    state = bg.state
    out = np.empty((len(instances), count))
    for row, i in enumerate(instances):
        state["state"]["counter"] = np.array([0, 0, 0, i], dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bg.state = state
        out[row] = gen.random(count)
    return out


# --- Monte Carlo ------------------------------------------------------------

def _neighbor_matrix(layout: ChainLayout) -> np.ndarray:
    a = np.zeros((len(layout.data_qubits), len(layout.measure_qubits)), dtype=np.float32)
    for j, m in enumerate(layout.measure_qubits):
        for d in layout.neighbors(m):
            a[layout.data_index(d), j] = 1.0
    return a


def _mod2(x: np.ndarray) -> np.ndarray:
    return (np.rint(x).astype(np.int64) & 1).astype(np.uint8)


def _simulate(layout: ChainLayout, ch: Channels, u: np.ndarray) -> TrialRecord:
    """Vectorised circuit run; ``u`` holds uniforms of shape ``(I, T, C)``."""
    n_inst, rounds, _ = u.shape
    flips = (u < ch.prob).astype(np.float32)
    data_flips = _mod2(flips @ ch.matrix(DATA))
    data_state = np.bitwise_xor.accumulate(data_flips, axis=1)
    parity = _mod2(data_state.astype(np.float32) @ _neighbor_matrix(layout))
    outcomes = parity ^ _mod2(flips @ ch.matrix(MEASURE))
    terminal = parity[:, -1, :]
    return TrialRecord(outcomes, np.zeros_like(outcomes), terminal, np.zeros_like(terminal))


def simulate_experiment(layout: ChainLayout, registry: ParameterRegistry, model: ErrorModelConfig,
                        rounds: int, stream: Stream) -> TrialRecord:
    """One experiment of ``rounds`` detection rounds from the all-zeros state."""
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    ch = compile_channels(layout, registry, model)
    u = stream.uniforms(rounds * len(ch)).reshape(1, rounds, len(ch))
    rec = _simulate(layout, ch, u)
    return TrialRecord(rec.outcomes[0], rec.reference[0], rec.terminal[0], rec.terminal_reference[0])


def _block_events(layout, ch, key, lo, hi, rounds, include_terminal) -> DetectionStats:
    u = _uniforms(key, range(lo, hi), rounds * len(ch)).reshape(hi - lo, rounds, len(ch))
    events = extract_events(_simulate(layout, ch, u), include_terminal)
    return compute_zeta(events, layout.measure_qubits)


def run_channels(layout: ChainLayout, ch: Channels, rounds: int, instances: int, seed: int,
                 tag: Sequence[int] = (), threads: int = 1,
                 include_terminal: bool = False) -> DetectionStats:
    """Aggregate detection stats for precompiled channels."""
    if instances < 1:
        raise ValueError(f"instances must be >= 1, got {instances}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    key = stream_key(seed, tag)
    bounds = [(lo, min(lo + BLOCK, instances)) for lo in range(0, instances, BLOCK)]

    def job(b):
        return _block_events(layout, ch, key, b[0], b[1], rounds, include_terminal)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def run_batch(layout: ChainLayout, registry: ParameterRegistry, model: ErrorModelConfig,
              rounds: int, instances: int, seed: int, tag: Sequence[int] = (),
              threads: int = 1, include_terminal: bool = False) -> DetectionStats:
    """Run ``instances`` independent experiments and pool their detection events.

    Instance ``i`` always draws from stream ``(seed, tag, i)``, so the result
    does not depend on ``threads`` or on execution order.
    """
    ch = compile_channels(layout, registry, model)
    return run_channels(layout, ch, rounds, instances, seed, tag, threads, include_terminal)


# --- exact oracle -----------------------------------------------------------

def _xor_prob(factor: float) -> float:
    """P(odd number of events) given the product of ``1 - 2 p_i``."""
    return (1.0 - factor) / 2.0


def channel_zeta(layout: ChainLayout, ch: Channels, rounds: int,
                 include_terminal: bool = False) -> np.ndarray:
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    factor = 1.0 - 2.0 * ch.prob
    f_by_data = np.ones(len(layout.data_qubits))
    f_meas = np.ones(len(layout.measure_qubits))
    np.multiply.at(f_by_data, ch.target[ch.target_kind == DATA], factor[ch.target_kind == DATA])
    np.multiply.at(f_meas, ch.target[ch.target_kind == MEASURE], factor[ch.target_kind == MEASURE])
    f_data = np.array([np.prod([f_by_data[layout.data_index(d)] for d in layout.neighbors(m)])
                       for m in layout.measure_qubits])
    first = _xor_prob(f_data * f_meas)
    later = _xor_prob(f_data * f_meas * f_meas)
    total = first + (rounds - 1) * later
    n = rounds
    if include_terminal:
        total = total + _xor_prob(f_meas)
        n += 1
    return total / n


def analytic_zeta(layout: ChainLayout, registry: ParameterRegistry, model: ErrorModelConfig,
                  rounds: int, include_terminal: bool = False) -> np.ndarray:
    """Exact expected detection fraction per measure qubit, averaged over rounds."""
    return channel_zeta(layout, compile_channels(layout, registry, model), rounds, include_terminal)
