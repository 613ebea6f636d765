"""Desk-scale setups for the sweep, optimisation and drift experiments."""
from __future__ import annotations

import numpy as np

from .chain import ChainLayout, GateLocation, Kind, ParameterRegistry, default_registry, freq_location
from .emulation import Drift, DriftProgram, OptimizationPlan
from .patterns import Grouping, standard_patterns
from .sim import DEFAULT_P_BASE, ErrorModelConfig, uniform_model

# Base probabilities scaled to an interior background zeta of about 0.11.
QUIET_P_BASE = {k: 0.7 * v for k, v in DEFAULT_P_BASE.items()}

# Mis-set angles (rad) for the two single-qubit gates of each measure qubit,
# enough to push zeta to >= 1.5x its background.
MEASURE_OFFSETS = ((0.40, -0.35), (-0.38, 0.36), (0.35, 0.40), (-0.40, -0.37))
CZ_OFFSETS = ((0.9, -0.8), (-0.85, 0.9))

# Sinusoid amplitudes (MHz) for the all-qubit drift run, one per qubit.
ALL_DRIFT_AMPLITUDES = (10.0, 9.0, 8.0, 7.0, 10.0, 6.0, 9.0, 8.0, 7.0)


def measure_gate_plan(layout: ChainLayout, registry: ParameterRegistry,
                      offsets=MEASURE_OFFSETS) -> OptimizationPlan:
    """One grouping per measure qubit tuning the angles of both its gates.

    The registry values are moved to the given offsets from optimum; measure
    qubits beyond the offset table reuse it cyclically.
    """
    groups, keys = {}, {}
    for i, g in enumerate(standard_patterns(layout)[0]):
        (m,) = g.metric_qubits
        k = [(GateLocation(Kind.SQ_MEASURE, (m,), s), "angle") for s in (0, 1)]
        for (loc, name), off in zip(k, offsets[i % len(offsets)]):
            p = registry.get(loc, name)
            p.value = p.optimum + off
        groups[f"m{m}"] = g
        keys[f"m{m}"] = k
    return OptimizationPlan(groups, keys)


def cz_gate_plan(layout: ChainLayout, registry: ParameterRegistry,
                 offsets=CZ_OFFSETS) -> OptimizationPlan:
    """CZ groupings on every other interior data qubit (2, 6, ...).

    Each tunes the angles of the data qubit's two CZs against the mean zeta
    of its two measure neighbours, so no two metrics overlap.
    """
    groups, keys = {}, {}
    chosen = [g for g in standard_patterns(layout)[2]]
    for i, g in enumerate(chosen):
        cz = sorted(loc for loc in g.tunable_locations if loc.kind is Kind.CZ)
        k = [(loc, "angle") for loc in cz]
        for (loc, name), off in zip(k, offsets[i % len(offsets)]):
            p = registry.get(loc, name)
            p.value = p.optimum + off
        d = cz[0].home
        groups[f"d{d}"] = Grouping(frozenset(cz), g.metric_qubits)
        keys[f"d{d}"] = k
    return OptimizationPlan(groups, keys)


def single_drift(layout: ChainLayout, qubit: int = 3, amplitude: float = 10.0, period: float = 300.0,
                 sensitivity: float = 0.0035) -> tuple[ParameterRegistry, ErrorModelConfig, DriftProgram]:
    """One measure qubit with a strongly frequency-sensitive gate drifting; background ~0.11."""
    reg = default_registry(layout)
    reg.get(freq_location(layout, qubit), "freq").sensitivity = sensitivity
    model = uniform_model(layout, QUIET_P_BASE)
    return reg, model, DriftProgram({qubit: Drift(amplitude, period)})


def all_drift(layout: ChainLayout, amplitudes=ALL_DRIFT_AMPLITUDES,
              period: float = 300.0) -> tuple[ParameterRegistry, ErrorModelConfig, DriftProgram]:
    """Independent drift on every qubit; alternate qubits start with opposite sign."""
    reg = default_registry(layout)
    model = uniform_model(layout)
    drifts = {
        q: Drift(float(amplitudes[q % len(amplitudes)]), period, 0.0 if q % 2 else float(np.pi))
        for q in range(layout.n_qubits)
    }
    return reg, model, DriftProgram(drifts)
