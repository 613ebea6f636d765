"""Detection events and detection fractions.

A detection event at round ``t`` is a change of a measure qubit's deviation
from its error-free reference between rounds ``t-1`` and ``t``. The detection
fraction ``zeta`` is the share of measurement opportunities that were events.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class DetectionStats:
    """Event and opportunity counts per measure qubit."""

    qubits: tuple[int, ...]
    events: np.ndarray
    opportunities: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=np.int64)
        op = np.asarray(self.opportunities, dtype=np.int64)
        if ev.shape != (len(self.qubits),) or op.shape != ev.shape:
            raise ValueError("events/opportunities must have one entry per qubit")
        if np.any(op <= 0):
            raise ValueError("every measure qubit needs at least one opportunity")
        if np.any(ev < 0) or np.any(ev > op):
            raise ValueError("event counts must lie in [0, opportunities]")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "events", ev)
        object.__setattr__(self, "opportunities", op)

    @property
    def zeta(self) -> np.ndarray:
        return self.events / self.opportunities

    @property
    def stderr(self) -> np.ndarray:
        z = self.zeta
        return np.sqrt(z * (1.0 - z) / self.opportunities)

    def index(self, qubit: int) -> int:
        try:
            return self.qubits.index(qubit)
        except ValueError:
            raise KeyError(f"measure qubit {qubit} not in stats") from None

    def zeta_of(self, qubit: int) -> float:
        i = self.index(qubit)
        return float(self.events[i] / self.opportunities[i])

    def stderr_of(self, qubit: int) -> float:
        return float(self.stderr[self.index(qubit)])

    def __add__(self, other: "DetectionStats") -> "DetectionStats":
        if self.qubits != other.qubits:
            raise ValueError("cannot pool stats over different measure qubits")
        return DetectionStats(self.qubits, self.events + other.events,
                              self.opportunities + other.opportunities)


def extract_events(record, include_terminal: bool = False) -> np.ndarray:
    """Detection events of a :class:`~adept.sim.TrialRecord`.

    Works on single records (``(T, M)`` outcomes) and on batched records with
    leading instance axes. Returns uint8 events of shape ``(..., T, M)``, or
    ``(..., T+1, M)`` when the terminal data-readout round is included.
    """
    m = np.asarray(record.outcomes, dtype=np.uint8)
    ref = np.asarray(record.reference, dtype=np.uint8)
    if m.shape != ref.shape:
        raise ValueError(f"outcome shape {m.shape} does not match reference {ref.shape}")
    dev = m ^ ref
    if include_terminal:
        term = np.asarray(record.terminal, dtype=np.uint8) ^ np.asarray(
            record.terminal_reference, dtype=np.uint8)
        if term.shape != dev.shape[:-2] + dev.shape[-1:]:
            raise ValueError("terminal round shape does not match outcomes")
        dev = np.concatenate([dev, term[..., None, :]], axis=-2)
    events = dev.copy()
    events[..., 1:, :] ^= dev[..., :-1, :]
    return events


def compute_zeta(events: np.ndarray, qubits: Sequence[int]) -> DetectionStats:
    """Pool events of shape ``(..., rounds, M)`` into per-qubit stats."""
    ev = np.asarray(events)
    if ev.ndim < 2 or ev.shape[-1] != len(qubits):
        raise ValueError(f"events of shape {ev.shape} do not match {len(qubits)} measure qubits")
    n_opp = int(np.prod(ev.shape[:-1]))
    if n_opp == 0:
        raise ValueError("no detection opportunities")
    counts = ev.reshape(-1, ev.shape[-1]).sum(axis=0, dtype=np.int64)
    return DetectionStats(tuple(qubits), counts, np.full(len(qubits), n_opp, dtype=np.int64))


def combined_stderr(stderrs: Iterable[float]) -> float:
    se = np.asarray(list(stderrs), dtype=float)
    return float(np.sqrt(np.sum(se**2)) / len(se))


def group_metric(stats: DetectionStats, group) -> tuple[float, float]:
    """Unweighted mean zeta of ``group.metric_qubits`` and its standard error.

    ``group`` may be a :class:`~adept.patterns.Grouping` or any iterable of
    measure qubit indices.
    """
    qubits = sorted(getattr(group, "metric_qubits", group))
    if not qubits:
        raise ValueError("grouping has no metric qubits")
    idx = [stats.index(q) for q in qubits]
    mean = float(np.mean(stats.zeta[idx]))
    return mean, combined_stderr(stats.stderr[idx])


STATS_COLUMNS = ("measure_qubit", "zeta", "stderr", "events", "opportunities")


def write_stats_csv(stats: DetectionStats, fh: IO[str], extra: dict | None = None):
    """CSV with one row per measure qubit; ``extra`` adds constant leading columns."""
    extra = extra or {}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(extra) + list(STATS_COLUMNS))
    for i, q in enumerate(stats.qubits):
        w.writerow(list(extra.values()) + [q, repr(float(stats.zeta[i])), repr(float(stats.stderr[i])),
                                           int(stats.events[i]), int(stats.opportunities[i])])
