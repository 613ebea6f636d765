"""Parabolic bias tracker.

Near its optimum ``x1`` the detection fraction is modelled as
``zeta = a (x - x1)^2 + zeta0``. The tracker samples ``x0 +- dx_probe`` where the
probe offset costs a tolerated fractional zeta increase ``F``, and moves its
estimate by the difference of the two samples.

``P`` is a dimensionless relative-noise target (``SE_dx / dx_probe``), kept as
a fraction such as 1/25.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class TrackerConfig:
    a: float
    zeta0: float
    F: float
    P: float = 1 / 25

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"curvature a must be > 0, got {self.a}")
        if not 0 < self.zeta0 < 1:
            raise ValueError(f"zeta0 must lie in (0, 1), got {self.zeta0}")
        if not self.F > 0:
            raise ValueError(f"F must be > 0, got {self.F}")
        if not 0 < self.P < 1:
            raise ValueError(f"P must lie in (0, 1), got {self.P}; pass 1/25 rather than 25")


@dataclass
class TrackerState:
    x0: float
    dx_probe: float
    n_samples: int
    last_delta: float = 0.0
    last_stderr: float = float("nan")
    updates: int = 0

    def __post_init__(self):
        if not self.dx_probe > 0:
            raise ValueError(f"probe offset must be > 0, got {self.dx_probe}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    @property
    def probes(self) -> tuple[float, float]:
        return self.x0 + self.dx_probe, self.x0 - self.dx_probe


def sample_offset(cfg: TrackerConfig) -> float:
    """Probe distance at which the model zeta equals ``zeta0 (1 + F)``."""
    if cfg.a <= 0:
        raise ValueError("curvature a must be > 0")
    return math.sqrt(cfg.zeta0 * cfg.F / cfg.a)


def predicted_zeta(cfg: TrackerConfig, x: float, true_optimum: float) -> float:
    return cfg.a * (x - true_optimum) ** 2 + cfg.zeta0


def required_samples(cfg: TrackerConfig) -> int:
    """Samples per zeta measurement for relative noise ``P``; drops ``(1 - zeta)``."""
    return math.ceil(1.0 / (8.0 * cfg.P**2 * cfg.F**2 * cfg.zeta0))


def implied_precision(cfg: TrackerConfig, n_samples: int) -> float:
    """``P`` reached with ``n_samples``, inverting :func:`required_samples`."""
    return 1.0 / math.sqrt(8.0 * n_samples * cfg.F**2 * cfg.zeta0)


def delta_x_stderr(cfg: TrackerConfig, dx_probe: float, n_samples: int,
                   zeta_probe: float | None = None) -> tuple[float, float]:
    """Standard error of one update and its ratio to the probe offset.

    Both probes are taken to sit at ``zeta0 (1 + F)`` unless ``zeta_probe`` is
    given.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    z = cfg.zeta0 * (1 + cfg.F) if zeta_probe is None else zeta_probe
    se = math.sqrt(2.0 * z * (1.0 - z)) / (math.sqrt(n_samples) * 4.0 * cfg.a * dx_probe)
    return se, se / dx_probe


def new_state(cfg: TrackerConfig, x0: float = 0.0, n_samples: int | None = None) -> TrackerState:
    n = required_samples(cfg) if n_samples is None else n_samples
    return TrackerState(x0=x0, dx_probe=sample_offset(cfg), n_samples=n)


def estimate_shift(cfg: TrackerConfig, dx_probe: float, zeta_plus: float, zeta_minus: float) -> float:
    """Optimum shift implied by the two probe samples."""
    if zeta_plus < 0 or zeta_minus < 0:
        raise ValueError("zeta samples must be non-negative")
    return (zeta_minus - zeta_plus) / (4.0 * cfg.a * dx_probe)


def tracker_update(cfg: TrackerConfig, state: TrackerState, zeta_plus: float, zeta_minus: float,
                   clamp: bool = True) -> float:
    """Move ``state.x0`` by the estimated shift and return the applied step.

    With ``clamp`` the step is limited to twice the probe offset.
    """
    delta = estimate_shift(cfg, state.dx_probe, zeta_plus, zeta_minus)
    if clamp:
        limit = 2.0 * state.dx_probe
        delta = max(-limit, min(limit, delta))
    state.x0 += delta
    state.last_delta = delta
    state.last_stderr = delta_x_stderr(cfg, state.dx_probe, state.n_samples)[0]
    state.updates += 1
    return delta


def fit_curvature(zeta_at: Callable[[float], float], center: float, step: float) -> tuple[float, float]:
    """Curvature and minimum value of the parabola through three probes.

    Used once during setup to characterise ``a`` for a parameter before any
    tracking starts.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    zm, z0, zp = zeta_at(center - step), zeta_at(center), zeta_at(center + step)
    a = (zp + zm - 2.0 * z0) / (2.0 * step * step)
    if a <= 0:
        raise ValueError(f"probes do not bracket a minimum (fitted a = {a})")
    b = (zp - zm) / (2.0 * step)
    shift = -b / (2.0 * a)
    return a, z0 - a * shift * shift
