import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adept.track import (TrackerConfig, TrackerState, delta_x_stderr, estimate_shift, fit_curvature,
                         implied_precision, new_state, predicted_zeta, required_samples, sample_offset,
                         tracker_update)

CFG = TrackerConfig(a=0.0015, zeta0=0.15, F=0.1, P=1 / 25)


def test_required_samples_frozen():
    assert required_samples(CFG) == 52084


def test_implied_precision_inverts():
    assert implied_precision(CFG, 52084) == pytest.approx(1 / 25, rel=1e-4)
    assert implied_precision(CFG, 48000) == pytest.approx(0.041667, rel=1e-4)


def test_sample_offset_hits_tolerance():
    dx = sample_offset(CFG)
    assert dx == pytest.approx(math.sqrt(10.0))
    for s in (1, -1):
        assert predicted_zeta(CFG, 2.0 + s * dx, 2.0) == pytest.approx(0.165, rel=1e-12)


def test_delta_x_stderr_frozen():
    se, ratio = delta_x_stderr(CFG, math.sqrt(10.0), 48000)
    assert se == pytest.approx(0.126278187, rel=1e-8)
    assert ratio == pytest.approx(0.039932669, rel=1e-8)


@given(st.floats(1e-4, 1.0), st.floats(0.01, 0.45), st.floats(0.01, 0.5), st.floats(-1.0, 1.0),
       st.floats(-100, 100))
def test_noiseless_update_recovers_optimum(a, zeta0, F, frac, x0):
    cfg = TrackerConfig(a=a, zeta0=zeta0, F=F)
    state = new_state(cfg, x0=x0)
    x1 = x0 + frac * 2 * state.dx_probe
    zp, zm = (predicted_zeta(cfg, x, x1) for x in state.probes)
    tracker_update(cfg, state, zp, zm)
    assert state.x0 == pytest.approx(x1, rel=1e-9, abs=1e-9 * state.dx_probe)


def test_clamp():
    state = new_state(CFG)
    far = 10 * state.dx_probe
    zp, zm = (predicted_zeta(CFG, x, far) for x in state.probes)
    step = tracker_update(CFG, state, zp, zm)
    assert step == pytest.approx(2 * state.dx_probe)
    state2 = new_state(CFG)
    assert tracker_update(CFG, state2, zp, zm, clamp=False) == pytest.approx(far)


def test_estimate_shift_sign():
    # lower zeta on the + side means the optimum moved up
    assert estimate_shift(CFG, 1.0, 0.15, 0.17) > 0
    with pytest.raises(ValueError):
        estimate_shift(CFG, 1.0, -0.1, 0.1)


def test_fit_curvature_exact_on_parabola():
    a, zmin = fit_curvature(lambda x: 0.3 * (x - 0.7) ** 2 + 0.12, 0.0, 1.0)
    assert a == pytest.approx(0.3) and zmin == pytest.approx(0.12)
    with pytest.raises(ValueError):
        fit_curvature(lambda x: -x * x, 0.0, 1.0)


@pytest.mark.parametrize("kw", [dict(a=0.0), dict(zeta0=0.0), dict(zeta0=1.0), dict(F=0.0), dict(P=25.0)])
def test_config_validation(kw):
    base = dict(a=0.001, zeta0=0.1, F=0.1, P=0.04)
    base.update(kw)
    with pytest.raises(ValueError):
        TrackerConfig(**base)


def test_state_validation():
    with pytest.raises(ValueError):
        TrackerState(0.0, 0.0, 10)
    with pytest.raises(ValueError):
        TrackerState(0.0, 1.0, 0)


def test_binomial_noise_matches_prediction():
    rng = np.random.default_rng(1)
    n = 48000
    state = new_state(CFG, n_samples=n)
    p = predicted_zeta(CFG, state.dx_probe, 0.0)
    d = (rng.binomial(n, p, 4000) - rng.binomial(n, p, 4000)) / n / (4 * CFG.a * state.dx_probe)
    se, _ = delta_x_stderr(CFG, state.dx_probe, n)
    assert np.std(d) == pytest.approx(se, rel=0.05)
