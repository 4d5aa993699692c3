import math
from dataclasses import replace

import numpy as np
import pytest

from rpsjs.controller import (CAUSE_DRIFT, CAUSE_IN_RANGE, RadioAction, RadioMode,
                              SwitchingState, compute_threshold, controller_tick,
                              predicted_jam_episode, step_mode, update_drift_error)
from rpsjs.errors import ContractViolation
from rpsjs.positioning import EkfConfig, NavState, build_context, ekf_predict
from rpsjs.scenario import ControllerParams
from rpsjs.sweep import extract_moments, simulate_sweep

from conftest import make_config

PARAMS = ControllerParams(t_i=4, d_jam=12.0)


@pytest.mark.parametrize("resid, a, expected", [
    ([1, 1, 1, 1], 50, 2.0),
    ([0.5, 1.0, 1.5, 2.0], 100, 3.25),
    ([[0.5, 1.0], [1.5, 2.0]], 100, 3.25),
])
def test_threshold(resid, a, expected):
    assert compute_threshold(resid, a) == pytest.approx(expected)


def test_threshold_empty():
    with pytest.raises(ValueError, match="no calibration residuals"):
        compute_threshold([], 50)


@pytest.mark.parametrize("P, e", [(np.eye(2), math.sqrt(2)), (np.zeros((2, 2)), 0.0)])
def test_drift_error(P, e):
    s = update_drift_error(SwitchingState(), NavState(np.zeros(2), P))
    assert s.e_m == pytest.approx(e)


def test_drift_error_predict_only():
    cfg = EkfConfig(Q=0.01 * np.eye(2), P0=np.zeros((2, 2)))
    nav = NavState(np.zeros(2), np.zeros((2, 2)))
    for _ in range(20):
        nav = ekf_predict(nav, (0, 0), 1.0, cfg)
    assert update_drift_error(SwitchingState(), nav).e_m == pytest.approx(math.sqrt(0.4))


def test_entry_is_inclusive():
    s = step_mode(SwitchingState(t_d=1.3), 12.0, PARAMS)
    assert s.mode is RadioMode.JAMMING
    assert s.events[-1].cause == CAUSE_IN_RANGE
    assert s.switch_count == 1


def test_continue_strictly_below():
    s = SwitchingState(mode=RadioMode.JAMMING, t_d=1.3, e_m=1.3 - 1e-12)
    assert step_mode(s, 5.0, PARAMS) is s
    out = step_mode(replace(s, e_m=1.3), 5.0, PARAMS)
    assert out.mode is RadioMode.RPS_ACTIVE
    assert out.events[-1].cause == CAUSE_DRIFT


def test_no_transition_out_of_range():
    s = SwitchingState(t_d=1.3)
    out = step_mode(s, 12.0001, PARAMS)
    assert out.mode is RadioMode.RPS_ACTIVE and not out.events
    assert step_mode(s, None, PARAMS).mode is RadioMode.RPS_ACTIVE


def test_entry_requires_threshold():
    with pytest.raises(ContractViolation):
        step_mode(SwitchingState(), 5.0, PARAMS)


def test_sweep_while_jamming_is_a_contract_violation(config, rng):
    ctx = build_context(config, [1, 2, 3, 4])
    m = extract_moments(simulate_sweep(config, (40, 30), 0, rng))
    s = SwitchingState(mode=RadioMode.JAMMING, t_d=1.0)
    with pytest.raises(ContractViolation):
        controller_tick(s, NavState(np.zeros(2), np.eye(2)), moments=m, d_c=5.0, u=(0, 0),
                        ctx=ctx, params=PARAMS)


def test_rps_tick_without_sweep_is_a_contract_violation(config):
    ctx = build_context(config, [1, 2, 3, 4])
    with pytest.raises(ContractViolation):
        controller_tick(SwitchingState(), None, moments=None, d_c=None, u=(0, 0), ctx=ctx,
                        params=PARAMS)


def parked_run(q, shadow, n=400, a=50.0, samples=16, seed=0):
    """Controller loop with a static pursuer and the rogue always at 5 m.

    Returns the list of (measured, predicted) JAM episode lengths; the last
    episode is skipped when the run ends inside it.
    """
    cfg = make_config(shadowing_sigma=shadow, samples_per_band=samples, seed=seed)
    ekf = EkfConfig(Q=q * np.eye(2), P0=25 * np.eye(2))
    ctx = build_context(cfg, [1, 2, 3, 4], ekf=ekf)
    params = replace(PARAMS, a_percentile=a)
    rng = np.random.default_rng(seed)
    state, nav = SwitchingState(), None
    modes, entry = [], []
    for k in range(n):
        moments = None
        if state.mode is RadioMode.RPS_ACTIVE:
            moments = extract_moments(simulate_sweep(cfg, (40.0, 30.0), k, rng))
        tick = controller_tick(state, nav, moments=moments, d_c=5.0, u=(0, 0), ctx=ctx,
                               params=params, step=k)
        if tick.state.mode is RadioMode.JAMMING and state.mode is RadioMode.RPS_ACTIVE:
            entry.append((float(np.trace(tick.nav.P)), tick.state.t_d))
        modes.append(tick.action)
        state, nav = tick.state, tick.nav
    lengths, run = [], 0
    for act in modes:
        if act is RadioAction.JAM:
            run += 1
        elif run:
            lengths.append(run)
            run = 0
    return [(m, predicted_jam_episode(tr, q, td)) for m, (tr, td) in zip(lengths, entry)]


@pytest.mark.parametrize("q, shadow", [(0.2, 1.0), (0.5, 2.0), (1.0, 3.0)])
def test_episode_law(q, shadow):
    pairs = parked_run(q, shadow)
    assert len(pairs) >= 2
    for measured, predicted in pairs:
        assert abs(measured - predicted) <= 1


def test_alternation_when_parked():
    pairs = parked_run(0.2, 1.0)
    assert len(pairs) >= 3


def test_never_triggers_when_far(config, rng):
    ctx = build_context(config, [1, 2, 3, 4])
    state, nav = SwitchingState(), None
    for k in range(30):
        m = extract_moments(simulate_sweep(config, (40, 30), k, rng))
        tick = controller_tick(state, nav, moments=m, d_c=None, u=(0, 0), ctx=ctx,
                               params=PARAMS, step=k)
        state, nav = tick.state, tick.nav
        assert tick.action is RadioAction.SWEEP
    assert state.switch_count == 0


def test_more_switching_with_lower_percentile():
    low = sum(len(parked_run(0.2, 1.0, a=20.0, seed=s)) for s in range(3))
    high = sum(len(parked_run(0.2, 1.0, a=95.0, seed=s)) for s in range(3))
    assert low >= high


def test_predicted_episode_edges():
    assert predicted_jam_episode(2.0, 0.01, 1.0) == 1
    assert predicted_jam_episode(0.0, 0.01, 1.0) == 50
    with pytest.raises(ValueError):
        predicted_jam_episode(0.0, 0.0, 1.0)
