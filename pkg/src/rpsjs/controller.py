"""Single-radio mode switching between SOP positioning and GPS jamming.

The radio either sweeps (RPS_ACTIVE) or jams (JAMMING) on a given tick.
Jamming starts once the vision range falls to ``d_jam`` and continues
while the drift proxy ``e_m`` stays below the threshold ``T_d``; the
threshold is refreshed from recent range innovations only while sweeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ContractViolation
from .positioning import NavState, ekf_predict, estimate_position


class RadioMode(str, Enum):
    RPS_ACTIVE = "RPS_ACTIVE"
    JAMMING = "JAMMING"


class RadioAction(str, Enum):
    SWEEP = "SWEEP"
    JAM = "JAM"


CAUSE_IN_RANGE = "d_c<=d_jam"
CAUSE_DRIFT = "e_m>=T_d"


@dataclass(frozen=True)
class SwitchEvent:
    step: int
    from_mode: RadioMode
    to_mode: RadioMode
    cause: str
    d_c: float
    e_m: float
    t_d: float


@dataclass(frozen=True)
class SwitchingState:
    mode: RadioMode = RadioMode.RPS_ACTIVE
    t_d: float | None = None
    e_m: float = 0.0
    window: tuple = ()  # per-step arrays of |innovation| in metres
    mean_range: float | None = None
    switch_count: int = 0
    events: tuple = ()
    step: int = 0


def compute_threshold(residuals, a_percentile: float) -> float:
    """Mean plus the a-th percentile (linear interpolation) of the residuals."""
    parts = [np.atleast_1d(np.asarray(x, dtype=float)) for x in residuals]
    r = np.concatenate(parts) if parts else np.empty(0)
    if r.size == 0:
        raise ValueError("no calibration residuals")
    return float(r.mean() + np.percentile(r, a_percentile, method="linear"))


def update_drift_error(state: SwitchingState, nav: NavState) -> SwitchingState:
    return replace(state, e_m=math.sqrt(max(float(np.trace(nav.P)), 0.0)))


def step_mode(state: SwitchingState, d_c, params) -> SwitchingState:
    """Apply the transition rule once; ``d_c=None`` means no detection."""
    d = math.inf if d_c is None else float(d_c)
    if state.mode is RadioMode.RPS_ACTIVE:
        if d <= params.d_jam:
            if state.t_d is None:
                raise ContractViolation("T_d must be calibrated before jamming starts")
            return _transition(state, RadioMode.JAMMING, CAUSE_IN_RANGE, d)
        return state
    if state.e_m < state.t_d:
        return state
    return _transition(state, RadioMode.RPS_ACTIVE, CAUSE_DRIFT, d)


def _transition(state, to_mode, cause, d_c):
    ev = SwitchEvent(state.step, state.mode, to_mode, cause, d_c, state.e_m, state.t_d)
    return replace(state, mode=to_mode, switch_count=state.switch_count + 1,
                   events=state.events + (ev,))


@dataclass(frozen=True)
class TickResult:
    state: SwitchingState
    nav: NavState
    action: RadioAction


def controller_tick(state: SwitchingState, nav: NavState | None, *, moments, d_c, u,
                    ctx, params, step: int | None = None) -> TickResult:
    """Run one tick of the RPS-JS loop.

    While sweeping, the positioning pipeline consumes ``moments`` and the
    innovation window and ``T_d`` are refreshed. While jamming, only the
    inertial prediction runs. ``step_mode`` is applied last, so a transition
    takes effect on the following tick.
    """
    if step is not None:
        state = replace(state, step=step)
    if state.mode is RadioMode.JAMMING:
        if moments is not None:
            raise ContractViolation("radio is jamming; a sweep cannot be consumed on this tick")
        if nav is None:
            raise ContractViolation("jamming requires an initialised navigation state")
        nav = ekf_predict(nav, u, ctx.dt, ctx.ekf)
        if step is not None:
            nav = replace(nav, step=step)
        action = RadioAction.JAM
    else:
        if moments is None:
            raise ContractViolation("RPS tick without a sweep")
        nav = estimate_position(moments, nav, u, ctx)
        resid = np.abs(nav.innovation)
        window = (state.window + (resid,))[-params.calib_window:]
        state = replace(state, window=window,
                        t_d=compute_threshold(window, params.a_percentile),
                        mean_range=float(np.mean(nav.ranges)))
        action = RadioAction.SWEEP
    state = update_drift_error(state, nav)
    state = step_mode(state, d_c, params)
    return TickResult(state, nav, action)


def predicted_jam_episode(trace_p_entry: float, q: float, t_d: float) -> int:
    """Ticks spent jamming when P grows by q*I per tick from ``trace_p_entry``.

    The episode ends on the first tick whose sqrt(trace P) reaches ``t_d``.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    return max(1, math.ceil((t_d ** 2 - trace_p_entry) / (2.0 * q)))
