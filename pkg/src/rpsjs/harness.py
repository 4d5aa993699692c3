"""Closed-loop simulation of the pursuer, the rogue drone and the shared radio.

Each tick advances the rogue along its route, moves the pursuer toward the
vision estimate of the rogue, synthesises the sensing that the current
radio mode allows, evaluates both GPS links and steps the controller.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .controller import RadioAction, RadioMode, SwitchingState, controller_tick
from .errors import InfeasibleCalibration
from .jamming import (JamGeometry, JamParams, gps_link, gps_position_fix, jam_to_signal,
                      satellites_core)
from .positioning import build_context
from .scenario import ScenarioConfig, estimator_transmitters, rng_stream, rogue_schedule
from .sweep import extract_moments, select_transmitters, simulate_sweep
from .vision import depth_distance, horizontal_distance, smoothed_distance, synth_box

log = logging.getLogger(__name__)


@dataclass
class SimLog:
    """Per-step columns of one run (index = step)."""

    pursuer: np.ndarray          # (N, 2) truth
    rogue: np.ndarray            # (N, 2) truth
    rogue_alt: np.ndarray        # (N,)
    est: np.ndarray              # (N, 2) p-hat
    cov: np.ndarray              # (N, 2, 2) P-hat
    mode: list                   # RadioMode in effect on each tick
    gps: np.ndarray              # (N, 2) GPS comparison track, last fix held
    gps_fresh: np.ndarray        # (N,) bool, a new fix was produced this tick
    js_rogue: np.ndarray
    js_pursuer: np.ndarray
    n_s_rogue: np.ndarray
    n_s_pursuer: np.ndarray
    fix_rogue: np.ndarray
    fix_pursuer: np.ndarray
    d_c: np.ndarray              # smoothed vision range, NaN without detection
    e_m: np.ndarray
    t_d: np.ndarray              # NaN before the first calibration
    events: tuple = ()
    segments: list = field(default_factory=list)
    selected: tuple = ()

    def __len__(self):
        return len(self.mode)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(len(self.mode))


def _empty_log(n) -> SimLog:
    nan2 = lambda: np.full((n, 2), np.nan)  # noqa: E731
    return SimLog(
        pursuer=nan2(), rogue=nan2(), rogue_alt=np.full(n, np.nan), est=nan2(),
        cov=np.full((n, 2, 2), np.nan), mode=[None] * n, gps=nan2(),
        gps_fresh=np.zeros(n, bool), js_rogue=np.full(n, -np.inf),
        js_pursuer=np.full(n, -np.inf), n_s_rogue=np.zeros(n, int),
        n_s_pursuer=np.zeros(n, int), fix_rogue=np.zeros(n, bool),
        fix_pursuer=np.zeros(n, bool), d_c=np.full(n, np.nan), e_m=np.full(n, np.nan),
        t_d=np.full(n, np.nan),
    )


def pursuit_step(pursuer, rogue_relative, max_speed: float, dt: float, standoff: float):
    """Close on the rogue at most ``max_speed*dt`` per tick, never inside ``standoff``."""
    if not max_speed > 0:
        raise ValueError("max_speed must be positive")
    p = np.asarray(pursuer, dtype=float)
    rel = np.asarray(rogue_relative, dtype=float)
    dist = float(np.hypot(rel[0], rel[1]))
    if dist <= standoff or dist < 1e-12:
        return p.copy()
    travel = min(max_speed * dt, dist - standoff)
    return p + rel / dist * travel


def _camera_frame(rel, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return rel[0] * c + rel[1] * s, -rel[0] * s + rel[1] * c


def run_scenario(config: ScenarioConfig) -> SimLog:
    config.validate()
    n, dt = config.duration_steps, config.dt
    ctrl = config.ctrl_params
    jam = config.jam_params
    cam = config.camera
    cal = cam.calibration()

    streams = {name: rng_stream(config, name) for name in
               ("select", "sweep", "imu", "vision", "gps", "jitter_rogue", "jitter_pursuer")}

    rogue_xy, rogue_alt, segments = rogue_schedule(config)
    believed = estimator_transmitters(config)

    # initial scan at the start position fixes the band set
    p_true = np.array(config.pursuer_init, dtype=float)
    scan = simulate_sweep(config, p_true, -1, streams["select"])
    selected = select_transmitters([extract_moments(scan)], ctrl.t_i)
    ctx = build_context(config, selected, transmitters=believed)

    out = _empty_log(n)
    out.segments = segments
    out.selected = tuple(selected)

    state = SwitchingState()
    nav = None
    history: list[tuple[float, float]] = []
    world: list[tuple[float, float]] = []
    rel0 = rogue_xy[0] - p_true
    yaw = math.atan2(rel0[1], rel0[0])
    target_est = None  # world-frame rogue estimate from vision
    gps_hold = np.full(2, np.nan)
    self_geometry = JamGeometry(jam.self_distance_m, 0.0, jam.self_elevation_deg)

    for k in range(n):
        try:
            # pursuer motion from the previous vision estimate
            p_prev = p_true
            if k > 0 and target_est is not None:
                p_true = pursuit_step(p_true, target_est - p_true, config.pursuer_max_speed,
                                      dt, config.standoff_m)
            v = (p_true - p_prev) / dt
            u = v + config.imu_velocity_noise_sigma * streams["imu"].standard_normal(2)

            # vision
            rel = rogue_xy[k] - p_true
            dz = rogue_alt[k] - config.pursuer_altitude
            fwd, lat = _camera_frame(rel, yaw)
            depth = math.hypot(fwd, dz)
            obs = synth_box(k, max(depth, 1e-6), lat, cal, cam.target_width_m,
                            cam.pixel_noise_px, streams["vision"])
            d_c = None
            if (obs is not None and fwd > 0 and obs.width_px >= cam.min_box_px
                    and abs(obs.center_offset_px) <= cam.image_width_px / 2):
                dc = depth_distance(obs, cal)
                lat_m = horizontal_distance(obs, dc, cal)
                history.append((dc, lat_m))
                d_c, _ = smoothed_distance(history, cam.smoothing_window)
                # steering smooths in the world frame; camera-frame offsets
                # taken at different yaws cannot be averaged
                c, s = math.cos(yaw), math.sin(yaw)
                world.append((dc * c - lat_m * s, dc * s + lat_m * c))
                rel_est = np.mean(world[-cam.smoothing_window:], axis=0)
                target_est = p_true + rel_est
                yaw = math.atan2(rel_est[1], rel_est[0])

            # radio
            mode = state.mode
            moments = None
            if mode is RadioMode.RPS_ACTIVE:
                frame = simulate_sweep(config, p_true, k, streams["sweep"])
                moments = extract_moments(frame)
            tick = controller_tick(state, nav, moments=moments, d_c=d_c, u=u, ctx=ctx,
                                   params=ctrl, step=k)
            state, nav = tick.state, tick.nav

            # GPS links
            jamming = tick.action is RadioAction.JAM
            geo_rogue = None
            if jamming:
                horiz = float(np.hypot(*(rogue_xy[k] - p_true)))
                geo_rogue = JamGeometry.from_offsets(max(horiz, 1e-3), dz)
            link_r = gps_link(jam, geo_rogue, streams["jitter_rogue"])
            link_p = gps_link(jam, self_geometry if jamming else None, streams["jitter_pursuer"],
                              isolation_db=jam.self_isolation_db)
            fix = gps_position_fix(p_true, link_p, config.gps_noise_sigma, streams["gps"], jam)
            if fix is not None:
                gps_hold = fix
        except Exception as exc:
            raise RuntimeError(f"step {k}: {exc}") from exc

        out.pursuer[k] = p_true
        out.rogue[k] = rogue_xy[k]
        out.rogue_alt[k] = rogue_alt[k]
        out.est[k] = nav.p
        out.cov[k] = nav.P
        out.mode[k] = mode
        out.gps[k] = gps_hold
        out.gps_fresh[k] = fix is not None
        out.js_rogue[k] = link_r.js_db
        out.js_pursuer[k] = link_p.js_db
        out.n_s_rogue[k] = link_r.n_s
        out.n_s_pursuer[k] = link_p.n_s
        out.fix_rogue[k] = link_r.fix_available
        out.fix_pursuer[k] = link_p.fix_available
        out.d_c[k] = np.nan if d_c is None else d_c
        out.e_m[k] = state.e_m
        out.t_d[k] = np.nan if state.t_d is None else state.t_d
    out.events = state.events
    return out


# -- metrics ----------------------------------------------------------------

@dataclass
class SegmentRow:
    segment: str
    gt_m: float
    rps_m: float
    rps_diff_pct: float
    gps_m: float
    gps_diff_pct: float


@dataclass
class MetricsReport:
    mae_m: float
    cdf: list
    segments: list
    switch_count: int
    jam_episodes: list
    rps_episodes: list
    gps_mae_m: float = math.nan
    gps_cdf: list = field(default_factory=list)
    gps_fresh_steps: int = 0
    gps_unavailable_steps: int = 0
    frac_rps_within_6m: float = math.nan
    frac_gps_beyond_6m: float = math.nan
    duty_cycle: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x

        return {
            "mae_rps_m": clean(self.mae_m),
            "mae_gps_m": clean(self.gps_mae_m),
            "frac_rps_error_le_6m": clean(self.frac_rps_within_6m),
            "frac_gps_error_gt_6m": clean(self.frac_gps_beyond_6m),
            "gps_fresh_steps": self.gps_fresh_steps,
            "gps_unavailable_steps": self.gps_unavailable_steps,
            "switch_count": self.switch_count,
            "jam_episode_steps": self.jam_episodes,
            "rps_episode_steps": self.rps_episodes,
            "segments": [{k: clean(v) for k, v in vars(r).items()} for r in self.segments],
            "cdf_rps": self.cdf,
            "cdf_gps": self.gps_cdf,
            "duty_cycle": self.duty_cycle,
            **{k: clean(v) for k, v in self.extra.items()},
        }


def error_cdf(errors, resolution: float = 0.1) -> list:
    """Empirical CDF sampled on a ``resolution`` grid from 0 to the max error."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        return []
    top = math.ceil(e[-1] / resolution - 1e-9)
    grid = np.round(np.arange(top + 1) * resolution, 10)
    frac = np.searchsorted(e, grid + 1e-9, side="right") / e.size
    return [[float(g), float(f)] for g, f in zip(grid, frac)]


def path_length(xy, idx) -> float:
    pts = np.asarray(xy, dtype=float)[idx]
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def _diff_pct(est, gt):
    return abs(est - gt) / gt * 100.0 if gt > 0 else math.nan


def _runs(seq):
    out = []
    for item in seq:
        if out and out[-1][0] == item:
            out[-1][1] += 1
        else:
            out.append([item, 1])
    return out


def segment_table(log: SimLog, segments, stride: int = 1) -> list[SegmentRow]:
    """Path lengths of truth, RPS-JS and GPS tracks between waypoint times.

    Each track is sampled every ``stride`` ticks (segment end always
    included) before measuring its length.
    """
    rows = []
    for seg in segments:
        label, s, e = (seg.label, seg.start_step, seg.end_step) if hasattr(seg, "label") else seg
        idx = list(range(s, e + 1, max(1, stride)))
        if idx[-1] != e:
            idx.append(e)
        gt = path_length(log.pursuer, idx)
        rps = path_length(log.est, idx)
        gps = path_length(log.gps, idx)
        rows.append(SegmentRow(label, gt, rps, _diff_pct(rps, gt), gps, _diff_pct(gps, gt)))
    return rows


def compute_metrics(log: SimLog, segments=None, stride: int = 1,
                    duty_window: int = 100) -> MetricsReport:
    if len(log) == 0:
        raise ValueError("empty simulation log")
    err = np.hypot(*(log.est - log.pursuer).T)
    fresh = np.asarray(log.gps_fresh, bool) & np.all(np.isfinite(log.gps), axis=1)
    gps_err = np.hypot(*(log.gps[fresh] - log.pursuer[fresh]).T)

    modes = list(log.mode)
    runs = _runs(modes)
    jam_eps = [c for m, c in runs if m is RadioMode.JAMMING]
    rps_eps = [c for m, c in runs if m is RadioMode.RPS_ACTIVE]

    jam_flags = np.array([m is RadioMode.JAMMING for m in modes], float)
    blocks = [jam_flags[i:i + duty_window] for i in range(0, len(jam_flags), duty_window)]
    duty = {
        "window_steps": duty_window,
        "jam": [float(b.mean()) for b in blocks],
        "rps": [float(1.0 - b.mean()) for b in blocks],
    }

    rows = segment_table(log, segments or [], stride)
    t_d = log.t_d[np.isfinite(log.t_d)]
    first_jam = next((ev for ev in log.events if ev.to_mode is RadioMode.JAMMING), None)
    return MetricsReport(
        mae_m=float(err.mean()),
        cdf=error_cdf(err),
        segments=rows,
        switch_count=len(log.events),
        jam_episodes=jam_eps,
        rps_episodes=rps_eps,
        gps_mae_m=float(gps_err.mean()) if gps_err.size else math.nan,
        gps_cdf=error_cdf(gps_err),
        gps_fresh_steps=int(fresh.sum()),
        gps_unavailable_steps=int(len(log) - fresh.sum()),
        frac_rps_within_6m=float(np.mean(err <= 6.0)),
        frac_gps_beyond_6m=float(np.mean(gps_err > 6.0)) if gps_err.size else math.nan,
        duty_cycle=duty,
        extra={
            "steps": len(log),
            "rmse_rps_m": float(np.sqrt(np.mean(err ** 2))),
            "threshold_at_first_jam_m": first_jam.t_d if first_jam else math.nan,
            "threshold_final_m": float(t_d[-1]) if t_d.size else math.nan,
            "jam_fraction": float(jam_flags.mean()),
            "rogue_fix_fraction": float(np.mean(log.fix_rogue)),
        },
    )


def simulate_and_score(config: ScenarioConfig) -> MetricsReport:
    log = run_scenario(config)
    return compute_metrics(log, log.segments, stride=config.segment_stride_steps)


# -- jamming calibration ----------------------------------------------------

@dataclass(frozen=True)
class FixCell:
    altitude_m: float
    distance_m: float
    elevation_deg: float
    fix: bool  # True: GPS unaffected


TABLE_I_PATTERN = (
    FixCell(25, 5, 0, False), FixCell(25, 10, 30, False),
    FixCell(30, 5, 0, False), FixCell(30, 10, 30, False),
    FixCell(50, 5, 0, False), FixCell(50, 10, 30, True),
)


def pattern_js(params: JamParams, pattern, jammer_altitude_m: float = 0.0) -> np.ndarray:
    return np.array([
        jam_to_signal(params, JamGeometry.table_cell(c.altitude_m, c.distance_m,
                                                      c.elevation_deg, jammer_altitude_m))
        for c in pattern])


def calibrate_jamming(pattern=TABLE_I_PATTERN, base: JamParams | None = None,
                      jammer_altitude_m: float = 0.0, threshold_step: float = 0.05,
                      slopes=None) -> JamParams:
    """Grid-search (js_threshold, sat_loss_slope) to reproduce a fix pattern.

    Among the grid points whose jitter-free satellite count reproduces every
    cell, the one deepest inside the feasible set (largest Euclidean
    distance, in grid cells, to an infeasible point) is returned.
    """
    base = JamParams() if base is None else base
    pattern = list(pattern)
    if not pattern:
        raise ValueError("empty pattern")
    js = pattern_js(base, pattern, jammer_altitude_m)
    want = np.array([c.fix for c in pattern])
    finite = js[np.isfinite(js)]
    lo = (finite.min() if finite.size else 0.0) - 40.0
    hi = (finite.max() if finite.size else 0.0) + 10.0
    thresholds = np.round(np.arange(lo, hi + threshold_step / 2, threshold_step), 6)
    slopes = np.round(np.arange(0.05, 3.0001, 0.05), 6) if slopes is None else np.asarray(slopes)

    excess = np.maximum(0.0, js[None, :] - thresholds[:, None])             # (T, C)
    excess = np.where(np.isfinite(excess), excess, 1e9)
    lost = np.floor(excess[:, None, :] * slopes[None, :, None])             # (T, S, C)
    n_s = np.clip(base.n_nominal - lost, 0, base.n_nominal)
    got = n_s >= base.fix_min_sats
    hits = (got == want[None, None, :]).sum(axis=2)
    feasible = hits == len(pattern)

    if not feasible.any():
        ti, si = np.unravel_index(np.argmax(hits), hits.shape)
        miss = replace(base, js_threshold_db=float(thresholds[ti]),
                       sat_loss_slope=float(slopes[si]))
        raise InfeasibleCalibration(
            f"no feasible (js_threshold, sat_loss_slope); nearest miss "
            f"js_threshold_db={miss.js_threshold_db:.2f}, sat_loss_slope={miss.sat_loss_slope:.2f} "
            f"matches {hits[ti, si]}/{len(pattern)} cells", nearest_miss=miss)

    depth = ndimage.distance_transform_edt(np.pad(feasible, 1))[1:-1, 1:-1]
    ti, si = np.unravel_index(np.argmax(depth), depth.shape)
    out = replace(base, js_threshold_db=float(thresholds[ti]), sat_loss_slope=float(slopes[si]))
    check = [satellites_core(j, out) >= out.fix_min_sats for j in js]
    if check != list(want):
        raise InfeasibleCalibration("calibrated point failed scalar re-check", nearest_miss=out)
    return out


def reproduces_pattern(params: JamParams, pattern=TABLE_I_PATTERN,
                       jammer_altitude_m: float = 0.0) -> list[bool]:
    js = pattern_js(params, pattern, jammer_altitude_m)
    return [(satellites_core(j, params) >= params.fix_min_sats) == c.fix
            for j, c in zip(js, pattern)]


# -- batches ----------------------------------------------------------------

@dataclass
class RunFailure:
    index: int
    error: str


def _score_indexed(item):
    i, config = item
    try:
        return simulate_and_score(config)
    except Exception as exc:  # isolate failures per run
        return RunFailure(i, f"{type(exc).__name__}: {exc}")


def batch_run(configs, workers: int = 1) -> list:
    """Score every config; a failing run yields a :class:`RunFailure` in its slot."""
    configs = list(configs)
    if not configs:
        raise ValueError("batch needs at least one config")
    items = list(enumerate(configs))
    if workers <= 1:
        return [_score_indexed(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_score_indexed, items))
