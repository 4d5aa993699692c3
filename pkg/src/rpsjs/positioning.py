"""Relative positioning from SOP received power.

Band means are turned into ranges through the inverted log-distance model,
a linearised least-squares multilateration gives a snapshot fix, and an
EKF over planar position fuses the ranges with inertial velocity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGeometry, SingularInnovation

log = logging.getLogger(__name__)

D_MIN = 0.1
D_MAX = 50_000.0
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class RangeObservation:
    band: int
    distance: float
    clamped: bool = False

    def __post_init__(self):
        if not (self.distance > 0 and math.isfinite(self.distance)):
            raise ValueError(f"range must be positive and finite, got {self.distance}")


@dataclass(frozen=True)
class NavState:
    p: np.ndarray
    P: np.ndarray
    step: int = 0
    # diagnostics of the last update (None after a predict-only step)
    innovation: np.ndarray | None = None
    bands: tuple = ()
    ranges: np.ndarray | None = None
    lsq: np.ndarray | None = None


@dataclass(frozen=True)
class EkfConfig:
    Q: np.ndarray
    P0: np.ndarray
    R: np.ndarray | None = None
    F: np.ndarray = field(default_factory=lambda: np.eye(2))


@dataclass(frozen=True)
class RangeNoiseModel:
    """First-order map from dB shadowing to range standard deviation.

    A band mean over ``samples`` draws has sigma_db/sqrt(samples); through
    d = d0*10^((P0-rss)/(10 n)) that becomes d*ln10*sigma/(10 n sqrt(samples)).
    ``floor_m`` keeps R positive definite when shadowing is zero.
    """

    shadowing_sigma_db: float
    samples: int
    n_pl: float
    floor_m: float = 0.05

    def sigma(self, distance):
        d = np.asarray(distance, dtype=float)
        s = d * _LN10 * self.shadowing_sigma_db / (10.0 * self.n_pl * math.sqrt(self.samples))
        return np.maximum(s, self.floor_m)

    def covariance(self, distance):
        return np.diag(self.sigma(distance) ** 2)


def invert_pathloss(rss_mean, transmitter, n_pl, band=None) -> RangeObservation:
    if not n_pl > 0:
        raise ValueError("n_pl must be positive")
    d = transmitter.d0 * 10.0 ** ((transmitter.ref_rss_dbm - rss_mean) / (10.0 * n_pl))
    band = transmitter.band if band is None else band
    if d < D_MIN or d > D_MAX or not math.isfinite(d):
        clipped = min(max(d, D_MIN), D_MAX) if not math.isnan(d) else D_MAX
        log.info("range clamp on band %s: %.6g m -> %.6g m", band, d, clipped)
        return RangeObservation(band, clipped, clamped=True)
    return RangeObservation(band, float(d))


def lsq_position(anchors, distances, refine: int = 5) -> np.ndarray:
    """Anchor-difference linear least squares fix.

    With the first anchor as reference each further anchor gives
    ``2 (a_i - a_1)^T p = |a_i|^2 - |a_1|^2 - d_i^2 + d_1^2``, solved with an
    SVD-based ``lstsq``. ``refine`` Gauss-Newton passes on the range
    residual may follow.
    """
    a = np.asarray(anchors, dtype=float)
    d = np.asarray(distances, dtype=float)
    if a.shape[0] < 4 or a.shape[0] != d.shape[0]:
        raise DegenerateGeometry(f"need >= 4 matched anchors/ranges, got {a.shape[0]}/{d.shape[0]}")
    A = 2.0 * (a[1:] - a[0])
    b = (np.sum(a[1:] ** 2, axis=1) - np.sum(a[0] ** 2)) - d[1:] ** 2 + d[0] ** 2
    scale = max(np.abs(A).max(), 1e-300)
    if np.linalg.matrix_rank(A / scale, tol=1e-9) < 2:
        raise DegenerateGeometry("degenerate geometry: anchors are collinear")
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    for _ in range(refine):
        diff = p - a
        rng = np.linalg.norm(diff, axis=1)
        if np.any(rng < 1e-9):
            break
        J = diff / rng[:, None]
        step, *_ = np.linalg.lstsq(J, d - rng, rcond=None)
        p = p + step
        if np.linalg.norm(step) < 1e-12:
            break
    return p


def multilaterate_lsq(observations, anchors_by_band, refine: int = 5) -> np.ndarray:
    if len(observations) < 4:
        raise DegenerateGeometry(f"need >= 4 ranges, got {len(observations)}")
    anchors = np.array([anchors_by_band[o.band] for o in observations], dtype=float)
    distances = np.array([o.distance for o in observations])
    return lsq_position(anchors, distances, refine=refine)


def range_model(p, anchors) -> np.ndarray:
    return np.linalg.norm(np.asarray(anchors, dtype=float) - np.asarray(p, dtype=float), axis=1)


def range_jacobian(p, anchors) -> np.ndarray:
    diff = np.asarray(p, dtype=float) - np.asarray(anchors, dtype=float)
    return diff / np.linalg.norm(diff, axis=1)[:, None]


def ekf_predict(state: NavState, u, dt: float, cfg: EkfConfig) -> NavState:
    F = cfg.F
    p = F @ state.p + np.asarray(u, dtype=float) * dt
    P = F @ state.P @ F.T + cfg.Q
    return NavState(p, 0.5 * (P + P.T), state.step + 1)


def ekf_update(state: NavState, ranges, anchors_by_band, cfg: EkfConfig, R=None) -> NavState:
    """Range-only EKF correction.

    ``R`` overrides ``cfg.R``; it must match the order of ``ranges``. Rows
    whose anchor coincides with the estimate are dropped.
    """
    if not ranges:
        raise ValueError("ekf_update needs at least one range")
    R = cfg.R if R is None else R
    if R is None:
        raise ValueError("no measurement covariance given")
    R = np.asarray(R, dtype=float)
    anchors = np.array([anchors_by_band[r.band] for r in ranges], dtype=float)
    d = np.array([r.distance for r in ranges])
    h = range_model(state.p, anchors)
    keep = h > 1e-6
    if not np.all(keep):
        for r in np.asarray(ranges, dtype=object)[~keep]:
            log.warning("dropping band %s: transmitter coincides with the estimate", r.band)
        if not np.any(keep):
            raise SingularInnovation("singular innovation: every anchor coincides with the estimate")
        anchors, d, h = anchors[keep], d[keep], h[keep]
        R = R[np.ix_(keep, keep)]
    H = range_jacobian(state.p, anchors)
    P = state.P
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1.0 / np.finfo(float).eps:
        raise SingularInnovation("singular innovation covariance")
    K = np.linalg.solve(S, H @ P).T
    nu = d - h
    p = state.p + K @ nu
    P = (np.eye(2) - K @ H) @ P
    P = 0.5 * (P + P.T)
    bands = tuple(r.band for r, k in zip(ranges, keep) if k)
    return NavState(p, P, state.step, innovation=nu, bands=bands, ranges=d, lsq=state.lsq)


@dataclass(frozen=True)
class RpsContext:
    """Everything static the positioning pipeline needs across steps."""

    selected: tuple
    transmitters: dict  # band -> Transmitter, as believed by the estimator
    ekf: EkfConfig
    n_pl: float
    noise: RangeNoiseModel
    dt: float
    lsq_refine: int = 5

    @property
    def anchors(self) -> dict:
        return {b: self.transmitters[b].position for b in self.selected}


def ranges_from_moments(moments, ctx: RpsContext) -> list[RangeObservation]:
    missing = [b for b in ctx.selected if b not in moments.mean]
    if missing:
        raise ValueError(f"selected bands missing from sweep: {missing}")
    return [invert_pathloss(moments.mean[b], ctx.transmitters[b], ctx.n_pl, band=b)
            for b in ctx.selected]


def estimate_position(moments, state: NavState | None, u, ctx: RpsContext) -> NavState:
    """One RPS step: ranges, LSQ snapshot, EKF predict and update.

    On the first call (``state is None``) the filter is seeded at the LSQ
    fix with covariance ``ctx.ekf.P0`` and no motion is applied, since the
    sweep was taken at the current position.
    """
    ranges = ranges_from_moments(moments, ctx)
    anchors = ctx.anchors
    p_star = multilaterate_lsq(ranges, anchors, refine=ctx.lsq_refine)
    if state is None:
        prior = NavState(p_star.copy(), ctx.ekf.P0.copy(), moments.step)
    else:
        prior = ekf_predict(state, u, ctx.dt, ctx.ekf)
        prior = replace(prior, step=moments.step)
    prior = replace(prior, lsq=p_star)
    if ctx.ekf.R is not None:
        R = ctx.ekf.R
    else:
        R = ctx.noise.covariance(range_model(prior.p, [anchors[r.band] for r in ranges]))
    return ekf_update(prior, ranges, anchors, ctx.ekf, R=R)


def default_ekf_config(config) -> EkfConfig:
    q = (config.imu_velocity_noise_sigma * config.dt) ** 2
    return EkfConfig(Q=q * np.eye(2), P0=config.ekf_p0_sigma ** 2 * np.eye(2))


def build_context(config, selected, transmitters=None, ekf=None, lsq_refine=5) -> RpsContext:
    txs = config.transmitters if transmitters is None else transmitters
    return RpsContext(
        selected=tuple(selected),
        transmitters={t.band: t for t in txs},
        ekf=default_ekf_config(config) if ekf is None else ekf,
        n_pl=config.ctrl_params.n_pl,
        noise=RangeNoiseModel(config.shadowing_sigma, config.samples_per_band,
                              config.ctrl_params.n_pl, config.range_noise_sigma),
        dt=config.dt,
        lsq_refine=lsq_refine,
    )
