"""GPS link budget under jamming, kept at the level of powers in dBm.

The jammer's received power follows the two-ray ground-reflection law
(d^-4 with both antenna heights squared). An antenna-pattern roll-off
cos(elevation)^kappa attenuates the jam power reaching the GPS antenna.
The jam-to-signal ratio then drives how many satellites stay tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class JamParams:
    p_t_mw: float = 0.1
    g_t: float = 1.0
    g_r: float = 1.0
    h_t_m: float = 1.5
    h_r_m: float = 1.5
    js_threshold_db: float = 50.0
    sat_loss_slope: float = 1.0  # satellites lost per dB above threshold
    n_nominal: int = 12
    fix_min_sats: int = 4
    gps_signal_dbm: float = -130.0
    elevation_exponent: float = 2.0
    noise_floor_dbm: float = -111.0
    jam_noise_db: float = -30.0  # jammer noise skirt relative to its carrier
    # coupling from the pursuer's own jammer into its own GPS antenna
    self_distance_m: float = 0.5
    self_elevation_deg: float = 80.0
    self_isolation_db: float = 0.0

    def validate(self):
        if not (self.p_t_mw > 0 and self.g_t > 0 and self.g_r > 0):
            raise ValueError("jam powers and gains must be positive")
        if not (self.h_t_m > 0 and self.h_r_m > 0):
            raise ValueError("antenna heights must be positive")
        if self.n_nominal < self.fix_min_sats:
            raise ValueError("n_nominal must be >= fix_min_sats")
        if self.sat_loss_slope < 0:
            raise ValueError("sat_loss_slope must be >= 0")
        if self.self_distance_m <= 0:
            raise ValueError("self_distance_m must be positive")
        if self.self_isolation_db < 0:
            raise ValueError("self_isolation_db must be >= 0")


@dataclass(frozen=True)
class JamGeometry:
    distance_m: float
    altitude_diff_m: float
    elevation_deg: float

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError("jam distance must be positive")

    @classmethod
    def from_offsets(cls, horizontal_m, altitude_diff_m):
        """Slant range and elevation from a horizontal and vertical offset."""
        d = math.hypot(horizontal_m, altitude_diff_m)
        el = math.degrees(math.atan2(abs(altitude_diff_m), horizontal_m))
        return cls(d, altitude_diff_m, el)

    @classmethod
    def table_cell(cls, altitude_m, distance_m, elevation_deg, jammer_altitude_m=0.0):
        """Geometry of one outdoor test cell, taking the elevation as labelled.

        The cell's distance is horizontal, so the slant range grows with the
        target altitude; the elevation label is used verbatim and is not
        recomputed from the offsets.
        """
        dz = altitude_m - jammer_altitude_m
        return cls(math.hypot(distance_m, dz), dz, elevation_deg)


@dataclass(frozen=True)
class GpsLinkState:
    signal_dbm: float
    jam_dbm: float
    noise_dbm: float
    js_db: float
    n_s: int
    fix_available: bool


def two_ray_rss(params: JamParams, d_rt: float) -> float:
    """Received jammer power in mW."""
    if not d_rt > 0:
        raise ValueError("d_rt must be positive")
    return (params.p_t_mw * params.g_t * params.g_r
            * (params.h_t_m ** 2 * params.h_r_m ** 2) / d_rt ** 4)


def _pattern_db(params: JamParams, elevation_deg: float) -> float:
    c = math.cos(math.radians(elevation_deg))
    if elevation_deg >= 90.0 or c <= 0.0:
        return -math.inf
    return params.elevation_exponent * 10.0 * math.log10(c)


def jam_power_dbm(params: JamParams, geometry: JamGeometry) -> float:
    rss = two_ray_rss(params, geometry.distance_m)
    return 10.0 * math.log10(rss) + _pattern_db(params, geometry.elevation_deg)


def jam_to_signal(params: JamParams, geometry: JamGeometry) -> float:
    return jam_power_dbm(params, geometry) - params.gps_signal_dbm


def satellites_core(js_db: float, params: JamParams) -> int:
    """Jitter-free number of tracked satellites at a given J/S."""
    excess = max(0.0, js_db - params.js_threshold_db)
    lost = math.floor(excess * params.sat_loss_slope) if math.isfinite(excess) else params.n_nominal
    return int(min(max(params.n_nominal - lost, 0), params.n_nominal))


def satellites_visible(js_db: float, params: JamParams, rng) -> int:
    jitter = int(rng.integers(0, 2))
    return max(satellites_core(js_db, params) - jitter, 0)


def fix_available(n_s: int, params: JamParams) -> bool:
    return n_s >= params.fix_min_sats


def _power_sum_dbm(*levels):
    finite = [lv for lv in levels if math.isfinite(lv)]
    if not finite:
        return -math.inf
    return 10.0 * math.log10(sum(10.0 ** (lv / 10.0) for lv in finite))


def gps_link(params: JamParams, geometry: JamGeometry | None, rng,
             isolation_db: float = 0.0) -> GpsLinkState:
    """Link state of one GPS receiver; ``geometry=None`` means no jammer on air."""
    jam = -math.inf if geometry is None else jam_power_dbm(params, geometry) - isolation_db
    js = jam - params.gps_signal_dbm
    noise = _power_sum_dbm(params.noise_floor_dbm, jam + params.jam_noise_db)
    n_s = satellites_visible(js, params, rng)
    return GpsLinkState(params.gps_signal_dbm, jam, noise, js, n_s, fix_available(n_s, params))


def gps_position_fix(truth, link: GpsLinkState, gps_noise_sigma: float, rng,
                     params: JamParams) -> np.ndarray | None:
    """Noisy GPS position, or None without a fix.

    Noise grows as satellites drop out. Two normals are drawn on every call
    so paired runs stay sample-aligned.
    """
    z = rng.normal(0.0, 1.0, size=2)
    if not link.fix_available:
        return None
    sigma = gps_noise_sigma * params.n_nominal / max(link.n_s, params.fix_min_sats)
    return np.asarray(truth, dtype=float) + sigma * z
