"""Pinhole ranging of the rogue drone from bounding-box widths.

Detection itself is not modelled: boxes come either from a synthetic
generator driven by the true geometry or from a replayed detection log.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CameraCalibration:
    focal_px: float
    ref_width_m: float
    ref_width_px: float
    ref_distance_m: float


@dataclass(frozen=True)
class BoxObservation:
    step: int
    width_px: float
    center_offset_px: float
    target_width_m: float

    def __post_init__(self):
        if not self.width_px > 0:
            raise ValueError(f"box width must be positive, got {self.width_px}")


@dataclass(frozen=True)
class CameraParams:
    """Scenario-level camera settings.

    The focal length is not stored; it is recovered from a reference
    acquisition (an object of known width seen at a known distance).
    """

    ref_width_px: float = 100.0
    ref_distance_m: float = 4.0
    ref_width_m: float = 0.4
    target_width_m: float = 0.4
    pixel_noise_px: float = 2.0
    smoothing_window: int = 5
    image_width_px: float = 1280.0
    min_box_px: float = 3.0

    def calibration(self) -> CameraCalibration:
        return calibrate_focal(self.ref_width_px, self.ref_distance_m, self.ref_width_m)


def calibrate_focal(ref_width_px, ref_distance_m, ref_width_m) -> CameraCalibration:
    for name, value in (("ref_width_px", ref_width_px), ("ref_distance_m", ref_distance_m),
                        ("ref_width_m", ref_width_m)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    focal = ref_width_px * ref_distance_m / ref_width_m
    return CameraCalibration(focal, ref_width_m, ref_width_px, ref_distance_m)


def depth_distance(obs: BoxObservation, cal: CameraCalibration) -> float:
    return obs.target_width_m * cal.focal_px / obs.width_px


def horizontal_distance(obs: BoxObservation, d_c: float, cal: CameraCalibration) -> float:
    """Lateral offset of the target from the optical axis, in metres."""
    return d_c * obs.center_offset_px / cal.focal_px


def smoothed_distance(history, window: int) -> tuple[float, float]:
    """Mean (depth, lateral) over the most recent ``window`` entries."""
    if not history:
        raise ValueError("empty distance history")
    if window < 1:
        raise ValueError("window must be >= 1")
    recent = np.asarray(history[-window:], dtype=float)
    depth, lateral = recent.mean(axis=0)
    return float(depth), float(lateral)


def synth_box(step, depth_m, lateral_m, cal: CameraCalibration, target_width_m,
              pixel_noise_px, rng) -> BoxObservation | None:
    """Project a target at (depth, lateral) into a noisy box.

    Returns None when the box would be narrower than one pixel, i.e. the
    target is not resolvable. Both noise draws are always consumed so the
    stream stays aligned regardless of the outcome.
    """
    noise = rng.normal(0.0, 1.0, size=2) * pixel_noise_px
    width = cal.focal_px * target_width_m / depth_m + noise[0]
    offset = cal.focal_px * lateral_m / depth_m + noise[1]
    if width < 1.0:
        return None
    return BoxObservation(step, float(width), float(offset), target_width_m)


def load_detection_log(path, target_width_m: float) -> list[BoxObservation]:
    """Read ``step,w_rp_px,center_offset_px`` rows, sorted by step."""
    out = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(BoxObservation(int(row["step"]), float(row["w_rp_px"]),
                                          float(row["center_offset_px"]), target_width_m))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed detection row ({exc})") from exc
    out.sort(key=lambda o: o.step)
    return out
