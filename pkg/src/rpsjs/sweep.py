"""Spectrum sweeps over the SOP bands and per-band moment extraction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientTransmitters


@dataclass(frozen=True)
class SweepFrame:
    step: int
    samples: dict  # band id -> 1-D array of RSS samples in dBm

    def __post_init__(self):
        for band, s in self.samples.items():
            if len(s) == 0:
                raise ValueError(f"band {band} has no samples")


@dataclass(frozen=True)
class BandMoments:
    step: int
    mean: dict
    variance: dict


def pathloss_rss(ref_rss_dbm, d0, n_pl, distance):
    """Log-distance model: mean RSS at ``distance`` metres."""
    return ref_rss_dbm - 10.0 * n_pl * np.log10(np.asarray(distance, dtype=float) / d0)


def simulate_sweep(config, true_position, step: int, rng, samples_per_band=None,
                   transmitters=None) -> SweepFrame:
    """Draw one sweep at ``true_position``.

    Each band gets ``samples_per_band`` i.i.d. samples around the path-loss
    mean with Gaussian shadowing in dB. Bands are drawn in transmitter order
    from a single block so the stream consumption is fixed per call.
    """
    p = np.asarray(true_position, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("true position must be finite")
    k = config.samples_per_band if samples_per_band is None else samples_per_band
    txs = config.transmitters if transmitters is None else transmitters
    n_pl = config.ctrl_params.n_pl
    noise = rng.standard_normal((len(txs), k))
    samples = {}
    for row, t in enumerate(txs):
        d = max(math.hypot(p[0] - t.x, p[1] - t.y), 1e-9)
        mean = float(pathloss_rss(t.ref_rss_dbm, t.d0, n_pl, d))
        if config.shadowing_sigma == 0:
            samples[t.band] = np.full(k, mean)
        else:
            samples[t.band] = mean + config.shadowing_sigma * noise[row]
    return SweepFrame(step, samples)


def extract_moments(frame: SweepFrame) -> BandMoments:
    mean, var = {}, {}
    for band, s in frame.samples.items():
        a = np.asarray(s, dtype=float)
        m = a.mean()
        mean[band] = float(m)
        var[band] = float(np.mean((a - m) ** 2))
    return BandMoments(frame.step, mean, var)


def select_transmitters(calibration_frames, t_i: int) -> list[int]:
    """Pick the ``t_i`` bands with the highest average mean RSS.

    Bands are averaged over the frames they appear in; ties go to the
    lower band id.
    """
    if not calibration_frames:
        raise ValueError("need at least one calibration frame")
    sums, counts = {}, {}
    for m in calibration_frames:
        for band, value in m.mean.items():
            sums[band] = sums.get(band, 0.0) + value
            counts[band] = counts.get(band, 0) + 1
    if len(sums) < t_i:
        raise InsufficientTransmitters(
            f"insufficient transmitters: {len(sums)} bands present, T_i={t_i}")
    ranked = sorted(sums, key=lambda b: (-sums[b] / counts[b], b))
    return ranked[:t_i]


def load_sweep_log(path) -> list[SweepFrame]:
    """Parse a ``step,band,rss_dbm`` CSV into frames sorted by step."""
    by_step: dict[int, dict[int, list[float]]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != ["step", "band", "rss_dbm"]:
            raise ValueError(f"{path}:1: expected header step,band,rss_dbm, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 3:
                    raise ValueError(f"expected 3 fields, got {len(row)}")
                step, band, rss = int(row[0]), int(row[1]), float(row[2])
                if not math.isfinite(rss):
                    raise ValueError("non-finite rss")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed sweep row ({exc})") from None
            by_step.setdefault(step, {}).setdefault(band, []).append(rss)
    return [SweepFrame(step, {b: np.array(v) for b, v in bands.items()})
            for step, bands in sorted(by_step.items())]


def write_sweep_log(frames, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "band", "rss_dbm"])
        for f in frames:
            for band in sorted(f.samples):
                for v in f.samples[band]:
                    w.writerow([f.step, band, repr(float(v))])
