"""CSV and JSON files written by the simulator and read back by the CLI.

Floats are written with ``repr`` so a re-run with the same seed produces
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .controller import RadioMode
from .harness import FixCell, SimLog, _empty_log
from .scenario import RouteSegment

TRAJECTORY_HEADER = ["step", "x_m", "y_m", "p11", "p12", "p22", "mode"]
EVENT_HEADER = ["step", "from_mode", "to_mode", "cause", "d_c_m", "e_m_m", "t_d_m"]
JAMLINK_HEADER = ["step", "js_db", "n_s", "fix_available", "target"]
TRUTH_HEADER = ["step", "x_m", "y_m", "rogue_x_m", "rogue_y_m", "rogue_alt_m"]
GPS_HEADER = ["step", "x_m", "y_m", "fresh"]


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trajectories(log: SimLog, path) -> None:
    _write(path, TRAJECTORY_HEADER, (
        [k, _num(p[0]), _num(p[1]), _num(P[0, 0]), _num(P[0, 1]), _num(P[1, 1]), m.value]
        for k, (p, P, m) in enumerate(zip(log.est, log.cov, log.mode))))


def write_events(events, path) -> None:
    _write(path, EVENT_HEADER, (
        [ev.step, ev.from_mode.value, ev.to_mode.value, ev.cause,
         _num(ev.d_c), _num(ev.e_m), _num(ev.t_d)] for ev in events))


def write_jamlink(log: SimLog, path) -> None:
    rows = []
    for k in range(len(log)):
        rows.append([k, _num(log.js_rogue[k]), int(log.n_s_rogue[k]), int(log.fix_rogue[k]), "rogue"])
        rows.append([k, _num(log.js_pursuer[k]), int(log.n_s_pursuer[k]),
                     int(log.fix_pursuer[k]), "pursuer"])
    _write(path, JAMLINK_HEADER, rows)


def write_truth(log: SimLog, path) -> None:
    _write(path, TRUTH_HEADER, (
        [k, _num(p[0]), _num(p[1]), _num(r[0]), _num(r[1]), _num(a)]
        for k, (p, r, a) in enumerate(zip(log.pursuer, log.rogue, log.rogue_alt))))


def write_gps(log: SimLog, path) -> None:
    _write(path, GPS_HEADER, (
        [k, _num(g[0]), _num(g[1]), int(f)] for k, (g, f) in enumerate(zip(log.gps, log.gps_fresh))))


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_segments(segments, path) -> None:
    write_json([asdict(s) for s in segments], path)


def read_segments(path) -> list[RouteSegment]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return [RouteSegment(str(s["label"]), int(s["start_step"]), int(s["end_step"]),
                             float(s.get("design_length_m", math.nan))) for s in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed segment entry ({exc})") from exc


def read_track(path, need=("step", "x_m", "y_m")) -> dict:
    """Columns of a step-indexed CSV, keyed by header name (strings kept as-is)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = list(reader)
    cols = {name: [r[name] for r in rows] for name in reader.fieldnames}
    try:
        cols["step"] = np.array([int(s) for s in cols["step"]])
        for c in need[1:]:
            cols[c] = np.array([float(v) for v in cols[c]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from exc
    return cols


def log_from_tracks(truth: dict, est: dict, gps: dict | None = None) -> SimLog:
    """Assemble a metrics-only log from truth/estimate (and optional GPS) tracks.

    Steps are matched by index; steps present in only one file are dropped.
    """
    steps = np.intersect1d(truth["step"], est["step"])
    if gps is not None:
        steps = np.intersect1d(steps, gps["step"])
    if steps.size == 0:
        raise ValueError("truth and estimate share no steps")

    def pick(track, cols):
        pos = {s: i for i, s in enumerate(track["step"])}
        idx = [pos[s] for s in steps]
        return np.column_stack([np.asarray(track[c], float)[idx] for c in cols]), idx

    out = _empty_log(len(steps))
    out.pursuer, _ = pick(truth, ("x_m", "y_m"))
    out.est, idx = pick(est, ("x_m", "y_m"))
    modes = est.get("mode")
    out.mode = [RadioMode(modes[i]) if modes else RadioMode.RPS_ACTIVE for i in idx]
    if gps is not None:
        out.gps, gi = pick(gps, ("x_m", "y_m"))
        fresh = gps.get("fresh")
        out.gps_fresh = (np.array([fresh[i] in ("1", "True", "true") for i in gi])
                         if fresh else np.all(np.isfinite(out.gps), axis=1))
    return out


def read_pattern(path) -> list[FixCell]:
    """Fix pattern as a JSON list of ``{altitude_m, distance_m, elevation_deg, fix}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    cells = data["cells"] if isinstance(data, dict) else data
    try:
        return [FixCell(float(c["altitude_m"]), float(c["distance_m"]),
                        float(c["elevation_deg"]), bool(c["fix"])) for c in cells]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed pattern cell ({exc})") from exc
