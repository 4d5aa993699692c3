"""Command line entry point: ``rpsjs <subcommand> ...``.

On failure a JSON object ``{"error": <type>, "message": <text>}`` is written
to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .controller import RadioMode
from .harness import (RunFailure, TABLE_I_PATTERN, batch_run, calibrate_jamming,
                      compute_metrics, reproduces_pattern, run_scenario)
from .positioning import (EkfConfig, RangeNoiseModel, RpsContext, ekf_predict,
                          estimate_position)
from .scenario import ControllerParams, Transmitter, load_scenario
from .sweep import extract_moments, load_sweep_log, select_transmitters


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config = replace(config, seed=args.seed).validate()
    log = run_scenario(config)
    out = _outdir(args.out)
    io.write_trajectories(log, out / "trajectories.csv")
    io.write_events(log.events, out / "events.csv")
    io.write_jamlink(log, out / "jamlink.csv")
    io.write_truth(log, out / "truth.csv")
    io.write_gps(log, out / "gps.csv")
    io.write_segments(log.segments, out / "segments.json")
    report = compute_metrics(log, log.segments, stride=config.segment_stride_steps)
    io.write_json(report.to_dict(), out / "metrics.json")
    return 0


def _load_transmitters(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        txs = [Transmitter(int(t["band"]), float(t["x_m"]), float(t["y_m"]),
                           float(t["ref_rss_dbm"]), float(t.get("d0_m", 1.0)))
               for t in data["transmitters"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed transmitter entry ({exc})") from exc
    ctrl = data.get("controller", {})
    params = ControllerParams(t_i=int(ctrl.get("t_i", 13)), n_pl=float(ctrl.get("n_pl", 2.8)))
    return txs, params, data


def cmd_replay(args) -> int:
    txs, params, extra = _load_transmitters(args.transmitters)
    if args.t_i is not None:
        params = replace(params, t_i=args.t_i)
    frames = {f.step: f for f in load_sweep_log(args.sweeps)}
    if not frames:
        raise ValueError(f"{args.sweeps}: no sweeps")
    imu = io.read_track(args.imu, need=("step", "vx_mps", "vy_mps"))
    vel = {int(s): np.array([vx, vy]) for s, vx, vy in zip(imu["step"], imu["vx_mps"], imu["vy_mps"])}

    first = min(frames)
    selected = select_transmitters([extract_moments(frames[first])], params.t_i)
    samples = min(len(v) for v in frames[first].samples.values())
    dt = args.dt
    q = (float(extra.get("imu_velocity_noise_sigma_mps", 0.3)) * dt) ** 2
    p0 = float(extra.get("ekf_p0_sigma_m", 5.0)) ** 2
    ctx = RpsContext(
        selected=tuple(selected), transmitters={t.band: t for t in txs},
        ekf=EkfConfig(Q=q * np.eye(2), P0=p0 * np.eye(2)), n_pl=params.n_pl,
        noise=RangeNoiseModel(float(extra.get("shadowing_sigma_db", 3.0)), samples, params.n_pl),
        dt=dt)

    steps = sorted(s for s in set(frames) | set(vel) if s >= first)
    nav = None
    rows = []
    for k in steps:
        u = vel.get(k, np.zeros(2))
        if k in frames:
            nav = estimate_position(extract_moments(frames[k]), nav, u, ctx)
            mode = RadioMode.RPS_ACTIVE
        else:
            nav = replace(ekf_predict(nav, u, dt, ctx.ekf), step=k)
            mode = RadioMode.JAMMING
        rows.append((k, nav.p, nav.P, mode))

    out = _outdir(args.out)
    io._write(out / "trajectories.csv", io.TRAJECTORY_HEADER, (
        [k, io._num(p[0]), io._num(p[1]), io._num(P[0, 0]), io._num(P[0, 1]), io._num(P[1, 1]),
         m.value] for k, p, P, m in rows))
    return 0


def cmd_metrics(args) -> int:
    truth = io.read_track(args.truth)
    est = io.read_track(args.est)
    gps = io.read_track(args.gps) if args.gps else None
    log = io.log_from_tracks(truth, est, gps)
    segments = io.read_segments(args.segments) if args.segments else []
    report = compute_metrics(log, segments, stride=args.stride)
    io.write_json(report.to_dict(), args.out)
    return 0


def cmd_calibrate_jam(args) -> int:
    pattern = io.read_pattern(args.pattern) if args.pattern else list(TABLE_I_PATTERN)
    params = calibrate_jamming(pattern, jammer_altitude_m=args.jammer_altitude)
    result = asdict(params)
    result["reproduces_pattern"] = all(reproduces_pattern(params, pattern, args.jammer_altitude))
    io.write_json(result, args.out)
    return 0


def _seed_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        seeds = list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed range must look like 1..25, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return seeds


def cmd_batch(args) -> int:
    base = load_scenario(args.scenario)
    configs = [replace(base, seed=s) for s in args.seeds]
    results = batch_run(configs, workers=args.workers)
    out = _outdir(args.out)
    runs, failures = [], []
    for seed, res in zip(args.seeds, results):
        if isinstance(res, RunFailure):
            failures.append({"seed": seed, "error": res.error})
            continue
        d = res.to_dict()
        io.write_json(d, out / f"metrics_seed{seed}.json")
        runs.append((seed, res))

    def median(key):
        vals = [getattr(r, key) for _, r in runs]
        vals = [v for v in vals if isinstance(v, (int, float)) and math.isfinite(v)]
        return float(np.median(vals)) if vals else None

    summary = {
        "seeds": args.seeds,
        "completed": len(runs),
        "failures": failures,
        "median_mae_rps_m": median("mae_m"),
        "median_mae_gps_m": median("gps_mae_m"),
        "median_switch_count": median("switch_count"),
        "switch_counts": {str(s): r.switch_count for s, r in runs},
        "mae_rps_m": {str(s): r.mae_m for s, r in runs},
    }
    io.write_json(summary, out / "summary.json")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpsjs", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log range clamps and warnings")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write CSV logs plus metrics.json")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="estimate a trajectory from recorded sweeps and IMU")
    p.add_argument("--sweeps", required=True, help="CSV step,band,rss_dbm")
    p.add_argument("--imu", required=True, help="CSV step,vx_mps,vy_mps")
    p.add_argument("--transmitters", required=True, help="JSON with a transmitters list")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=0.2)
    p.add_argument("--t-i", type=int, default=None, help="override the number of bands used")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics", help="score an estimated track against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--gps")
    p.add_argument("--segments")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("calibrate-jam", help="fit js_threshold and sat_loss_slope to a fix pattern")
    p.add_argument("--pattern", help="JSON list of cells; default is the outdoor 6-cell pattern")
    p.add_argument("--out", required=True)
    p.add_argument("--jammer-altitude", type=float, default=0.0)
    p.set_defaults(func=cmd_calibrate_jam)

    p = sub.add_parser("batch", help="run a scenario over a seed range")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=_seed_range, required=True, help="inclusive range, e.g. 1..25")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
