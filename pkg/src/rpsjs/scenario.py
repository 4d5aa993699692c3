"""World description, tunable parameters and seeded random streams.

A scenario is read from JSON (units live in the key names, e.g. ``d_jam_m``),
checked against the bundled JSON schema and then against the numeric
invariants in :meth:`ScenarioConfig.validate`.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ScenarioError
from .jamming import JamParams
from .vision import CameraParams

REFERENCE_SCENARIO = "reference.json"


@dataclass(frozen=True)
class Transmitter:
    band: int
    x: float
    y: float
    ref_rss_dbm: float
    d0: float = 1.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Waypoint3D:
    x: float
    y: float
    altitude: float
    hold_steps: int = 0


@dataclass(frozen=True)
class ControllerParams:
    t_i: int = 13
    n_pl: float = 2.8
    a_percentile: float = 50.0
    d_jam: float = 12.0
    calib_window: int = 50


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_steps: int
    dt: float
    transmitters: tuple[Transmitter, ...]
    pursuer_init: tuple[float, float]
    rogue_route: tuple[Waypoint3D, ...]
    name: str = "scenario"
    samples_per_band: int = 16
    shadowing_sigma: float = 3.0
    range_noise_sigma: float = 0.05
    imu_velocity_noise_sigma: float = 0.3
    gps_noise_sigma: float = 2.5
    transmitter_position_error: float = 0.0
    ekf_p0_sigma: float = 5.0
    pursuer_altitude: float = 30.0
    pursuer_max_speed: float = 3.0
    standoff: float | None = None
    rogue_speed: float = 0.6
    jam_params: JamParams = field(default_factory=JamParams)
    ctrl_params: ControllerParams = field(default_factory=ControllerParams)
    camera: CameraParams = field(default_factory=CameraParams)
    segment_stride_steps: int = 50

    @property
    def standoff_m(self) -> float:
        return self.ctrl_params.d_jam / 2.0 if self.standoff is None else self.standoff

    def validate(self) -> "ScenarioConfig":
        def fail(msg):
            raise ScenarioError(msg)

        if self.duration_steps <= 0:
            fail("duration_steps must be > 0")
        if not self.dt > 0:
            fail("dt must be > 0")
        if len(self.transmitters) < 4:
            fail(f"at least 4 transmitters required, got {len(self.transmitters)}")
        bands = [t.band for t in self.transmitters]
        if len(set(bands)) != len(bands):
            fail("transmitter band ids must be unique")
        for t in self.transmitters:
            if not t.d0 > 0:
                fail(f"transmitter {t.band}: d0 must be > 0")
        for name in ("shadowing_sigma", "range_noise_sigma", "imu_velocity_noise_sigma",
                     "gps_noise_sigma", "transmitter_position_error"):
            if getattr(self, name) < 0:
                fail(f"{name} must be >= 0")
        if self.samples_per_band < 1:
            fail("samples_per_band must be >= 1")
        if not self.rogue_route:
            fail("rogue route needs at least one waypoint")
        for wp in self.rogue_route:
            if wp.altitude < 0:
                fail("waypoint altitude must be >= 0")
            if wp.hold_steps < 0:
                fail("waypoint hold_steps must be >= 0")
        ctrl = self.ctrl_params
        if ctrl.t_i < 4:
            fail("T_i must be >= 4")
        if ctrl.t_i > len(self.transmitters):
            fail(f"T_i={ctrl.t_i} exceeds the {len(self.transmitters)} transmitters")
        if not ctrl.n_pl > 0:
            fail("n_PL must be > 0")
        if not 0 < ctrl.a_percentile <= 100:
            fail("a_percentile must lie in (0, 100]")
        if not ctrl.d_jam > 0:
            fail("d_jam must be > 0")
        if ctrl.calib_window < 1:
            fail("calib_window must be >= 1")
        if not self.rogue_speed > 0 or not self.pursuer_max_speed > 0:
            fail("speeds must be > 0")
        if self.standoff is not None and self.standoff < 0:
            fail("standoff must be >= 0")
        try:
            self.jam_params.validate()
            self.camera.calibration()
        except ValueError as exc:
            fail(str(exc))
        return self


# -- JSON (de)serialisation -------------------------------------------------

def _schema():
    text = resources.files("rpsjs.data").joinpath("scenario.schema.json").read_text("utf-8")
    return json.loads(text)


_JAM_KEYS = {f: f for f in JamParams.__dataclass_fields__}
_CAMERA_KEYS = {f: f for f in CameraParams.__dataclass_fields__}
_CTRL_KEYS = {"t_i": "t_i", "n_pl": "n_pl", "a_percentile": "a_percentile",
              "d_jam_m": "d_jam", "calib_window_steps": "calib_window"}


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from None

    txs = tuple(Transmitter(t["band"], float(t["x_m"]), float(t["y_m"]),
                            float(t["ref_rss_dbm"]), float(t.get("d0_m", 1.0)))
                for t in data["transmitters"])
    route = tuple(Waypoint3D(float(w["x_m"]), float(w["y_m"]), float(w["altitude_m"]),
                             int(w.get("hold_steps", 0)))
                  for w in data["rogue"]["route"])
    pursuer = data["pursuer"]
    ctrl = ControllerParams(**{_CTRL_KEYS[k]: v for k, v in data["controller"].items()})
    jam = JamParams(**{_JAM_KEYS[k]: v for k, v in data.get("jamming", {}).items()})
    cam = CameraParams(**{_CAMERA_KEYS[k]: v for k, v in data.get("camera", {}).items()})

    kwargs = dict(
        seed=int(data["seed"]),
        duration_steps=int(data["duration_steps"]),
        dt=float(data["dt_s"]),
        transmitters=txs,
        pursuer_init=(float(pursuer["x_m"]), float(pursuer["y_m"])),
        rogue_route=route,
        jam_params=jam,
        ctrl_params=ctrl,
        camera=cam,
    )
    optional = {
        "name": ("name", str),
        "samples_per_band": ("samples_per_band", int),
        "shadowing_sigma_db": ("shadowing_sigma", float),
        "range_noise_sigma_m": ("range_noise_sigma", float),
        "imu_velocity_noise_sigma_mps": ("imu_velocity_noise_sigma", float),
        "gps_noise_sigma_m": ("gps_noise_sigma", float),
        "transmitter_position_error_m": ("transmitter_position_error", float),
        "ekf_p0_sigma_m": ("ekf_p0_sigma", float),
        "segment_stride_steps": ("segment_stride_steps", int),
    }
    for key, (attr, cast) in optional.items():
        if key in data:
            kwargs[attr] = cast(data[key])
    if "altitude_m" in pursuer:
        kwargs["pursuer_altitude"] = float(pursuer["altitude_m"])
    if "max_speed_mps" in pursuer:
        kwargs["pursuer_max_speed"] = float(pursuer["max_speed_mps"])
    if pursuer.get("standoff_m") is not None:
        kwargs["standoff"] = float(pursuer["standoff_m"])
    if "speed_mps" in data["rogue"]:
        kwargs["rogue_speed"] = float(data["rogue"]["speed_mps"])
    return ScenarioConfig(**kwargs).validate()


def scenario_to_dict(config: ScenarioConfig) -> dict:
    inv_ctrl = {v: k for k, v in _CTRL_KEYS.items()}
    return {
        "name": config.name,
        "seed": config.seed,
        "duration_steps": config.duration_steps,
        "dt_s": config.dt,
        "samples_per_band": config.samples_per_band,
        "shadowing_sigma_db": config.shadowing_sigma,
        "range_noise_sigma_m": config.range_noise_sigma,
        "imu_velocity_noise_sigma_mps": config.imu_velocity_noise_sigma,
        "gps_noise_sigma_m": config.gps_noise_sigma,
        "transmitter_position_error_m": config.transmitter_position_error,
        "ekf_p0_sigma_m": config.ekf_p0_sigma,
        "segment_stride_steps": config.segment_stride_steps,
        "transmitters": [{"band": t.band, "x_m": t.x, "y_m": t.y,
                          "ref_rss_dbm": t.ref_rss_dbm, "d0_m": t.d0}
                         for t in config.transmitters],
        "pursuer": {"x_m": config.pursuer_init[0], "y_m": config.pursuer_init[1],
                    "altitude_m": config.pursuer_altitude,
                    "max_speed_mps": config.pursuer_max_speed,
                    "standoff_m": config.standoff},
        "rogue": {"speed_mps": config.rogue_speed,
                  "route": [{"x_m": w.x, "y_m": w.y, "altitude_m": w.altitude,
                             "hold_steps": w.hold_steps} for w in config.rogue_route]},
        "camera": asdict(config.camera),
        "jamming": asdict(config.jam_params),
        "controller": {inv_ctrl[k]: v for k, v in asdict(config.ctrl_params).items()},
    }


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(data)


def dump_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(config), indent=2) + "\n", encoding="utf-8")


def reference_scenario_path() -> Path:
    return Path(str(resources.files("rpsjs.data").joinpath(REFERENCE_SCENARIO)))


def reference_scenario(**overrides) -> ScenarioConfig:
    config = load_scenario(reference_scenario_path())
    return replace(config, **overrides).validate() if overrides else config


# -- randomness -------------------------------------------------------------

def rng_stream(config_or_seed, label: str) -> np.random.Generator:
    """Independent generator for (seed, label).

    The label is folded into the seed sequence through CRC32 so that it is
    stable across interpreter runs (unlike ``hash``).
    """
    if not label:
        raise ValueError("stream label must be non-empty")
    seed = config_or_seed.seed if isinstance(config_or_seed, ScenarioConfig) else int(config_or_seed)
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def estimator_transmitters(config: ScenarioConfig) -> tuple[Transmitter, ...]:
    """Transmitter records as believed by the estimator.

    Positions are the truth plus an isotropic Gaussian error of
    ``transmitter_position_error`` metres per axis.
    """
    sigma = config.transmitter_position_error
    if sigma == 0:
        return config.transmitters
    rng = rng_stream(config, "tx_position_error")
    out = []
    for t in config.transmitters:
        dx, dy = rng.normal(0.0, sigma, size=2)
        out.append(replace(t, x=t.x + float(dx), y=t.y + float(dy)))
    return tuple(out)


# -- rogue route ------------------------------------------------------------

@dataclass(frozen=True)
class RouteSegment:
    label: str
    start_step: int
    end_step: int
    design_length_m: float


def _waypoint_name(i):
    return chr(ord("A") + i) if i < 26 else f"W{i}"


def rogue_schedule(config: ScenarioConfig):
    """Truth trajectory of the rogue plus per-segment timing.

    The rogue holds ``hold_steps`` at each waypoint then flies the straight
    leg to the next one at ``rogue_speed``; after the last waypoint it hovers.
    Returns ``(xy[N,2], altitude[N], segments)``.
    """
    n = config.duration_steps
    dt = config.dt
    route = config.rogue_route
    t = np.arange(n) * dt
    xy = np.empty((n, 2))
    alt = np.empty(n)

    # piecewise-linear knots in time
    knots_t, knots_p = [], []
    clock = 0.0
    segments = []
    for i, wp in enumerate(route):
        p = np.array([wp.x, wp.y, wp.altitude])
        knots_t.append(clock)
        knots_p.append(p)
        clock += wp.hold_steps * dt
        depart = clock
        if i + 1 < len(route):
            nxt = route[i + 1]
            length = math.dist((wp.x, wp.y), (nxt.x, nxt.y))
            leg = math.dist((wp.x, wp.y, wp.altitude), (nxt.x, nxt.y, nxt.altitude))
            if wp.hold_steps:
                knots_t.append(depart)
                knots_p.append(p)
            clock = depart + leg / config.rogue_speed
            segments.append(RouteSegment(
                f"{_waypoint_name(i)}-{_waypoint_name(i + 1)}",
                min(int(round(depart / dt)), n - 1),
                min(int(round(clock / dt)), n - 1),
                length,
            ))
    knots_t = np.array(knots_t)
    knots_p = np.array(knots_p)
    if len(knots_t) == 1:
        xy[:] = knots_p[0, :2]
        alt[:] = knots_p[0, 2]
    else:
        for k in range(3):
            col = np.interp(t, knots_t, knots_p[:, k])
            if k < 2:
                xy[:, k] = col
            else:
                alt[:] = col
    return xy, alt, segments
