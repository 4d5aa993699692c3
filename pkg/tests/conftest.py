import numpy as np
import pytest

from rpsjs.scenario import ControllerParams, ScenarioConfig, Transmitter, Waypoint3D

SQUARE = (
    Transmitter(1, 0.0, 0.0, -40.0),
    Transmitter(2, 100.0, 0.0, -42.0),
    Transmitter(3, 0.0, 100.0, -44.0),
    Transmitter(4, 100.0, 100.0, -46.0),
)


def make_config(**kw):
    base = dict(
        seed=7,
        duration_steps=10,
        dt=0.2,
        transmitters=SQUARE,
        pursuer_init=(40.0, 30.0),
        rogue_route=(Waypoint3D(500.0, 500.0, 30.0),),
        ctrl_params=ControllerParams(t_i=4),
    )
    base.update(kw)
    return ScenarioConfig(**base).validate()


@pytest.fixture
def config():
    return make_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, printed once at the end of the session
ACCEPTANCE: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"CRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
