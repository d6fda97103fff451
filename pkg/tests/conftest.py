import functools
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from climbprint import controller, planner, simulator
from climbprint.deposition import MaterialModel
from climbprint.geometry import PathSpec
from climbprint.kinematics import DeviceConfig
from climbprint.planner import Design, Inclination

settings.register_profile(
    "ci", max_examples=60, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

FIXTURES = Path(__file__).parent / "fixtures"

H = 0.02
W = 0.04
THICK = 0.04
TOP = 0.1


def circle_points(radius=1.0, n=720, center=(0.0, 0.0)):
    th = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def device(**kw):
    base = dict(
        wheelbase=0.4, clamp_range=(0.02, 0.1), head_side_travel=0.1, head_fb_travel=0.25,
        foot_height=0.06, wheel_radius=0.03, max_wheel_speed=0.2,
    )
    base.update(kw)
    return DeviceConfig(**base)


def material(v_target=0.05, cure=100.0, h=H, w=W):
    # extrusion range centered on the rate that lays width w at speed v_target
    q = w * v_target * h * 1e9
    return MaterialModel((0.5 * q, 1.5 * q), cure, h, (0.01, 0.08))


def circle_design(mode="closed_layered", n_layers=10, radius=1.0, top=TOP, inclination=None,
                  correct_deviation=True, v_target=0.05, cure=100.0, dev=None):
    fp = PathSpec(circle_points(radius), True, THICK, top)
    return Design(
        footprint=fp, n_layers=n_layers, layer_height=H, mode=mode, target_bead_width=W,
        material=material(v_target, cure), device=dev or device(),
        inclination=inclination or Inclination(), correct_deviation=correct_deviation,
    )


def line_design(n_layers=4, length=2.0, cure=20.0, v_target=0.05):
    fp = PathSpec(np.array([[0.0, 0.0], [length, 0.0]]), False, THICK, TOP)
    return Design(
        footprint=fp, n_layers=n_layers, layer_height=H, mode="open_boustrophedon",
        target_bead_width=W, material=material(v_target, cure), device=device(),
    )


class Run:
    """Everything produced by one plan -> execute -> simulate pass."""

    def __init__(self, design, step=None, dt=controller.DEFAULT_DT):
        self.design = design
        self.plan = planner.compile_plan(design, step)
        self.trace, self.final_state = controller.execute_with_state(self.plan, design.device, dt)
        self.structure, self.report = simulator.simulate(self.trace, design, plan=self.plan)


@functools.lru_cache(maxsize=None)
def cached_run(name):
    builders = {
        "closed": lambda: circle_design(),
        "closed_uncorrected": lambda: circle_design(correct_deviation=False),
        "spiral": lambda: circle_design(mode="spiral"),
        "open": lambda: line_design(),
    }
    return Run(builders[name]())


@pytest.fixture(scope="session")
def closed_run():
    return cached_run("closed")


@pytest.fixture(scope="session")
def spiral_run():
    return cached_run("spiral")


@pytest.fixture(scope="session")
def open_run():
    return cached_run("open")


@pytest.fixture(scope="session")
def uncorrected_run():
    return cached_run("closed_uncorrected")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
