import math
from dataclasses import replace

import numpy as np
import pytest

from cornea_adi.simulator import SceneConfig, render

# lines collected by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def tilted_gaze(deg_x, deg_y, lc=(0.0, 0.0, 450.0)):
    g = -np.asarray(lc, float) / np.linalg.norm(lc)
    ax, ay = math.radians(deg_x), math.radians(deg_y)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    return tuple(ry @ rx @ g)


@pytest.fixture(scope="session")
def frontal_scene():
    return SceneConfig(target=(100.0, 0.0))


@pytest.fixture(scope="session")
def frontal_render(frontal_scene):
    return render(frontal_scene)


@pytest.fixture(scope="session")
def tilted_scene():
    return replace(SceneConfig(), limbus_center=(1.0, -0.5, 455.0), gaze=tilted_gaze(2.0, -2.5, (1.0, -0.5, 455.0)), target=(200.0, -100.0))


@pytest.fixture(scope="session")
def tilted_render(tilted_scene):
    return render(tilted_scene)
