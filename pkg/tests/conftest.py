"""Shared builders for the test suite."""

from pathlib import Path

import numpy as np
import pytest

import kinchemo
from kinchemo.model import GSpec, KernelSpec, LambdaSpec, ModelConfig, SignalParams, VelocitySet

SCENARIOS = Path(kinchemo.__file__).parent / "scenarios"


def make_model(t_e=1.0, t_a=1.0, g=2.0, lam=None, kernel=None, velocities=None, signal=None, **kw):
    """Cartoon model with a linear ``g(S) = g * S`` on one signal component."""
    return ModelConfig(
        t_e=t_e,
        t_a=t_a,
        g=GSpec("linear", (float(g),)),
        turning_rate=lam or LambdaSpec("constant", 1.0),
        kernel=kernel or KernelSpec("uniform"),
        velocities=velocities or VelocitySet.two_speed(1.0),
        signal=signal or SignalParams([1.0], [1.0], [1.0]),
        **kw,
    )


def scenario_path(name):
    return SCENARIOS / f"{name}.cfg"


def scenario_text(name):
    return scenario_path(name).read_text()


@pytest.fixture
def model():
    return make_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
AC_LINES = []


def report(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    AC_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(AC_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
