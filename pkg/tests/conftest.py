"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from swimlab.core import BodyShape, DomainSpec, SwimmerState
from swimlab.forces import control_count
from swimlab.simulator import ControlSchedule, Numerics, Scenario

# One line per acceptance criterion, echoed after the run so the verdicts
# survive pytest's output capture (see tests/test_acceptance.py).
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def l_swimmer_scenario(
    cells=64,
    nu=0.005,
    horizon=0.02,
    dt=5e-4,
    controls=None,
    extent=1.0,
    shape=None,
):
    """Four rectangle parts in an L: parts 0/3 long along x, 1/2 along y.

    Elastic controls 3 and 5 then push the center of mass along two
    orthogonal directions, which makes this the workhorse geometry for
    sensitivity and reachability tests.
    """
    dom = DomainSpec((extent, extent), (cells, cells), nu)
    if shape is None:
        shape = BodyShape.rectangle(0.06 * extent, 0.015 * extent)
    shapes = (shape, shape.permuted((1, 0)), shape.permuted((1, 0)), shape)
    pos = np.array(
        [[0.26, 0.58], [0.42, 0.58], [0.58, 0.58], [0.58, 0.42]]
    ) * extent
    state = SwimmerState(pos)
    m = control_count(4)
    if controls is None:
        controls = np.zeros(m)
    if not isinstance(controls, ControlSchedule):
        controls = ControlSchedule(m, constant=controls)
    return Scenario(
        domain=dom,
        shape=shapes,
        state0=state,
        controls=controls,
        horizon=horizon,
        dt=dt,
    )


def disc_swimmer_scenario(cells=64, nu=0.005, horizon=0.02, dt=5e-4, controls=None):
    """Same part centers as the L swimmer but with equal-area discs."""
    base = l_swimmer_scenario(cells=cells, nu=nu, horizon=horizon, dt=dt)
    area = base.shapes[0].measure
    disc = BodyShape.disc(float(np.sqrt(area / np.pi)))
    m = control_count(4)
    if controls is None:
        controls = np.zeros(m)
    if not isinstance(controls, ControlSchedule):
        controls = ControlSchedule(m, constant=controls)
    return Scenario(
        domain=base.domain,
        shape=disc,
        state0=base.state0,
        controls=controls,
        horizon=horizon,
        dt=dt,
    )


def square_disc_scenario(cells=64, nu=0.002, horizon=0.015, dt=2.5e-4, controls=None):
    """Four identical discs on a square, reflection-symmetric in both axes.

    The symmetry makes the two elastic center-of-mass integrals exactly
    antiparallel, so this is the canonical no-self-propulsion swimmer.
    """
    dom = DomainSpec((1.0, 1.0), (cells, cells), nu)
    state = SwimmerState([[0.3, 0.3], [0.7, 0.3], [0.7, 0.7], [0.3, 0.7]])
    m = control_count(4)
    if controls is None:
        controls = np.zeros(m)
    if not isinstance(controls, ControlSchedule):
        controls = ControlSchedule(m, constant=controls)
    return Scenario(
        domain=dom,
        shape=BodyShape.disc(0.05),
        state0=state,
        controls=controls,
        horizon=horizon,
        dt=dt,
    )


def four_ball_scenario(cells=16, nu=0.02, horizon=0.01, dt=1e-3, controls=None):
    """Non-coplanar chain of four balls; triple controls span all of 3-D."""
    dom = DomainSpec((1.0, 1.0, 1.0), (cells, cells, cells), nu)
    state = SwimmerState(
        [[0.30, 0.42, 0.42], [0.50, 0.58, 0.42], [0.70, 0.42, 0.50], [0.55, 0.50, 0.68]]
    )
    m = control_count(4)
    if controls is None:
        controls = np.zeros(m)
    if not isinstance(controls, ControlSchedule):
        controls = ControlSchedule(m, constant=controls)
    return Scenario(
        domain=dom,
        shape=BodyShape.ball(0.08),
        state0=state,
        controls=controls,
        horizon=horizon,
        dt=dt,
    )


def three_ball_scenario(cells=16, nu=0.02, horizon=0.01, dt=1e-3, controls=None):
    dom = DomainSpec((1.0, 1.0, 1.0), (cells, cells, cells), nu)
    state = SwimmerState(
        [[0.3, 0.45, 0.5], [0.5, 0.6, 0.5], [0.7, 0.45, 0.5]]
    )
    m = control_count(3)
    if controls is None:
        controls = np.zeros(m)
    if not isinstance(controls, ControlSchedule):
        controls = ControlSchedule(m, constant=controls)
    return Scenario(
        domain=dom,
        shape=BodyShape.ball(0.08),
        state0=state,
        controls=controls,
        horizon=horizon,
        dt=dt,
    )
