"""Coupled simulation: fluid stepping plus part-center transport.

Each step assembles the internal force from the beginning-of-step
configuration, advances the fluid explicitly with projection, and moves
every part center with the mask-averaged fluid velocity (Heun update by
default). Validity (pairwise separation and wall clearance) is checked
after every step; on loss the run halts and returns the trajectory so
far with a halt record instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fluid
from .core import (
    SwimmerState,
    configuration_margins,
    coverage_measure,
    part_shapes,
    validate_configuration,
)
from .errors import ShapeOutsideDomain
from .forces import assemble_force, control_count


@dataclass(frozen=True)
class Numerics:
    """Solver knobs; defaults match the package-wide tolerances."""

    poisson_tol: float = 1e-12
    cfl_safety: float = 0.5
    advection: bool = True
    integrator: str = "rk2"  # or "euler"

    def __post_init__(self):
        if self.integrator not in ("rk2", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


class ControlSchedule:
    """Control vector as a function of time.

    Either a constant vector or a zero-order-hold table of rows
    (t_k, v_1 .. v_m) sorted by t_k; before the first row the controls
    are zero.
    """

    def __init__(self, m, constant=None, table=None):
        self.m = int(m)
        if (constant is None) == (table is None):
            raise ValueError("give exactly one of constant= or table=")
        if constant is not None:
            vec = np.asarray(constant, float)
            if vec.shape != (self.m,):
                raise ValueError(f"expected {self.m} control values")
            self._constant = vec
            self._times = None
            self._values = None
        else:
            rows = np.asarray(table, float)
            if rows.ndim != 2 or rows.shape[1] != self.m + 1:
                raise ValueError(
                    f"schedule rows must have 1 + {self.m} entries (t, v_1..v_m)"
                )
            if np.any(np.diff(rows[:, 0]) < 0):
                raise ValueError("schedule times must be nondecreasing")
            self._constant = None
            self._times = rows[:, 0]
            self._values = rows[:, 1:]

    @staticmethod
    def zero(m):
        return ControlSchedule(m, constant=np.zeros(m))

    def __call__(self, t):
        if self._constant is not None:
            return self._constant.copy()
        k = int(np.searchsorted(self._times, t, side="right")) - 1
        if k < 0:
            return np.zeros(self.m)
        return self._values[k].copy()

    def is_zero(self):
        if self._constant is not None:
            return bool(np.all(self._constant == 0.0))
        return bool(np.all(self._values == 0.0))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one experiment."""

    domain: object
    shape: object  # BodyShape or per-part sequence
    state0: SwimmerState
    controls: ControlSchedule
    horizon: float
    dt: float = None  # None -> adaptive stability rule
    eddy_amplitude: float = 0.0
    field_every: int = 0
    numerics: Numerics = field(default_factory=Numerics)
    raw: dict = None  # resolved config echo, if loaded from a file

    def __post_init__(self):
        part_shapes(self.shape, self.state0.n)  # validates consistency
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive when given")

    @property
    def shapes(self):
        return part_shapes(self.shape, self.state0.n)

    def with_controls(self, controls):
        if not isinstance(controls, ControlSchedule):
            controls = ControlSchedule(control_count(self.state0.n), constant=controls)
        return replace(self, controls=controls)

    def with_horizon(self, horizon):
        return replace(self, horizon=horizon)

    def initial_velocity(self):
        if self.eddy_amplitude != 0.0:
            return fluid.stream_function_field(self.domain, self.eddy_amplitude)
        return fluid.VectorField.zeros(self.domain)


def average_velocity(velocity, center, shape):
    """Mask-weighted average of the staggered field over one body part."""
    domain = velocity.domain
    out = np.zeros(domain.dim)
    for a in range(domain.dim):
        cov = coverage_measure(shape, center, domain, stagger=a)
        total = float(cov.sum())
        if total <= 0.0:
            raise ValueError("body part has empty grid support")
        out[a] = float(np.sum(cov * velocity.comps[a])) / total
    return out


def body_velocities(velocity, state, shape):
    shapes = part_shapes(shape, state.n)
    return np.array(
        [
            average_velocity(velocity, state.positions[i], shapes[i])
            for i in range(state.n)
        ]
    )


@dataclass
class Trajectory:
    """Recorded history of a run; arrays share the leading time axis."""

    times: np.ndarray  # (k,)
    positions: np.ndarray  # (k, n, dim)
    controls: np.ndarray  # (k, 2n-3)
    part_velocities: np.ndarray  # (k, n, dim)
    energy: np.ndarray  # (k,)
    pair_margin: np.ndarray  # (k,)
    wall_margin: np.ndarray  # (k,)
    max_divergence_rel: float
    halted: bool
    halt_time: float
    halt_cause: str
    scenario: Scenario
    snapshots: list  # [(step index, VectorField)] or []

    @property
    def final_state(self):
        return SwimmerState(self.positions[-1])

    @property
    def final_time(self):
        return float(self.times[-1])

    def stored_field(self, step):
        from .errors import MissingBaselineData

        for k, u in self.snapshots:
            if k == step:
                return u
        raise MissingBaselineData(f"no stored field at step {step}")

    def require_full_history(self):
        """Snapshots at every step, as produced by `baseline_run`."""
        from .errors import MissingBaselineData

        if len(self.snapshots) != len(self.times):
            raise MissingBaselineData(
                "this trajectory was not stored with per-step snapshots"
            )
        return [u for _, u in self.snapshots]


def simulate(scenario, store_every=None):
    """Run the coupled system to the horizon (or validity loss).

    `store_every=k` keeps a velocity snapshot every k steps (including
    the initial state); `None` falls back to the scenario's
    `field_every` setting (0 = none).
    """
    domain = scenario.domain
    shapes = scenario.shapes
    state = scenario.state0
    numerics = scenario.numerics
    validate_configuration(state, shapes, domain)

    if store_every is None:
        store_every = scenario.field_every
    u = scenario.initial_velocity()
    t = 0.0
    step = 0
    horizon = scenario.horizon

    times = [0.0]
    positions = [state.positions.copy()]
    controls = [scenario.controls(0.0)]
    velocities = [body_velocities(u, state, shapes)]
    energy = [u.energy()]
    report = configuration_margins(state, shapes, domain)
    pair_margins = [report.pair_margin]
    wall_margins = [report.wall_margin]
    snapshots = [(0, u.copy())] if store_every else []
    max_div = 0.0
    halted = False
    halt_time = math.nan
    halt_cause = ""
    phi_guess = None

    while t < horizon * (1.0 - 1e-12):
        if scenario.dt is not None:
            dt = min(scenario.dt, horizon - t)
        else:
            dt = min(fluid.stable_dt(u, numerics.cfl_safety), horizon - t)
        v_now = scenario.controls(t)
        force = assemble_force(state, shapes, domain, v_now)
        u_next, info = fluid.nse_step(
            u,
            force,
            dt,
            advect=numerics.advection,
            tol=numerics.poisson_tol,
            x0=phi_guess,
        )
        phi_guess = info.phi
        max_div = max(max_div, info.divergence_rel)

        k1 = body_velocities(u, state, shapes)
        try:
            if numerics.integrator == "rk2":
                mid = state.moved(state.positions + dt * k1)
                k2 = body_velocities(u_next, mid, shapes)
                new_pos = state.positions + 0.5 * dt * (k1 + k2)
            else:
                new_pos = state.positions + dt * k1
            new_state = state.moved(new_pos)
            report = configuration_margins(new_state, shapes, domain)
        except ShapeOutsideDomain:
            halted = True
            halt_time, halt_cause = t + dt, "wall"
            break
        if not report.ok:
            halted = True
            halt_time = t + dt
            halt_cause = "overlap" if report.pair_margin <= 0.0 else "wall"
            break

        t += dt
        step += 1
        u = u_next
        u.time = t
        state = new_state
        times.append(t)
        positions.append(state.positions.copy())
        controls.append(scenario.controls(t))
        velocities.append(body_velocities(u, state, shapes))
        energy.append(u.energy())
        pair_margins.append(report.pair_margin)
        wall_margins.append(report.wall_margin)
        if store_every and step % store_every == 0:
            snapshots.append((step, u.copy()))

    return Trajectory(
        times=np.asarray(times),
        positions=np.asarray(positions),
        controls=np.asarray(controls),
        part_velocities=np.asarray(velocities),
        energy=np.asarray(energy),
        pair_margin=np.asarray(pair_margins),
        wall_margin=np.asarray(wall_margins),
        max_divergence_rel=max_div,
        halted=halted,
        halt_time=halt_time,
        halt_cause=halt_cause,
        scenario=scenario,
        snapshots=snapshots,
    )


def baseline_run(scenario):
    """Reference run with controls held at zero and every field stored."""
    zero = ControlSchedule.zero(control_count(scenario.state0.n))
    return simulate(scenario.with_controls(zero), store_every=1)
