"""Control sensitivities along a baseline run.

`linearized_solve` integrates the flow linearized at a stored baseline
(frozen coefficients, unit control forcing along the baseline body
positions). `volterra_solve` turns part-averaged sensitivity fields
into displacement sensitivities: the averaged field over the moving
part couples back through the baseline velocity gradient, giving a
second-kind Volterra equation

    psi(t) + int_0^t K0(tau) psi(tau) dtau = g(t),

with K0 the negated mask-average of grad u* over the moving part and
g the time integral of the part-averaged sensitivity field. The
small-time displacement predictor evaluates the projected unit forces
once at t = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fluid
from .core import SwimmerState, coverage_measure, part_shapes
from .errors import GridMismatch, MissingSensitivity
from .forces import control_count, rasterize_densities, unit_densities
from .simulator import average_velocity

CONTRACTION_BOUND = 0.25

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class SensitivityField:
    """Per-step snapshots of one control's linearized velocity response."""

    control: int  # 1-based control index
    times: np.ndarray
    snapshots: list
    baseline: object


def linearized_solve(baseline, control, tol=1e-12):
    """Integrate the linearized system for one unit control along `baseline`.

    The baseline trajectory must carry per-step velocity snapshots
    (see `baseline_run`). The response starts from rest and uses the
    same time grid as the baseline.
    """
    scn = baseline.scenario
    fields = baseline.require_full_history()
    shapes = scn.shapes
    domain = scn.domain
    m = control_count(scn.state0.n)
    if not 1 <= control <= m:
        raise ValueError(f"control index {control} out of range 1..{m}")
    thr = 1e-8 * max(domain.extent)

    w = fluid.VectorField.zeros(domain)
    snapshots = [w.copy()]
    phi_guess = None
    times = baseline.times
    for k in range(len(times) - 1):
        dt = float(times[k + 1] - times[k])
        state_k = SwimmerState(baseline.positions[k])
        rows = unit_densities(state_k, control, degenerate_threshold=thr)
        force = rasterize_densities(state_k, shapes, domain, rows)
        w, info = fluid.linearized_step(
            w, fields[k], force, dt, tol=tol, x0=phi_guess
        )
        phi_guess = info.phi
        snapshots.append(w.copy())
    return SensitivityField(control, times.copy(), snapshots, baseline)


def part_average_series(sensitivity, part):
    """avg over the moving part of the sensitivity field, per step."""
    baseline = sensitivity.baseline
    shapes = baseline.scenario.shapes
    out = np.empty((len(sensitivity.times), baseline.scenario.domain.dim))
    for k, w in enumerate(sensitivity.snapshots):
        out[k] = average_velocity(w, baseline.positions[k][part], shapes[part])
    return out


@dataclass
class KernelResult:
    """Volterra kernel along a baseline for one part."""

    part: int
    times: np.ndarray
    values: np.ndarray  # (k, dim, dim)
    anorm: float  # integral of the kernel spectral norm
    contraction_ok: bool


def volterra_kernel(baseline, part):
    """K0(t) = -(mask average of grad u* over the moving part)."""
    scn = baseline.scenario
    domain = scn.domain
    shapes = scn.shapes
    fields = baseline.require_full_history()
    d = domain.dim
    k_steps = len(baseline.times)
    values = np.empty((k_steps, d, d))
    for k, u in enumerate(fields):
        grad = fluid.velocity_gradient(u)
        cov = coverage_measure(
            shapes[part], baseline.positions[k][part], domain, stagger=None
        )
        total = float(cov.sum())
        for a in range(d):
            for b in range(d):
                values[k, a, b] = -float(np.sum(cov * grad[a, b])) / total
    norms = np.array([np.linalg.norm(values[k], 2) for k in range(k_steps)])
    anorm = float(_trapezoid(norms, baseline.times))
    ok = anorm < CONTRACTION_BOUND
    if not ok:
        warnings.warn(
            f"kernel norm integral {anorm:.3f} exceeds the contraction bound "
            f"{CONTRACTION_BOUND}; the displacement solve may be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    return KernelResult(part, baseline.times.copy(), values, anorm, ok)


def volterra_solve(times, kernel_values, g):
    """Forward trapezoid solve of psi + int_0^t K psi dtau = g.

    `kernel_values` has shape (k, d, d), `g` shape (k, d); the grid may
    be nonuniform. Returns psi with shape (k, d).
    """
    times = np.asarray(times, float)
    kernel_values = np.asarray(kernel_values, float)
    g = np.asarray(g, float)
    k_steps, d = g.shape
    if kernel_values.shape != (k_steps, d, d) or times.shape != (k_steps,):
        raise GridMismatch("kernel, data and time grid sizes do not agree")
    psi = np.zeros_like(g)
    psi[0] = g[0]
    eye = np.eye(d)
    for k in range(1, k_steps):
        ts = times[: k + 1]
        w = np.empty(k + 1)
        w[0] = 0.5 * (ts[1] - ts[0])
        w[-1] = 0.5 * (ts[-1] - ts[-2])
        if k > 1:
            w[1:-1] = 0.5 * (ts[2:] - ts[:-2])
        acc = np.einsum("j,jab,jb->a", w[:-1], kernel_values[:k], psi[:k])
        lhs = eye + w[-1] * kernel_values[k]
        psi[k] = np.linalg.solve(lhs, g[k] - acc)
    return psi


def cumulative_trapezoid(values, times):
    values = np.asarray(values, float)
    times = np.asarray(times, float)
    dt = np.diff(times)
    inc = 0.5 * (values[1:] + values[:-1]) * dt[:, None]
    out = np.zeros_like(values)
    out[1:] = np.cumsum(inc, axis=0)
    return out


@dataclass
class DisplacementSensitivity:
    part: int
    control: int
    times: np.ndarray
    psi: np.ndarray  # (k, dim) displacement derivative w.r.t. the control
    kernel: KernelResult


def displacement_sensitivity(sensitivity, part, kernel=None):
    """Displacement derivative of one part w.r.t. one control over time."""
    baseline = sensitivity.baseline
    if kernel is None:
        kernel = volterra_kernel(baseline, part)
    if kernel.part != part:
        raise MissingSensitivity(
            f"kernel was computed for part {kernel.part}, not part {part}"
        )
    if not np.array_equal(kernel.times, sensitivity.times):
        raise GridMismatch("kernel and sensitivity live on different time grids")
    averages = part_average_series(sensitivity, part)
    g = cumulative_trapezoid(averages, sensitivity.times)
    psi = volterra_solve(sensitivity.times, kernel.values, g)
    return DisplacementSensitivity(
        part, sensitivity.control, sensitivity.times.copy(), psi, kernel
    )


# ---------------------------------------------------------------------------
# small-time prediction


def projected_force_averages(state, shape, domain, tol=1e-12):
    """V[j-1, i] = mask average over part i of the projected unit force j."""
    shapes = part_shapes(shape, state.n)
    m = control_count(state.n)
    thr = 1e-8 * max(domain.extent)
    out = np.empty((m, state.n, domain.dim))
    for j in range(1, m + 1):
        rows = unit_densities(state, j, degenerate_threshold=thr)
        force = rasterize_densities(state, shapes, domain, rows)
        projected, _ = fluid.leray_project(force, tol=tol)
        for i in range(state.n):
            out[j - 1, i] = average_velocity(projected, state.positions[i], shapes[i])
    return out


def micromotion_predict(state, shape, domain, amplitudes, gain, t, tol=1e-12):
    """Predicted part centers at small time t for controls gain*amplitudes.

    Quadratic-in-time prediction: each part starts from rest and
    accelerates with the projected force averaged over its own support,
    z_i(t) = z_i(0) + (gain * t^2 / 2) * sum_j a_j avg_i(P f_j).
    """
    amplitudes = np.asarray(amplitudes, float)
    m = control_count(state.n)
    if amplitudes.shape != (m,):
        raise ValueError(f"expected {m} amplitudes")
    v = projected_force_averages(state, shape, domain, tol=tol)
    drift = np.einsum("j,jid->id", amplitudes, v)
    return state.positions + 0.5 * gain * t * t * drift
