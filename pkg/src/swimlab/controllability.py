"""Reachability atlases, endpoint Jacobians, and Newton steering.

Everything here works with constant-in-time controls: the endpoint map
sends a constant control vector to the tracked position (one part, or the
centre of mass) at the end of the horizon.  A ring (2-D) or sphere (3-D)
of controls is pushed through the full simulator to build a reachability
atlas; a winding number / solid-angle certificate then witnesses that a
neighbourhood of the drift endpoint is covered, and damped Newton
iteration steers to explicit targets inside it.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import BodyShape, SwimmerState, part_shapes
from .errors import (
    CflViolation,
    NanDetected,
    NoConvergence,
    PoissonDivergence,
    SingularJacobian,
)
from .sensitivity import (
    displacement_sensitivity,
    linearized_solve,
    projected_force_averages,
    volterra_kernel,
)
from .simulator import Scenario, Trajectory, simulate

SIGMA_TOL = 1e-3


# ---------------------------------------------------------------------------
# linear independence of projected force integrals


@dataclass(frozen=True)
class IndependenceReport:
    """Singular-value test on projected force integrals.

    ``vectors[k]`` is the integral of the projected unit force of control
    ``indices[k]`` over the tracked part (or the sum over all parts for
    centre-of-mass mode).  ``scale`` is the largest single-part integral
    magnitude among the requested controls; it anchors the test when the
    summed vectors all cancel (the degenerate swimmers this test exists to
    flag), where a raw sigma_min/sigma_max ratio of noise would be
    meaningless.
    """

    indices: tuple[int, ...]
    part: int | None
    vectors: np.ndarray
    singular_values: np.ndarray
    scale: float
    ratio: float
    condition: float
    independent: bool
    sigma_tol: float


def control_integrals(state, shape, domain, tol=1e-12):
    """Integrals of the projected unit forces: (m, n, d) array."""
    averages = projected_force_averages(state, shape, domain, tol=tol)
    shapes = part_shapes(shape, state.n)
    measures = np.array([s.measure for s in shapes])
    return averages * measures[None, :, None]


def independence_check(
    state: SwimmerState,
    shape,
    domain,
    indices,
    part: int | None = None,
    sigma_tol: float = SIGMA_TOL,
    tol: float = 1e-12,
) -> IndependenceReport:
    """Test whether the chosen controls move the tracked point independently.

    ``part=None`` selects centre-of-mass mode: per-part integrals are
    summed over the swimmer before the singular-value test.
    """
    indices = tuple(int(j) for j in indices)
    integrals = control_integrals(state, shape, domain, tol=tol)
    rows = integrals[[j - 1 for j in indices]]  # (K, n, d)
    if part is None:
        vectors = rows.sum(axis=1)
    else:
        vectors = rows[:, part, :]
    svals = np.linalg.svd(vectors, compute_uv=False)
    smin = float(svals.min())
    smax = float(svals.max())
    scale = float(np.max(np.linalg.norm(rows, axis=2)))
    denom = max(smax, scale)
    ratio = smin / denom if denom > 0.0 else 0.0
    condition = smax / smin if smin > 0.0 else np.inf
    return IndependenceReport(
        indices=indices,
        part=part,
        vectors=vectors,
        singular_values=svals,
        scale=scale,
        ratio=ratio,
        condition=condition,
        independent=bool(ratio > sigma_tol),
        sigma_tol=sigma_tol,
    )


# ---------------------------------------------------------------------------
# sampling directions


def ring_directions(samples: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(samples) / samples
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def icosphere_directions():
    """42 unit directions and 80 outward-oriented triangles (refined icosahedron)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=float) for v in verts]
    verts = [v / np.linalg.norm(v) for v in verts]
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            mid = verts[i] + verts[j]
            verts.append(mid / np.linalg.norm(mid))
            cache[key] = len(verts) - 1
        return cache[key]

    refined = []
    for i1, i2, i3 in faces:
        a = midpoint(i1, i2)
        b = midpoint(i2, i3)
        c = midpoint(i3, i1)
        refined.extend([(i1, a, c), (i2, b, a), (i3, c, b), (a, b, c)])
    return np.array(verts), np.array(refined, dtype=int)


# ---------------------------------------------------------------------------
# planar polygon certificates


def winding_number(points, center):
    """Signed turns of the closed polyline around ``center`` (None if it hits a vertex)."""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    radii = np.hypot(rel[:, 0], rel[:, 1])
    if np.min(radii) < 1e-300:
        return None
    angles = np.arctan2(rel[:, 1], rel[:, 0])
    steps = np.diff(np.append(angles, angles[0]))
    steps = (steps + np.pi) % (2.0 * np.pi) - np.pi
    return int(np.rint(steps.sum() / (2.0 * np.pi)))


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def polygon_is_simple(points) -> bool:
    """True if no two non-adjacent closed-polygon edges cross."""
    pts = np.asarray(points, dtype=float)
    s = len(pts)
    for i in range(s):
        a, b = pts[i], pts[(i + 1) % s]
        for j in range(i + 1, s):
            if j == i or (j + 1) % s == i or (i + 1) % s == j:
                continue
            c, d = pts[j], pts[(j + 1) % s]
            o1 = _orient(a, b, c)
            o2 = _orient(a, b, d)
            o3 = _orient(c, d, a)
            o4 = _orient(c, d, b)
            if o1 * o2 < 0.0 and o3 * o4 < 0.0:
                return False
    return True


def polygon_inradius(points, center) -> float:
    """Distance from ``center`` to the nearest closed-polygon edge."""
    pts = np.asarray(points, dtype=float)
    ctr = np.asarray(center, dtype=float)
    best = np.inf
    for i in range(len(pts)):
        a = pts[i]
        b = pts[(i + 1) % len(pts)]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((ctr - a) @ ab / denom, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(a + t * ab - ctr)))
    return best


# ---------------------------------------------------------------------------
# spatial hull certificates


def hull_solid_angle_fraction(points, faces, center) -> float:
    """Signed solid angle of the triangulated surface around ``center``, over 4 pi."""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    total = 0.0
    for i1, i2, i3 in faces:
        a, b, c = rel[i1], rel[i2], rel[i3]
        na, nb, nc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)
        det = float(np.linalg.det(np.stack([a, b, c])))
        denom = (
            na * nb * nc
            + float(a @ b) * nc
            + float(b @ c) * na
            + float(c @ a) * nb
        )
        total += 2.0 * np.arctan2(det, denom)
    return total / (4.0 * np.pi)


def signed_hull_volume(points, faces, center) -> float:
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    vol = 0.0
    for i1, i2, i3 in faces:
        vol += float(np.linalg.det(np.stack([rel[i1], rel[i2], rel[i3]]))) / 6.0
    return vol


# ---------------------------------------------------------------------------
# reachability atlas


@dataclass
class ReachabilityAtlas:
    part: int | None
    indices: tuple[int, ...]
    gain: float
    horizon: float
    drift_endpoint: np.ndarray
    directions: np.ndarray
    controls: np.ndarray
    endpoints: np.ndarray
    halted: np.ndarray
    degenerate: bool
    winding: int | None
    simple: bool | None
    coverage: float | None
    covered: bool | None
    inradius: float
    diameter: float

    @property
    def certified(self) -> bool:
        """Whole-neighbourhood coverage certificate for the endpoint map."""
        if self.degenerate or bool(self.halted.any()):
            return False
        if self.winding is not None:
            return self.winding == 1 and bool(self.simple)
        return bool(self.covered)


def tracked_endpoint(trajectory: Trajectory, part: int | None) -> np.ndarray:
    final = trajectory.positions[-1]
    return final.mean(axis=0) if part is None else final[part]


def _control_vector(m, indices, direction, gain):
    v = np.zeros(m)
    for axis, j in enumerate(indices):
        v[j - 1] = gain * direction[axis]
    return v


def _endpoint_sample(args):
    scenario, part, v = args
    traj = simulate(scenario.with_controls(v))
    return tracked_endpoint(traj, part), traj.halted


def reachability_map(
    scenario: Scenario,
    part: int | None,
    indices,
    gain: float,
    samples: int = 16,
    horizon: float | None = None,
    jobs: int = 1,
    warn_dependent: bool = True,
) -> ReachabilityAtlas:
    """Endpoint image of a constant-control ring (2-D) or sphere (3-D).

    Each sample is an independent full simulation; samples that lose
    validity are flagged and excluded from the certificate, never raised.
    """
    indices = tuple(int(j) for j in indices)
    if gain > 1.0:
        raise ValueError("control ring gain must be at most 1")
    dim = scenario.domain.dim
    if len(indices) != dim:
        raise ValueError(f"need {dim} control indices in {dim}-D, got {len(indices)}")
    if warn_dependent:
        report = independence_check(
            scenario.state0, scenario.shape, scenario.domain, indices, part=part
        )
        if not report.independent:
            warnings.warn(
                f"controls {indices} look dependent for this tracking mode "
                f"(ratio {report.ratio:.2e}); the atlas may be degenerate",
                RuntimeWarning,
                stacklevel=2,
            )
    if horizon is not None:
        scenario = scenario.with_horizon(horizon)

    if dim == 2:
        directions = ring_directions(samples)
        faces = None
    else:
        directions, faces = icosphere_directions()

    m = 2 * scenario.state0.n - 3
    baseline = simulate(scenario.with_controls(np.zeros(m)))
    drift = tracked_endpoint(baseline, part)

    controls = np.stack(
        [_control_vector(m, indices, d, gain) for d in directions]
    )
    if gain == 0.0:
        endpoints = np.tile(drift, (len(directions), 1))
        halted = np.full(len(directions), baseline.halted)
    else:
        tasks = [(scenario, part, v) for v in controls]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_endpoint_sample, tasks))
        else:
            results = [_endpoint_sample(t) for t in tasks]
        endpoints = np.stack([r[0] for r in results])
        halted = np.array([r[1] for r in results])

    spread = float(np.max(np.linalg.norm(endpoints - drift, axis=1)))
    degenerate = spread <= 1e-13 * max(1.0, float(np.linalg.norm(drift)))

    winding = simple = coverage = covered = None
    inradius = 0.0
    if not degenerate and not halted.any():
        if dim == 2:
            winding = winding_number(endpoints, drift)
            simple = polygon_is_simple(endpoints)
            if winding is not None and abs(winding) == 1:
                inradius = polygon_inradius(endpoints, drift)
        else:
            coverage = hull_solid_angle_fraction(endpoints, faces, drift)
            volume = signed_hull_volume(endpoints, faces, drift)
            covered = bool(abs(coverage - 1.0) < 0.1 and volume > 0.0)
            if covered:
                inradius = float(np.min(np.linalg.norm(endpoints - drift, axis=1)))

    diffs = endpoints[:, None, :] - endpoints[None, :, :]
    diameter = float(np.max(np.linalg.norm(diffs, axis=2)))

    return ReachabilityAtlas(
        part=part,
        indices=indices,
        gain=gain,
        horizon=scenario.horizon,
        drift_endpoint=drift,
        directions=directions,
        controls=controls,
        endpoints=endpoints,
        halted=halted,
        degenerate=degenerate,
        winding=winding,
        simple=simple,
        coverage=coverage,
        covered=covered,
        inradius=inradius,
        diameter=diameter,
    )


# ---------------------------------------------------------------------------
# endpoint Jacobian from the linearized system


@dataclass(frozen=True)
class JacobianReport:
    part: int | None
    indices: tuple[int, ...]
    matrix: np.ndarray
    determinant: float
    condition: float
    singular: bool


def jacobian_matrix(
    baseline: Trajectory,
    part: int | None,
    indices,
    sigma_tol: float = SIGMA_TOL,
    tol: float = 1e-12,
) -> JacobianReport:
    """Columns are endpoint sensitivities of the tracked point per control.

    Requires a baseline trajectory with full field history; sensitivities
    come from the linearized system plus the displacement equation, never
    from rerunning the nonlinear model.
    """
    indices = tuple(int(j) for j in indices)
    baseline.require_full_history()
    n = baseline.scenario.state0.n
    parts = range(n) if part is None else [part]
    kernels = {i: volterra_kernel(baseline, i) for i in parts}

    dim = baseline.scenario.domain.dim
    matrix = np.zeros((dim, len(indices)))
    for col, j in enumerate(indices):
        sens = linearized_solve(baseline, control=j, tol=tol)
        column = np.zeros(dim)
        for i in parts:
            disp = displacement_sensitivity(sens, part=i, kernel=kernels[i])
            column += disp.psi[-1]
        matrix[:, col] = column / len(list(parts))

    svals = np.linalg.svd(matrix, compute_uv=False)
    smin, smax = float(svals.min()), float(svals.max())
    det = float(np.linalg.det(matrix)) if matrix.shape[0] == matrix.shape[1] else 0.0
    condition = smax / smin if smin > 0.0 else np.inf
    return JacobianReport(
        part=part,
        indices=indices,
        matrix=matrix,
        determinant=det,
        condition=condition,
        singular=bool(smin <= sigma_tol * smax),
    )


# ---------------------------------------------------------------------------
# Newton steering


@dataclass
class SteeringResult:
    target: np.ndarray
    controls: np.ndarray
    endpoint: np.ndarray
    iterations: int
    residual: float
    history: list[float]


def steer(
    scenario: Scenario,
    part: int | None,
    indices,
    target,
    tol: float,
    max_iter: int = 10,
    jacobian: JacobianReport | None = None,
) -> SteeringResult:
    """Drive the tracked endpoint to ``target`` with constant controls.

    Damped chord Newton: the endpoint Jacobian at zero control is computed
    once (via the linearized system) and reused; every candidate control is
    evaluated by a full nonlinear simulation.  Simulations that lose
    validity count as failed trials and trigger damping.
    """
    indices = tuple(int(j) for j in indices)
    target = np.asarray(target, dtype=float)
    m = 2 * scenario.state0.n - 3

    if jacobian is None:
        baseline = simulate(scenario.with_controls(np.zeros(m)), store_every=1)
        jacobian = jacobian_matrix(baseline, part, indices)
        drift_end = tracked_endpoint(baseline, part)
        baseline_halted = baseline.halted
    else:
        baseline = simulate(scenario.with_controls(np.zeros(m)))
        drift_end = tracked_endpoint(baseline, part)
        baseline_halted = baseline.halted
    if jacobian.singular:
        raise SingularJacobian(
            f"endpoint jacobian for controls {indices} is singular "
            f"(condition {jacobian.condition:.3e})"
        )
    jmat = jacobian.matrix

    def evaluate(x):
        # wild Newton trials may break CFL or blow up the solver on
        # fixed-step scenarios; those are failed trials, not crashes
        v = _control_vector(m, indices, x, 1.0)
        try:
            traj = simulate(scenario.with_controls(v))
        except (CflViolation, NanDetected, PoissonDivergence):
            return None, np.inf, True, v
        end = tracked_endpoint(traj, part)
        res = float(np.linalg.norm(end - target)) if not traj.halted else np.inf
        return end, res, traj.halted, v

    x = np.zeros(len(indices))
    endpoint = drift_end
    residual = (
        float(np.linalg.norm(drift_end - target)) if not baseline_halted else np.inf
    )
    history = [residual]
    best = (residual, x.copy(), endpoint)

    if residual <= tol:
        return SteeringResult(
            target=target,
            controls=_control_vector(m, indices, x, 1.0),
            endpoint=endpoint,
            iterations=0,
            residual=residual,
            history=history,
        )

    for iteration in range(1, max_iter + 1):
        step = np.linalg.solve(jmat, target - endpoint)
        accepted = False
        for damping in (1.0, 0.5, 0.25, 0.125):
            trial = x + damping * step
            end, res, halted, v = evaluate(trial)
            if res < residual:
                x, endpoint, residual = trial, end, res
                accepted = True
                break
        history.append(residual)
        if residual < best[0]:
            best = (residual, x.copy(), endpoint)
        if residual <= tol:
            return SteeringResult(
                target=target,
                controls=_control_vector(m, indices, x, 1.0),
                endpoint=endpoint,
                iterations=iteration,
                residual=residual,
                history=history,
            )
        if not accepted:
            break

    raise NoConvergence(
        best_residual=best[0],
        history=history,
        message=(
            f"steering stalled at residual {best[0]:.3e} (tolerance {tol:.3e}) "
            f"after {len(history) - 1} iterations"
        ),
    )
