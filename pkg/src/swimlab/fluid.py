"""Incompressible flow in a no-slip box on a MAC staggered grid.

Velocity component a lives on the faces normal to axis a (one extra
sample along that axis); scalars live at cell centers. Wall-normal
boundary faces are pinned to zero (no-slip); tangential no-slip enters
through ghost values mirrored across the wall.

Time stepping is explicit (second-order central advection, explicit
diffusion, body force) followed by a pressure projection. The Poisson
solve is plain conjugate gradients on the compatible Neumann system, so
the corrected field's divergence equals the linear-solver residual by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CflViolation, GridMismatch, NanDetected, PoissonDivergence


def face_shape(domain, axis):
    shape = list(domain.cells)
    shape[axis] += 1
    return tuple(shape)


@dataclass
class VectorField:
    """A staggered vector field (velocity or force density) on `domain`."""

    domain: object
    comps: tuple
    time: float = 0.0

    @staticmethod
    def zeros(domain, time=0.0):
        comps = tuple(np.zeros(face_shape(domain, a)) for a in range(domain.dim))
        return VectorField(domain, comps, time)

    def copy(self):
        return VectorField(self.domain, tuple(c.copy() for c in self.comps), self.time)

    def check_compatible(self, other):
        if self.domain != other.domain:
            raise GridMismatch("fields live on different grids")

    def max_speed(self):
        return max(float(np.max(np.abs(c))) for c in self.comps)

    def energy(self):
        """Kinetic energy 1/2 * sum(u^2) dV (wall faces carry zero)."""
        vol = self.domain.cell_volume
        return 0.5 * vol * sum(float(np.sum(c * c)) for c in self.comps)

    def norm(self):
        vol = self.domain.cell_volume
        return math.sqrt(vol * sum(float(np.sum(c * c)) for c in self.comps))


def _interior(arr, axis):
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(1, -1)
    return arr[tuple(sl)]


def _avg(arr, axis):
    """Adjacent-pair average along `axis` (length n -> n-1)."""
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (arr[tuple(lo)] + arr[tuple(hi)])


def _pad_noslip(arr, axis):
    """Ghost layers across the two walls normal to `axis` for a tangential
    component: the wall sits half a cell out, so ghost = -first sample."""
    first = [slice(None)] * arr.ndim
    last = [slice(None)] * arr.ndim
    first[axis] = slice(0, 1)
    last[axis] = slice(-1, None)
    return np.concatenate(
        [-arr[tuple(first)], arr, -arr[tuple(last)]], axis=axis
    )


def _central_diff(arr, axis, h):
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -2)
    hi[axis] = slice(2, None)
    return (arr[tuple(hi)] - arr[tuple(lo)]) / (2.0 * h)


def _second_diff(arr, axis, h):
    lo = [slice(None)] * arr.ndim
    mid = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return (arr[tuple(hi)] - 2.0 * arr[tuple(mid)] + arr[tuple(lo)]) / (h * h)


# ---------------------------------------------------------------------------
# divergence / gradient / Poisson


def divergence(field):
    """Discrete divergence at cell centers."""
    h = field.domain.h
    out = None
    for a, c in enumerate(field.comps):
        d = np.diff(c, axis=a) / h[a]
        out = d if out is None else out + d
    return out


def divergence_relative(field):
    """||div u||_2 scaled by the natural gradient magnitude of the field."""
    div = divergence(field)
    h = field.domain.h
    scale = sum(
        math.sqrt(float(np.sum(c * c))) / h[a] for a, c in enumerate(field.comps)
    )
    if scale == 0.0:
        return 0.0
    return math.sqrt(float(np.sum(div * div))) / scale


def gradient_to_faces(phi, domain):
    """Cell-centered scalar -> face gradient, zero on wall faces."""
    comps = []
    for a in range(domain.dim):
        g = np.zeros(face_shape(domain, a))
        _interior(g, a)[...] = np.diff(phi, axis=a) / domain.h[a]
        comps.append(g)
    return comps


def laplacian_neumann(phi, domain):
    """5/7-point Laplacian with zero-flux walls (ghost = edge value)."""
    padded = np.pad(phi, 1, mode="edge")
    nd = phi.ndim
    out = np.zeros_like(phi)
    for a in range(nd):
        sl = [slice(1, -1)] * nd
        sl[a] = slice(None)
        out += _second_diff(padded[tuple(sl)], a, domain.h[a])
    return out


@dataclass
class PoissonInfo:
    iterations: int
    residual: float  # relative to ||rhs||
    converged: bool


def solve_neumann_poisson(rhs, domain, tol=1e-12, maxiter=None, x0=None):
    """CG solve of lap(phi) = rhs with zero-flux walls, mean-zero gauge.

    The RHS mean is removed (compatibility), the solution is returned
    mean-zero, and failure to reach `tol` raises PoissonDivergence.
    """
    b = rhs - rhs.mean()
    bnorm = math.sqrt(float(np.sum(b * b)))
    if bnorm == 0.0:
        return np.zeros_like(b), PoissonInfo(0, 0.0, True)
    if maxiter is None:
        maxiter = 60 * max(domain.cells) + 200

    # CG on the positive-semidefinite operator -lap over mean-zero fields
    def apply_a(p):
        return -laplacian_neumann(p, domain)

    if x0 is not None:
        x = x0 - x0.mean()
        r = -b - apply_a(x)
    else:
        x = np.zeros_like(b)
        r = -b.copy()
    p = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    best = math.sqrt(rs) / bnorm
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        alpha = rs / float(np.dot(p.ravel(), ap.ravel()))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        res = math.sqrt(rs_new) / bnorm
        best = min(best, res)
        if res <= tol:
            x -= x.mean()
            return x, PoissonInfo(it, res, True)
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise PoissonDivergence(
        f"pressure CG stalled at relative residual {best:.3e} after {maxiter} iterations",
        residual=best,
        iterations=maxiter,
    )


# ---------------------------------------------------------------------------
# projection


@dataclass
class ProjectionInfo:
    poisson: PoissonInfo
    phi: np.ndarray
    divergence_rel: float


def leray_project(field, tol=1e-12, x0=None):
    """Orthogonal projection onto discretely divergence-free fields with
    zero wall-normal component.

    Wall-normal input faces are dropped (they differ from the projection
    output by a discrete gradient), the cell divergence is solved for a
    pressure-like potential, and its face gradient is subtracted.
    """
    domain = field.domain
    comps = []
    for a, c in enumerate(field.comps):
        c = c.copy()
        sl_lo = [slice(None)] * domain.dim
        sl_hi = [slice(None)] * domain.dim
        sl_lo[a] = 0
        sl_hi[a] = -1
        c[tuple(sl_lo)] = 0.0
        c[tuple(sl_hi)] = 0.0
        comps.append(c)
    work = VectorField(domain, tuple(comps), field.time)
    rhs = divergence(work)
    phi, info = solve_neumann_poisson(rhs, domain, tol=tol, x0=x0)
    grad = gradient_to_faces(phi, domain)
    out = VectorField(
        domain, tuple(c - g for c, g in zip(work.comps, grad)), field.time
    )
    return out, ProjectionInfo(info, phi, divergence_relative(out))


# ---------------------------------------------------------------------------
# convective term and time steps


def convective_term(velocity, transported):
    """(U . grad) w at the interior faces of every component of w."""
    domain = velocity.domain
    nd = domain.dim
    h = domain.h
    cell_avg = [_avg(velocity.comps[b], axis=b) for b in range(nd)]
    out = []
    for a in range(nd):
        w_a = transported.comps[a]
        term = _central_diff(w_a, a, h[a]) * _interior(velocity.comps[a], a)
        for b in range(nd):
            if b == a:
                continue
            u_b = _avg(cell_avg[b], axis=a)  # advecting speed at interior a-faces
            dw = _central_diff(_pad_noslip(w_a, b), b, h[b])
            term = term + u_b * _interior(dw, a)
        out.append(term)
    return out


def diffusion_term(field):
    """Laplacian of every component at its interior faces, no-slip ghosts."""
    domain = field.domain
    h = domain.h
    out = []
    for a, c in enumerate(field.comps):
        lap = _second_diff(c, a, h[a])
        for b in range(domain.dim):
            if b == a:
                continue
            lap = lap + _interior(_second_diff(_pad_noslip(c, b), b, h[b]), a)
        out.append(lap)
    return out


def stable_dt(velocity, safety=0.5):
    """Advective/diffusive explicit step bound with a safety factor."""
    domain = velocity.domain
    hmin = float(np.min(domain.h))
    diff_limit = hmin * hmin / (2.0 * domain.dim * domain.nu)
    umax = velocity.max_speed()
    adv_limit = hmin / umax if umax > 0.0 else math.inf
    dt = safety * min(adv_limit, diff_limit)
    if not math.isfinite(dt):
        raise ValueError("cannot pick a time step for this state")
    return dt


def check_cfl(velocity, dt):
    domain = velocity.domain
    hmin = float(np.min(domain.h))
    diff_limit = hmin * hmin / (2.0 * domain.dim * domain.nu)
    umax = velocity.max_speed()
    adv_limit = hmin / umax if umax > 0.0 else math.inf
    limit = min(adv_limit, diff_limit)
    if dt > limit * (1.0 + 1e-12):
        raise CflViolation(
            f"dt={dt:.3e} exceeds the stability bound {limit:.3e} "
            f"(|u|max={umax:.3e})"
        )


def _check_finite(field):
    for c in field.comps:
        if not np.all(np.isfinite(c)):
            raise NanDetected(f"non-finite velocity values at t={field.time:.6g}")


def nse_step(velocity, force, dt, *, advect=True, tol=1e-12, x0=None):
    """One explicit step of the forced Navier-Stokes system plus projection.

    `force` may be None for unforced flow; `advect=False` gives the
    Stokes (linear) step. Returns (new field, ProjectionInfo).
    """
    domain = velocity.domain
    if force is not None:
        velocity.check_compatible(force)
    check_cfl(velocity, dt)
    _check_finite(velocity)
    nu = domain.nu
    lap = diffusion_term(velocity)
    adv = convective_term(velocity, velocity) if advect else None
    comps = []
    for a, c in enumerate(velocity.comps):
        c = c.copy()
        rhs = nu * lap[a]
        if advect:
            rhs = rhs - adv[a]
        if force is not None:
            rhs = rhs + _interior(force.comps[a], a)
        _interior(c, a)[...] += dt * rhs
        comps.append(c)
    star = VectorField(domain, tuple(comps), velocity.time + dt)
    out, info = leray_project(star, tol=tol, x0=x0)
    _check_finite(out)
    return out, info


def stokes_step(velocity, force, dt, *, tol=1e-12, x0=None):
    return nse_step(velocity, force, dt, advect=False, tol=tol, x0=x0)


def linearized_step(w, base, force, dt, *, tol=1e-12, x0=None):
    """One step of the flow linearized at frozen coefficients `base`:
    dw/dt = nu lap w - (base . grad) w - (w . grad) base + force, projected."""
    domain = w.domain
    w.check_compatible(base)
    check_cfl(base, dt)
    nu = domain.nu
    lap = diffusion_term(w)
    adv1 = convective_term(base, w)
    adv2 = convective_term(w, base)
    comps = []
    for a, c in enumerate(w.comps):
        c = c.copy()
        rhs = nu * lap[a] - adv1[a] - adv2[a]
        if force is not None:
            rhs = rhs + _interior(force.comps[a], a)
        _interior(c, a)[...] += dt * rhs
        comps.append(c)
    star = VectorField(domain, tuple(comps), w.time + dt)
    out, info = leray_project(star, tol=tol, x0=x0)
    _check_finite(out)
    return out, info


# ---------------------------------------------------------------------------
# derived fields


def velocity_gradient(field):
    """Velocity gradient tensor at cell centers: G[a][b] = d u_a / d x_b."""
    domain = field.domain
    nd = domain.dim
    h = domain.h
    out = np.zeros((nd, nd) + tuple(domain.cells))
    for a, c in enumerate(field.comps):
        for b in range(nd):
            if a == b:
                out[a, b] = np.diff(c, axis=a) / h[a]
            else:
                centered = _avg(c, axis=a)
                out[a, b] = _central_diff(_pad_noslip(centered, b), b, h[b])
    return out


def stream_function_field(domain, amplitude=1.0, time=0.0):
    """A divergence-free eddy built from a node stream function that
    vanishes to second order at the walls; max speed ~ amplitude."""
    if domain.dim == 2:
        lx, ly = domain.extent
        xn = domain.cell_edges(0)
        yn = domain.cell_edges(1)
        psi = np.outer(np.sin(np.pi * xn / lx) ** 2, np.sin(np.pi * yn / ly) ** 2)
        scale = amplitude * min(lx, ly) / np.pi
        psi *= scale
        u = np.diff(psi, axis=1) / domain.h[1]
        v = -np.diff(psi, axis=0) / domain.h[0]
        return VectorField(domain, (u, v), time)
    lx, ly, lz = domain.extent
    xn = domain.cell_edges(0)
    yn = domain.cell_edges(1)
    zc = domain.cell_edges(2)[:-1] + domain.h[2] / 2.0
    psi = np.outer(np.sin(np.pi * xn / lx) ** 2, np.sin(np.pi * yn / ly) ** 2)
    psi = psi * (amplitude * min(lx, ly) / np.pi)
    prof = np.sin(np.pi * zc / lz) ** 2
    u = (np.diff(psi, axis=1) / domain.h[1])[:, :, None] * prof[None, None, :]
    v = (-np.diff(psi, axis=0) / domain.h[0])[:, :, None] * prof[None, None, :]
    w = np.zeros(face_shape(domain, 2))
    return VectorField(domain, (u, v, w), time)
