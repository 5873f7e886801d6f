"""Internal swimmer forces and their rasterization onto the fluid grid.

A swimmer with n parts carries 2n-3 scalar controls, indexed 1-based:

* j in 1..n-2 drives a rotational force couple about part j+1, acting
  on parts j, j+1, j+2;
* j in n-1..2n-3 drives an elastic push/pull along link l = j-(n-2),
  acting on parts l and l+1.

Each control contributes one constant density vector per involved part,
supported on that part. The vectors of a control sum to zero exactly
(the center/second density is computed as the negated sum of the
others), so the assembled force integrates to zero over the box up to
roundoff: all parts share the same measure and their rasterized masks
are normalized to it.
"""

from __future__ import annotations

import numpy as np

from .core import coverage_measure, part_shapes
from .errors import DegenerateGeometry
from .fluid import VectorField, face_shape


def control_count(n):
    return 2 * n - 3


def control_kind(n, j):
    """Classify 1-based control index j: ('rotational', center part) or
    ('elastic', (part, part)), parts 0-based."""
    if not 1 <= j <= control_count(n):
        raise ValueError(f"control index {j} out of range 1..{control_count(n)}")
    if j <= n - 2:
        return ("rotational", j)  # 0-based center part = j
    link = j - (n - 2)  # 1-based link
    return ("elastic", (link - 1, link))


def _rot2(x):
    # quarter-turn matrix applied to x: (x, y) -> (y, -x)
    return np.array([x[1], -x[0]])


def rotational_unit_densities(state, center, degenerate_threshold=0.0):
    """Density vectors of a unit rotational control about part `center`.

    Returns an (n, dim) array with nonzero rows at center-1, center,
    center+1. The center row is the exact negated sum of the other two.
    """
    pos = state.positions
    if not 1 <= center <= state.n - 2:
        raise ValueError("rotational center must be an interior part")
    arm_prev = pos[center - 1] - pos[center]
    arm_next = pos[center + 1] - pos[center]
    lp = float(np.linalg.norm(arm_prev))
    ln = float(np.linalg.norm(arm_next))
    if lp <= degenerate_threshold or ln <= degenerate_threshold:
        raise DegenerateGeometry(
            f"rotational arm at part {center} has near-zero length "
            f"({min(lp, ln):.3e})"
        )
    ratio = (lp * lp) / (ln * ln)
    if state.dim == 2:
        d_prev = _rot2(arm_prev)
        d_next = -ratio * _rot2(arm_next)
    else:
        normal = np.cross(arm_prev, arm_next)
        d_prev = np.cross(normal, arm_prev)
        d_next = -ratio * np.cross(arm_next, normal)
    out = np.zeros_like(pos)
    out[center - 1] = d_prev
    out[center + 1] = d_next
    out[center] = -(d_prev + d_next)
    return out


def elastic_unit_densities(state, link, degenerate_threshold=0.0):
    """Density vectors of a unit elastic control on 0-based link
    (link, link+1): each endpoint is pushed toward the other."""
    pos = state.positions
    if not 0 <= link <= state.n - 2:
        raise ValueError("elastic link index out of range")
    d = pos[link + 1] - pos[link]
    if float(np.linalg.norm(d)) <= degenerate_threshold:
        raise DegenerateGeometry(f"link {link} has near-zero length")
    out = np.zeros_like(pos)
    out[link] = d
    out[link + 1] = -d
    return out


def unit_densities(state, j, degenerate_threshold=0.0):
    """Density rows of the 1-based control j at unit amplitude."""
    kind, where = control_kind(state.n, j)
    if kind == "rotational":
        return rotational_unit_densities(state, where, degenerate_threshold)
    return elastic_unit_densities(state, where[0], degenerate_threshold)


def part_densities(state, controls, degenerate_threshold=0.0):
    """Total density vector per part, shape (n, dim), for a control vector."""
    controls = np.asarray(controls, float)
    m = control_count(state.n)
    if controls.shape != (m,):
        raise ValueError(f"expected {m} controls, got shape {controls.shape}")
    out = np.zeros_like(state.positions)
    for j in range(1, m + 1):
        v = controls[j - 1]
        if v != 0.0:
            out += v * unit_densities(state, j, degenerate_threshold)
    return out


def part_masks(state, shape, domain, stagger):
    """Normalized staggered coverage per part: each part's mask integrates
    to exactly the shared part measure."""
    shapes = part_shapes(shape, state.n)
    masks = []
    for i in range(state.n):
        cov = coverage_measure(shapes[i], state.positions[i], domain, stagger=stagger)
        total = float(cov.sum())
        if total <= 0.0:
            raise ValueError(f"part {i} has empty grid support")
        masks.append(cov * (shapes[i].measure / total))
    return masks


def rasterize_densities(state, shape, domain, densities):
    """Spread per-part density vectors onto staggered faces.

    Component a of the result is sum_i D[i, a] * mask_i / cell_volume
    with mask_i the normalized coverage on the faces normal to a, so
    integrating the field recovers D[i] * measure per part exactly.
    """
    densities = np.asarray(densities, float)
    vol = domain.cell_volume
    comps = []
    for a in range(domain.dim):
        comp = np.zeros(face_shape(domain, a))
        active = [i for i in range(state.n) if densities[i, a] != 0.0]
        if active:
            shapes = part_shapes(shape, state.n)
            for i in active:
                cov = coverage_measure(
                    shapes[i], state.positions[i], domain, stagger=a
                )
                total = float(cov.sum())
                comp += (densities[i, a] * shapes[i].measure / (total * vol)) * cov
        # the walls carry no force (no-slip faces are pinned anyway)
        sl_lo = [slice(None)] * domain.dim
        sl_hi = [slice(None)] * domain.dim
        sl_lo[a] = 0
        sl_hi[a] = -1
        comp[tuple(sl_lo)] = 0.0
        comp[tuple(sl_hi)] = 0.0
        comps.append(comp)
    return VectorField(domain, tuple(comps))


def assemble_force(state, shape, domain, controls):
    """Force density field on the staggered grid for a control vector."""
    thr = 1e-8 * max(domain.extent)
    densities = part_densities(state, controls, degenerate_threshold=thr)
    return rasterize_densities(state, shape, domain, densities)


def total_force(force):
    """Integral of the force density over the box, one value per axis."""
    vol = force.domain.cell_volume
    return np.array([float(np.sum(c)) * vol for c in force.comps])


def _face_coordinates(domain, a):
    axes = []
    for b in range(domain.dim):
        if b == a:
            axes.append(domain.cell_edges(b))
        else:
            axes.append(domain.cell_edges(b)[:-1] + domain.h[b] / 2.0)
    return np.meshgrid(*axes, indexing="ij")


def net_torque(force, about=None):
    """Diagnostic net torque of the force field about a point (default:
    box center). Scalar in 2-D, vector in 3-D."""
    domain = force.domain
    if about is None:
        about = 0.5 * np.asarray(domain.extent)
    about = np.asarray(about, float)
    vol = domain.cell_volume
    if domain.dim == 2:
        xs, ys = _face_coordinates(domain, 1)
        t = float(np.sum((xs - about[0]) * force.comps[1])) * vol
        xs, ys = _face_coordinates(domain, 0)
        t -= float(np.sum((ys - about[1]) * force.comps[0])) * vol
        return t
    out = np.zeros(3)
    for a in range(3):
        coords = _face_coordinates(domain, a)
        rel = [coords[b] - about[b] for b in range(3)]
        # torque contribution of the a-component: r x f_a e_a
        b, c = (a + 1) % 3, (a + 2) % 3
        out[b] += float(np.sum(rel[c] * force.comps[a])) * vol
        out[c] -= float(np.sum(rel[b] * force.comps[a])) * vol
    return out


def part_force_table(state, shape, controls, degenerate_threshold=0.0):
    """Per-part integrated force (density times shared measure), (n, dim)."""
    shapes = part_shapes(shape, state.n)
    densities = part_densities(state, controls, degenerate_threshold)
    return densities * shapes[0].measure
