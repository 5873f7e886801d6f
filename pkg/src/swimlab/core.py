"""Domain, body shapes, coverage masks, and configuration validity.

Everything here is pure geometry: no fluid state, no time. Masks are
sharp and area-weighted: each cell (or staggered control volume) gets
the exact fraction of its measure covered by the body, with no
mollification. Rectangles/boxes and discs use closed-form coverage;
balls use per-cell Gauss quadrature on the chord-length integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryViolation,
    DegenerateShift,
    OverlapViolation,
    ShapeOutsideDomain,
)

_ROUND_KINDS = ("disc", "ball")
_FLAT_KINDS = ("rectangle", "box")


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box domain with a uniform cell grid and viscosity."""

    extent: tuple
    cells: tuple
    nu: float

    def __post_init__(self):
        extent = tuple(float(e) for e in self.extent)
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)
        if len(extent) not in (2, 3):
            raise ValueError(f"domain must be 2-D or 3-D, got {len(extent)} axes")
        if len(cells) != len(extent):
            raise ValueError("cells and extent must have the same length")
        if any(e <= 0 for e in extent):
            raise ValueError("domain extents must be positive")
        if any(c < 4 for c in cells):
            raise ValueError("need at least 4 cells per axis")
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")

    @property
    def dim(self):
        return len(self.extent)

    @property
    def h(self):
        """Cell spacing per axis."""
        return np.asarray(self.extent, float) / np.asarray(self.cells, float)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def cell_edges(self, axis):
        return np.linspace(0.0, self.extent[axis], self.cells[axis] + 1)

    def stagger_edges(self, axis):
        """Edges of the face-centered control volumes along `axis`.

        Faces sit at multiples of h; their control volumes are the cells
        shifted by h/2, clipped at the walls, so they tile the domain
        exactly (the two wall volumes have width h/2).
        """
        h = self.extent[axis] / self.cells[axis]
        inner = h / 2.0 + h * np.arange(self.cells[axis])
        return np.concatenate(([0.0], inner, [self.extent[axis]]))

    def volume_edges(self, stagger=None):
        """Per-axis edge arrays of the control volumes for a given staggering."""
        return tuple(
            self.stagger_edges(a) if a == stagger else self.cell_edges(a)
            for a in range(self.dim)
        )


@dataclass(frozen=True)
class BodyShape:
    """A body-part shape placed by its center.

    `params` are per-axis half-extents for rectangle/box and the radius
    (a single entry) for disc/ball.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in _ROUND_KINDS + _FLAT_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if any(p <= 0 for p in self.params):
            raise ValueError("shape parameters must be positive")
        expected = {"rectangle": 2, "disc": 1, "box": 3, "ball": 1}[self.kind]
        if len(self.params) != expected:
            raise ValueError(f"{self.kind} takes {expected} parameter(s)")

    @staticmethod
    def rectangle(p, q):
        return BodyShape("rectangle", (p, q))

    @staticmethod
    def disc(r):
        return BodyShape("disc", (r,))

    @staticmethod
    def box(p, q, s):
        return BodyShape("box", (p, q, s))

    @staticmethod
    def ball(r):
        return BodyShape("ball", (r,))

    @property
    def dim(self):
        return {"rectangle": 2, "disc": 2, "box": 3, "ball": 3}[self.kind]

    @property
    def is_round(self):
        return self.kind in _ROUND_KINDS

    @property
    def measure(self):
        if self.kind == "rectangle":
            p, q = self.params
            return 4.0 * p * q
        if self.kind == "box":
            p, q, s = self.params
            return 8.0 * p * q * s
        if self.kind == "disc":
            return math.pi * self.params[0] ** 2
        return 4.0 / 3.0 * math.pi * self.params[0] ** 3

    @property
    def half_extents(self):
        """Per-axis half-widths of the bounding box."""
        if self.is_round:
            return np.full(self.dim, self.params[0])
        return np.asarray(self.params, float)

    @property
    def circumscribed_radius(self):
        if self.is_round:
            return self.params[0]
        return float(np.linalg.norm(self.params))

    def permuted(self, perm):
        """Shape with its axes reordered; world axis a gets half-extent params[perm[a]]."""
        perm = tuple(int(p) for p in perm)
        if sorted(perm) != list(range(self.dim)):
            raise ValueError(f"perm must permute axes 0..{self.dim - 1}")
        if self.is_round:
            return self
        return BodyShape(self.kind, tuple(self.params[p] for p in perm))

    def contains(self, points):
        """Boolean membership of points given in center-local coordinates."""
        pts = np.asarray(points, float)
        if self.is_round:
            r = self.params[0]
            return np.sum(pts * pts, axis=-1) < r * r
        half = self.half_extents
        return np.all(np.abs(pts) < half, axis=-1)


def part_shapes(shape, n):
    """Normalize a shared shape or a per-part sequence to an n-tuple.

    All parts must share dimension and measure (they are translates /
    axis permutations of one reference shape).
    """
    if isinstance(shape, BodyShape):
        return (shape,) * n
    shapes = tuple(shape)
    if len(shapes) != n:
        raise ValueError(f"expected {n} shapes, got {len(shapes)}")
    ref = shapes[0]
    for s in shapes[1:]:
        if s.dim != ref.dim:
            raise ValueError("all parts must share the spatial dimension")
        if not math.isclose(s.measure, ref.measure, rel_tol=1e-12):
            raise ValueError("all parts must share the same measure")
    return shapes


# ---------------------------------------------------------------------------
# coverage masks


def _axis_overlap(edges, lo, hi):
    """Exact overlap length of [lo, hi] with each interval of `edges`."""
    left = np.maximum(edges[:-1], lo)
    right = np.minimum(edges[1:], hi)
    return np.maximum(right - left, 0.0)


def _circle_cumulative(a, b, r):
    """Area of {x <= a, y <= b} inside the origin-centered disc of radius r."""
    a = np.clip(a, -r, r)
    b = np.clip(b, -r, r)
    tb = np.sqrt(np.maximum(r * r - b * b, 0.0))

    def sb(t):
        # antiderivative of sqrt(r^2 - t^2)
        return 0.5 * (
            t * np.sqrt(np.maximum(r * r - t * t, 0.0))
            + r * r * np.arcsin(np.clip(t / r, -1.0, 1.0))
        )

    hi = np.clip(a, -tb, tb)
    mid = (b * hi + sb(hi)) - (-b * tb + sb(-tb))
    seg1 = 2.0 * (sb(np.minimum(a, -tb)) - sb(np.full_like(tb, -r)))
    seg3 = 2.0 * (sb(np.maximum(a, tb)) - sb(tb))
    return np.where(b >= 0.0, seg1 + mid + seg3, mid)


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _ball_cell_measure(x0, x1, y0, y1, z0, z1, r):
    """Measure of ball(r) within [x0,x1]x[y0,y1]x[z0,z1], coords center-local.

    Gauss quadrature over the xy footprint of the clipped z-chord length.
    All six bound arrays share one shape.
    """
    gx = 0.5 * (x1 + x0)[..., None] + 0.5 * (x1 - x0)[..., None] * _GAUSS_NODES
    gy = 0.5 * (y1 + y0)[..., None] + 0.5 * (y1 - y0)[..., None] * _GAUSS_NODES
    # broadcast to (..., nx_quad, ny_quad)
    gx = gx[..., :, None]
    gy = gy[..., None, :]
    s = np.sqrt(np.maximum(r * r - gx * gx - gy * gy, 0.0))
    lo = np.maximum(z0[..., None, None], -s)
    hi = np.minimum(z1[..., None, None], s)
    chord = np.maximum(hi - lo, 0.0)
    w = _GAUSS_WEIGHTS[:, None] * _GAUSS_WEIGHTS[None, :]
    jac = 0.25 * (x1 - x0) * (y1 - y0)
    return jac * np.einsum("...ij,ij->...", chord, w)


def coverage_measure(shape, center, domain, stagger=None):
    """Absolute covered measure per control volume.

    `stagger=None` uses the cell grid; `stagger=a` uses the control
    volumes of the velocity faces normal to axis a. Summing the result
    recovers the shape measure exactly for rectangles, boxes and discs,
    and to quadrature accuracy for balls.
    """
    center = np.asarray(center, float)
    if shape.dim != domain.dim or center.shape != (domain.dim,):
        raise ValueError("shape/center dimension does not match the domain")
    _require_inside(shape, center, domain)
    edges = domain.volume_edges(stagger)

    if shape.kind in _FLAT_KINDS:
        half = shape.half_extents
        overlaps = [
            _axis_overlap(edges[a], center[a] - half[a], center[a] + half[a])
            for a in range(domain.dim)
        ]
        if domain.dim == 2:
            return np.multiply.outer(overlaps[0], overlaps[1])
        return (
            overlaps[0][:, None, None]
            * overlaps[1][None, :, None]
            * overlaps[2][None, None, :]
        )

    r = shape.params[0]
    if shape.kind == "disc":
        ex = edges[0] - center[0]
        ey = edges[1] - center[1]
        corner = _circle_cumulative(ex[:, None], ey[None, :], r)
        return np.maximum(
            corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1],
            0.0,
        )

    # ball: classify volumes by center distance, quadrature on the shell band
    ex, ey, ez = edges
    wx, wy, wz = np.diff(ex), np.diff(ey), np.diff(ez)
    cx = 0.5 * (ex[:-1] + ex[1:]) - center[0]
    cy = 0.5 * (ey[:-1] + ey[1:]) - center[1]
    cz = 0.5 * (ez[:-1] + ez[1:]) - center[2]
    dist = np.sqrt(
        cx[:, None, None] ** 2 + cy[None, :, None] ** 2 + cz[None, None, :] ** 2
    )
    half_diag = 0.5 * math.sqrt(float(wx.max() ** 2 + wy.max() ** 2 + wz.max() ** 2))
    out = np.zeros(dist.shape)
    full = dist <= r - half_diag
    vols = (
        wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
    ) * np.ones_like(dist)
    out[full] = vols[full]
    band = (~full) & (dist < r + half_diag)
    if np.any(band):
        ii, jj, kk = np.nonzero(band)
        out[band] = _ball_cell_measure(
            ex[ii] - center[0],
            ex[ii + 1] - center[0],
            ey[jj] - center[1],
            ey[jj + 1] - center[1],
            ez[kk] - center[2],
            ez[kk + 1] - center[2],
            r,
        )
    return out


def _require_inside(shape, center, domain):
    half = shape.half_extents
    for a in range(domain.dim):
        if center[a] - half[a] <= 0.0 or center[a] + half[a] >= domain.extent[a]:
            raise ShapeOutsideDomain(
                f"part at {tuple(np.round(center, 6))} leaves the domain along axis {a}"
            )


def characteristic_mask(shape, center, domain):
    """Cell-centered mask: exact covered fraction of every cell, in [0, 1]."""
    cov = coverage_measure(shape, center, domain, stagger=None)
    return np.clip(cov / domain.cell_volume, 0.0, 1.0)


# ---------------------------------------------------------------------------
# swimmer configuration and validity


@dataclass(frozen=True)
class SwimmerState:
    """Positions of the n part centers, shape (n, dim)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, float)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError("positions must have shape (n, 2) or (n, 3)")
        if pos.shape[0] < 3:
            raise ValueError("a swimmer needs at least 3 parts")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    def moved(self, new_positions):
        return SwimmerState(np.asarray(new_positions, float))


@dataclass(frozen=True)
class MarginReport:
    """Strict-validity margins; the configuration is valid iff both are > 0."""

    pair_margin: float
    wall_margin: float
    worst_pair: tuple
    worst_wall: tuple  # (part, axis, side)
    ok: bool


def configuration_margins(state, shape, domain):
    """Margins of the two validity constraints, without raising."""
    shapes = part_shapes(shape, state.n)
    pos = state.positions
    r = max(s.circumscribed_radius for s in shapes)

    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(state.n, k=1)
    gaps = dist[iu] - 2.0 * r
    k = int(np.argmin(gaps))
    pair_margin = float(gaps[k])
    worst_pair = (int(iu[0][k]), int(iu[1][k]))

    wall_margin = math.inf
    worst_wall = (0, 0, "low")
    for i, s in enumerate(shapes):
        half = s.half_extents
        for a in range(domain.dim):
            low = pos[i, a] - half[a]
            high = domain.extent[a] - pos[i, a] - half[a]
            if low < wall_margin:
                wall_margin, worst_wall = float(low), (i, a, "low")
            if high < wall_margin:
                wall_margin, worst_wall = float(high), (i, a, "high")

    ok = pair_margin > 0.0 and wall_margin > 0.0
    return MarginReport(pair_margin, wall_margin, worst_pair, worst_wall, ok)


def validate_configuration(state, shape, domain):
    """Margins as in `configuration_margins`, raising on any violation."""
    report = configuration_margins(state, shape, domain)
    if report.pair_margin <= 0.0:
        i, j = report.worst_pair
        raise OverlapViolation(
            f"parts {i} and {j} are separated by less than twice the "
            f"circumscribed radius (margin {report.pair_margin:.3e})"
        )
    if report.wall_margin <= 0.0:
        i, a, side = report.worst_wall
        raise BoundaryViolation(
            f"part {i} closure reaches the {side} wall of axis {a} "
            f"(margin {report.wall_margin:.3e})"
        )
    return report


# ---------------------------------------------------------------------------
# thickness ratio of shifted-set differences


@dataclass(frozen=True)
class ThicknessReport:
    shifts: tuple  # shift vectors
    ratios: tuple  # sup over sampled lines of trace-measure / |shift|
    max_ratio: float


def _transverse_basis(direction):
    d = len(direction)
    basis = np.eye(d)
    # pick the axes least aligned with the direction, then orthonormalize
    order = np.argsort(np.abs(direction))
    cols = [basis[order[k]] for k in range(d - 1)]
    q, _ = np.linalg.qr(np.column_stack([direction] + cols))
    return q[:, 1:]


def thickness_ratios(shape, shifts, lines_per_shift=64, samples_per_unit=64):
    """Sampled sup of (1-D trace of S xor (S + h)) / |h| over lines parallel to h.

    Lines are swept on a uniform transverse grid; each line is sampled
    densely enough that the endpoint error is a small fraction of |h|.
    """
    shifts = [np.asarray(s, float) for s in shifts]
    r = shape.circumscribed_radius
    ratios = []
    for h in shifts:
        if h.shape != (shape.dim,):
            raise ValueError("shift dimension does not match the shape")
        hn = float(np.linalg.norm(h))
        if hn < 1e-12 * r:
            raise DegenerateShift(f"shift magnitude {hn:.3e} is below resolution")
        if hn > r:
            raise ValueError("shifts larger than the circumscribed radius are not supported")
        eta = h / hn
        span = r + hn
        n_samples = max(2048, int(math.ceil(samples_per_unit * 2.0 * span / hn)))
        ts = np.linspace(-span, span, n_samples)
        dt = ts[1] - ts[0]
        basis = _transverse_basis(eta)
        offs = np.linspace(-r, r, lines_per_shift)
        if shape.dim == 2:
            origins = offs[:, None] * basis[:, 0][None, :]
        else:
            o1, o2 = np.meshgrid(offs, offs, indexing="ij")
            origins = (
                o1.ravel()[:, None] * basis[:, 0][None, :]
                + o2.ravel()[:, None] * basis[:, 1][None, :]
            )
        best = 0.0
        for start in range(0, origins.shape[0], 256):
            block = origins[start : start + 256]
            pts = block[:, None, :] + ts[None, :, None] * eta[None, None, :]
            in_s = shape.contains(pts)
            in_shifted = shape.contains(pts - h[None, None, :])
            trace = dt * np.count_nonzero(in_s ^ in_shifted, axis=1)
            best = max(best, float(trace.max(initial=0.0)) / hn)
        ratios.append(best)
    max_ratio = max(ratios) if ratios else 0.0
    return ThicknessReport(tuple(tuple(s) for s in shifts), tuple(ratios), max_ratio)
