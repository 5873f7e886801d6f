"""Averaged-projection measurements on small bodies.

The quantity of interest is the average over a body S of the
divergence-free projection of a constant force supported on S.  For thin
rectangles the average keeps the component along the long side and kills
the transverse one; for discs every direction is reduced by a common
factor.  These measurements back the independence conditions used by the
controllability experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fluid
from .core import BodyShape, DomainSpec, coverage_measure
from .errors import SeparationViolated
from .forces import face_shape


def _fraction_masks(shape, center, domain):
    """Per-axis staggered coverage fractions of the body (values in [0, 1])."""
    masks = []
    for a in range(domain.dim):
        cov = coverage_measure(shape, center, domain, stagger=a)
        masks.append(np.clip(cov / domain.cell_volume, 0.0, 1.0))
    return masks


def _indicator_forcing(b, masks, domain):
    comps = []
    for a in range(domain.dim):
        comp = b[a] * masks[a] if b[a] != 0.0 else np.zeros(face_shape(domain, a))
        comps.append(comp)
    return fluid.VectorField(domain, tuple(comps))


def _paired_average(field, masks):
    """Mask-weighted average, testing with the same mask that forced.

    For indicator data the continuum integrals of the mask and its square
    agree, so pairing the projected field with the forcing mask is an
    equally faithful discretization of the body average and it cancels the
    O(h) interface-smearing bias of partially covered cells.  On grid-
    aligned binary masks it reduces to the plain masked mean.
    """
    out = np.zeros(len(masks))
    for a, m in enumerate(masks):
        denom = float((m * m).sum())
        out[a] = float((field.comps[a] * m * m).sum()) / denom if denom > 0 else 0.0
    return out


def averaged_projection(shape, b, domain, center, tol: float = 1e-12):
    """Body average of the projected constant force b carried by the body."""
    b = np.asarray(b, dtype=float)
    if b.shape != (domain.dim,):
        raise ValueError(f"force direction must have {domain.dim} components")
    masks = _fraction_masks(shape, center, domain)
    if not np.any(b):
        return np.zeros(domain.dim)
    forcing = _indicator_forcing(b, masks, domain)
    projected, _ = fluid.leray_project(forcing, tol=tol)
    return _paired_average(projected, masks)


def projection_ratio(shape, b, domain, center, tol: float = 1e-12):
    """Averaged projection and its component along the forcing direction."""
    b = np.asarray(b, dtype=float)
    vector = averaged_projection(shape, b, domain, center, tol=tol)
    scale = float(np.linalg.norm(b))
    if scale == 0.0:
        return vector, 0.0
    return vector, float(vector @ (b / scale)) / scale


@dataclass(frozen=True)
class SweepRow:
    size: float
    vector: np.ndarray
    ratio: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    limit_vector: np.ndarray
    limit_ratio: float
    rate: float

    @property
    def sizes(self):
        return np.array([row.size for row in self.rows])

    @property
    def ratios(self):
        return np.array([row.ratio for row in self.rows])


def _aitken_limit(values):
    v0, v1, v2 = values[-3], values[-2], values[-1]
    denom = v0 - 2.0 * v1 + v2
    if abs(denom) < 1e-300:
        return v2
    return v2 - (v2 - v1) ** 2 / denom


def asymptotic_sweep(sizes, shapes, domains, centers, b, tol: float = 1e-12):
    """Averaged projections along a shrinking-body ladder, with a fitted limit.

    The limit is extrapolated from the last three rows; the rate is the
    log-log slope of the remaining distance to that limit.
    """
    if not (len(sizes) == len(shapes) == len(domains) == len(centers)):
        raise ValueError("ladder rows must align")
    if len(sizes) < 3:
        raise ValueError("need at least three ladder rows to fit a limit")
    rows = []
    for size, shape, domain, center in zip(sizes, shapes, domains, centers):
        bvec = np.asarray(b, dtype=float)
        vector, ratio = projection_ratio(shape, bvec, domain, center, tol=tol)
        rows.append(SweepRow(size=float(size), vector=vector, ratio=ratio))

    ratios = np.array([r.ratio for r in rows])
    limit_ratio = float(_aitken_limit(ratios))
    limit_vector = np.array(
        [
            _aitken_limit(np.array([r.vector[a] for r in rows]))
            for a in range(len(rows[0].vector))
        ]
    )
    tail_sizes = np.array([r.size for r in rows[-3:]])
    tail_err = np.abs(ratios[-3:] - limit_ratio)
    positive = tail_err > 0.0
    if positive.sum() >= 2:
        coeffs = np.polyfit(np.log(tail_sizes[positive]), np.log(tail_err[positive]), 1)
        rate = float(coeffs[0])
    else:
        rate = np.inf  # converged below roundoff
    return SweepResult(
        rows=tuple(rows),
        limit_vector=limit_vector,
        limit_ratio=limit_ratio,
        rate=rate,
    )


def remote_influence(
    shape,
    b,
    domain,
    center,
    probe_shape,
    probe_center,
    required_gap: float | None = None,
    tol: float = 1e-12,
):
    """Average over a separate probe body of the projected force on S.

    The probe and the forced body must be strictly separated; pass
    ``required_gap`` to insist on a minimum clearance between them.
    """
    center = np.asarray(center, dtype=float)
    probe_center = np.asarray(probe_center, dtype=float)
    gap = (
        float(np.linalg.norm(probe_center - center))
        - shape.circumscribed_radius
        - probe_shape.circumscribed_radius
    )
    if gap <= 0.0:
        raise SeparationViolated(
            f"probe overlaps the forced body (gap {gap:.3e})"
        )
    if required_gap is not None and gap < required_gap:
        raise SeparationViolated(
            f"probe gap {gap:.3e} is below the required {required_gap:.3e}"
        )
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros(domain.dim)
    masks = _fraction_masks(shape, center, domain)
    forcing = _indicator_forcing(b, masks, domain)
    projected, _ = fluid.leray_project(forcing, tol=tol)
    probe_masks = _fraction_masks(probe_shape, probe_center, domain)
    return _paired_average(projected, probe_masks)
