"""Grid specification and sweep helpers shared by the estimators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

REFINE_FACTOR = 8  # per-axis densification per refinement pass
REFINE_FRACTION = 0.01  # best cells carried into the next pass


class GridError(ValueError):
    """Grid too coarse or box inconsistent with the requested region."""


@dataclass(frozen=True)
class GridSpec:
    box: tuple  # per-axis (lo, hi)
    resolution: int = 801
    refinement: int = 2

    def __post_init__(self):
        if self.resolution < 3:
            raise GridError(f"resolution must be >= 3, got {self.resolution}")
        for lo, hi in self.box:
            if not hi > lo:
                raise GridError(f"degenerate box axis ({lo}, {hi})")

    @property
    def dimension(self):
        return len(self.box)

    @property
    def spacing(self):
        return np.array([(hi - lo) / (self.resolution - 1) for lo, hi in self.box])

    def axes(self):
        return [np.linspace(lo, hi, self.resolution) for lo, hi in self.box]

    def points(self):
        """All grid nodes as an (m, n) array, C-order over axes."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def with_resolution(self, resolution):
        return GridSpec(self.box, resolution, self.refinement)

    def verify_covers_sublevel(self, v, c2, samples_per_face=64):
        """Check V > c2 on the box boundary, so {V <= c2} is inside the box."""
        n = self.dimension
        rng = np.random.default_rng(0)
        for axis in range(n):
            for bound in (0, 1):
                pts = np.column_stack(
                    [
                        np.full(samples_per_face, self.box[axis][bound])
                        if j == axis
                        else rng.uniform(self.box[j][0], self.box[j][1], samples_per_face)
                        for j in range(n)
                    ]
                )
                if np.any(v.evaluate_many(pts) <= c2):
                    raise GridError(
                        "bounding box does not contain the sublevel set {V <= c2}"
                    )


def default_box(v, c2, margin=1.02):
    """Symmetric box containing {V <= c2}, using the quadratic lower bound."""
    if v.quadratic_lower_k0 is None:
        raise GridError(
            "no quadratic lower bound on V; supply an explicit grid box"
        )
    half = margin * np.sqrt(c2 / v.quadratic_lower_k0)
    return tuple((-half, half) for _ in range(v.dimension))


def default_grid(v, c2, resolution=801, refinement=2):
    return GridSpec(default_box(v, c2), resolution, refinement)


def _local_offsets(n, h):
    """Subgrid offsets covering a cell of spacing h at x8 density per axis."""
    steps = np.linspace(-0.5, 0.5, REFINE_FACTOR, endpoint=False) + 0.5 / REFINE_FACTOR
    grids = np.meshgrid(*[steps * h[j] for j in range(n)], indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def refine_extremum(
    objective_many,
    points,
    values,
    spacing,
    passes,
    mode="max",
    accept_mask_fn=None,
    extra_points=None,
):
    """Local grid refinement around current extremizers.

    Each pass takes the best REFINE_FRACTION of the current sample set,
    overlays an x8-per-axis subgrid on each point's cell, filters through
    ``accept_mask_fn`` (region membership) and re-evaluates.  Returns
    (value, argpoint) of the refined extremum.  Sup-type estimates can only
    grow and inf-type only shrink, since original samples are kept.
    """
    sign = 1.0 if mode == "max" else -1.0
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if extra_points is not None and len(extra_points):
        extra_points = np.asarray(extra_points, dtype=float)
        if accept_mask_fn is not None:
            keep = accept_mask_fn(extra_points)
            extra_points = extra_points[keep]
        if len(extra_points):
            points = np.vstack([points, extra_points])
            values = np.concatenate([values, objective_many(extra_points)])
    if points.size == 0:
        raise GridError("no sample points available for refinement")

    h = np.asarray(spacing, dtype=float).copy()
    n = points.shape[1]
    best_idx = int(np.argmax(sign * values))
    best_val, best_pt = values[best_idx], points[best_idx]

    current_pts, current_vals = points, values
    for _ in range(passes):
        k = max(1, int(np.ceil(REFINE_FRACTION * len(current_vals))))
        order = np.argsort(-sign * current_vals)[:k]
        seeds = current_pts[order]
        offsets = _local_offsets(n, h)
        cand = (seeds[:, None, :] + offsets[None, :, :]).reshape(-1, n)
        if accept_mask_fn is not None:
            cand = cand[accept_mask_fn(cand)]
        if cand.size == 0:
            break
        vals = objective_many(cand)
        idx = int(np.argmax(sign * vals))
        if sign * vals[idx] > sign * best_val:
            best_val, best_pt = vals[idx], cand[idx]
        current_pts, current_vals = cand, vals
        h = h / REFINE_FACTOR
    return float(best_val), np.asarray(best_pt)


def sphere_samples(center, radius, count, dimension, rng=None):
    """Deterministic samples on and just inside/outside a kink sphere."""
    rng = rng or np.random.default_rng(12345)
    center = np.asarray(center, dtype=float)
    dirs = rng.normal(size=(count, dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    shells = []
    for scale in (1.0 - 1e-9, 1.0, 1.0 + 1e-9, 0.5, 1e-6 / max(radius, 1e-12)):
        shells.append(center + radius * scale * dirs)
    return np.vstack(shells)


def cell_corner_offsets(n, h):
    h = np.asarray(h, dtype=float)
    signs = np.array(list(itertools.product((-0.5, 0.5), repeat=n)))
    return signs * h
