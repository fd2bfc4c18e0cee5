"""Bad-set family analysis: cells where V fails the decay rate, components
and their volumes.

The pointwise membership test is closed (>= at equality).  Grid volume
classification, however, uses a strict margin tau_eq above zero: systems
that sit exactly on the decay rate everywhere (the undistorted spiral with
a = 2) would otherwise mark the entire region through floating-point noise
at equality.  Runs where a large share of the region is within tau_eq of
equality get a warning suggesting a slightly smaller rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grids import GridError, GridSpec, sphere_samples

EQUALITY_GUARD = 1e-12  # scale factor for the strict-margin guard
EQUALITY_WARN_FRACTION = 0.10
VOLUME_REFINE_FACTOR = 8


@dataclass(frozen=True)
class BadSetAnalysis:
    rate_a: float
    eta: float
    cells: frozenset  # grid indices (tuples) whose center fails the decay test
    components: tuple  # tuple of frozensets of cell indices
    volumes: tuple  # per component (inner, outer)
    epsilon: float  # outer volume of the largest component (0 when empty)
    largest_component: frozenset
    cell_size: tuple
    origin: tuple  # coordinates of grid node (0, ..., 0)
    equality_fraction: float  # share of D cells within the guard of equality
    warn_equality: bool

    @property
    def is_empty(self):
        return not self.cells

    def cell_center(self, idx):
        return np.asarray(self.origin) + np.asarray(idx) * np.asarray(self.cell_size)

    def component_centers(self, component):
        return np.array([self.cell_center(i) for i in sorted(component)])

    def to_dict(self):
        return {
            "rate_a": self.rate_a,
            "eta": self.eta,
            "cell_count": len(self.cells),
            "component_count": len(self.components),
            "volumes": [list(v) for v in self.volumes],
            "epsilon": self.epsilon,
            "equality_fraction": self.equality_fraction,
            "warn_equality": self.warn_equality,
        }


def classify_point(x, f, v, a, eta):
    """Closed membership test: True iff V_x(x).f(x) >= -eta*a*V(x)."""
    x = np.asarray(x, dtype=float)
    return v.vdot(f, x) >= -eta * a * v.evaluate(x)


def omega_zero_nonempty(f, v, region, grid):
    """True iff some sample point of D has a positive time derivative of V.

    Samples the grid plus the field's declared special points, so narrow
    growth pockets between grid nodes are still caught.
    """
    points = grid.points()
    extra = [np.atleast_2d(np.asarray(p, dtype=float)) for p in f.special_points]
    for center, radius in f.kink_spheres:
        extra.append(sphere_samples(center, radius, 256, f.dimension))
    if extra:
        points = np.vstack([points] + extra)
    vvals = v.evaluate_many(points)
    mask = region.contains_values(vvals)
    if not np.any(mask):
        raise GridError("no grid point falls inside the region")
    return bool(np.any(v.vdot_many(f, points[mask]) > 0.0))


def _margin_values(f, v, a, eta, points):
    """m(x) = V_x.f + eta*a*V; bad iff m above the strict guard."""
    return v.vdot_many(f, points) + eta * a * v.evaluate_many(points)


def analyze_badset(f, v, region, a, eta, grid):
    """Mark cells, label face-adjacent components, estimate volumes.

    Component volumes are (inner, outer) pairs: inner counts refined
    sub-cells certain to be inside, outer adds the still-mixed boundary
    layer after the refinement passes.  epsilon is the outer volume of the
    largest component.
    """
    axes = grid.axes()
    shape = tuple(len(ax) for ax in axes)
    n = grid.dimension
    points = grid.points()
    vvals = v.evaluate_many(points)
    in_region = region.contains_values(vvals).reshape(shape)

    margins = _margin_values(f, v, a, eta, points).reshape(shape)
    guard = EQUALITY_GUARD * (1.0 + eta * a * region.c2)
    marked = (margins > guard) & in_region

    region_count = int(np.count_nonzero(in_region))
    if region_count == 0:
        raise GridError("no grid cell center falls inside the region")
    near_equality = (np.abs(margins) <= guard) & in_region
    equality_fraction = float(np.count_nonzero(near_equality)) / region_count
    warn_equality = equality_fraction >= EQUALITY_WARN_FRACTION

    structure = ndimage.generate_binary_structure(n, 1)  # face adjacency
    labels, count = ndimage.label(marked, structure=structure)

    cell_size = tuple(grid.spacing)
    origin = tuple(ax[0] for ax in axes)

    components = []
    for label in range(1, count + 1):
        idx = np.argwhere(labels == label)
        components.append(frozenset(map(tuple, idx)))
    components = _merge_close_components(components)

    if any(len(c) == 1 for c in components):
        raise GridError(
            "component under-resolution: a marked component is a single cell; "
            "increase the grid resolution"
        )

    volumes = []
    for comp in components:
        inner, outer = _component_volume(
            f, v, region, a, eta, comp, origin, cell_size, grid.refinement, guard
        )
        volumes.append((inner, outer))

    if components:
        best = int(np.argmax([vo for _, vo in volumes]))
        epsilon = volumes[best][1]
        largest = components[best]
    else:
        epsilon = 0.0
        largest = frozenset()

    return BadSetAnalysis(
        rate_a=a,
        eta=eta,
        cells=frozenset().union(*components) if components else frozenset(),
        components=tuple(components),
        volumes=tuple(volumes),
        epsilon=epsilon,
        largest_component=largest,
        cell_size=cell_size,
        origin=origin,
        equality_fraction=equality_fraction,
        warn_equality=warn_equality,
    )


def _merge_close_components(components):
    """Merge components whose bounding boxes are within one cell."""
    comps = [set(c) for c in components]
    boxes = []
    for c in comps:
        arr = np.array(sorted(c))
        boxes.append((arr.min(axis=0), arr.max(axis=0)))
    merged = True
    while merged:
        merged = False
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                lo_i, hi_i = boxes[i]
                lo_j, hi_j = boxes[j]
                if np.all(lo_j <= hi_i + 1) and np.all(lo_i <= hi_j + 1):
                    comps[i] |= comps[j]
                    boxes[i] = (np.minimum(lo_i, lo_j), np.maximum(hi_i, hi_j))
                    del comps[j], boxes[j]
                    merged = True
                    break
            if merged:
                break
    return [frozenset(c) for c in comps]


def _classify_cells(f, v, region, a, eta, centers, h, guard):
    """Per cell: all corners+center bad (full), none bad (empty), else mixed.

    Cells partially outside the region count at most as mixed.
    """
    centers = np.asarray(centers, dtype=float)
    m = len(centers)
    n = centers.shape[1]
    offsets = [np.zeros(n)]
    from itertools import product

    for signs in product((-0.5, 0.5), repeat=n):
        offsets.append(np.asarray(signs) * h)
    bad_counts = np.zeros(m, dtype=int)
    out_counts = np.zeros(m, dtype=int)
    total = len(offsets)
    for off in offsets:
        pts = centers + off
        margins = _margin_values(f, v, a, eta, pts)
        inside = region.contains_values(v.evaluate_many(pts))
        bad = (margins > guard) & inside
        bad_counts += bad.astype(int)
        out_counts += (~inside).astype(int)
    full = bad_counts == total
    empty = bad_counts == 0
    return full, empty


def _component_volume(f, v, region, a, eta, component, origin, cell_size, passes, guard):
    origin = np.asarray(origin)
    h = np.asarray(cell_size, dtype=float)
    n = len(h)
    centers = origin + np.array(sorted(component)) * h
    cell_vol = float(np.prod(h))

    inner = 0.0
    full, empty = _classify_cells(f, v, region, a, eta, centers, h, guard)
    inner += cell_vol * int(np.count_nonzero(full))
    mixed = centers[~full & ~empty]

    # include the one-cell halo so boundary mass just outside the marked
    # centers is captured by the outer estimate
    halo = []
    for axis in range(n):
        for sign in (-1, 1):
            shift = np.zeros(n)
            shift[axis] = sign * h[axis]
            halo.append(centers + shift)
    halo = np.unique(np.vstack(halo).round(12), axis=0)
    halo_keys = {tuple(c) for c in centers.round(12)}
    halo = np.array([c for c in halo if tuple(c) not in halo_keys]) if len(halo) else halo
    if len(halo):
        h_full, h_empty = _classify_cells(f, v, region, a, eta, halo, h, guard)
        mixed = np.vstack([mixed, halo[~h_empty & ~h_full]]) if len(mixed) else halo[~h_empty & ~h_full]
        inner += cell_vol * int(np.count_nonzero(h_full))

    sub_vol = cell_vol
    for _ in range(passes):
        if not len(mixed):
            break
        h = h / VOLUME_REFINE_FACTOR
        sub_vol = float(np.prod(h))
        steps = (np.arange(VOLUME_REFINE_FACTOR) + 0.5) / VOLUME_REFINE_FACTOR - 0.5
        from itertools import product

        offs = np.array(list(product(*[steps * h[j] * VOLUME_REFINE_FACTOR for j in range(n)])))
        centers = (mixed[:, None, :] + offs[None, :, :]).reshape(-1, n)
        full, empty = _classify_cells(f, v, region, a, eta, centers, h, guard)
        inner += sub_vol * int(np.count_nonzero(full))
        mixed = centers[~full & ~empty]

    outer = inner + sub_vol * len(mixed)
    return inner, outer


def dump_mask_csv(analysis: BadSetAnalysis, path):
    """Cell centers with component ids, for external plotting."""
    rows = []
    for comp_id, comp in enumerate(analysis.components):
        for idx in sorted(comp):
            center = analysis.cell_center(idx)
            rows.append((*center, comp_id))
    n = len(analysis.cell_size)
    header = ",".join([f"x{i+1}" for i in range(n)] + ["component"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" for v in row[:-1]) + f",{row[-1]}\n")
