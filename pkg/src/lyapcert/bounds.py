"""Region-wide constants of the working annulus, estimated by grid sweep.

The six constants: the speed extremes sup/inf |f| over D, the Lipschitz
constant of f, the gradient bound sup |V_x|, the Lipschitz constant of V_x
and the worst decay rate b = max of dV/dt over D.  Lipschitz-type constants
are taken over the convex sublevel set {V <= c2}: every chord between points
of D lies inside it, so the convex-set Jacobian sup is a valid bound for D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import GridError, GridSpec, refine_extremum, sphere_samples

PAIR_SAMPLE_COUNT = 100_000
L1_DISAGREE_FLAG = 0.02


@dataclass(frozen=True)
class DomainConstants:
    L0_sup: float
    L0_inf: float
    L1: float
    M1: float
    M2: float
    b: float
    methods: dict = field(default_factory=dict)
    # cross-check: pairwise difference-quotient lower bound on L1
    L1_pair_lower: float | None = None
    L1_flagged: bool = False
    grid_resolution: int | None = None

    def __post_init__(self):
        if self.L0_inf > self.L0_sup + 1e-12:
            raise ValueError("L0_inf exceeds L0_sup")
        if min(self.L0_sup, self.M1) < 0:
            raise ValueError("sup-type constants must be nonnegative")

    @property
    def nonvanishing(self):
        return self.L0_inf > 0.0

    def to_dict(self):
        return {
            "L0_sup": self.L0_sup,
            "L0_inf": self.L0_inf,
            "L1": self.L1,
            "M1": self.M1,
            "M2": self.M2,
            "b": self.b,
            "methods": dict(self.methods),
            "L1_pair_lower": self.L1_pair_lower,
            "L1_flagged": self.L1_flagged,
            "grid_resolution": self.grid_resolution,
        }


def _region_points(v, region, grid):
    points = grid.points()
    vvals = v.evaluate_many(points)
    mask = region.contains_values(vvals)
    if not np.any(mask):
        raise GridError(
            "no grid point falls inside the region; increase the resolution"
        )
    return points, mask


def _mask_fn(v, region):
    def accept(points):
        return region.contains_values(v.evaluate_many(points))

    return accept


def _sublevel_mask_fn(v, c2):
    def accept(points):
        return v.evaluate_many(points) <= c2

    return accept


def _special_points(f):
    pts = [np.asarray(p, dtype=float) for p in f.special_points]
    for center, radius in f.kink_spheres:
        pts.extend(sphere_samples(center, radius, 512, f.dimension))
    if not pts:
        return None
    return np.vstack([np.atleast_2d(p) for p in pts])


def estimate_speed_bounds(f, region, v, grid):
    """(sup |f|, inf |f|) over grid points of D, with local refinement."""
    points, mask = _region_points(v, region, grid)
    inside = points[mask]

    def speed(pts):
        return np.linalg.norm(f.evaluate_many(pts), axis=1)

    vals = speed(inside)
    accept = _mask_fn(v, region)
    extra = _special_points(f)
    sup, _ = refine_extremum(
        speed, inside, vals, grid.spacing, grid.refinement, "max", accept, extra
    )
    inf, _ = refine_extremum(
        speed, inside, vals, grid.spacing, grid.refinement, "min", accept, extra
    )
    return sup, inf


def _spectral_norms(mats):
    """Batched spectral norm; closed form for 2x2, SVD otherwise."""
    mats = np.asarray(mats, dtype=float)
    if mats.shape[-2:] == (2, 2):
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, d = mats[..., 1, 0], mats[..., 1, 1]
        fro2 = a * a + b * b + c * c + d * d
        gap = np.sqrt(
            np.maximum((a * a + b * b - c * c - d * d) ** 2 + 4 * (a * c + b * d) ** 2, 0.0)
        )
        return np.sqrt(np.maximum((fro2 + gap) / 2.0, 0.0))
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def estimate_lipschitz_f(f, region, grid, v=None):
    """Lipschitz constant of f: Jacobian spectral-norm sup over {V <= c2}.

    A pairwise difference-quotient max over random pairs in D is attached as
    a lower-bound cross-check; when the two disagree beyond 2 percent the
    result is flagged rather than forced into agreement.
    """
    if v is None:
        raise ValueError("candidate V required to delimit the sublevel set")
    points = grid.points()
    vvals = v.evaluate_many(points)
    mask = vvals <= region.c2
    if not np.any(mask):
        raise GridError("no grid point inside {V <= c2}")
    inside = points[mask]

    def jac_norm(pts):
        return _spectral_norms(f.jacobians_at(pts))

    vals = jac_norm(inside)
    bad = ~np.isfinite(vals)
    if np.mean(bad) > 1e-3:
        raise GridError("Jacobian evaluation failed at more than 0.1% of points")
    vals = np.where(bad, -np.inf, vals)
    accept = _sublevel_mask_fn(v, region.c2)
    extra = _special_points(f)
    primary, _ = refine_extremum(
        jac_norm, inside, vals, grid.spacing, grid.refinement, "max", accept, extra
    )
    secondary = _pairwise_lipschitz(f, v, region, grid)
    flagged = secondary > primary * (1 + L1_DISAGREE_FLAG)
    return primary, secondary, flagged


def _pairwise_lipschitz(f, v, region, grid, count=PAIR_SAMPLE_COUNT, seed=20_24):
    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in grid.box])
    highs = np.array([hi for _, hi in grid.box])
    best = 0.0
    need = count
    # mix global pairs with short-range pairs near kink spheres, where the
    # quotient is extremized
    while need > 0:
        batch = min(need, 200_000)
        x1 = rng.uniform(lows, highs, size=(batch, f.dimension))
        x2 = x1 + rng.normal(scale=grid.spacing, size=(batch, f.dimension))
        ok = region.contains_values(v.evaluate_many(x1)) & region.contains_values(
            v.evaluate_many(x2)
        )
        x1, x2 = x1[ok], x2[ok]
        if len(x1):
            num = np.linalg.norm(f.evaluate_many(x1) - f.evaluate_many(x2), axis=1)
            den = np.linalg.norm(x1 - x2, axis=1)
            good = den > 0
            if np.any(good):
                best = max(best, float(np.max(num[good] / den[good])))
        need -= batch
    for center, radius in f.kink_spheres:
        center = np.asarray(center, dtype=float)
        x1 = center + rng.normal(scale=radius, size=(20_000, f.dimension))
        x2 = x1 + rng.normal(scale=radius / 20, size=(20_000, f.dimension))
        ok = region.contains_values(v.evaluate_many(x1)) & region.contains_values(
            v.evaluate_many(x2)
        )
        x1, x2 = x1[ok], x2[ok]
        if len(x1):
            num = np.linalg.norm(f.evaluate_many(x1) - f.evaluate_many(x2), axis=1)
            den = np.linalg.norm(x1 - x2, axis=1)
            good = den > 0
            if np.any(good):
                best = max(best, float(np.max(num[good] / den[good])))
    return best


def estimate_gradient_bounds(v, region, grid):
    """(M1, M2): sup |V_x| over D and Hessian-norm sup over {V <= c2}."""
    points, mask = _region_points(v, region, grid)
    inside = points[mask]

    def grad_norm(pts):
        return np.linalg.norm(v.gradient_many(pts), axis=1)

    vals = grad_norm(inside)
    accept = _mask_fn(v, region)
    m1, _ = refine_extremum(
        grad_norm, inside, vals, grid.spacing, grid.refinement, "max", accept
    )

    sub_mask = v.evaluate_many(points) <= region.c2
    sub = points[sub_mask]

    def hess_norm(pts):
        return _spectral_norms(_hessians(v, pts))

    hvals = hess_norm(sub)
    m2, _ = refine_extremum(
        hess_norm, sub, hvals, grid.spacing, grid.refinement, "max",
        _sublevel_mask_fn(v, region.c2),
    )
    return m1, m2


def _hessians(v, points, step=1e-5):
    points = np.asarray(points, dtype=float)
    m, n = points.shape
    out = np.empty((m, n, n))
    for j in range(n):
        h = step * (1.0 + np.abs(points[:, j]))
        shift = np.zeros_like(points)
        shift[:, j] = h
        out[:, :, j] = (v.gradient_many(points + shift) - v.gradient_many(points - shift)) / (
            2 * h
        )[:, None]
    return 0.5 * (out + np.transpose(out, (0, 2, 1)))


def estimate_b(f, v, region, grid):
    """Worst decay rate b = sup over D of V_x . f, refined near the maximizer."""
    points, mask = _region_points(v, region, grid)
    inside = points[mask]

    def vdot(pts):
        return v.vdot_many(f, pts)

    vals = vdot(inside)
    accept = _mask_fn(v, region)
    extra = _special_points(f)
    b, _ = refine_extremum(
        vdot, inside, vals, grid.spacing, grid.refinement, "max", accept, extra
    )
    return b


def estimate_constants(f, v, region, grid):
    """All six region constants in one pass, with method metadata."""
    l0_sup, l0_inf = estimate_speed_bounds(f, region, v, grid)
    l1, l1_pair, flagged = estimate_lipschitz_f(f, region, grid, v=v)
    m1, m2 = estimate_gradient_bounds(v, region, grid)
    b = estimate_b(f, v, region, grid)
    jac_method = "grid+jacobian" if f.jacobian is not None else "grid"
    return DomainConstants(
        L0_sup=l0_sup,
        L0_inf=l0_inf,
        L1=l1,
        M1=m1,
        M2=m2,
        b=b,
        methods={
            "L0_sup": "grid",
            "L0_inf": "grid",
            "L1": jac_method,
            "M1": "grid",
            "M2": "grid",
            "b": "grid",
        },
        L1_pair_lower=l1_pair,
        L1_flagged=flagged,
        grid_resolution=grid.resolution,
    )
