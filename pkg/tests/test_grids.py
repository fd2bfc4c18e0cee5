import numpy as np
import pytest

from lyapcert.grids import (
    GridError,
    GridSpec,
    default_box,
    default_grid,
    refine_extremum,
    sphere_samples,
)
from lyapcert.systems import quadratic_candidate


def test_gridspec_validation():
    with pytest.raises(GridError):
        GridSpec(((0.0, 1.0),), resolution=2)
    with pytest.raises(GridError):
        GridSpec(((1.0, 1.0),))


def test_points_shape_and_spacing():
    g = GridSpec(((0.0, 1.0), (-1.0, 1.0)), resolution=5)
    pts = g.points()
    assert pts.shape == (25, 2)
    np.testing.assert_allclose(g.spacing, [0.25, 0.5])


def test_default_box_covers_sublevel():
    v = quadratic_candidate(2)
    box = default_box(v, 1.0)
    (lo, hi), _ = box
    assert hi >= 1.0  # sublevel {V <= 1} is the unit disk
    g = default_grid(v, 1.0, resolution=11)
    g.verify_covers_sublevel(v, 1.0)


def test_verify_covers_sublevel_rejects_small_box():
    v = quadratic_candidate(2)
    g = GridSpec(((-0.5, 0.5), (-0.5, 0.5)), resolution=11)
    with pytest.raises(GridError):
        g.verify_covers_sublevel(v, 1.0)


def test_refine_extremum_improves_max():
    # peak at x = 0.317, deliberately off the coarse grid
    def obj(pts):
        return -((pts[:, 0] - 0.317) ** 2)

    g = GridSpec(((0.0, 1.0),), resolution=11)
    pts = g.points()
    vals = obj(pts)
    coarse = float(np.max(vals))
    refined, arg = refine_extremum(obj, pts, vals, g.spacing, passes=2, mode="max")
    assert refined > coarse
    assert refined == pytest.approx(0.0, abs=1e-6)
    assert arg[0] == pytest.approx(0.317, abs=1e-3)


def test_refine_extremum_min_never_increases():
    def obj(pts):
        return np.abs(pts[:, 0] - 0.77)

    g = GridSpec(((0.0, 1.0),), resolution=11)
    pts = g.points()
    vals = obj(pts)
    refined, _ = refine_extremum(obj, pts, vals, g.spacing, passes=2, mode="min")
    assert refined <= float(np.min(vals))
    assert refined == pytest.approx(0.0, abs=2e-3)


def test_sphere_samples_on_shell():
    pts = sphere_samples([1.0, 2.0], 0.5, 64, 2)
    d = np.linalg.norm(pts - [1.0, 2.0], axis=1)
    # shells at the radius, at half radius, and near the center
    assert np.isclose(d, 0.5, atol=1e-8).sum() >= 64
    assert (d < 0.26).any()
