"""Vector fields, candidate functions and working regions.

Built-in systems:

* ``paper_example`` -- a planar spiral whose decay profile is locally
  distorted inside a small ball, so the candidate V = |x|^2 fails the decay
  condition only there.
* ``linear_spiral`` -- the undistorted spiral (uniform decay rate 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expressions as ex

_KINK_TOL = 1e-8
_FD_STEP = 1e-6


class SystemError_(ValueError):
    """Bad system name or parameter set."""


@dataclass(frozen=True)
class VectorFieldSpec:
    """Evaluatable dynamics x' = f(x) with optional analytic Jacobian."""

    dimension: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    evaluate_many: Callable[[np.ndarray], np.ndarray]  # (m, n) -> (m, n)
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian_many: Optional[Callable[[np.ndarray], np.ndarray]] = None  # (m,n)->(m,n,n)
    source: str = "builtin"
    params: dict = field(default_factory=dict)
    # Points the grid estimators must sample exactly (e.g. profile kink centers).
    special_points: tuple = ()
    # (center, radius) spheres of non-smoothness; forced refinement targets.
    kink_spheres: tuple = ()
    kink_distance: Optional[Callable[[np.ndarray], float]] = None

    def jacobian_at(self, x):
        """Analytic Jacobian when present, else central finite differences.

        Near a known kink locus the difference is taken one-sided, from the
        side the point lies on.
        """
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return finite_difference_jacobian(self.evaluate, x, self.kink_distance)

    def jacobians_at(self, points):
        points = np.asarray(points, dtype=float)
        if self.jacobian_many is not None:
            return np.asarray(self.jacobian_many(points), dtype=float)
        if self.jacobian is not None:
            return np.stack([np.asarray(self.jacobian(p), float) for p in points])
        return finite_difference_jacobian_many(self.evaluate_many, points)


@dataclass(frozen=True)
class CandidateFunction:
    """Nonnegative candidate V with gradient, optionally V(x) >= k0 |x|^2."""

    dimension: int
    evaluate: Callable[[np.ndarray], float]
    evaluate_many: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    gradient_many: Callable[[np.ndarray], np.ndarray]
    quadratic_lower_k0: Optional[float] = None
    source: str = "builtin"

    def vdot(self, f: VectorFieldSpec, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.dot(self.gradient(x), f.evaluate(x)))

    def vdot_many(self, f: VectorFieldSpec, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.einsum("ij,ij->i", self.gradient_many(points), f.evaluate_many(points))


@dataclass(frozen=True)
class AnnularRegion:
    """Level band {c1 <= V <= c2}; kind 'band' fixes c2 = 2*c1."""

    c1: float
    c2: float
    kind: str = "annulus"  # or "band"

    def __post_init__(self):
        if not (self.c2 > self.c1 > 0):
            raise ValueError(f"need c2 > c1 > 0, got c1={self.c1}, c2={self.c2}")
        if self.kind not in ("annulus", "band"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "band" and not math.isclose(self.c2, 2 * self.c1, rel_tol=1e-12):
            raise ValueError("band region requires c2 = 2*c1")

    @classmethod
    def band(cls, c):
        return cls(c, 2 * c, kind="band")

    def contains_value(self, v):
        return self.c1 <= v <= self.c2

    def contains_values(self, values):
        values = np.asarray(values)
        return (values >= self.c1) & (values <= self.c2)


# ---------------------------------------------------------------------------
# Finite differences


def finite_difference_jacobian(f, x, kink_distance=None, step=_FD_STEP):
    x = np.asarray(x, dtype=float)
    n = x.size
    h = step * (1.0 + np.abs(x))
    one_sided = kink_distance is not None and abs(kink_distance(x)) < _KINK_TOL
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h[j]
        if one_sided:
            # stay on the evaluation side of the kink
            cols.append((np.asarray(f(x + 2 * e)) - np.asarray(f(x + e))) / h[j])
        else:
            cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h[j]))
    return np.column_stack(cols)


def finite_difference_jacobian_many(f_many, points, step=_FD_STEP):
    points = np.asarray(points, dtype=float)
    m, n = points.shape
    out = np.empty((m, n, n))
    for j in range(n):
        h = step * (1.0 + np.abs(points[:, j]))
        shift = np.zeros_like(points)
        shift[:, j] = h
        out[:, :, j] = (f_many(points + shift) - f_many(points - shift)) / (2 * h)[:, None]
    return out


def finite_difference_gradient(v, x, step=_FD_STEP):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step * (1.0 + abs(x[j]))
        out[j] = (v(x + e) - v(x - e)) / (2 * e[j])
    return out


# ---------------------------------------------------------------------------
# Built-in systems


def _distorted_profile(gain, offset, rho):
    """lambda(x) = gain * min(|x - xc| / rho, 1) - offset, as scalar/batch."""

    def lam(x1, x2, xc):
        d = np.hypot(x1 - xc[0], x2 - xc[1])
        return gain * np.minimum(d / rho, 1.0) - offset

    return lam


BUILTIN_SYSTEMS = ("paper_example", "linear_spiral")


def builtin_system(name, params=None):
    """Return (VectorFieldSpec, CandidateFunction) for a named builtin.

    ``paper_example`` params: mu, rho, x_c, profile_gain, profile_offset.
    ``linear_spiral`` params: mu.
    """
    params = dict(params or {})
    if name == "paper_example":
        return _make_spiral(params, distorted=True)
    if name == "linear_spiral":
        for key in ("rho", "x_c", "profile_gain", "profile_offset"):
            params.pop(key, None)
        return _make_spiral(params, distorted=False)
    raise SystemError_(f"unknown builtin system {name!r}")


def _make_spiral(params, distorted):
    mu = float(params.pop("mu", 2.0))
    if distorted:
        rho = float(params.pop("rho", 0.01))
        xc = np.asarray(params.pop("x_c", (0.8, 0.0)), dtype=float)
        gain = float(params.pop("profile_gain", 1.01))
        offset = float(params.pop("profile_offset", 0.01))
        if rho <= 0:
            raise SystemError_(f"invalid parameter rho={rho}: must be positive")
        if gain <= 0:
            raise SystemError_(f"invalid parameter profile_gain={gain}: must be positive")
        if xc.shape != (2,):
            raise SystemError_("x_c must be a planar point")
    if params:
        raise SystemError_(f"unknown parameter(s) {sorted(params)}")

    if distorted:
        lam_fn = _distorted_profile(gain, offset, rho)

        def lam_scalar(x1, x2):
            d = math.hypot(x1 - xc[0], x2 - xc[1])
            return gain * min(d / rho, 1.0) - offset

        def evaluate(x):
            x1, x2 = float(x[0]), float(x[1])
            l = lam_scalar(x1, x2)
            return np.array([-l * x1 + mu * x2, -mu * x1 - l * x2])

        def evaluate_many(points):
            points = np.asarray(points, dtype=float)
            x1, x2 = points[:, 0], points[:, 1]
            l = lam_fn(x1, x2, xc)
            return np.column_stack([-l * x1 + mu * x2, -mu * x1 - l * x2])

        def grad_lambda(x):
            # limiting value from the evaluation side at the two kink loci
            d = np.hypot(x[0] - xc[0], x[1] - xc[1])
            if d == 0.0 or d >= rho:
                return np.zeros(2)
            return (gain / rho) * (x - xc) / d

        def jacobian(x):
            x = np.asarray(x, dtype=float)
            l = lam_scalar(x[0], x[1])
            base = np.array([[-l, mu], [-mu, -l]])
            return base - np.outer(x, grad_lambda(x))

        def jacobian_many(points):
            points = np.asarray(points, dtype=float)
            m = points.shape[0]
            x1, x2 = points[:, 0], points[:, 1]
            l = lam_fn(x1, x2, xc)
            out = np.zeros((m, 2, 2))
            out[:, 0, 0] = -l
            out[:, 0, 1] = mu
            out[:, 1, 0] = -mu
            out[:, 1, 1] = -l
            diff = points - xc
            d = np.hypot(diff[:, 0], diff[:, 1])
            inside = (d > 0) & (d < rho)
            g = np.zeros((m, 2))
            g[inside] = (gain / rho) * diff[inside] / d[inside, None]
            out -= points[:, :, None] * g[:, None, :]
            return out

        def kink_distance(x):
            d = math.hypot(float(x[0]) - xc[0], float(x[1]) - xc[1])
            return min(d, abs(d - rho))

        f = VectorFieldSpec(
            dimension=2,
            evaluate=evaluate,
            evaluate_many=evaluate_many,
            jacobian=jacobian,
            jacobian_many=jacobian_many,
            source="paper_example",
            params={"mu": mu, "rho": rho, "x_c": tuple(xc), "profile_gain": gain,
                    "profile_offset": offset},
            special_points=(tuple(xc),),
            kink_spheres=((tuple(xc), rho),),
            kink_distance=kink_distance,
        )
    else:

        def evaluate(x):
            x1, x2 = float(x[0]), float(x[1])
            return np.array([-x1 + mu * x2, -mu * x1 - x2])

        def evaluate_many(points):
            points = np.asarray(points, dtype=float)
            x1, x2 = points[:, 0], points[:, 1]
            return np.column_stack([-x1 + mu * x2, -mu * x1 - x2])

        A = np.array([[-1.0, mu], [-mu, -1.0]])

        def jacobian(x):
            return A.copy()

        def jacobian_many(points):
            return np.broadcast_to(A, (np.asarray(points).shape[0], 2, 2)).copy()

        f = VectorFieldSpec(
            dimension=2,
            evaluate=evaluate,
            evaluate_many=evaluate_many,
            jacobian=jacobian,
            jacobian_many=jacobian_many,
            source="linear_spiral",
            params={"mu": mu},
        )

    v = quadratic_candidate(2)
    return f, v


def quadratic_candidate(dimension):
    """V(x) = |x|^2 with analytic gradient; satisfies V >= 1 * |x|^2."""

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return float(np.dot(x, x))

    def evaluate_many(points):
        points = np.asarray(points, dtype=float)
        return np.einsum("ij,ij->i", points, points)

    def gradient(x):
        return 2.0 * np.asarray(x, dtype=float)

    def gradient_many(points):
        return 2.0 * np.asarray(points, dtype=float)

    return CandidateFunction(
        dimension=dimension,
        evaluate=evaluate,
        evaluate_many=evaluate_many,
        gradient=gradient,
        gradient_many=gradient_many,
        quadratic_lower_k0=1.0,
        source="|x|^2",
    )


# ---------------------------------------------------------------------------
# Expression-backed construction


def field_from_expressions(texts, dimension):
    """Build a VectorFieldSpec from one expression per component."""
    if len(texts) != dimension:
        raise SystemError_(
            f"need {dimension} component expression(s), got {len(texts)}"
        )
    trees = [ex.parse_expression(t, dimension) for t in texts]

    def evaluate(x):
        return np.array([ex.evaluate(t, x) for t in trees])

    def evaluate_many(points):
        points = np.asarray(points, dtype=float)
        return np.column_stack([ex.evaluate(t, points) for t in trees])

    def kink_distance(x):
        # gap in function value is a usable proxy near min/abs switch loci
        return min(ex.kink_gap(t, x) for t in trees)

    return VectorFieldSpec(
        dimension=dimension,
        evaluate=evaluate,
        evaluate_many=evaluate_many,
        source="expression",
        params={"f": list(texts)},
        kink_distance=kink_distance,
    )


def candidate_from_expression(text, dimension, quadratic_lower_k0=None):
    tree = ex.parse_expression(text, dimension)

    def evaluate(x):
        return ex.evaluate(tree, x)

    def evaluate_many(points):
        return ex.evaluate(tree, np.asarray(points, dtype=float))

    def gradient(x):
        return finite_difference_gradient(evaluate, np.asarray(x, dtype=float))

    def gradient_many(points):
        points = np.asarray(points, dtype=float)
        m, n = points.shape
        out = np.empty((m, n))
        for j in range(n):
            h = _FD_STEP * (1.0 + np.abs(points[:, j]))
            shift = np.zeros_like(points)
            shift[:, j] = h
            out[:, j] = (evaluate_many(points + shift) - evaluate_many(points - shift)) / (2 * h)
        return out

    return CandidateFunction(
        dimension=dimension,
        evaluate=evaluate,
        evaluate_many=evaluate_many,
        gradient=gradient,
        gradient_many=gradient_many,
        quadratic_lower_k0=quadratic_lower_k0,
        source="expression",
    )
