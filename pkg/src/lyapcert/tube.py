"""Space-curve tube geometry: curvature, the non-self-overlap criterion,
swept-tube volumes (closed form and Monte-Carlo) and empirical overlap
detection for sampled trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .certificate import chi

MC_DEFAULT_SAMPLES = 1_000_000
MC_CHUNK = 65_536
CURVE_SUBSAMPLE = 600
OVERLAP_DISKS_2D = 500
OVERLAP_DISKS_3D = 200


class TubeError(ValueError):
    pass


@dataclass(frozen=True)
class SampledCurve:
    points: np.ndarray  # (m, n) states
    times: np.ndarray  # strictly increasing
    velocities: np.ndarray  # f at each state

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "velocities", np.asarray(self.velocities, dtype=float))
        if len(self.points) != len(self.times) or len(self.points) != len(self.velocities):
            raise TubeError("points, times and velocities must have equal length")
        if len(self.times) >= 2 and not np.all(np.diff(self.times) > 0):
            raise TubeError("times must be strictly increasing")

    @property
    def dimension(self):
        return self.points.shape[1]

    def arc_length(self):
        """Cumulative trapezoidal integral of the speed |f| over time."""
        speeds = np.linalg.norm(self.velocities, axis=1)
        if len(self.times) < 2:
            return np.zeros(len(self.times))
        out = np.zeros(len(self.times))
        out[1:] = np.cumsum(
            0.5 * (speeds[1:] + speeds[:-1]) * np.diff(self.times)
        )
        return out

    @property
    def total_length(self):
        return float(self.arc_length()[-1]) if len(self.times) >= 2 else 0.0

    def subsampled(self, max_points=CURVE_SUBSAMPLE):
        if len(self.points) <= max_points:
            return self
        idx = np.unique(np.linspace(0, len(self.points) - 1, max_points).astype(int))
        return SampledCurve(self.points[idx], self.times[idx], self.velocities[idx])


@dataclass(frozen=True)
class NormalDisk:
    center: np.ndarray
    normal: np.ndarray  # unit flow direction; the disk spans its orthogonal
    radius: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise TubeError("disk normal must be nonzero")
        object.__setattr__(self, "normal", normal / norm)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True)
class TubeReport:
    radius: float
    curvature_max_est: float
    nonoverlap_criterion_pass: bool
    overlap_found_empirical: bool
    volume_formula: float
    volume_montecarlo: float
    mc_stderr: float

    def to_dict(self):
        return {
            "radius": self.radius,
            "curvature_max_est": self.curvature_max_est,
            "nonoverlap_criterion_pass": self.nonoverlap_criterion_pass,
            "overlap_found_empirical": self.overlap_found_empirical,
            "volume_formula": self.volume_formula,
            "volume_montecarlo": self.volume_montecarlo,
            "mc_stderr": self.mc_stderr,
        }


def curvature_bound(consts):
    """Worst trajectory curvature L1 / inf|f|; infinite if the field vanishes."""
    if consts.L0_inf == 0.0:
        return math.inf
    return consts.L1 / consts.L0_inf


def empirical_curvature(curve: SampledCurve):
    """Max |gamma' x gamma''| / |gamma'|^3 over the samples, generalized to
    any dimension via the Gram determinant."""
    if len(curve.times) < 3:
        raise TubeError("curvature needs at least 3 samples")
    t = curve.times
    d1 = np.gradient(curve.points, t, axis=0)
    d2 = np.gradient(d1, t, axis=0)
    s1 = np.einsum("ij,ij->i", d1, d1)
    s2 = np.einsum("ij,ij->i", d2, d2)
    cross = np.einsum("ij,ij->i", d1, d2)
    area = np.sqrt(np.maximum(s1 * s2 - cross * cross, 0.0))
    speed3 = np.maximum(s1, 1e-300) ** 1.5
    return float(np.max(area / speed3))


def max_safe_arclength(rho, rho0):
    """Longest arc of curvature radius >= rho whose radius-rho0 tube cannot
    self-overlap."""
    if not rho0 < rho:
        raise TubeError(f"tube radius {rho0} must be below curvature radius {rho}")
    return 2.0 * rho * (math.pi - math.asin(rho0 / rho))


def tube_volume_formula(n, gamma, arclength):
    return chi(n - 1) * gamma ** (n - 1) * arclength


def tube_volume_montecarlo(curve: SampledCurve, gamma, samples=MC_DEFAULT_SAMPLES, seed=0):
    """Rejection-sampling tube volume.

    A point counts when its nearest polyline point is interior (not an end
    cap) and within gamma.  Deterministic for a given seed.
    """
    curve = curve.subsampled()
    pts = curve.points
    if len(pts) < 2 or curve.total_length == 0.0:
        raise TubeError("zero-length curve")
    n = curve.dimension
    lo = pts.min(axis=0) - gamma
    hi = pts.max(axis=0) + gamma
    box_vol = float(np.prod(hi - lo))

    a = pts[:-1]
    d = pts[1:] - a
    dd = np.einsum("ij,ij->i", d, d)
    max_seg = math.sqrt(float(np.max(dd)))
    tree = cKDTree(pts)

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        chunk = min(MC_CHUNK, samples - done)
        raw = rng.uniform(lo, hi, size=(chunk, n))
        done += chunk
        # a point farther than gamma + seg from every vertex cannot be
        # within gamma of any segment; prefilter with the vertex tree
        dv, _ = tree.query(raw, k=1)
        y = raw[dv <= gamma + max_seg]
        m = len(y)
        if m == 0:
            continue
        best = np.full(m, np.inf)
        # clamp flags at the two global end vertices
        at_start = np.zeros(m, dtype=bool)
        at_end = np.zeros(m, dtype=bool)
        for s in range(len(a)):
            w = y - a[s]
            t = np.clip(np.einsum("ij,j->i", w, d[s]) / dd[s], 0.0, 1.0)
            diff = w - t[:, None] * d[s]
            dist = np.einsum("ij,ij->i", diff, diff)
            better = dist < best
            best = np.where(better, dist, best)
            if s == 0:
                at_start = np.where(better, t == 0.0, at_start)
            else:
                at_start = np.where(better, False, at_start)
            if s == len(a) - 1:
                at_end = np.where(better, t == 1.0, at_end)
            else:
                at_end = np.where(better, False, at_end)
        inside = (best <= gamma * gamma) & ~at_start & ~at_end
        hits += int(np.count_nonzero(inside))
    p = hits / samples
    volume = p * box_vol
    stderr = box_vol * math.sqrt(max(p * (1.0 - p), 0.0) / samples)
    return volume, stderr


def _segment_pair_distances(p1, d1, p2, d2):
    """Min distance between segment pairs [p1, p1+d1] and [p2, p2+d2].

    Vectorized closed form with the standard clamped closest-point recipe,
    valid for parallel and collinear pairs as well.
    """
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    b = np.einsum("ij,ij->i", d1, d2)
    c = np.einsum("ij,ij->i", d1, r)
    f = np.einsum("ij,ij->i", d2, r)
    denom = a * e - b * b
    s = np.where(denom > 1e-300, np.clip((b * f - c * e) / np.where(denom > 1e-300, denom, 1.0), 0.0, 1.0), 0.0)
    t = np.where(e > 1e-300, (b * s + f) / np.where(e > 1e-300, e, 1.0), 0.0)
    # re-clamp t then recompute s for the clamped t
    t = np.clip(t, 0.0, 1.0)
    s = np.where(a > 1e-300, np.clip((b * t - c) / np.where(a > 1e-300, a, 1.0), 0.0, 1.0), 0.0)
    closest1 = p1 + s[:, None] * d1
    closest2 = p2 + t[:, None] * d2
    return np.linalg.norm(closest1 - closest2, axis=1), s, t


def _disk_segments_2d(curve, gamma):
    """In the plane the normal disk is a segment of length 2*gamma."""
    v = curve.velocities
    speed = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(speed == 0):
        raise TubeError("vanishing velocity sample; normal disk undefined")
    u = v / speed
    perp = np.column_stack([-u[:, 1], u[:, 0]])
    starts = curve.points - gamma * perp
    dirs = 2.0 * gamma * perp
    return starts, dirs


def _project_disk(y, disk: NormalDisk):
    w = y - disk.center
    w = w - np.dot(w, disk.normal) * disk.normal
    r = np.linalg.norm(w)
    if r > disk.radius:
        w = w * (disk.radius / r)
    return disk.center + w


def detect_overlap(curve: SampledCurve, gamma, tol=1e-12):
    """(overlap?, offending time pair) for normal disks at well-separated
    sample times.  Exact in 2 and 3 dimensions; higher dimensions are
    unsupported (use the Monte-Carlo volume deficit instead).

    Two disks count as overlapping when they properly cross (distance at
    float tolerance) or when they come closer than the disk displacement
    across one sampling step: in the second case the continuous family of
    disks between the samples must contain an intersection the discrete
    pair straddles (e.g. the wrap-around of a tube closing on itself, where
    no sampled pair coincides exactly)."""
    n = curve.dimension
    if n == 2:
        sub = curve.subsampled(OVERLAP_DISKS_2D)
    elif n == 3:
        sub = curve.subsampled(OVERLAP_DISKS_3D)
    else:
        raise TubeError(f"exact overlap test unsupported in dimension {n}")
    m = len(sub.points)
    if m < 3:
        return False, None
    step = float(np.median(np.diff(sub.times)))
    scale = max(gamma, float(np.max(np.abs(sub.points))))
    speeds_all = np.linalg.norm(sub.velocities, axis=1, keepdims=True)
    if np.any(speeds_all == 0):
        raise TubeError("vanishing velocity sample; normal disk undefined")
    units = sub.velocities / speeds_all
    # displacement of the moving disk over one sampling step: center motion
    # plus the sweep of the rim as the normal turns; kept per sample so a
    # tight turn does not inflate the threshold on straight stretches
    seg_disp = np.linalg.norm(np.diff(sub.points, axis=0), axis=1) + gamma * (
        np.linalg.norm(np.diff(units, axis=0), axis=1)
    )
    local_disp = np.zeros(m)
    local_disp[:-1] = seg_disp
    local_disp[1:] = np.maximum(local_disp[1:], seg_disp)

    ii, jj = np.triu_indices(m, k=1)
    # neighbours straddle the same stretch of tube; require separation both
    # in time and in sample index (subsampling can double the local step)
    gap = (sub.times[jj] - sub.times[ii] > 2.0 * step) & (jj - ii >= 3)
    ii, jj = ii[gap], jj[gap]
    if len(ii) == 0:
        return False, None

    if n == 2:
        starts, dirs = _disk_segments_2d(sub, gamma)
        dist, s, t = _segment_pair_distances(starts[ii], dirs[ii], starts[jj], dirs[jj])

        # endpoint-to-endpoint tangency does not count as a proper crossing
        def is_end(u):
            return (u < 1e-9) | (u > 1.0 - 1e-9)

        crossing = (dist < tol * scale) & ~(is_end(s) & is_end(t))
        near = 0.75 * np.minimum(local_disp[ii], local_disp[jj])
        flagged = crossing | (dist < near)
        if not np.any(flagged):
            return False, None
        first = int(np.argmax(flagged))
        return True, (float(sub.times[ii[first]]), float(sub.times[jj[first]]))

    # n == 3: alternating projection between the two closed disks
    for i, j in zip(ii, jj):
        d1 = NormalDisk(sub.points[i], sub.velocities[i], gamma)
        d2 = NormalDisk(sub.points[j], sub.velocities[j], gamma)
        y = d1.center.copy()
        for _ in range(64):
            y2 = _project_disk(y, d2)
            y = _project_disk(y2, d1)
        dist = np.linalg.norm(y - _project_disk(y, d2))
        near = 0.75 * min(local_disp[i], local_disp[j])
        if dist < max(tol * scale, near):
            return True, (float(sub.times[i]), float(sub.times[j]))
    return False, None


def tube_report(curve: SampledCurve, gamma, consts=None, mc_samples=MC_DEFAULT_SAMPLES, seed=0):
    """Bundle the geometric audit of one tube."""
    curvature = empirical_curvature(curve)
    rho = 1.0 / curvature if curvature > 0 else math.inf
    criterion = gamma < rho and curve.total_length < max_safe_arclength(rho, gamma)
    try:
        overlap, _ = detect_overlap(curve, gamma)
    except TubeError:
        overlap = False
    vol_formula = tube_volume_formula(curve.dimension, gamma, curve.total_length)
    vol_mc, stderr = tube_volume_montecarlo(curve, gamma, mc_samples, seed)
    return TubeReport(
        radius=gamma,
        curvature_max_est=curvature,
        nonoverlap_criterion_pass=criterion,
        overlap_found_empirical=overlap,
        volume_formula=vol_formula,
        volume_montecarlo=vol_mc,
        mc_stderr=stderr,
    )
