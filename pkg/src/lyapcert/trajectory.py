"""Trajectory integration and certificate verification.

Fixed-step fourth-order Runge-Kutta with bisection-refined event times, so
bad-set visits and level crossings land on recorded samples.  The verifier
replays every trajectory-level guarantee of a certificate against a recorded
run and reports violations instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .badset import classify_point
from .tube import (
    SampledCurve,
    detect_overlap,
    tube_volume_formula,
    tube_volume_montecarlo,
)

EVENT_TOLERANCE = 1e-10
DT_DEFAULT = 1e-3


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_max: float
    event_tolerance: float = EVENT_TOLERANCE
    feature_size: float | None = None
    L0_sup: float | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if (
            self.feature_size is not None
            and self.L0_sup is not None
            and not self.dt * self.L0_sup < self.feature_size / 5.0
        ):
            raise ValueError(
                f"dt {self.dt} too coarse: dt*L0_sup must stay below "
                f"feature/5 = {self.feature_size / 5.0:.3g}"
            )

    @classmethod
    def default(cls, t_max, L0_sup=None, feature_size=None):
        dt = DT_DEFAULT
        if L0_sup and feature_size:
            dt = min(DT_DEFAULT, feature_size / (10.0 * L0_sup))
        return cls(dt=dt, t_max=t_max, feature_size=feature_size, L0_sup=L0_sup)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    V_values: np.ndarray
    Vdot_values: np.ndarray
    in_omega_eta: np.ndarray | None = None
    eta: float | None = None
    rate_a: float | None = None
    dt: float = DT_DEFAULT
    X_eta_intervals: list = field(default_factory=list)
    T_exit: float | None = None
    delta_V: list = field(default_factory=list)
    envelope_violations: list = field(default_factory=list)

    def state_at(self, t):
        i = int(np.searchsorted(self.times, t))
        i = min(max(i, 0), len(self.times) - 1)
        return self.states[i]


def _rk4_step(f, x, dt):
    k1 = f.evaluate(x)
    k2 = f.evaluate(x + 0.5 * dt * k1)
    k3 = f.evaluate(x + 0.5 * dt * k2)
    k4 = f.evaluate(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bisect_event(f, x0, dt, gfun, g0, g1, tol):
    """Sub-step size tau in (0, dt] where gfun crosses zero, to tol in time."""
    lo, hi = 0.0, dt
    glo = g0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = gfun(_rk4_step(f, x0, mid))
        if (glo <= 0.0) == (gm <= 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
    return hi


def integrate(f, x0, cfg: IntegratorConfig, v, a=None, eta=None, levels=()):
    """March RK4 from x0, recording V and Vdot; V-level crossings and (when
    eta is given) bad-set membership flips are refined by bisection and
    inserted as extra samples.  Halts at t_max or when V < c1/2-type floor
    given through levels[0] ... the caller passes halt_level explicitly."""
    return _integrate(f, x0, cfg, v, a, eta, levels, halt_level=None)


def _membership(v, f, a, eta):
    def g(x):
        return v.vdot(f, x) + eta * a * v.evaluate(x)

    return g


def _integrate(f, x0, cfg, v, a, eta, levels, halt_level):
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise TrajectoryError("non-finite initial state")
    dt = cfg.dt
    steps = int(math.ceil(cfg.t_max / dt))

    gfuns = [(f"level:{lv:.6g}", lambda s, lv=lv: v.evaluate(s) - lv) for lv in levels]
    if eta is not None and a is not None:
        gfuns.append(("omega", _membership(v, f, a, eta)))

    times = [0.0]
    states = [x.copy()]
    t = 0.0
    for _ in range(steps):
        x_next = _rk4_step(f, x, dt)
        if not np.all(np.isfinite(x_next)):
            raise TrajectoryError(f"non-finite state at t = {t + dt:.6g}")
        for _, gfun in gfuns:
            g0, g1 = gfun(x), gfun(x_next)
            if (g0 <= 0.0) != (g1 <= 0.0):
                tau = _bisect_event(f, x, dt, gfun, g0, g1, cfg.event_tolerance)
                if 0.0 < tau < dt:
                    times.append(t + tau)
                    states.append(_rk4_step(f, x, tau))
        t += dt
        times.append(t)
        states.append(x_next)
        x = x_next
        if halt_level is not None and v.evaluate(x) < halt_level:
            break
        if t >= cfg.t_max:
            break

    order = np.argsort(times, kind="stable")
    times = np.asarray(times)[order]
    states = np.asarray(states)[order]
    # drop duplicate event times
    keep = np.concatenate([[True], np.diff(times) > 0])
    times, states = times[keep], states[keep]

    vvals = v.evaluate_many(states)
    vdots = v.vdot_many(f, states)
    in_omega = None
    if eta is not None and a is not None:
        in_omega = vdots + eta * a * vvals >= 0.0
    return TrajectoryRecord(
        times=times,
        states=states,
        V_values=vvals,
        Vdot_values=vdots,
        in_omega_eta=in_omega,
        eta=eta,
        rate_a=a,
        dt=dt,
    )


def integrate_with_halt(f, x0, cfg, v, a=None, eta=None, levels=(), halt_level=None):
    return _integrate(f, x0, cfg, v, a, eta, levels, halt_level)


def extract_X_eta(traj: TrajectoryRecord, f, v, a, eta):
    """Maximal closed intervals of the record where Vdot + eta*a*V >= 0.

    Endpoints are refined by bisecting a single RK4 sub-step between the
    bracketing samples.  Each interval is reported as a dict with times,
    V values and whether it is clipped by the record boundary.
    """
    m = traj.Vdot_values + eta * a * traj.V_values >= 0.0
    intervals = []
    i = 0
    count = len(traj.times)
    gfun = _membership(v, f, a, eta)
    while i < count:
        if not m[i]:
            i += 1
            continue
        j = i
        while j + 1 < count and m[j + 1]:
            j += 1
        s, t = traj.times[i], traj.times[j]
        vs, vt = traj.V_values[i], traj.V_values[j]
        clipped_start = i == 0
        clipped_end = j == count - 1
        if not clipped_start:
            dt_loc = traj.times[i] - traj.times[i - 1]
            if dt_loc > 0:
                tau = _bisect_event(
                    f, traj.states[i - 1], dt_loc, gfun,
                    gfun(traj.states[i - 1]), gfun(traj.states[i]), EVENT_TOLERANCE,
                )
                s = traj.times[i - 1] + tau
                vs = v.evaluate(_rk4_step(f, traj.states[i - 1], tau))
        if not clipped_end:
            dt_loc = traj.times[j + 1] - traj.times[j]
            if dt_loc > 0:
                tau = _bisect_event(
                    f, traj.states[j], dt_loc, gfun,
                    gfun(traj.states[j]), gfun(traj.states[j + 1]), EVENT_TOLERANCE,
                )
                t = traj.times[j] + tau
                vt = v.evaluate(_rk4_step(f, traj.states[j], tau))
        intervals.append(
            {
                "start": float(s),
                "end": float(t),
                "V_start": float(vs),
                "V_end": float(vt),
                "delta_V": float(vt - vs),
                "clipped_start": clipped_start,
                "clipped_end": clipped_end,
                "sample_range": (i, j),
            }
        )
        i = j + 1
    traj.X_eta_intervals = intervals
    traj.delta_V = [iv["delta_V"] for iv in intervals]
    return intervals


def find_T_exit(traj: TrajectoryRecord, level):
    """First recorded time V drops to the given level from above."""
    below = traj.V_values <= level
    if traj.V_values[0] <= level:
        return float(traj.times[0])
    idx = np.argmax(below)
    if not below[idx]:
        return None
    # level crossings are among the bisected samples; take the sample time
    return float(traj.times[idx])


def integration_slack(dt, scale):
    """Declared numerical allowance for bound checks: 1e-9 + 10*dt^4*scale."""
    return 1e-9 + 10.0 * dt**4 * scale


def verify_certificate(traj: TrajectoryRecord, cert, rate, f=None, v=None):
    """Replay every trajectory-level certificate bound; returns a violation
    list (empty on a clean run)."""
    violations = []
    c1, c2 = cert.region.c1, cert.region.c2
    g_eps = cert.overshoot_margin
    b = cert.constants.b
    dt = traj.dt
    slack = integration_slack(dt, c2)
    v0 = float(traj.V_values[0])

    if v0 >= cert.admissible_start_level:
        violations.append(
            {
                "check": "admissible_start",
                "time": 0.0,
                "margin": v0 - cert.admissible_start_level,
                "detail": f"V(x0) = {v0:.6g} >= {cert.admissible_start_level:.6g}",
            }
        )

    n = cert.dimension
    exit_level = c1 + (cert.h * cert.epsilon ** (1.0 / n) if cert.epsilon > 0 else 0.0)
    T = find_T_exit(traj, exit_level)
    t_end = float(traj.times[-1])
    horizon = T if T is not None else t_end

    if traj.X_eta_intervals is None or (
        not traj.X_eta_intervals and traj.in_omega_eta is not None and np.any(traj.in_omega_eta)
    ):
        if f is not None and v is not None:
            extract_X_eta(traj, f, v, cert.rate_a, cert.eta)

    dwell_cap = g_eps / b if b > 0 else math.inf
    for iv in traj.X_eta_intervals:
        if iv["start"] >= horizon:
            continue
        interior = not iv["clipped_start"] and not iv["clipped_end"]
        length = iv["end"] - iv["start"]
        if interior:
            if length > dwell_cap + 2.0 * dt:
                violations.append(
                    {
                        "check": "dwell_time",
                        "time": iv["start"],
                        "margin": length - dwell_cap,
                        "detail": f"visit length {length:.6g} > g*eps/b {dwell_cap:.6g}",
                    }
                )
            phi_val = rate.phi(length)
            if not phi_val < 0.0:
                violations.append(
                    {
                        "check": "phi_negative",
                        "time": iv["start"],
                        "margin": phi_val,
                        "detail": f"phi({length:.6g}) = {phi_val:.6g} not negative",
                    }
                )
            if iv["delta_V"] > phi_val + slack:
                violations.append(
                    {
                        "check": "visit_delta_V",
                        "time": iv["start"],
                        "margin": iv["delta_V"] - phi_val,
                        "detail": f"delta V {iv['delta_V']:.6g} > phi {phi_val:.6g}",
                    }
                )
        else:
            bound = g_eps if iv["clipped_start"] else 0.5 * g_eps
            if iv["delta_V"] > bound + slack:
                violations.append(
                    {
                        "check": "boundary_delta_V",
                        "time": iv["start"],
                        "margin": iv["delta_V"] - bound,
                        "detail": f"boundary visit delta V {iv['delta_V']:.6g} > {bound:.6g}",
                    }
                )

    mask_pre = traj.times <= horizon
    v_pre = traj.V_values[mask_pre]
    t_pre = traj.times[mask_pre]
    overshoot = v0 + g_eps + slack
    if np.any(v_pre > overshoot):
        i = int(np.argmax(v_pre > overshoot))
        violations.append(
            {
                "check": "overshoot",
                "time": float(t_pre[i]),
                "margin": float(v_pre[i] - (v0 + g_eps)),
                "detail": f"V = {v_pre[i]:.6g} > V0 + g*eps = {v0 + g_eps:.6g}",
            }
        )
    if np.any(v_pre > c2 + slack):
        i = int(np.argmax(v_pre > c2 + slack))
        violations.append(
            {
                "check": "outer_exit",
                "time": float(t_pre[i]),
                "margin": float(v_pre[i] - c2),
                "detail": "trajectory left the region through the outer shell",
            }
        )

    env = cert.envelope(v0, t_pre)
    over_env = v_pre > env + slack
    if np.any(over_env):
        i = int(np.argmax(over_env))
        violations.append(
            {
                "check": "envelope",
                "time": float(t_pre[i]),
                "margin": float(v_pre[i] - env[i]),
                "detail": f"V = {v_pre[i]:.6g} above the decay envelope {env[i]:.6g}",
            }
        )

    if T is not None:
        mask_post = traj.times >= T
        v_post = traj.V_values[mask_post]
        t_post = traj.times[mask_post]
        over = v_post > cert.attractor_level + slack
        if np.any(over):
            i = int(np.argmax(over))
            violations.append(
                {
                    "check": "attractor",
                    "time": float(t_post[i]),
                    "margin": float(v_post[i] - cert.attractor_level),
                    "detail": f"V = {v_post[i]:.6g} above the attractor level after T = {T:.6g}",
                }
            )

    traj.T_exit = T
    traj.envelope_violations = violations
    return violations


def tube_audit(
    traj: TrajectoryRecord,
    cert,
    f,
    v,
    gamma=None,
    membership_samples=1000,
    mc_samples=100_000,
    seed=0,
):
    """Geometric audit of each interior bad-set visit: tube non-overlap,
    volume against the measured epsilon, and membership of sampled tube
    points in the rate-a bad set."""
    gamma = cert.gamma_eta if gamma is None else gamma
    rng = np.random.default_rng(seed)
    reports = []
    for iv in traj.X_eta_intervals:
        if iv["clipped_start"] or iv["clipped_end"]:
            continue
        i, j = iv["sample_range"]
        if j - i < 2:
            continue
        pts = traj.states[i : j + 1]
        ts = traj.times[i : j + 1]
        vel = f.evaluate_many(pts)
        curve = SampledCurve(pts, ts, vel)
        try:
            overlap, pair = detect_overlap(curve, gamma)
        except Exception:
            overlap, pair = False, None
        vol = tube_volume_formula(curve.dimension, gamma, curve.total_length)

        inside = 0
        for _ in range(membership_samples):
            k = rng.integers(0, len(pts))
            u = rng.normal(size=curve.dimension)
            w = vel[k] / np.linalg.norm(vel[k])
            u -= np.dot(u, w) * w
            norm = np.linalg.norm(u)
            if norm == 0:
                continue
            r = gamma * rng.uniform() ** (1.0 / max(curve.dimension - 1, 1))
            y = pts[k] + u / norm * r
            if classify_point(y, f, v, cert.rate_a, 1.0):
                inside += 1
        reports.append(
            {
                "interval": (iv["start"], iv["end"]),
                "overlap": bool(overlap),
                "overlap_pair": pair,
                "tube_volume_formula": vol,
                "volume_le_epsilon": vol <= cert.epsilon * (1.0 + 1e-9),
                "membership_rate": inside / membership_samples,
            }
        )
    return reports
