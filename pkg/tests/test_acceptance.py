"""End-to-end acceptance suite.

Each test covers one release criterion and prints a single
"ACCEPTANCE n: PASS/FAIL" line.  Criterion 1 encodes published reference
values for the benchmark system; the subset of those values that our
estimators cannot reproduce (see the failure analysis in the project notes)
is asserted as published and allowed to fail honestly rather than loosened.
"""

import math
import time

import numpy as np
import pytest

from lyapcert.certificate import (
    build_rate_functions,
    certify,
    certify_guas,
    chi,
    iteration_count,
)
from lyapcert.grids import default_grid
from lyapcert.systems import builtin_system, AnnularRegion
from lyapcert.trajectory import IntegratorConfig, integrate
from lyapcert.tube import (
    SampledCurve,
    detect_overlap,
    max_safe_arclength,
    tube_volume_formula,
    tube_volume_montecarlo,
)

RHO = 0.01
BALL_AREA = math.pi * RHO**2


def _announce(n, passed):
    print(f"\nACCEPTANCE {n}: {'PASS' if passed else 'FAIL'}")


class _Tally:
    def __init__(self, n):
        self.n = n
        self.errors = []

    def check(self, label, ok):
        if not ok:
            self.errors.append(label)

    def finish(self):
        _announce(self.n, not self.errors)
        assert not self.errors, f"failed sub-checks: {self.errors}"


def test_acceptance_1_constant_reproduction(paper_cert):
    """Benchmark constants against their published values, at the published
    tolerances, inside the 60 s budget."""
    start = time.time()
    c = paper_cert
    k = c.constants
    t = _Tally(1)

    def within(value, ref, rel):
        return abs(value - ref) <= rel * abs(ref)

    t.check("L0_sup", within(k.L0_sup, 2.2361, 0.001))
    t.check("L0_inf", within(k.L0_inf, 1.4000, 0.001))
    t.check("M1", within(k.M1, 2.0, 0.001))
    t.check("M2", within(k.M2, 2.0, 0.001))
    t.check("b", within(k.b, 0.0128, 0.01))
    t.check("L1", within(k.L1, 90.78, 0.02))
    t.check("alpha", within(c.alpha, 186.0, 0.02))
    t.check("gamma", within(c.gamma_eta, 0.0021, 0.05))
    t.check("eps1", within(c.eps1, 3.86e-4, 0.05))
    t.check("eps2", within(c.eps2, 3.95e-4, 0.05))
    t.check("epsilon", within(c.epsilon, BALL_AREA, 0.05))
    t.check("verdict", c.verdict and c.epsilon < c.eps_bar)
    t.check("runtime", time.time() - start < 60.0)
    t.finish()


def test_acceptance_2_convergence_behavior(criterion2_runs, paper_cert):
    """20 seeded starts on V = 0.97: stay in D, obey the overshoot bound,
    reach the attractor level and stay below it; zero verifier violations."""
    start = time.time()
    t = _Tally(2)
    g_eps = paper_cert.overshoot_margin
    level = paper_cert.attractor_level
    for i, (traj, violations) in enumerate(criterion2_runs):
        slack = 1e-9 + 10.0 * traj.dt**4
        t.check(f"run{i}_in_D", np.max(traj.V_values) <= 1.0 + slack)
        t.check(
            f"run{i}_overshoot",
            np.max(traj.V_values) <= traj.V_values[0] + g_eps + slack,
        )
        below = traj.V_values <= level + slack
        t.check(f"run{i}_reaches_attractor", np.any(below))
        first = int(np.argmax(below))
        t.check(f"run{i}_stays_below", bool(np.all(below[first:])))
        t.check(f"run{i}_clean", violations == [])
    t.check("runtime", time.time() - start < 120.0)
    t.finish()


def test_acceptance_3_tube_oracle_equivalence(paper_system, paper_cert,
                                              ball_pass_trajectory):
    """Monte-Carlo tube volume vs the closed formula on 20 safe arcs and on
    certified trajectory segments; the hairpin counterexample must show a
    >20% deficit and trip the overlap detector."""
    t = _Tally(3)
    rng = np.random.default_rng(5)

    def circle(radius, turns, samples=600):
        length = 2.0 * math.pi * radius * turns
        s = np.linspace(0.0, length, samples)
        th = s / radius
        pts = np.column_stack([radius * np.cos(th), radius * np.sin(th)])
        vel = np.column_stack([-np.sin(th), np.cos(th)])
        return SampledCurve(pts, s, vel)

    curves = []
    for _ in range(17):
        radius = float(rng.uniform(0.3, 3.0))
        gamma = radius * float(rng.uniform(0.02, 0.25))
        turns = 0.9 * max_safe_arclength(radius, gamma) / (2.0 * math.pi * radius)
        curves.append((circle(radius, turns), gamma))

    # three segments of the certified benchmark trajectory
    f, _ = paper_system
    rec = ball_pass_trajectory
    m = len(rec.times)
    for lo, hi in ((0, m // 4), (m // 4, m // 2), (m // 2, 3 * m // 4)):
        sl = slice(lo, hi, 10)
        pts = rec.states[sl]
        curves.append(
            (SampledCurve(pts, rec.times[sl], f.evaluate_many(pts)),
             paper_cert.gamma_eta)
        )

    for i, (curve, gamma) in enumerate(curves):
        overlap, _ = detect_overlap(curve, gamma)
        t.check(f"arc{i}_no_overlap", not overlap)
        vol, stderr = tube_volume_montecarlo(curve, gamma, samples=150_000, seed=i)
        want = tube_volume_formula(2, gamma, curve.total_length)
        t.check(f"arc{i}_volume", abs(vol - want) <= 3.0 * stderr + 0.02 * want)

    # hairpin: two antiparallel legs closer than the tube width
    gap, leg = 0.05, 1.0
    r = gap / 2.0
    total = 2 * leg + math.pi * r
    s = np.linspace(0.0, total, 800)
    pts = np.zeros((800, 2))
    vel = np.zeros((800, 2))
    for i, si in enumerate(s):
        if si <= leg:
            pts[i] = [si, 0.0]
            vel[i] = [1.0, 0.0]
        elif si <= leg + math.pi * r:
            phi = (si - leg) / r
            pts[i] = [leg + r * math.sin(phi), r - r * math.cos(phi)]
            vel[i] = [math.cos(phi), math.sin(phi)]
        else:
            pts[i] = [leg - (si - leg - math.pi * r), gap]
            vel[i] = [-1.0, 0.0]
    pin = SampledCurve(pts, s, vel)
    vol, _ = tube_volume_montecarlo(pin, 0.1, samples=150_000, seed=99)
    want = tube_volume_formula(2, 0.1, pin.total_length)
    t.check("hairpin_deficit", vol < 0.8 * want)
    t.check("hairpin_detected", detect_overlap(pin, 0.1)[0])
    t.finish()


def test_acceptance_4_rate_function_properties(paper_cert, paper_rate):
    t = _Tally(4)
    rate = paper_rate
    c = paper_cert
    t.check("phi_zero", rate.phi(0.0) == 0.0)
    ts = rate.tau_switch
    left, right = rate.phi(ts * (1 - 1e-12)), rate.phi(ts * (1 + 1e-12))
    t.check("branch_continuity", abs(left - right) <= 1e-12 * max(abs(left), 1e-300))
    horizon = c.g * c.eps_bar / c.constants.b
    grid = np.linspace(0.0, horizon, 1000)[1:]
    t.check("phi_negative", all(rate.phi(x) < 0.0 for x in grid))
    k0 = rate.k(0.0)
    want = c.eta * c.rate_a * c.region.c1 / c.region.c2
    t.check("k_at_zero", abs(k0 - want) <= 1e-12 * want)
    eps_grid = np.linspace(0.0, c.eps_bar, 100)
    lams = [rate.lam(e) for e in eps_grid]
    t.check("lambda_monotone", all(b <= a + 1e-15 for a, b in zip(lams, lams[1:])))
    t.check("lambda0_lt_eta_a", lams[0] < c.eta * c.rate_a)
    t.check("no_cap_hits", rate.cap_hits == 0)
    t.finish()


def test_acceptance_5_dwell_time_bound(criterion2_runs, ball_pass_trajectory,
                                       paper_cert, paper_rate):
    """Interior bad-set visits obey the dwell cap and the per-visit drop."""
    t = _Tally(5)
    cap = paper_cert.overshoot_margin / paper_cert.constants.b
    runs = [(traj, i) for i, (traj, _) in enumerate(criterion2_runs)]
    runs.append((ball_pass_trajectory, "ball"))
    interior_seen = 0
    for traj, tag in runs:
        slack = 1e-9 + 10.0 * traj.dt**4
        for iv in traj.X_eta_intervals:
            if iv["clipped_start"] or iv["clipped_end"]:
                continue
            interior_seen += 1
            length = iv["end"] - iv["start"]
            t.check(f"{tag}_dwell", length <= cap + 2.0 * traj.dt)
            t.check(
                f"{tag}_delta_V",
                iv["delta_V"] <= paper_rate.phi(length) + slack,
            )
    t.check("visits_exercised", interior_seen >= 1)
    t.finish()


def test_acceptance_6_classical_limit(spiral_system):
    """The undistorted spiral: empty bad set, attractor collapses to c1,
    and the integrator reproduces V(t) = V(0) e^{-2t} at 4th order."""
    t = _Tally(6)
    f, v = spiral_system
    region = AnnularRegion(0.49, 1.0)
    cert = certify(f, v, region, 1.9, default_grid(v, 1.0, resolution=401))
    t.check("verdict", cert.verdict)
    t.check("empty_badset", cert.epsilon == 0.0)
    t.check("attractor_is_c1", cert.attractor_level == region.c1)

    x0 = np.array([0.9, 0.2])
    v0 = float(v.evaluate(x0))
    errs = []
    for dt in (1e-3, 5e-4):
        traj = integrate(f, x0, IntegratorConfig(dt=dt, t_max=1.0), v)
        exact = v0 * np.exp(-2.0 * traj.times)
        errs.append(float(np.max(np.abs(traj.V_values - exact))))
    t.check("error_small", errs[0] < 1e-6)
    # halving dt should improve ~16x; at these step sizes the error is near
    # the floating-point noise floor, so require at least 8x
    t.check("fourth_order", errs[0] / errs[1] >= 8.0)
    t.finish()


def test_acceptance_7_guas_pipeline(spiral_system):
    t = _Tally(7)
    f, v = spiral_system
    k0, k1, k2, a = 1.0, math.sqrt(5.0), 2.0, 1.9
    report = certify_guas(f, v, a, k0=k0, k1=k1, k2=k2)
    t.check("all_bands_pass", report.verdict and len(report.bands) == 16)
    t.check("iteration_count", iteration_count(1.0, 0.5) == 4)

    K_hand = a * math.sqrt(k0) / (math.sqrt(2.0) * (2.0 * k1 + a) * k2)
    t.check("K", abs(report.K - K_hand) <= 1e-10 * K_hand)
    for j in (0, 7, 15):
        band = report.bands[j]
        c = band.c
        gamma = (1.0 - band.eta) * K_hand * math.sqrt(c)
        t.check(f"band{j}_gamma", abs(band.gamma_star - gamma) <= 1e-10 * gamma)
        # b < 0 on every band of the pure spiral: eps3 is vacuous (+inf)
        eps3 = (
            band.L0_inf * 2.0 * gamma * c / (4.0 * band.b)
            if band.b > 0 else math.inf
        )
        t.check(f"band{j}_eps3", band.eps3 == eps3)
        r_c = math.sqrt(k0 * c / (32.0 * k2 * k2))
        eps4 = chi(2) * r_c**2
        t.check(f"band{j}_eps4", abs(band.eps4 - eps4) <= 1e-10 * eps4)
    t.finish()


def test_acceptance_8_inconsistency_surfacing(paper_cert):
    """The report carries both aggregations of (eps1, eps2) and both
    attractor radii; the conservative pair drives the verdict."""
    t = _Tally(8)
    c = paper_cert
    d = c.to_dict()
    t.check("eps_bar_is_min", c.eps_bar == min(c.eps1, c.eps2))
    t.check("eps_bar_max_reported", d.get("eps_bar_max") == max(c.eps1, c.eps2))
    t.check("verdict_uses_min", c.checks["eps_lt_eps_bar"] == (c.epsilon < c.eps_bar))
    t.check(
        "radius_primary",
        abs(c.attractor_radius - 0.7146) <= 0.01 * 0.7146,
    )
    t.check(
        "radius_legacy",
        abs(c.attractor_radius_legacy - 0.7044) <= 0.01 * 0.7044,
    )
    t.check(
        "both_radii_reported",
        "attractor_radius" in d and "attractor_radius_legacy" in d,
    )
    t.finish()
