"""Certificate engine.

Turns the estimated region constants and the measured bad-set volume into a
convergence certificate: the tube radius gamma_eta, the volume thresholds
eps1/eps2, the margin constants g and h, the decay-rate machinery phi/k/lambda,
and a pass/fail verdict with the guaranteed attractor and admissible-start
levels.  Also runs the band iteration that upgrades the local certificate to a
global asymptotic-stability verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .badset import analyze_badset
from .bounds import DomainConstants, estimate_constants
from .grids import GridSpec, default_box
from .systems import AnnularRegion

K_CAP = 1e6  # stand-in for the "large constant" branch of k; must stay unreached
ETA_SCAN_STEP = 0.01
LAMBDA_GRID = 1000
CONTRACTION_FACTOR = 5.0 / 6.0
GUAS_BAND_COUNT = 16
GUAS_BAND_RESOLUTION = 401


class CertificateError(ValueError):
    """Hypothesis violation or infeasible certificate parameter."""


def chi(n: int) -> float:
    """Unit-ball volume in n dimensions; chi(0) = 1."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def ball_volume(n: int, radius: float) -> float:
    if radius < 0:
        raise CertificateError("negative ball radius")
    return chi(n) * radius**n


def compute_alpha(consts: DomainConstants) -> float:
    return consts.M1 * consts.L1 + consts.M2 * consts.L0_sup


def compute_gamma_eta(eta, a, c1, alpha, M1):
    if not 0.0 <= eta <= 1.0:
        raise CertificateError(f"eta must lie in [0, 1], got {eta}")
    return (1.0 - eta) * a * c1 / (alpha + eta * a * M1)


def compute_eps_thresholds(consts, alpha, gamma_eta, eta, a, c1, n):
    """(eps1, eps2, eps_bar): the two volume thresholds and their minimum.

    eps2 diverges as b -> 0+ (uniform decay): reported as +inf.
    """
    if consts.L1 > 0 and not gamma_eta < consts.L0_inf / consts.L1:
        raise CertificateError(
            "turning-radius check failed: gamma_eta "
            f"{gamma_eta:.6g} >= L0_inf/L1 {consts.L0_inf / consts.L1:.6g}"
        )
    section = ball_volume(n - 1, gamma_eta)
    if consts.L1 > 0:
        angle = math.pi - math.asin(consts.L1 * gamma_eta / consts.L0_inf)
        eps1 = section * (2.0 * consts.L0_inf / consts.L1) * angle
    else:
        # straight flow: the tube may extend indefinitely, no eps1 constraint
        eps1 = math.inf if gamma_eta > 0 else 0.0
    if consts.b > 0:
        eps2 = (
            section
            * consts.L0_inf
            * (consts.b + eta * a * c1) ** 2
            / (alpha * consts.L0_sup * consts.b)
        )
    else:
        eps2 = math.inf if gamma_eta > 0 else 0.0
    return eps1, eps2, min(eps1, eps2)


def compute_g_h(consts, gamma_eta, n):
    section = ball_volume(n - 1, gamma_eta)
    if consts.b <= 0:
        g = 0.0
    elif section == 0 or consts.L0_inf == 0:
        g = math.inf
    else:
        g = consts.b / (consts.L0_inf * section)
    h = consts.M1 * chi(n) ** (-1.0 / n)
    return g, h


def select_eta(consts, a, c1, n, strategy="auto"):
    """Pick eta in (0, 1): maximize eps_bar over a 0.01-step scan, or honor
    a "fixed:<value>" override."""
    if consts.b >= a * c1:
        raise CertificateError(
            f"infeasible: b {consts.b:.6g} >= a*c1 {a * c1:.6g}; "
            "no eta can satisfy the dwell hypothesis"
        )
    if strategy.startswith("fixed:"):
        eta = float(strategy.split(":", 1)[1])
        if not 0.0 < eta < 1.0:
            raise CertificateError(f"fixed eta {eta} outside (0, 1)")
        return eta
    if strategy != "auto":
        raise CertificateError(f"unknown eta strategy {strategy!r}")

    alpha = compute_alpha(consts)
    eta_min = max(
        consts.b / (a * c1),
        1.0 - consts.L0_inf * (alpha + a * consts.M1) / (consts.L1 * a * c1)
        if consts.L1 > 0
        else 0.0,
    )
    eta_min = min(max(eta_min, 0.0), 1.0)
    best_eta, best_eps = None, -math.inf
    j = 0
    while True:
        eta = eta_min + j * ETA_SCAN_STEP
        j += 1
        if eta >= 1.0:
            break
        if not consts.b < eta * a * c1:
            continue
        gamma = compute_gamma_eta(eta, a, c1, alpha, consts.M1)
        if consts.L1 > 0 and not gamma < consts.L0_inf / consts.L1:
            continue
        _, _, eps_bar = compute_eps_thresholds(consts, alpha, gamma, eta, a, c1, n)
        if eps_bar > best_eps:
            best_eta, best_eps = eta, eps_bar
    if best_eta is None:
        raise CertificateError(
            "no feasible eta: binding constraints are b < eta*a*c1 "
            f"(b={consts.b:.6g}, a*c1={a * c1:.6g}) and gamma_eta < L0_inf/L1 "
            f"(L0_inf/L1={consts.L0_inf / consts.L1 if consts.L1 > 0 else math.inf:.6g})"
        )
    return best_eta


@dataclass
class RateFunctions:
    """phi / k / lambda evaluators with the capped branch of k instrumented."""

    alpha: float
    L0_sup: float
    b: float
    eta: float
    a: float
    c1: float
    c2: float
    g: float
    K_cap: float = K_CAP
    cap_hits: int = 0

    @property
    def tau_switch(self):
        return 2.0 * (self.b + self.eta * self.a * self.c1) / (self.alpha * self.L0_sup)

    def phi(self, tau):
        aL = self.alpha * self.L0_sup
        drive = self.b + self.eta * self.a * self.c1
        if tau * aL < 2.0 * drive:
            return 0.25 * tau * tau * aL - tau * self.eta * self.a * self.c1
        return self.b * tau - drive * drive / aL

    def k(self, t):
        if t == 0.0:
            return self.eta * self.a * self.c1 / self.c2
        p = self.phi(t)
        if p > -self.c2:
            return -math.log(1.0 + p / self.c2) / t
        self.cap_hits += 1
        return self.K_cap

    def lam(self, eps):
        """Certified decay rate: worst k over dwell times of visits up to eps."""
        if eps <= 0.0 or self.b <= 0.0 or self.g == 0.0:
            return self.k(0.0)
        deltas = np.linspace(0.0, eps, LAMBDA_GRID)
        return min(self.k(self.g * d / self.b) for d in deltas)

    def to_dict(self):
        return {
            "tau_switch": self.tau_switch,
            "K_cap": self.K_cap,
            "lambda_0": self.k(0.0),
        }


def build_rate_functions(consts, alpha, eta, a, c1, c2, g, b=None) -> RateFunctions:
    return RateFunctions(
        alpha=alpha,
        L0_sup=consts.L0_sup,
        b=consts.b if b is None else b,
        eta=eta,
        a=a,
        c1=c1,
        c2=c2,
        g=g,
    )


@dataclass
class Certificate:
    eta: float
    alpha: float
    gamma_eta: float
    eps1: float
    eps2: float
    eps_bar: float
    eps_bar_max: float  # the other aggregation of (eps1, eps2), reported only
    g: float
    h: float
    h_legacy: float  # M1 * gamma_eta; drives the secondary attractor level
    epsilon: float
    checks: dict
    verdict: bool
    attractor_level: float
    attractor_level_legacy: float
    overshoot_margin: float
    admissible_start_level: float
    attractor_radius: float | None
    attractor_radius_legacy: float | None
    lambda_eps: float
    envelope_prefactor_exp: float  # 2*lambda*g*eps/b in the decay envelope
    constants: DomainConstants
    region: AnnularRegion
    rate_a: float
    dimension: int
    badset: object = None
    warnings: tuple = ()

    def envelope(self, v0, t):
        """Certified upper bound on V along a trajectory started at V = v0."""
        ge = self.overshoot_margin
        return (
            math.exp(self.envelope_prefactor_exp)
            * (v0 + ge / 2.0)
            * np.exp(-self.lambda_eps * np.asarray(t, dtype=float))
            + ge / 2.0
        )

    def to_dict(self):
        return {
            "verdict": "pass" if self.verdict else "fail",
            "eta": self.eta,
            "alpha": self.alpha,
            "gamma_eta": self.gamma_eta,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "eps_bar": self.eps_bar,
            "eps_bar_max": self.eps_bar_max,
            "g": self.g,
            "h": self.h,
            "h_legacy": self.h_legacy,
            "epsilon": self.epsilon,
            "checks": dict(self.checks),
            "attractor_level": self.attractor_level,
            "attractor_level_legacy": self.attractor_level_legacy,
            "attractor_radius": self.attractor_radius,
            "attractor_radius_legacy": self.attractor_radius_legacy,
            "overshoot_margin": self.overshoot_margin,
            "admissible_start_level": self.admissible_start_level,
            "lambda_eps": self.lambda_eps,
            "envelope_prefactor_exp": self.envelope_prefactor_exp,
            "rate_a": self.rate_a,
            "c1": self.region.c1,
            "c2": self.region.c2,
            "dimension": self.dimension,
            "constants": self.constants.to_dict(),
            "badset": self.badset.to_dict() if self.badset is not None else None,
            "warnings": list(self.warnings),
        }


def _omega_inside_region(analysis, v, region, gamma_eta, M1):
    """Each bad component, fattened by the tube radius, must stay inside D.

    The V-variation across a gamma_eta offset is at most M1*gamma_eta, so it
    suffices that every component's V-range keeps that margin from both
    shells (cell diagonal added for the discretization)."""
    if not analysis.components:
        return True
    margin = M1 * gamma_eta
    diag = float(np.linalg.norm(analysis.cell_size))
    for comp in analysis.components:
        centers = analysis.component_centers(comp)
        vvals = v.evaluate_many(centers)
        lo, hi = float(np.min(vvals)), float(np.max(vvals))
        if lo - margin - M1 * diag < region.c1 or hi + margin + M1 * diag > region.c2:
            return False
    return True


def certify(
    f,
    v,
    region: AnnularRegion,
    a: float,
    grid: GridSpec,
    eta_strategy="auto",
    constants: DomainConstants | None = None,
    badset=None,
) -> Certificate:
    """Full local certification pipeline over the annular region."""
    n = f.dimension
    c1, c2 = region.c1, region.c2
    if constants is None:
        constants = estimate_constants(f, v, region, grid)
    if badset is None:
        badset = analyze_badset(f, v, region, a, 1.0, grid)
    epsilon = badset.epsilon
    warnings = []
    if badset.warn_equality:
        warnings.append(
            "a large share of the region sits numerically on the decay-rate "
            "boundary; consider a slightly smaller rate a"
        )

    checks = {"nonvanishing": constants.nonvanishing}
    checks["b_lt_a_c1"] = constants.b < a * c1

    alpha = compute_alpha(constants)
    eta = None
    gamma_eta = math.nan
    eps1 = eps2 = eps_bar = math.nan
    if checks["b_lt_a_c1"] and checks["nonvanishing"]:
        try:
            eta = select_eta(constants, a, c1, n, eta_strategy)
        except CertificateError:
            if not eta_strategy.startswith("fixed:"):
                raise
            eta = float(eta_strategy.split(":", 1)[1])
    if eta is None:
        eta = 0.5  # placeholder for a failed-hypothesis report
    gamma_eta = compute_gamma_eta(eta, a, c1, alpha, constants.M1)

    checks["b_lt_eta_a_c1"] = constants.b < eta * a * c1
    checks["gamma_lt_turning"] = (
        constants.L1 <= 0 or gamma_eta < constants.L0_inf / constants.L1
    )
    if checks["gamma_lt_turning"]:
        eps1, eps2, eps_bar = compute_eps_thresholds(
            constants, alpha, gamma_eta, eta, a, c1, n
        )
        checks["eps_lt_eps_bar"] = epsilon < eps_bar
    else:
        checks["eps_lt_eps_bar"] = False
    checks["omega_inside_D"] = _omega_inside_region(
        badset, v, region, gamma_eta, constants.M1
    )
    verdict = all(checks.values())

    g, h = compute_g_h(constants, gamma_eta, n)
    if epsilon == 0.0:
        g_eps, h_eps = 0.0, 0.0
    else:
        g_eps = g * epsilon
        h_eps = h * epsilon ** (1.0 / n)
    h_legacy = constants.M1 * gamma_eta
    attractor_level = c1 + h_eps + g_eps
    attractor_level_legacy = c1 + (h_legacy if epsilon > 0 else 0.0) + g_eps
    admissible_start_level = c2 - h_eps - g_eps

    rate = build_rate_functions(constants, alpha, eta, a, c1, c2, g)
    lambda_eps = rate.lam(epsilon)
    if verdict and rate.cap_hits:
        raise CertificateError(
            "rate function hit the capped branch on a certified run; "
            "the overshoot bound is inconsistent with the thresholds"
        )
    env_exp = 2.0 * lambda_eps * g_eps / constants.b if constants.b > 0 else 0.0

    k0 = v.quadratic_lower_k0
    radius = math.sqrt(attractor_level / k0) if k0 else None
    radius_legacy = math.sqrt(attractor_level_legacy / k0) if k0 else None

    return Certificate(
        eta=eta,
        alpha=alpha,
        gamma_eta=gamma_eta,
        eps1=eps1,
        eps2=eps2,
        eps_bar=eps_bar,
        eps_bar_max=max(eps1, eps2),
        g=g,
        h=h,
        h_legacy=h_legacy,
        epsilon=epsilon,
        checks=checks,
        verdict=verdict,
        attractor_level=attractor_level,
        attractor_level_legacy=attractor_level_legacy,
        overshoot_margin=g_eps,
        admissible_start_level=admissible_start_level,
        attractor_radius=radius,
        attractor_radius_legacy=radius_legacy,
        lambda_eps=lambda_eps,
        envelope_prefactor_exp=env_exp,
        constants=constants,
        region=region,
        rate_a=a,
        dimension=n,
        badset=badset,
        warnings=tuple(warnings),
    )


# --- global (band-iterated) certification ---------------------------------


@dataclass
class GuasBand:
    c: float
    L0_inf: float
    b: float
    eta: float
    gamma_star: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    threshold: float  # min(eps1..eps4); drives the band verdict
    threshold_closed_form: float  # min(K1*L0_inf^n, K2*c^((n-1)/2)*L0_inf, K3*c^(n/2))
    volume: float
    passed: bool
    cause: str = ""

    def to_dict(self):
        return {
            "c": self.c,
            "L0_inf": self.L0_inf,
            "b": self.b,
            "eta": self.eta,
            "gamma_star": self.gamma_star,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "eps3": self.eps3,
            "eps4": self.eps4,
            "threshold": self.threshold,
            "threshold_closed_form": self.threshold_closed_form,
            "volume": self.volume,
            "pass": self.passed,
            "cause": self.cause,
        }


@dataclass
class GuasReport:
    k0: float
    k1: float
    k2: float
    K: float
    K1: float
    K2: float
    K3: float
    bands: tuple
    verdict: bool
    contraction_factor: float
    iteration_count: int
    kappa: float
    delta: float
    ladder: tuple

    def to_dict(self):
        return {
            "verdict": "pass" if self.verdict else "fail",
            "k0": self.k0,
            "k1": self.k1,
            "k2": self.k2,
            "K": self.K,
            "K1": self.K1,
            "K2": self.K2,
            "K3": self.K3,
            "contraction_factor": self.contraction_factor,
            "iteration_count": self.iteration_count,
            "kappa": self.kappa,
            "delta": self.delta,
            "ladder": list(self.ladder),
            "bands": [b.to_dict() for b in self.bands],
        }


def iteration_count(kappa, delta):
    """Iterations to contract from |x| <= kappa down to |x| <= delta."""
    if delta <= 0 or kappa <= 0:
        raise CertificateError("kappa and delta must be positive")
    if delta >= kappa:
        return 0
    return math.ceil((math.log(kappa) - math.log(delta)) / (math.log(6) - math.log(5)))


def default_ladder(k0, k2, kappa, delta, count=GUAS_BAND_COUNT):
    """Log-spaced c values spanning the V-levels touched between the start
    ball kappa and the target ball delta."""
    lo = delta * delta * k0
    hi = kappa * kappa * k2 / 2.0
    if hi <= lo:
        hi = lo * 4.0
    return tuple(np.geomspace(lo, hi, count))


def select_eta_band(L0_inf, b_sup_ratio, k1, K, c):
    """eta(c) in (1/2, 1) with 1 - eta below both band constraints."""
    bound = min(L0_inf / (2.0 * k1 * K * math.sqrt(c)), 1.0 - b_sup_ratio)
    if bound <= 0:
        raise CertificateError("no admissible eta for this band")
    return 1.0 - 0.5 * min(bound, 0.999)


def certify_guas(
    f,
    v,
    a,
    k0,
    k1,
    k2,
    grid_box_fn=None,
    c_ladder=None,
    kappa=1.0,
    delta=0.5,
    resolution=GUAS_BAND_RESOLUTION,
) -> GuasReport:
    """Band iteration over D(c) = {c <= V <= 2c}: a local certificate per
    band, global verdict when every band passes."""
    n = f.dimension
    if k0 <= 0 or k1 <= 0 or k2 <= 0:
        raise CertificateError("k0, k1, k2 must be positive")
    # spot-check the quadratic lower bound V >= k0|x|^2
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(256, n)) * math.sqrt(max(kappa, 1.0))
    if np.any(v.evaluate_many(pts) < k0 * np.einsum("ij,ij->i", pts, pts) - 1e-9):
        raise CertificateError("quadratic lower bound V >= k0|x|^2 fails a spot check")

    ladder = tuple(c_ladder) if c_ladder is not None else default_ladder(k0, k2, kappa, delta)
    K = a * math.sqrt(k0) / (math.sqrt(2.0) * (2.0 * k1 + a) * k2)

    # first sweep: per-band constants, needed for sup_c b(c)/(ac)
    band_data = []
    for c in ladder:
        region = AnnularRegion.band(c)
        box = grid_box_fn(c) if grid_box_fn is not None else default_box(v, 2.0 * c)
        grid = GridSpec(box, resolution)
        consts = estimate_constants(f, v, region, grid)
        analysis = analyze_badset(f, v, region, a, 1.0, grid)
        band_data.append((c, region, consts, analysis))

    sup_ratio = max(d[2].b / (a * d[0]) for d in band_data)
    if not sup_ratio < 1.0:
        raise CertificateError(
            f"sup over the ladder of b(c)/(a c) is {sup_ratio:.6g} >= 1; "
            "the band hypothesis fails"
        )

    K0 = min(
        (2.0 / k1) * (math.pi - math.asin(0.5)),
        a / (2.0 * k1 * k1 * k2),
        1.0 / (4.0 * a),
    )
    K1 = K0 * chi(n - 1) * (1.0 / (2.0 * k1)) ** (n - 1)
    K2_ = K0 * chi(n - 1) * ((1.0 - sup_ratio) * K) ** (n - 1)
    K3 = chi(n) * (k0 / (32.0 * k2 * k2)) ** (n / 2.0)

    bands = []
    for c, region, consts, analysis in band_data:
        closed_form = min(
            K1 * consts.L0_inf**n,
            K2_ * c ** ((n - 1) / 2.0) * consts.L0_inf,
            K3 * c ** (n / 2.0),
        )
        if consts.L0_inf <= 0.0:
            bands.append(
                GuasBand(
                    c=c, L0_inf=consts.L0_inf, b=consts.b, eta=math.nan,
                    gamma_star=math.nan, eps1=math.nan, eps2=math.nan,
                    eps3=math.nan, eps4=math.nan, threshold=0.0,
                    threshold_closed_form=closed_form,
                    volume=analysis.epsilon, passed=False, cause="vanishing field",
                )
            )
            continue
        eta = select_eta_band(consts.L0_inf, sup_ratio, k1, K, c)
        gamma_star = (1.0 - eta) * K * math.sqrt(c)
        alpha = compute_alpha(consts)
        eps1, eps2, _ = compute_eps_thresholds(
            consts, alpha, gamma_star, eta, a, c, n
        )
        section = ball_volume(n - 1, gamma_star)
        eps3 = (
            consts.L0_inf * section * c / (4.0 * consts.b)
            if consts.b > 0
            else math.inf
        )
        r_c = math.sqrt(k0 * c / (32.0 * k2 * k2))
        eps4 = ball_volume(n, r_c)
        threshold = min(eps1, eps2, eps3, eps4)
        passed = analysis.epsilon < threshold
        bands.append(
            GuasBand(
                c=c, L0_inf=consts.L0_inf, b=consts.b, eta=eta,
                gamma_star=gamma_star, eps1=eps1, eps2=eps2, eps3=eps3,
                eps4=eps4, threshold=threshold,
                threshold_closed_form=closed_form,
                volume=analysis.epsilon, passed=passed,
                cause="" if passed else "volume exceeds threshold",
            )
        )

    return GuasReport(
        k0=k0,
        k1=k1,
        k2=k2,
        K=K,
        K1=K1,
        K2=K2_,
        K3=K3,
        bands=tuple(bands),
        verdict=all(b.passed for b in bands),
        contraction_factor=CONTRACTION_FACTOR,
        iteration_count=iteration_count(kappa, delta),
        kappa=kappa,
        delta=delta,
        ladder=ladder,
    )
