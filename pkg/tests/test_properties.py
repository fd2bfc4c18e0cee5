"""Randomized property checks on the pure certificate mathematics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapcert.bounds import DomainConstants
from lyapcert.certificate import (
    ball_volume,
    build_rate_functions,
    chi,
    compute_alpha,
    compute_eps_thresholds,
    compute_gamma_eta,
    iteration_count,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
unit = st.floats(min_value=1e-3, max_value=0.999)


@st.composite
def constants(draw):
    l0_inf = draw(st.floats(min_value=0.1, max_value=10.0))
    l0_sup = l0_inf * draw(st.floats(min_value=1.0, max_value=10.0))
    return DomainConstants(
        L0_sup=l0_sup,
        L0_inf=l0_inf,
        L1=draw(st.floats(min_value=0.01, max_value=100.0)),
        M1=draw(st.floats(min_value=0.1, max_value=10.0)),
        M2=draw(st.floats(min_value=0.1, max_value=10.0)),
        b=draw(st.floats(min_value=0.0, max_value=0.1)),
    )


@given(st.integers(min_value=1, max_value=10), positive)
def test_ball_volume_closed_form(n, r):
    assert ball_volume(n, r) == pytest.approx(chi(n) * r**n, rel=1e-12)
    # one-dimension recursion: chi(n) = chi(n-1) * sqrt(pi) * G ratio; check
    # via the direct Gamma formula instead of trusting chi twice
    assert chi(n) == pytest.approx(
        math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0), rel=1e-12
    )


@given(constants(), unit, positive, positive)
def test_gamma_decreases_in_eta(consts, eta, a, c1):
    alpha = compute_alpha(consts)
    g1 = compute_gamma_eta(eta, a, c1, alpha, consts.M1)
    g2 = compute_gamma_eta(min(eta * 1.1, 1.0), a, c1, alpha, consts.M1)
    assert g1 >= g2 >= 0.0
    assert compute_gamma_eta(1.0, a, c1, alpha, consts.M1) == 0.0


@given(constants(), unit, positive, positive)
def test_eps_thresholds_nonnegative_and_min(consts, eta, a, c1):
    alpha = compute_alpha(consts)
    gamma = compute_gamma_eta(eta, a, c1, alpha, consts.M1)
    if not gamma < consts.L0_inf / consts.L1:
        return  # turning-radius precondition not met for this draw
    eps1, eps2, eps_bar = compute_eps_thresholds(consts, alpha, gamma, eta, a, c1, 2)
    assert eps1 >= 0.0 and eps2 >= 0.0
    assert eps_bar == min(eps1, eps2)


@settings(max_examples=50)
@given(constants(), unit, positive, st.floats(min_value=0.0, max_value=10.0))
def test_phi_branches_continuous(consts, eta, c1, tau):
    c2 = c1 * 2.0
    alpha = compute_alpha(consts)
    rate = build_rate_functions(consts, alpha, eta, 1.0, c1, c2, g=1.0)
    ts = rate.tau_switch
    left = rate.phi(ts * (1.0 - 1e-12))
    right = rate.phi(ts * (1.0 + 1e-12))
    assert left == pytest.approx(right, rel=1e-9, abs=1e-12)
    # phi is continuous and phi(0) = 0
    assert rate.phi(0.0) == 0.0
    # past the switch, phi is affine with slope b
    if tau > ts:
        slope = (rate.phi(tau + 1.0) - rate.phi(tau)) / 1.0
        assert slope == pytest.approx(consts.b, rel=1e-9, abs=1e-12)


@given(st.floats(min_value=1e-3, max_value=1e3),
       st.floats(min_value=1e-6, max_value=1e3))
def test_iteration_count_contracts_enough(kappa, delta):
    n = iteration_count(kappa, delta)
    assert n >= 0
    assert kappa * (5.0 / 6.0) ** n <= delta * (1.0 + 1e-12)
    if n > 0:
        assert kappa * (5.0 / 6.0) ** (n - 1) > delta


@given(st.integers(min_value=2, max_value=6), positive)
def test_ball_volume_monotone_in_radius(n, r):
    assert ball_volume(n, r) < ball_volume(n, r * 1.01)
    assert ball_volume(n - 1, r) > 0.0
