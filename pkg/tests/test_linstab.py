from __future__ import annotations

import math

import numpy as np
import pytest

from chemopattern import LINEAR, LOGARITHMIC, ModelParams, ModelDomainError
from chemopattern.linstab import chi_0, chi_k, is_unstable, mode_analysis

from conftest import random_params

PI2 = math.pi**2


def bisect_chi_for_zero_det(params: ModelParams, k: int) -> float:
    """Oracle: root of det(J_k)(chi) = 0 by bisection, no closed form used."""

    def det_at(chi: float) -> float:
        p = ModelParams(d1=params.d1, d2=params.d2, chi=chi, lam=params.lam,
                        length=params.length, sensitivity=params.sensitivity)
        return mode_analysis(p, k).det

    lo, hi = 1e-8, 1.0
    while det_at(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise AssertionError("no sign change found")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if det_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_mode_analysis_chi_zero_is_diagonal(log_unit_params):
    p = ModelParams(d1=1, d2=1, chi=0.0, lam=1, length=1, sensitivity=LOGARITHMIC)
    ma = mode_analysis(p, 1)
    assert ma.j12 == 0.0
    r1, r2 = ma.growth_rates
    assert r1 == pytest.approx(-PI2 - 1.0, rel=1e-14)
    assert r2 == pytest.approx(-PI2 - 2.0, rel=1e-14)


def test_mode_analysis_chi20_has_growing_mode(log_unit_params):
    ma = mode_analysis(log_unit_params, 1)
    expected_det = (PI2 + 1.0) * (PI2 + 2.0) - 20.0 * PI2
    assert ma.det == pytest.approx(expected_det, rel=1e-13)
    assert ma.det < 0.0
    assert ma.growth_rates[0].real > 0.0 > ma.growth_rates[1].real


def test_mode_analysis_entries_and_identities():
    rng = np.random.default_rng(42)
    for _ in range(200):
        p = random_params(rng)
        k = int(rng.integers(1, 12))
        ma = mode_analysis(p, k)
        mu = (k * math.pi / p.length) ** 2
        assert ma.mu_k == pytest.approx(mu, rel=1e-15)
        assert ma.j11 == pytest.approx(-p.d1 * mu - 1.0, rel=1e-15)
        assert ma.j22 == pytest.approx(-p.d2 * mu - 1.0 - p.lam, rel=1e-15)
        assert ma.j21 == 1.0
        assert ma.trace < 0.0
        r1, r2 = ma.growth_rates
        scale = max(1.0, abs(ma.trace), abs(ma.det))
        assert abs((r1 + r2) - ma.trace) <= 1e-12 * scale
        assert abs((r1 * r2) - ma.det) <= 1e-12 * scale
        assert r1.real >= r2.real


def test_mode_zero_rejected(log_unit_params):
    with pytest.raises(ModelDomainError):
        mode_analysis(log_unit_params, 0)
    with pytest.raises(ModelDomainError):
        chi_k(log_unit_params, 0)


def test_chi_k_against_bisection_oracle(log_unit_params, linear_unit_params):
    # logarithmic and linear coincide here because u_bar Phi'(1) = lambda = 1 in both
    expected = bisect_chi_for_zero_det(log_unit_params, 1)
    assert chi_k(log_unit_params, 1) == pytest.approx(expected, rel=1e-10)
    assert chi_k(linear_unit_params, 1) == pytest.approx(expected, rel=1e-10)
    assert chi_k(log_unit_params, 1) == pytest.approx((PI2 + 1) * (PI2 + 2) / PI2, rel=1e-13)


def test_chi_k_matches_bisection_for_random_parameters():
    rng = np.random.default_rng(3)
    for _ in range(25):
        p = random_params(rng)
        k = int(rng.integers(1, 8))
        assert chi_k(p, k) == pytest.approx(bisect_chi_for_zero_det(p, k), rel=1e-10)


def test_det_vanishes_at_chi_k():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = random_params(rng)
        k = int(rng.integers(1, 10))
        crit = chi_k(p, k)
        ma = mode_analysis(
            ModelParams(d1=p.d1, d2=p.d2, chi=crit, lam=p.lam, length=p.length,
                        sensitivity=p.sensitivity), k)
        assert abs(ma.det) <= 1e-12 * abs(ma.j11 * ma.j22)


def test_det_is_affine_decreasing_in_chi():
    rng = np.random.default_rng(9)
    p = random_params(rng, chi=0.0)
    k = 2
    chis = np.linspace(-10.0, 30.0, 9)
    dets = []
    for chi in chis:
        dets.append(mode_analysis(
            ModelParams(d1=p.d1, d2=p.d2, chi=chi, lam=p.lam, length=p.length,
                        sensitivity=p.sensitivity), k).det)
    diffs = np.diff(dets)
    assert np.all(diffs < 0.0)
    assert np.allclose(diffs, diffs[0], rtol=1e-10)


def test_chi_k_grows_like_mu_for_large_k(log_unit_params):
    p = log_unit_params
    big = [chi_k(p, k) for k in (50, 100, 200)]
    assert big[0] < big[1] < big[2]
    mu = lambda k: (k * math.pi / p.length) ** 2
    # leading order chi_k ~ d1 d2 mu_k / (u_bar Phi'(v_bar))
    assert big[2] / mu(200) == pytest.approx(p.d1 * p.d2, rel=0.05)


def test_chi_0_brute_force(log_unit_params):
    result = chi_0(log_unit_params)
    brute = min(bisect_chi_for_zero_det(log_unit_params, k) for k in range(1, 50))
    assert result.chi0 == pytest.approx(brute, rel=1e-10)
    assert result.k_star == 1
    assert not result.degenerate


def test_chi_0_larger_domain_moves_the_minimizer():
    p = ModelParams(d1=0.1, d2=1.0, chi=5.0, lam=1.0, length=10.0,
                    sensitivity=LOGARITHMIC)
    result = chi_0(p)
    assert result.k_star > 1
    values = [chi_k(p, k) for k in range(1, 200)]
    assert result.chi0 == pytest.approx(min(values), rel=1e-13)
    assert result.chi0 <= chi_k(p, 1)


def test_is_unstable_verdicts():
    base = dict(d1=1.0, d2=1.0, lam=1.0, length=1.0, sensitivity=LOGARITHMIC)
    hot = is_unstable(ModelParams(chi=20.0, **base))
    assert hot.unstable and hot.witness_k == 1
    assert mode_analysis(ModelParams(chi=20.0, **base), hot.witness_k).det < 0.0
    cool = is_unstable(ModelParams(chi=5.0, **base))
    assert not cool.unstable and cool.witness_k is None
    assert not is_unstable(ModelParams(chi=0.0, **base)).unstable


def test_chi_zero_always_stable():
    rng = np.random.default_rng(13)
    for _ in range(20):
        p = random_params(rng, chi=0.0)
        assert not is_unstable(p).unstable


def test_root_sign_rule_random_draws():
    # the quadratic has a positive root exactly when the determinant is negative
    rng = np.random.default_rng(17)
    for _ in range(1000):
        p = random_params(rng)
        k = int(rng.integers(1, 10))
        ma = mode_analysis(p, k)
        roots = np.roots([1.0, -ma.trace, ma.det])  # independent root oracle
        has_positive = bool(np.any(roots.real > 1e-12))
        if abs(ma.det) < 1e-10 * abs(ma.j11 * ma.j22):
            continue  # too close to neutral to classify
        assert has_positive == (ma.det < 0.0)


def test_complex_growth_rates_under_strong_repulsion():
    # nearly balanced diagonal plus strong repulsive coupling drives the
    # discriminant negative: a damped oscillatory conjugate pair
    p = ModelParams(d1=1.0, d2=1.0, chi=-1.0, lam=0.01, length=1.0,
                    sensitivity=LOGARITHMIC)
    ma = mode_analysis(p, 1)
    r1, r2 = ma.growth_rates
    assert r1.imag > 0.0 > r2.imag
    assert r1 == r2.conjugate()
    assert r1.real == r2.real == pytest.approx(ma.trace / 2.0, rel=1e-15)
    assert r1.real < 0.0
    assert (r1 * r2).real == pytest.approx(ma.det, rel=1e-13)


def test_chemorepulsion_is_stable_for_all_modes():
    rng = np.random.default_rng(19)
    for _ in range(50):
        p = random_params(rng, chi=float(-np.exp(rng.uniform(np.log(0.1), np.log(50)))))
        for k in (1, 2, 3, 7, 20):
            ma = mode_analysis(p, k)
            assert ma.det > 0.0 and ma.trace < 0.0
            assert ma.growth_rates[0].real < 0.0
            assert ma.growth_rates[1].real < 0.0
