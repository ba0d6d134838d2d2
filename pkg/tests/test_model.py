from __future__ import annotations

import math

import numpy as np
import pytest

from chemopattern import (
    LINEAR,
    LOGARITHMIC,
    ModelParams,
    ModelDomainError,
    RawParams,
    custom_sensitivity,
    equilibrium,
    nondimensionalize,
    sensitivity_at,
)
from chemopattern.pde import Grid, equilibrium_state
from chemopattern.steady import SteadyProblem, residual


def test_equilibrium_values():
    p = ModelParams(d1=1, d2=1, chi=3, lam=1.0, length=1, sensitivity=LOGARITHMIC)
    eq = equilibrium(p)
    assert eq.u_bar == 1.0 and eq.v_bar == 1.0
    p = ModelParams(d1=1, d2=1, chi=3, lam=2.5, length=1, sensitivity=LOGARITHMIC)
    eq = equilibrium(p)
    assert eq.u_bar == 2.5 and eq.v_bar == 1.0


def test_equilibrium_independent_of_other_parameters():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lam = float(rng.uniform(0.1, 5.0))
        p = ModelParams(d1=float(rng.uniform(0.01, 10)), d2=float(rng.uniform(0.01, 10)),
                        chi=float(rng.uniform(-20, 20)), lam=lam,
                        length=float(rng.uniform(0.2, 20)), sensitivity=LINEAR)
        eq = equilibrium(p)
        assert eq.u_bar == lam and eq.v_bar == 1.0


def test_equilibrium_zeroes_stationary_residual_exactly():
    for lam, chi in ((1.0, 20.0), (0.3, -7.5), (2.5, 13.072246768374034)):
        p = ModelParams(d1=0.7, d2=1.3, chi=chi, lam=lam, length=2.0,
                        sensitivity=LOGARITHMIC)
        grid = Grid(64, p.length)
        state = equilibrium_state(grid, p)
        problem = SteadyProblem(grid=grid, params=p,
                                unknowns=np.concatenate((state.u, state.v)))
        r = residual(problem)
        assert np.all(r == 0.0)


def test_nondimensionalize_examples():
    raw = RawParams(d1=1, d2=1, chi=1, lam=1, mu=1, alpha=1, beta=1)
    p = nondimensionalize(raw, length=1.0, sensitivity=LOGARITHMIC)
    assert p.d1 == pytest.approx(1.0, rel=1e-15)
    assert p.d2 == pytest.approx(2.0, rel=1e-15)
    assert p.chi == pytest.approx(2.0, rel=1e-15)
    assert p.lam == pytest.approx(1.0, rel=1e-15)
    assert p.length == 1.0

    raw = RawParams(d1=3, d2=1, chi=1, lam=2, mu=1, alpha=2, beta=1)
    p = nondimensionalize(raw, length=5.0, sensitivity=LINEAR)
    assert p.d1 == pytest.approx(3.0, rel=1e-15)
    assert p.d2 == pytest.approx(1.5, rel=1e-15)
    assert p.chi == pytest.approx(1.5, rel=1e-15)
    assert p.lam == pytest.approx(2.0, rel=1e-15)
    assert p.length == 5.0


def test_nondimensionalize_small_production_limit():
    raw = RawParams(d1=0.4, d2=0.8, chi=3.0, lam=1e-12, mu=1, alpha=1, beta=1)
    p = nondimensionalize(raw, length=1.0, sensitivity=LINEAR)
    assert p.d2 == pytest.approx(0.8, rel=1e-9)
    assert p.chi == pytest.approx(3.0, rel=1e-9)


def test_nondimensionalize_scale_consistency():
    # scaling (mu, lambda) by the same factor leaves the reduced production rate alone
    rng = np.random.default_rng(11)
    for _ in range(50):
        raw = RawParams(d1=rng.uniform(0.1, 5), d2=rng.uniform(0.1, 5),
                        chi=rng.uniform(0.1, 5), lam=rng.uniform(0.1, 5),
                        mu=rng.uniform(0.1, 5), alpha=rng.uniform(0.1, 5),
                        beta=rng.uniform(0.1, 5))
        c = float(rng.uniform(0.2, 8.0))
        scaled = RawParams(d1=raw.d1, d2=raw.d2, chi=raw.chi, lam=c * raw.lam,
                           mu=c * raw.mu, alpha=raw.alpha, beta=raw.beta)
        a = nondimensionalize(raw, 1.0, LINEAR)
        b = nondimensionalize(scaled, 1.0, LINEAR)
        assert b.lam == pytest.approx(a.lam, rel=1e-12)


def test_sensitivity_values():
    assert sensitivity_at(LINEAR, 3.0) == (3.0, 1.0, 0.0, 0.0)
    assert sensitivity_at(LOGARITHMIC, 1.0) == (0.0, 1.0, -1.0, 2.0)
    p0, p1, p2, p3 = sensitivity_at(LOGARITHMIC, 0.5)
    assert p0 == pytest.approx(-0.6931471805599453, rel=1e-15)
    assert (p1, p2, p3) == (2.0, -4.0, 16.0)


def test_sensitivity_rejects_nonpositive():
    for v in (0.0, -1.0):
        with pytest.raises(ModelDomainError):
            sensitivity_at(LOGARITHMIC, v)
        with pytest.raises(ModelDomainError):
            sensitivity_at(LINEAR, v)


def _fd_check(spec, points, rtol=1e-5, h=1e-5):
    """Central finite differences of each function against the next derivative."""
    floor = 1e-12
    for v in points:
        vals_p = spec.evaluate(v + h)
        vals_m = spec.evaluate(v - h)
        vals = spec.evaluate(v)
        for i in range(3):
            approx = (float(vals_p[i]) - float(vals_m[i])) / (2 * h)
            exact = float(vals[i + 1])
            assert abs(approx - exact) <= rtol * max(abs(exact), floor / rtol), (
                f"derivative {i} at v={v}"
            )


def test_sensitivity_derivative_chains():
    points = np.linspace(0.1, 10.0, 10)
    _fd_check(LINEAR, points)
    _fd_check(LOGARITHMIC, points)
    spec = custom_sensitivity(
        phi=lambda v: np.sqrt(v),
        phi1=lambda v: 0.5 / np.sqrt(v),
        phi2=lambda v: -0.25 * v**-1.5,
        phi3=lambda v: 0.375 * v**-2.5,
    )
    _fd_check(spec, points)


def test_custom_sensitivity_rejects_inconsistent_chain():
    with pytest.raises(ModelDomainError):
        custom_sensitivity(
            phi=lambda v: np.sqrt(v),
            phi1=lambda v: np.ones_like(np.asarray(v, dtype=float)),  # wrong
            phi2=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
            phi3=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
        )


def test_params_validation():
    ok = dict(d1=1.0, d2=1.0, chi=0.0, lam=1.0, length=1.0, sensitivity=LINEAR)
    ModelParams(**ok)
    for key in ("d1", "d2", "lam", "length"):
        bad = dict(ok)
        bad[key] = -1.0
        with pytest.raises(ModelDomainError):
            ModelParams(**bad)
        bad[key] = 0.0
        with pytest.raises(ModelDomainError):
            ModelParams(**bad)
    with pytest.raises(ModelDomainError):
        ModelParams(**{**ok, "chi": math.inf})
    # chemorepulsion is allowed
    ModelParams(**{**ok, "chi": -5.0})


def test_raw_params_all_positive():
    ok = dict(d1=1, d2=1, chi=1, lam=1, mu=1, alpha=1, beta=1)
    RawParams(**ok)
    for key in ok:
        with pytest.raises(ModelDomainError):
            RawParams(**{**ok, key: 0.0})
