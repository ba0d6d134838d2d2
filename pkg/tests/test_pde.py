from __future__ import annotations

import math

import numpy as np
import pytest

from chemopattern import LINEAR, LOGARITHMIC, ModelParams, ModelDomainError
from chemopattern.errors import NumericalError, StepRejectedError
from chemopattern.linstab import mode_analysis
from chemopattern.pde import (
    Grid,
    SimControls,
    V_FLOOR,
    cfl_dt_max,
    chemotactic_flux,
    cosine_state,
    count_spikes,
    default_n_cells,
    diagnostics,
    equilibrium_state,
    make_state,
    simulate,
    step,
)


def mode_projection(state, mode: int) -> float:
    """Signed cosine-mode content of the ligand field (midpoint quadrature)."""
    g = state.grid
    c = np.cos(mode * math.pi * g.cell_centers() / g.length)
    return float(2.0 / g.length * np.sum((state.u - np.mean(state.u)) * c) * g.dx)


def test_grid_invariants():
    g = Grid(100, 2.5)
    assert g.dx == 2.5 / 100
    assert len(g.cell_centers()) == 100
    assert g.cell_centers()[0] == pytest.approx(0.5 * g.dx)
    with pytest.raises(ModelDomainError):
        Grid(7, 1.0)
    with pytest.raises(ModelDomainError):
        Grid(64, -1.0)
    assert default_n_cells(1.0) == 256
    assert default_n_cells(10.0) == 640


def test_make_state_validation():
    g = Grid(16, 1.0)
    ok_u = np.ones(16)
    ok_v = np.ones(16)
    make_state(g, ok_u, ok_v)
    with pytest.raises(ModelDomainError):
        make_state(g, -ok_u, ok_v)
    with pytest.raises(ModelDomainError):
        make_state(g, ok_u, np.full(16, V_FLOOR))
    with pytest.raises(ModelDomainError):
        make_state(g, np.full(16, np.nan), ok_v)
    with pytest.raises(ModelDomainError):
        make_state(g, np.ones(8), ok_v)


def test_flux_zero_for_constant_fields(log_unit_params):
    g = Grid(32, 1.0)
    state = equilibrium_state(g, log_unit_params)
    flux = chemotactic_flux(state, log_unit_params)
    assert np.all(flux == 0.0)


def test_flux_reduces_to_diffusion_without_chemotaxis():
    p = ModelParams(d1=0.7, d2=1.0, chi=0.0, lam=1.0, length=1.0, sensitivity=LINEAR)
    g = Grid(32, 1.0)
    rng = np.random.default_rng(0)
    u = 1.0 + 0.3 * rng.random(32)
    v = 1.0 + 0.3 * rng.random(32)
    state = make_state(g, u, v)
    flux = chemotactic_flux(state, p)
    expected = 0.7 * np.diff(u) / g.dx
    assert np.allclose(flux[1:-1], expected, rtol=1e-14)
    assert flux[0] == flux[-1] == 0.0


def test_flux_divergence_telescopes():
    p = ModelParams(d1=1.0, d2=1.0, chi=12.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    g = Grid(64, 1.0)
    rng = np.random.default_rng(1)
    state = make_state(g, 1.0 + 0.5 * rng.random(64), 0.8 + 0.5 * rng.random(64))
    flux = chemotactic_flux(state, p)
    divergence = np.diff(flux) / g.dx
    assert abs(divergence.sum() * g.dx) < 1e-12 * np.abs(flux).max()


def test_equilibrium_is_exact_fixed_point(log_unit_params):
    g = Grid(64, 1.0)
    state = equilibrium_state(g, log_unit_params)
    for dt in (1e-4, 1e-2, 0.5, 3.0):
        nxt = step(state, log_unit_params, dt)
        assert np.array_equal(nxt.u, state.u)
        assert np.array_equal(nxt.v, state.v)


def test_decay_rate_without_chemotaxis():
    # decoupled ligand equation: mode k decays at rate d1 (k pi / L)^2 + 1
    k = 2
    p = ModelParams(d1=0.8, d2=1.0, chi=0.0, lam=1.0, length=1.0, sensitivity=LINEAR)
    g = Grid(512, 1.0)
    state = cosine_state(g, p, 1e-3, k, 0.0, 0)
    dt, n_steps = 1e-4, 400
    a0 = mode_projection(state, k)
    for _ in range(n_steps):
        state = step(state, p, dt)
    a1 = mode_projection(state, k)
    measured = -math.log(a1 / a0) / (n_steps * dt)
    expected = p.d1 * (k * math.pi / p.length) ** 2 + 1.0
    assert measured == pytest.approx(expected, rel=0.02)


def test_growth_rate_matches_linear_stability():
    p = ModelParams(d1=1.0, d2=1.0, chi=20.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    ma = mode_analysis(p, 1)
    rate = ma.growth_rates[0].real
    assert rate > 0.0
    g = Grid(512, 1.0)
    # seed the unstable eigenvector so the subdominant mode never pollutes the fit
    t_ratio = ma.j12 / (rate - ma.j11)
    amp_v = 1e-5
    state = cosine_state(g, p, amp_v * t_ratio, 1, amp_v, 1)
    dt, n_steps = 2e-4, 500
    a0 = mode_projection(state, 1)
    for _ in range(n_steps):
        state = step(state, p, dt)
    a1 = mode_projection(state, 1)
    measured = math.log(a1 / a0) / (n_steps * dt)
    assert measured == pytest.approx(rate, rel=0.02)


def test_step_rejects_positivity_loss():
    # a cell with no ligand next to a loaded cell, strong advection, huge dt
    p = ModelParams(d1=1e-6, d2=1.0, chi=500.0, lam=1e-6, length=1.0,
                    sensitivity=LINEAR)
    g = Grid(32, 1.0)
    u = np.zeros(32)
    u[10] = 1.0
    v = 1.0 + 0.5 * g.cell_centers()  # increasing ramp: advection to the right
    state = make_state(g, u, v)
    with pytest.raises(StepRejectedError) as excinfo:
        step(state, p, 1.0)
    assert excinfo.value.suggested_dt == 0.5


def test_step_nonfinite_is_hard_error():
    p = ModelParams(d1=1.0, d2=1.0, chi=1e300, lam=1.0, length=1.0,
                    sensitivity=LINEAR)
    g = Grid(32, 1.0)
    state = cosine_state(g, p, 0.01, 1, 0.01, 1)
    with pytest.raises((NumericalError, StepRejectedError)):
        step(state, p, 1e-3)


def test_cfl_bound():
    p = ModelParams(d1=1.0, d2=1.0, chi=5.0, lam=1.0, length=1.0,
                    sensitivity=LINEAR)
    g = Grid(32, 1.0)
    assert cfl_dt_max(equilibrium_state(g, p), p) == math.inf
    v = 1.0 + 0.25 * g.cell_centers()
    state = make_state(g, np.ones(32), v)
    speeds = p.chi * 1.0 * np.diff(v) / g.dx
    assert cfl_dt_max(state, p) == pytest.approx(0.4 * g.dx / np.max(np.abs(speeds)))


def test_diagnostics_masses_and_amplitude(log_unit_params):
    g = Grid(256, 1.0)
    lam = log_unit_params.lam
    state = equilibrium_state(g, log_unit_params)
    d = diagnostics(state, log_unit_params)
    assert d.mass_u == pytest.approx(lam * g.length, rel=1e-15)
    assert d.amplitude == 0.0 and d.spike_count == 0
    assert d.residual_inf == 0.0

    state = cosine_state(g, log_unit_params, 0.5, 1, 0.0, 0)
    d = diagnostics(state, log_unit_params)
    # the cosine integrates to zero over the domain
    assert d.mass_u == pytest.approx(lam * g.length, abs=1e-13)


def test_spike_census():
    g = Grid(256, 1.0)
    x = g.cell_centers()
    assert count_spikes(np.ones(256)) == 0
    bump = 1.0 + np.exp(-((x - 0.5) / 0.03) ** 2)
    assert count_spikes(bump) == 1
    two = 1.0 + np.exp(-((x - 0.3) / 0.02) ** 2) + np.exp(-((x - 0.7) / 0.02) ** 2)
    assert count_spikes(two) == 2
    # boundary layer: monotone decreasing profile counts as one boundary spike
    boundary = 1.0 + np.exp(-(x / 0.05) ** 2)
    assert count_spikes(boundary) == 1
    # a secondary wiggle below the prominence cut is not a spike
    weak = 1.0 + np.exp(-((x - 0.3) / 0.02) ** 2) + 0.01 * np.exp(-((x - 0.7) / 0.02) ** 2)
    assert count_spikes(weak) == 1


def test_custom_sensitivity_matches_builtin_logarithmic_path():
    # a custom spec equal to ln v must step identically to the built-in law
    from chemopattern import custom_sensitivity

    custom_log = custom_sensitivity(
        phi=lambda v: np.log(v),
        phi1=lambda v: 1.0 / np.asarray(v, dtype=float),
        phi2=lambda v: -1.0 / np.asarray(v, dtype=float) ** 2,
        phi3=lambda v: 2.0 / np.asarray(v, dtype=float) ** 3,
    )
    base = dict(d1=1.0, d2=1.0, chi=18.0, lam=1.0, length=1.0)
    p_builtin = ModelParams(sensitivity=LOGARITHMIC, **base)
    p_custom = ModelParams(sensitivity=custom_log, **base)
    g = Grid(64, 1.0)
    s_builtin = cosine_state(g, p_builtin, 0.05, 1, 0.05, 1)
    s_custom = cosine_state(g, p_custom, 0.05, 1, 0.05, 1)
    for _ in range(50):
        s_builtin = step(s_builtin, p_builtin, 1e-3)
        s_custom = step(s_custom, p_custom, 1e-3)
    assert np.allclose(s_builtin.u, s_custom.u, rtol=1e-13, atol=1e-15)
    assert np.allclose(s_builtin.v, s_custom.v, rtol=1e-13, atol=1e-15)


def test_simulate_below_threshold_returns_to_equilibrium():
    p = ModelParams(d1=1.0, d2=1.0, chi=5.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    g = Grid(128, 1.0)
    state = cosine_state(g, p, 0.01, 1, 0.01, 1)
    result = simulate(state, p, 60.0, SimControls(dt_max=0.01))
    assert result.termination == "steady"
    assert np.abs(result.state.u - p.lam).max() < 1e-6
    assert np.abs(result.state.v - 1.0).max() < 1e-6


def test_simulate_records_snapshots_and_diagnostics():
    p = ModelParams(d1=1.0, d2=1.0, chi=5.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    g = Grid(64, 1.0)
    state = cosine_state(g, p, 0.01, 1, 0.01, 1)
    controls = SimControls(dt_max=0.01, snapshot_times=(0.05, 0.1), diag_every=5,
                           steady_window=10**9)
    result = simulate(state, p, 0.2, controls)
    assert result.termination == "t_end"
    assert result.state.time == pytest.approx(0.2, abs=1e-12)
    assert [t for t, _ in result.snapshots] == [0.05, 0.1]
    for t_req, snap in result.snapshots:
        assert snap.time == pytest.approx(t_req, abs=1e-12)
    assert result.diagnostics[0].time == 0.0
    assert result.diagnostics[-1].time == pytest.approx(0.2, abs=1e-12)
    assert len(result.diagnostics) >= 4


def test_simulate_mass_law():
    # total ligand follows d(mass)/dt = lambda L - mass regardless of chemotaxis
    p = ModelParams(d1=1.0, d2=1.0, chi=20.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    g = Grid(256, 1.0)
    state = cosine_state(g, p, 0.01, 1, 0.01, 1, u_base=1.5)
    m0 = float(state.u.sum() * g.dx)
    lam_l = p.lam * g.length
    result = simulate(state, p, 2.0, SimControls(dt_max=1e-3, diag_every=25))
    for d in result.diagnostics:
        expected = lam_l + (m0 - lam_l) * math.exp(-d.time)
        assert abs(d.mass_u - expected) < 1e-3 * lam_l


def test_reflection_equivariance():
    p = ModelParams(d1=1.0, d2=1.0, chi=20.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    g = Grid(128, 1.0)
    rng = np.random.default_rng(2)
    bump = 0.01 * np.cos(math.pi * g.cell_centers()) + 0.002 * rng.random(128)
    u = 1.0 + bump
    v = 1.0 + 0.5 * bump
    fwd = simulate(make_state(g, u, v), p, 1.0, SimControls(dt_max=1e-3))
    mir = simulate(make_state(g, u[::-1], v[::-1]), p, 1.0, SimControls(dt_max=1e-3))
    assert fwd.accepted_steps == mir.accepted_steps
    assert np.abs(fwd.state.u - mir.state.u[::-1]).max() < 1e-11
    assert np.abs(fwd.state.v - mir.state.v[::-1]).max() < 1e-11


def test_grid_convergence_first_order():
    # upwinding makes the converged pattern first-order accurate in dx
    p = ModelParams(d1=1.0, d2=1.0, chi=15.0, lam=1.0, length=1.0,
                    sensitivity=LOGARITHMIC)
    finals = {}
    for n in (64, 128, 256):
        g = Grid(n, 1.0)
        state = cosine_state(g, p, 0.01, 1, 0.01, 1)
        finals[n] = simulate(state, p, 120.0, SimControls(dt_max=0.01)).state.u

    def restrict(u):
        return 0.5 * (u[0::2] + u[1::2])

    err_coarse = np.abs(restrict(finals[128]) - finals[64]).max()
    err_fine = np.abs(restrict(finals[256]) - finals[128]).max()
    ratio = err_coarse / err_fine
    assert 1.2 < ratio < 3.5
