"""Time integration of the full system on a uniform finite-volume grid.

Discretization choices, in order of importance:

* Cell-centered finite volumes with a conservative face flux and zero flux
  through both boundary faces. The chemotaxis term never creates or destroys
  ligand, so the total ligand mass obeys the closed relation
  d(mass)/dt = lambda L - mass exactly at the discrete level; the spike
  phenomenology depends on this bookkeeping being exact.
* IMEX splitting: diffusion and the linear reaction terms are advanced by
  backward Euler (two tridiagonal solves per step), the chemotaxis flux
  divergence explicitly. This removes the diffusive dt ~ dx^2 restriction;
  only the advective CFL bound dt <= 0.4 dx / max|chi Phi'(v) v_x| remains.
* First-order upwinding of the advected ligand at faces, selected by the
  sign of the local advective velocity. Central face values oscillate and
  break positivity near spikes; upwinding keeps u >= 0 at admissible dt.
* Positivity is enforced, never clamped: a step that drives u below -1e-12
  or v to the floor is rejected with a halved-dt suggestion, and states
  cannot be constructed in an inadmissible configuration. The logarithmic
  sensitivity is singular at v = 0, so a floor breach signals numerical
  trouble rather than model behavior (the receptor equation's unit source
  keeps v well away from zero in exact arithmetic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack
from scipy.signal import find_peaks

from .errors import ModelDomainError, NumericalError, StepRejectedError
from .model import ModelParams, V_EQUILIBRIUM, equilibrium

__all__ = [
    "V_FLOOR",
    "Grid",
    "SimulationState",
    "Diagnostics",
    "SimControls",
    "SimResult",
    "default_n_cells",
    "make_state",
    "equilibrium_state",
    "cosine_state",
    "chemotactic_flux",
    "cfl_dt_max",
    "step",
    "diagnostics",
    "count_spikes",
    "simulate",
]

# Receptor positivity floor; Phi'(v) = 1/v blows up as v -> 0+.
V_FLOOR = 1e-8

# Ligand values in [-1e-12, 0) are roundoff from the implicit solve and are
# flushed to zero; anything below rejects the step.
_NEGATIVE_U_TOL = -1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on (0, length): x_i = (i + 1/2) dx."""

    n_cells: int
    length: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ModelDomainError(f"n_cells must be an integer >= 8, got {self.n_cells!r}")
        if not (math.isfinite(self.length) and self.length > 0.0):
            raise ModelDomainError(f"grid length must be positive, got {self.length!r}")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


def default_n_cells(length: float) -> int:
    """Resolution heuristic: at least 256 cells, 64 per unit length."""
    return max(256, int(math.ceil(64.0 * length)))


@dataclass(frozen=True)
class SimulationState:
    """Fields at one time instant. Arrays are frozen; treat states as values.

    Construct through :func:`make_state` (validating) or the stepper.
    """

    grid: Grid
    u: np.ndarray
    v: np.ndarray
    time: float
    step_count: int


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def make_state(
    grid: Grid, u, v, time: float = 0.0, step_count: int = 0
) -> SimulationState:
    """Validate and assemble a simulation state.

    Enforces the hard invariants: finite values, u >= 0 componentwise, and
    v strictly above the positivity floor. Violations raise; nothing is
    clamped.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (grid.n_cells,) or v.shape != (grid.n_cells,):
        raise ModelDomainError(
            f"field shapes {u.shape}, {v.shape} do not match grid with {grid.n_cells} cells"
        )
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ModelDomainError("fields must be finite")
    if np.any(u < 0.0):
        raise ModelDomainError(f"ligand density must be nonnegative (min {u.min():g})")
    if np.any(v <= V_FLOOR):
        raise ModelDomainError(
            f"receptor density at or below the positivity floor {V_FLOOR:g} (min {v.min():g})"
        )
    return SimulationState(grid=grid, u=_freeze(u), v=_freeze(v), time=float(time),
                           step_count=int(step_count))


def equilibrium_state(grid: Grid, params: ModelParams) -> SimulationState:
    eq = equilibrium(params)
    n = grid.n_cells
    return make_state(grid, np.full(n, eq.u_bar), np.full(n, eq.v_bar))


def cosine_state(
    grid: Grid,
    params: ModelParams,
    u_amp: float,
    u_mode: int,
    v_amp: float,
    v_mode: int,
    u_base: float | None = None,
    v_base: float | None = None,
) -> SimulationState:
    """Initial data ``base + amp cos(mode pi x / L)`` for each field.

    Bases default to the homogeneous equilibrium (lambda, 1).
    """
    eq = equilibrium(params)
    x = grid.cell_centers()
    u0 = (eq.u_bar if u_base is None else u_base) + u_amp * np.cos(
        u_mode * math.pi * x / grid.length
    )
    v0 = (eq.v_bar if v_base is None else v_base) + v_amp * np.cos(
        v_mode * math.pi * x / grid.length
    )
    return make_state(grid, u0, v0)


def _phi_prime_at_faces(v_face: np.ndarray, params: ModelParams) -> np.ndarray | float:
    kind = params.sensitivity.kind
    if kind == "linear":
        return 1.0
    if kind == "logarithmic":
        return 1.0 / v_face
    return np.asarray(params.sensitivity.phi1(v_face), dtype=float)


def _face_speed(u: np.ndarray, v: np.ndarray, params: ModelParams, dx: float) -> np.ndarray:
    """Advective velocity chi Phi'(v) v_x at the n-1 interior faces."""
    v_face = 0.5 * (v[1:] + v[:-1])
    return params.chi * _phi_prime_at_faces(v_face, params) * (v[1:] - v[:-1]) / dx


def _upwind_face_u(u: np.ndarray, a: np.ndarray) -> np.ndarray:
    # a == 0 takes the mean so the scheme commutes with x -> L - x.
    return np.where(a > 0.0, u[:-1], np.where(a < 0.0, u[1:], 0.5 * (u[:-1] + u[1:])))


def chemotactic_flux(state: SimulationState, params: ModelParams) -> np.ndarray:
    """Total face flux d1 u_x - chi u Phi'(v) v_x, zero at both boundaries.

    Returns n_cells + 1 values; entry f is the flux through the face between
    cells f-1 and f. The advected ligand value is upwinded on the sign of the
    local advective velocity, the receptor face value is the arithmetic mean.
    """
    u, v = state.u, state.v
    dx = state.grid.dx
    flux = np.zeros(state.grid.n_cells + 1)
    a = _face_speed(u, v, params, dx)
    flux[1:-1] = params.d1 * (u[1:] - u[:-1]) / dx - _upwind_face_u(u, a) * a
    return flux


def cfl_dt_max(state: SimulationState, params: ModelParams, safety: float = 0.4) -> float:
    """Largest admissible explicit-advection step for this state."""
    a = _face_speed(state.u, state.v, params, state.grid.dx)
    peak = float(np.max(np.abs(a))) if a.size else 0.0
    return math.inf if peak == 0.0 else safety * state.grid.dx / peak


def _neumann_laplacian_apply(w: np.ndarray, dx: float) -> np.ndarray:
    """Divergence of the central gradient flux with zero-flux boundaries."""
    out = np.empty_like(w)
    out[1:-1] = w[2:] - 2.0 * w[1:-1] + w[:-2]
    out[0] = w[1] - w[0]
    out[-1] = w[-2] - w[-1]
    out /= dx * dx
    return out


def _rhs_and_speed(
    u: np.ndarray, v: np.ndarray, params: ModelParams, dx: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Instantaneous semi-discrete right-hand side and the peak face speed."""
    a = _face_speed(u, v, params, dx)
    adv = _upwind_face_u(u, a) * a
    r_u = np.empty_like(u)
    r_u[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * (params.d1 / (dx * dx))
    r_u[0] = (u[1] - u[0]) * (params.d1 / (dx * dx))
    r_u[-1] = (u[-2] - u[-1]) * (params.d1 / (dx * dx))
    # advective divergence with zero boundary flux
    r_u[:-1] -= adv / dx
    r_u[1:] += adv / dx
    r_u += params.lam - u
    r_v = params.d2 * _neumann_laplacian_apply(v, dx) + (1.0 - v) + (u - params.lam * v)
    peak = float(np.max(np.abs(a))) if a.size else 0.0
    return r_u, r_v, peak


def rhs(state: SimulationState, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side of both equations at the state, scheme-consistent."""
    r_u, r_v, _ = _rhs_and_speed(state.u, state.v, params, state.grid.dx)
    return r_u, r_v


@lru_cache(maxsize=64)
def _delta_bands(
    n: int, dx: float, diff: float, decay: float, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tridiagonal bands of (1/dt + decay) I - diff * Laplacian, Neumann closure."""
    r = diff / (dx * dx)
    lower = np.full(n - 1, -r)
    diag = np.full(n, 1.0 / dt + decay + 2.0 * r)
    diag[0] -= r
    diag[-1] -= r
    upper = np.full(n - 1, -r)
    for band in (lower, diag, upper):
        band.flags.writeable = False
    return lower, diag, upper


def _tridiag_solve(
    bands: tuple[np.ndarray, np.ndarray, np.ndarray], rhs: np.ndarray
) -> np.ndarray:
    lower, diag, upper = bands
    _, _, _, x, info = lapack.dgtsv(
        lower.copy(), diag.copy(), upper.copy(), rhs,
        overwrite_dl=True, overwrite_d=True, overwrite_du=True, overwrite_b=True,
    )
    if info != 0:
        raise NumericalError(f"tridiagonal solve failed (LAPACK info={info})")
    return x


def _step_given_rhs(
    state: SimulationState,
    params: ModelParams,
    dt: float,
    r_u: np.ndarray,
    r_v: np.ndarray,
) -> SimulationState:
    """One IMEX step in increment form, reusing the old-state right-hand side.

    Solving for the increment w = u_new - u turns the backward-Euler update
    into ((1/dt + decay) I - diff Lap) w = rhs(old state), which makes the
    homogeneous equilibrium a bitwise fixed point: a zero right-hand side
    yields an exactly zero increment.
    """
    grid = state.grid
    n, dx = grid.n_cells, grid.dx
    u, v = state.u, state.v

    w_u = _tridiag_solve(_delta_bands(n, dx, params.d1, 1.0, dt), r_u.copy())
    u_new = u + w_u
    if not np.all(np.isfinite(u_new)):
        raise NumericalError("non-finite ligand field after implicit solve")
    u_min = float(u_new.min())
    if u_min < _NEGATIVE_U_TOL:
        raise StepRejectedError(f"ligand positivity lost (min {u_min:g})", dt / 2.0)
    if u_min < 0.0:
        u_new[u_new < 0.0] = 0.0

    # The receptor equation sees the freshly solved ligand: the coupled linear
    # part is block-triangular, so sequential solves are exact backward Euler.
    b_v = r_v + (u_new - u)
    w_v = _tridiag_solve(_delta_bands(n, dx, params.d2, 1.0 + params.lam, dt), b_v)
    v_new = v + w_v
    if not np.all(np.isfinite(v_new)):
        raise NumericalError("non-finite receptor field after implicit solve")
    if float(v_new.min()) <= V_FLOOR:
        raise StepRejectedError(
            f"receptor density at the positivity floor (min {v_new.min():g})", dt / 2.0
        )

    return SimulationState(
        grid=grid,
        u=_freeze(u_new),
        v=_freeze(v_new),
        time=state.time + dt,
        step_count=state.step_count + 1,
    )


def step(state: SimulationState, params: ModelParams, dt: float) -> SimulationState:
    """Advance one IMEX step of size dt.

    Backward Euler on d1 u_xx - u + lambda and d2 v_xx - (1 + lambda) v + 1;
    the chemotaxis flux divergence enters explicitly at the old state. The
    caller is responsible for keeping dt within the advective CFL bound, see
    :func:`cfl_dt_max`.

    Raises StepRejectedError with a halved-dt suggestion when positivity
    fails, and NumericalError on non-finite values.
    """
    if not (math.isfinite(dt) and dt > 0.0):
        raise ModelDomainError(f"dt must be positive and finite, got {dt!r}")
    r_u, r_v, _ = _rhs_and_speed(state.u, state.v, params, state.grid.dx)
    return _step_given_rhs(state, params, dt, r_u, r_v)


@dataclass(frozen=True)
class Diagnostics:
    """Scalar summary of a state: masses, extrema, spike census, residual."""

    time: float
    mass_u: float
    mass_v: float
    min_u: float
    max_u: float
    min_v: float
    max_v: float
    spike_count: int
    amplitude: float
    residual_inf: float


def count_spikes(
    u: np.ndarray, prominence_fraction: float = 0.1, min_separation_cells: int = 3
) -> int:
    """Count local maxima with prominence above a fraction of the amplitude.

    Boundary cells are first-class candidates (boundary spikes are a real
    pattern phenotype); the profile is padded below its minimum so a
    monotone boundary layer registers as one peak. A flat profile has no
    spikes.
    """
    u = np.asarray(u, dtype=float)
    lo, hi = float(u.min()), float(u.max())
    amplitude = hi - lo
    if amplitude <= 1e-12 * (1.0 + abs(hi)):
        return 0
    padded = np.concatenate(([lo - 0.5 * amplitude], u, [lo - 0.5 * amplitude]))
    peaks, _ = find_peaks(
        padded, prominence=prominence_fraction * amplitude, distance=min_separation_cells
    )
    return int(peaks.size)


def diagnostics(state: SimulationState, params: ModelParams) -> Diagnostics:
    """Midpoint-rule integrals, extrema, spike census, and RHS sup-norm."""
    r_u, r_v, _ = _rhs_and_speed(state.u, state.v, params, state.grid.dx)
    residual_inf = max(float(np.max(np.abs(r_u))), float(np.max(np.abs(r_v))))
    return _diagnostics_core(state, residual_inf)


def _diagnostics_core(state: SimulationState, residual_inf: float) -> Diagnostics:
    dx = state.grid.dx
    u, v = state.u, state.v
    return Diagnostics(
        time=state.time,
        mass_u=float(u.sum() * dx),
        mass_v=float(v.sum() * dx),
        min_u=float(u.min()),
        max_u=float(u.max()),
        min_v=float(v.min()),
        max_v=float(v.max()),
        spike_count=count_spikes(u),
        amplitude=float(u.max() - u.min()),
        residual_inf=residual_inf,
    )


@dataclass
class SimControls:
    """Stepper and recording knobs for :func:`simulate`.

    ``steady_tol`` is relative: the run is declared steady once the RHS
    sup-norm stays below steady_tol * (1 + max|u|) for ``steady_window``
    consecutive accepted steps. dt halves on a rejected step and grows by
    ``grow_factor`` after ``grow_every`` consecutive accepted steps, always
    capped by dt_max and the advective CFL bound.
    """

    dt_max: float = 1e-2
    dt_init: float | None = None
    cfl_safety: float = 0.4
    steady_tol: float = 1e-8
    steady_window: int = 100
    grow_every: int = 50
    grow_factor: float = 2.0
    max_halvings: int = 40
    diag_every: int = 10
    snapshot_times: tuple[float, ...] = ()


@dataclass
class SimResult:
    state: SimulationState
    diagnostics: list[Diagnostics]
    snapshots: list[tuple[float, SimulationState]]
    termination: str  # "steady" | "t_end"
    accepted_steps: int
    rejected_steps: int


def simulate(
    initial: SimulationState,
    params: ModelParams,
    t_end: float,
    controls: SimControls | None = None,
) -> SimResult:
    """Integrate to t_end or until a sustained steady state is detected.

    Diagnostics are recorded at t = 0, every ``diag_every`` accepted steps,
    and at the final state. Snapshot times are hit exactly: the step is
    clipped so the recorded state sits at the requested time.
    """
    c = controls or SimControls()
    if t_end < initial.time:
        raise ModelDomainError(f"t_end={t_end} precedes the initial time {initial.time}")

    state = initial
    r_u, r_v, peak = _rhs_and_speed(state.u, state.v, params, state.grid.dx)
    residual_inf = max(float(np.max(np.abs(r_u))), float(np.max(np.abs(r_v))))
    diags = [_diagnostics_core(state, residual_inf)]
    snaps: list[tuple[float, SimulationState]] = []
    pending = sorted(t for t in c.snapshot_times if t <= t_end)
    while pending and pending[0] <= state.time:
        snaps.append((pending.pop(0), state))

    time_eps = 1e-12 * max(1.0, abs(t_end))
    dt_cur = c.dt_init if c.dt_init is not None else c.dt_max
    accepted = rejected = 0
    grow_run = 0
    steady_run = 0
    termination = "t_end"
    last_diag_step = 0

    while state.time < t_end - time_eps:
        cfl = math.inf if peak == 0.0 else c.cfl_safety * state.grid.dx / peak
        next_stop = pending[0] if pending else t_end
        dt_step = min(dt_cur, c.dt_max, cfl, next_stop - state.time)

        halvings = 0
        while True:
            try:
                new_state = _step_given_rhs(state, params, dt_step, r_u, r_v)
                break
            except StepRejectedError as exc:
                rejected += 1
                halvings += 1
                if halvings > c.max_halvings:
                    if "receptor" in exc.reason:
                        raise ModelDomainError(
                            f"receptor positivity unrecoverable after {halvings} dt halvings: "
                            f"{exc.reason}"
                        ) from exc
                    raise NumericalError(
                        f"step size collapsed after {halvings} halvings: {exc.reason}"
                    ) from exc
                dt_step = exc.suggested_dt
                dt_cur = min(dt_cur, dt_step)
                grow_run = 0

        state = new_state
        accepted += 1
        grow_run += 1
        if grow_run >= c.grow_every:
            dt_cur = min(dt_cur * c.grow_factor, c.dt_max)
            grow_run = 0

        while pending and state.time >= pending[0] - time_eps:
            snaps.append((pending.pop(0), state))

        r_u, r_v, peak = _rhs_and_speed(state.u, state.v, params, state.grid.dx)
        residual_inf = max(float(np.max(np.abs(r_u))), float(np.max(np.abs(r_v))))
        if residual_inf < c.steady_tol * (1.0 + float(state.u.max())):
            steady_run += 1
        else:
            steady_run = 0

        if accepted % c.diag_every == 0:
            diags.append(_diagnostics_core(state, residual_inf))
            last_diag_step = accepted

        if steady_run >= c.steady_window:
            termination = "steady"
            break

    if last_diag_step != accepted:
        diags.append(_diagnostics_core(state, residual_inf))
    return SimResult(
        state=state,
        diagnostics=diags,
        snapshots=snaps,
        termination=termination,
        accepted_steps=accepted,
        rejected_steps=rejected,
    )
