"""Direct solution of the stationary system and branch continuation.

The stationary system

    (d1 u' - chi u Phi'(v) v')' + lambda - u = 0,
    d2 v'' + 1 - (1 + lambda) v + u = 0,            zero-flux boundaries,

is discretized with the same conservative finite-volume flux as the time
stepper but with central (arithmetic-mean) face values for the advected
ligand: Newton needs a smooth residual, and the small mismatch against the
upwinded dynamic scheme is measured in the tests rather than hidden.

Branches of nonconstant solutions are traced in chi by pseudo-arclength
continuation. Continuation must be seeded off the trivial branch (pure
Newton from the constant state stays on it): the first two points pin the
signed cosine-mode amplitude

    s = (2/L) integral (v - 1) cos(k pi x / L) dx

to small targets and solve for the profile and chi together; subsequent
points use a secant tangent and an arclength constraint. Stability along
the branch is estimated by shift-invert iteration on the analytic Jacobian
around zero, where the dynamically relevant eigenvalues cluster; the
right-most of them decides stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigs, spsolve

from .bifurcation import branch_seed, nondegeneracy, q_k
from .errors import ModelDomainError, NoConvergenceError, NumericalError
from .linstab import chi_k
from .model import ModelParams, equilibrium
from .pde import Grid, V_FLOOR

__all__ = [
    "SteadyProblem",
    "BranchPoint",
    "Branch",
    "ContinuationControls",
    "EigenEstimate",
    "PitchforkFit",
    "residual",
    "residual_fields",
    "residual_floor",
    "jacobian",
    "jacobian_fields",
    "newton_solve",
    "stability_estimate",
    "detect_bifurcation",
    "trace_branch",
    "mode_amplitude",
    "fit_pitchfork",
]


@dataclass
class SteadyProblem:
    """Discrete stationary system: grid, parameters, stacked unknowns [u; v]."""

    grid: Grid
    params: ModelParams
    unknowns: np.ndarray

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid.n_cells
        return self.unknowns[:n], self.unknowns[n:]


def _check_v(v: np.ndarray) -> None:
    if np.any(v <= V_FLOOR):
        raise ModelDomainError(
            f"receptor density at or below the positivity floor {V_FLOOR:g} (min {v.min():g})"
        )


def residual_fields(
    grid: Grid, params: ModelParams, u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Central-flux stationary residual of both equations.

    Exactly zero at the trivial solution (lambda, 1) for every chi: constant
    fields produce zero face fluxes, and the reactions are grouped as
    (lambda - u) and (1 - v) + (u - lambda v) so they cancel without rounding.
    """
    _check_v(v)
    dx = grid.dx
    v_face = 0.5 * (v[1:] + v[:-1])
    _, p1f, _, _ = params.sensitivity.evaluate(v_face)
    g = params.chi * p1f * (v[1:] - v[:-1]) / dx  # advective velocity at faces
    flux = params.d1 * (u[1:] - u[:-1]) / dx - 0.5 * (u[1:] + u[:-1]) * g

    r_u = np.empty_like(u)
    r_u[1:-1] = (flux[1:] - flux[:-1]) / dx
    r_u[0] = flux[0] / dx
    r_u[-1] = -flux[-1] / dx
    r_u += params.lam - u

    r_v = np.empty_like(v)
    diff = (v[1:] - v[:-1]) * (params.d2 / (dx * dx))
    r_v[1:-1] = diff[1:] - diff[:-1]
    r_v[0] = diff[0]
    r_v[-1] = -diff[-1]
    r_v += (1.0 - v) + (u - params.lam * v)
    return r_u, r_v


def residual(problem: SteadyProblem) -> np.ndarray:
    u, v = problem.split()
    r_u, r_v = residual_fields(problem.grid, problem.params, u, v)
    return np.concatenate((r_u, r_v))


def residual_floor(grid: Grid, params: ModelParams, x: np.ndarray) -> float:
    """Attainable double-precision floor of the residual sup-norm.

    Any representable profile carries componentwise rounding of order
    eps * |x|; pushed through the stiffest rows of the Jacobian (the
    1/dx^2-scaled flux divergences) that bounds the smallest residual a
    float64 state can honestly have. Newton treats a line-search stall below
    this floor as convergence; demanding less than the floor is asking for
    more accuracy than the number format can express.
    """
    n = grid.n_cells
    u, v = x[:n], x[n:]
    v_min = max(float(v.min()), V_FLOOR)
    p1 = float(params.sensitivity.evaluate(v_min)[1])
    coeff = params.d1 + params.d2 + abs(params.chi) * abs(p1) * (1.0 + float(u.max()))
    eps = float(np.finfo(float).eps)
    return 8.0 * eps * coeff * (1.0 + float(np.max(np.abs(x)))) / (grid.dx * grid.dx)


def jacobian_fields(
    grid: Grid, params: ModelParams, u: np.ndarray, v: np.ndarray
) -> sp.csr_matrix:
    """Analytic Jacobian of the stacked residual [r_u; r_v], sparse 2n x 2n.

    This is also the linearization of the (central-flux) semi-discrete
    dynamics at the given fields, so its spectrum decides linearized
    stability of a steady profile.
    """
    _check_v(v)
    n = grid.n_cells
    dx = grid.dx
    v_face = 0.5 * (v[1:] + v[:-1])
    _, p1f, p2f, _ = params.sensitivity.evaluate(v_face)
    dv = (v[1:] - v[:-1]) / dx
    g = params.chi * p1f * dv
    u_face = 0.5 * (u[1:] + u[:-1])

    # Face-flux derivatives; face f couples cells f and f+1.
    fu_l = -params.d1 / dx - 0.5 * g
    fu_r = params.d1 / dx - 0.5 * g
    hv = params.chi * u_face * 0.5 * p2f * dv
    fv_l = -(hv - params.chi * u_face * p1f / dx)
    fv_r = -(hv + params.chi * u_face * p1f / dx)

    def divergence_block(c_l: np.ndarray, c_r: np.ndarray) -> sp.dia_matrix:
        # row i of div: (+face_i coeffs - face_{i-1} coeffs) / dx
        diag = np.zeros(n)
        diag[:-1] += c_l / dx
        diag[1:] -= c_r / dx
        upper = c_r / dx
        lower = -c_l / dx
        return sp.diags([lower, diag, upper], offsets=(-1, 0, 1), format="dia")

    j_uu = divergence_block(fu_l, fu_r) - sp.identity(n, format="dia")
    j_uv = divergence_block(fv_l, fv_r)

    lap = np.full(n, -2.0)
    lap[0] = lap[-1] = -1.0
    r = params.d2 / (dx * dx)
    j_vv = sp.diags(
        [np.full(n - 1, r), lap * r - (1.0 + params.lam), np.full(n - 1, r)],
        offsets=(-1, 0, 1),
        format="dia",
    )
    j_vu = sp.identity(n, format="dia")
    return sp.bmat([[j_uu, j_uv], [j_vu, j_vv]], format="csr")


def jacobian(problem: SteadyProblem) -> sp.csr_matrix:
    u, v = problem.split()
    return jacobian_fields(problem.grid, problem.params, u, v)


def _residual_chi_derivative(
    grid: Grid, params: ModelParams, u: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """d(residual)/d(chi): divergence of the unit-chi advective flux."""
    n = grid.n_cells
    dx = grid.dx
    v_face = 0.5 * (v[1:] + v[:-1])
    _, p1f, _, _ = params.sensitivity.evaluate(v_face)
    adv = -0.5 * (u[1:] + u[:-1]) * p1f * (v[1:] - v[:-1]) / dx
    out = np.zeros(2 * n)
    out[: n - 1] += adv / dx
    out[1:n] -= adv / dx
    return out


def newton_solve(
    problem: SteadyProblem,
    guess: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int = 50,
) -> np.ndarray:
    """Damped Newton on the stationary residual; returns the converged vector.

    Convergence means sup-norm residual below tol, or a line-search stall
    below the double-precision floor of :func:`residual_floor` (a tighter tol
    than the floor is unattainable in float64). The line search halves the
    step until the residual norm decreases (Armijo-style, factor 1e-4);
    running out of damping or iterations above the floor raises
    NoConvergenceError carrying the last residual norm.
    """
    x = np.array(problem.unknowns if guess is None else guess, dtype=float)
    n = problem.grid.n_cells
    _check_v(x[n:])

    def norm_of(vec: np.ndarray) -> float:
        return float(np.max(np.abs(vec)))

    r_norm = math.inf
    for _ in range(max_iter):
        r_u, r_v = residual_fields(problem.grid, problem.params, x[:n], x[n:])
        r = np.concatenate((r_u, r_v))
        r_norm = norm_of(r)
        if r_norm < tol:
            return x
        j = jacobian_fields(problem.grid, problem.params, x[:n], x[n:])
        delta = spsolve(j.tocsc(), -r)
        if not np.all(np.isfinite(delta)):
            raise NoConvergenceError("singular Jacobian in Newton iteration", r_norm)
        t = 1.0
        for _ in range(31):
            trial = x + t * delta
            if np.all(np.isfinite(trial)) and np.all(trial[n:] > V_FLOOR):
                tr_u, tr_v = residual_fields(problem.grid, problem.params, trial[:n], trial[n:])
                trial_norm = norm_of(np.concatenate((tr_u, tr_v)))
                if trial_norm < r_norm * (1.0 - 1e-4 * t) or trial_norm < tol:
                    x = trial
                    break
            t /= 2.0
        else:
            if r_norm < residual_floor(problem.grid, problem.params, x):
                return x
            raise NoConvergenceError(
                f"Newton line search stalled at residual {r_norm:.3e}", r_norm
            )
    r_u, r_v = residual_fields(problem.grid, problem.params, x[:n], x[n:])
    r_norm = norm_of(np.concatenate((r_u, r_v)))
    if r_norm < max(tol, residual_floor(problem.grid, problem.params, x)):
        return x
    raise NoConvergenceError(
        f"Newton did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {r_norm:.3e})",
        r_norm,
    )


@dataclass(frozen=True)
class EigenEstimate:
    """Leading eigenvalue estimate of the discrete linearization.

    ``value`` is the largest real part found among the eigenvalues nearest
    zero; ``margin`` is the eigen-residual norm of the selected pair. The
    reported sign is zero (indeterminate) when |value| does not clear the
    margin or the iteration failed.
    """

    value: float
    margin: float
    converged: bool

    @property
    def sign(self) -> int:
        if not self.converged or abs(self.value) <= self.margin:
            return 0
        return 1 if self.value > 0.0 else -1


def _leading_eigen(j: sp.spmatrix, start: np.ndarray | None = None) -> EigenEstimate:
    """Largest-real-part eigenvalue via shift-invert iteration around zero.

    The spectrum of these linearizations runs off to minus infinity with the
    diffusive modes, while the dynamically relevant eigenvalues cluster near
    zero; Arnoldi shift-invert at zero resolves that cluster, and the
    right-most member of it is the leading eigenvalue. Exactly at a
    bifurcation the operator is singular, so the shift falls back to a tiny
    negative offset.
    """
    n2 = j.shape[0]
    jc = j.tocsc()
    n_eigs = min(6, n2 - 2)
    if start is None:
        v0 = np.ones(n2)
    else:
        v0 = np.array(start, dtype=float)
        norm = float(np.linalg.norm(v0))
        v0 = np.ones(n2) if norm == 0.0 or not math.isfinite(norm) else v0 / norm

    values = vectors = None
    for sigma in (0.0, -1e-8 * (1.0 + float(abs(jc).max()))):
        try:
            values, vectors = eigs(jc, k=n_eigs, sigma=sigma, which="LM", v0=v0)
            break
        except ArpackNoConvergence as exc:
            if exc.eigenvalues  is not None and exc.eigenvalues.size:
                values, vectors = exc.eigenvalues, exc.eigenvectors
                break
        except (ArpackError, RuntimeError):
            continue
    if values is None or values.size == 0:
        return EigenEstimate(value=math.nan, margin=math.inf, converged=False)

    idx = int(np.argmax(values.real))
    lam = values[idx]
    x = vectors[:, idx]
    x = x / np.linalg.norm(x)
    margin = float(np.linalg.norm(jc @ x - lam * x))
    return EigenEstimate(value=float(lam.real), margin=margin, converged=True)


@dataclass
class BranchPoint:
    """One converged point of a bifurcation branch."""

    chi: float
    u: np.ndarray
    v: np.ndarray
    amplitude: float
    stability_sign: int | None
    residual_inf: float
    arclength: float


@dataclass
class Branch:
    """Continuation output: points ordered by signed amplitude."""

    k: int
    chi_onset: float
    points: list[BranchPoint]
    stalled: bool


def stability_estimate(point: BranchPoint, params: ModelParams) -> EigenEstimate:
    """Leading (closest-to-zero) eigenvalue at a branch point's profile."""
    grid = Grid(n_cells=len(point.u), length=params.length)
    params_at = replace(params, chi=point.chi)
    j = jacobian_fields(grid, params_at, point.u, point.v)
    dev = np.concatenate((point.u - params.lam, point.v - 1.0))
    start = dev if float(np.linalg.norm(dev)) > 1e-12 else None
    return _leading_eigen(j, start)


def mode_amplitude(grid: Grid, length: float, v: np.ndarray, k: int) -> float:
    """Signed projection (2/L) integral (v - 1) cos(k pi x / L) dx."""
    x = grid.cell_centers()
    c = np.cos(k * math.pi * x / length)
    return float(2.0 / length * np.sum((v - 1.0) * c) * grid.dx)


def detect_bifurcation(
    params: ModelParams,
    k: int,
    grid: Grid,
    bracket: tuple[float, float] | None = None,
    rtol: float = 1e-12,
) -> float:
    """Locate the chi where mode k's discrete linearization turns singular.

    At the trivial state the assembled Jacobian maps the cosine-mode
    subspace span{(c_k, 0), (0, c_k)} to itself; the determinant of the
    projected 2x2 block is affine and decreasing in chi, and its root is the
    discrete counterpart of the analytic critical value (they differ by the
    O(dx^2) gap between continuous and discrete Laplacian eigenvalues).
    """
    n = grid.n_cells
    eq = equilibrium(params)
    u0 = np.full(n, eq.u_bar)
    v0 = np.full(n, eq.v_bar)
    c = np.cos(k * math.pi * grid.cell_centers() / params.length)
    cc = float(c @ c)
    e_u = np.concatenate((c, np.zeros(n)))
    e_v = np.concatenate((np.zeros(n), c))

    def block_det(chi: float) -> float:
        j = jacobian_fields(grid, replace(params, chi=chi), u0, v0)
        ju = j @ e_u
        jv = j @ e_v
        m11 = float(c @ ju[:n]) / cc
        m21 = float(c @ ju[n:]) / cc
        m12 = float(c @ jv[:n]) / cc
        m22 = float(c @ jv[n:]) / cc
        return m11 * m22 - m12 * m21

    if bracket is None:
        ref = chi_k(params, k)
        bracket = (0.2 * ref, 5.0 * ref)
    lo, hi = bracket
    if block_det(lo) <= 0.0 or block_det(hi) >= 0.0:
        raise NumericalError(
            f"bifurcation bracket ({lo:g}, {hi:g}) does not straddle the crossing for mode {k}"
        )
    return float(brentq(block_det, lo, hi, rtol=rtol))


@dataclass
class ContinuationControls:
    """Step-size and tolerancing knobs for :func:`trace_branch`."""

    n_cells: int = 256
    s0: float | None = None
    ds_min: float = 1e-6
    ds_max: float | None = None
    grow_factor: float = 1.3
    newton_tol: float = 1e-11
    max_newton_iter: int = 15
    max_points_per_side: int = 200
    sides: tuple[int, ...] = (1, -1)
    estimate_stability: bool = True


def _augmented_newton(
    grid: Grid,
    params: ModelParams,
    x0: np.ndarray,
    chi0: float,
    constraint_row: np.ndarray,
    constraint_chi: float,
    constraint_value,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float]:
    """Newton on [residual; scalar constraint] in the (fields, chi) unknowns.

    ``constraint_value(x, chi)`` must be affine with gradient
    (constraint_row, constraint_chi). A stall below the double-precision
    residual floor counts as convergence (see :func:`residual_floor`).
    """
    n = grid.n_cells
    x = np.array(x0, dtype=float)
    chi = float(chi0)
    best: tuple[float, np.ndarray, float] | None = None
    for _ in range(max_iter):
        p = replace(params, chi=chi)
        r_u, r_v = residual_fields(grid, p, x[:n], x[n:])
        r = np.concatenate((r_u, r_v))
        cval = constraint_value(x, chi)
        r_norm = max(float(np.max(np.abs(r))), abs(cval))
        if r_norm < tol:
            return x, chi
        if best is None or r_norm < best[0]:
            best = (r_norm, x.copy(), chi)
        j = jacobian_fields(grid, p, x[:n], x[n:])
        dchi = _residual_chi_derivative(grid, p, x[:n], x[n:])
        aug = sp.bmat(
            [[j, dchi.reshape(-1, 1)], [constraint_row.reshape(1, -1), np.array([[constraint_chi]])]],
            format="csc",
        )
        rhs = -np.concatenate((r, [cval]))
        delta = spsolve(aug, rhs)
        if not np.all(np.isfinite(delta)):
            raise NoConvergenceError("singular augmented Jacobian", r_norm)
        x = x + delta[:-1]
        chi = chi + float(delta[-1])
        if np.any(x[n:] <= V_FLOOR):
            raise NoConvergenceError("receptor floor crossed during continuation", r_norm)
    p = replace(params, chi=chi)
    r_u, r_v = residual_fields(grid, p, x[:n], x[n:])
    r_norm = max(float(np.max(np.abs(np.concatenate((r_u, r_v))))), abs(constraint_value(x, chi)))
    if r_norm < tol:
        return x, chi
    if best is not None and best[0] < r_norm:
        r_norm, x, chi = best
    if r_norm < residual_floor(grid, params, x):
        return x, chi
    raise NoConvergenceError(f"augmented Newton stalled at {r_norm:.3e}", r_norm)


def trace_branch(
    params: ModelParams,
    k: int,
    s_max: float,
    controls: ContinuationControls | None = None,
) -> Branch:
    """Trace the mode-k branch up to |amplitude| = s_max on both sides.

    Each recorded point is Newton-converged to the controls' tolerance. A
    side that cannot proceed (arclength step below ds_min) leaves a partial
    branch and sets the stalled flag. ``s_max = 0`` performs no continuation
    and returns an empty branch.
    """
    c = controls or ContinuationControls()
    grid = Grid(n_cells=c.n_cells, length=params.length)
    report = nondegeneracy(params, k)
    if not report.nondegenerate:
        raise ModelDomainError(
            f"mode {k} is degenerate (resonates with j={report.offending_j}); "
            "the local branch is not simple"
        )
    chi_onset = chi_k(params, k)
    if s_max < 0.0:
        raise ModelDomainError(f"s_max must be nonnegative, got {s_max}")
    if s_max == 0.0:
        return Branch(k=k, chi_onset=chi_onset, points=[], stalled=False)

    n = grid.n_cells
    qk = q_k(params, k)
    s0 = c.s0 if c.s0 is not None else 1e-3 * params.lam / qk
    s0 = min(s0, 0.5 * s_max)
    x_grid = grid.cell_centers()
    cmode = np.cos(k * math.pi * x_grid / params.length)
    amp_row = np.concatenate((np.zeros(n), cmode)) * (2.0 / params.length * grid.dx)

    # Weighted arclength metric: L2 measure on fields plus the chi increment.
    w_field = grid.dx

    def weighted_dot(du: np.ndarray, dchi: float, eu: np.ndarray, echi: float) -> float:
        return float(du @ eu) * w_field + dchi * echi

    def amplitude_of(x: np.ndarray) -> float:
        return float(amp_row @ x - (2.0 / params.length) * np.sum(cmode) * grid.dx)

    def make_point(x: np.ndarray, chi: float, arclength: float) -> BranchPoint:
        p = replace(params, chi=chi)
        r_u, r_v = residual_fields(grid, p, x[:n], x[n:])
        point = BranchPoint(
            chi=chi,
            u=x[:n].copy(),
            v=x[n:].copy(),
            amplitude=amplitude_of(x),
            stability_sign=None,
            residual_inf=float(np.max(np.abs(np.concatenate((r_u, r_v))))),
            arclength=arclength,
        )
        if c.estimate_stability:
            point.stability_sign = stability_estimate(point, params).sign
        return point

    def pinned_point(s_target: float) -> tuple[np.ndarray, float]:
        u_seed, v_seed = branch_seed(params, k, s_target, grid)
        x_seed = np.concatenate((u_seed, v_seed))

        def constraint(x, chi):
            return amplitude_of(x) - s_target

        return _augmented_newton(
            grid, params, x_seed, chi_onset, amp_row, 0.0, constraint,
            c.newton_tol, c.max_newton_iter,
        )

    stalled = False
    sides: dict[int, list[BranchPoint]] = {}
    for side in c.sides:
        points: list[BranchPoint] = []
        try:
            x1, chi1 = pinned_point(side * s0)
            x2, chi2 = pinned_point(side * 2.0 * s0)
        except (NoConvergenceError, NumericalError):
            stalled = True
            sides[side] = points
            continue
        arclength = 0.0
        points.append(make_point(x1, chi1, arclength))
        step_vec = x2 - x1
        step_chi = chi2 - chi1
        h = math.sqrt(weighted_dot(step_vec, step_chi, step_vec, step_chi))
        arclength += h
        points.append(make_point(x2, chi2, arclength))

        x_prev, chi_prev = x1, chi1
        x_cur, chi_cur = x2, chi2
        ds_max = c.ds_max if c.ds_max is not None else 40.0 * h
        while abs(points[-1].amplitude) < s_max and len(points) < c.max_points_per_side:
            tan_u = x_cur - x_prev
            tan_chi = chi_cur - chi_prev
            norm = math.sqrt(weighted_dot(tan_u, tan_chi, tan_u, tan_chi))
            tan_u /= norm
            tan_chi /= norm

            def constraint(x, chi, _xc=x_cur, _cc=chi_cur, _tu=tan_u, _tc=tan_chi, _h=h):
                return weighted_dot(x - _xc, chi - _cc, _tu, _tc) - _h

            row = tan_u * w_field
            try:
                x_new, chi_new = _augmented_newton(
                    grid, params,
                    x_cur + h * tan_u, chi_cur + h * tan_chi,
                    row, tan_chi, constraint, c.newton_tol, c.max_newton_iter,
                )
            except (NoConvergenceError, NumericalError):
                h /= 2.0
                if h < c.ds_min:
                    stalled = True
                    break
                continue
            arclength += h
            x_prev, chi_prev = x_cur, chi_cur
            x_cur, chi_cur = x_new, chi_new
            points.append(make_point(x_new, chi_new, arclength))
            h = min(h * c.grow_factor, ds_max)
        sides[side] = points

    ordered: list[BranchPoint] = []
    if -1 in sides:
        ordered.extend(reversed(sides[-1]))
    if 1 in sides:
        ordered.extend(sides[1])
    if not ordered and not stalled:
        stalled = True
    return Branch(k=k, chi_onset=chi_onset, points=ordered, stalled=stalled)


@dataclass(frozen=True)
class PitchforkFit:
    """Least-squares summary of a traced branch.

    chi(s) is fit by a + b s + c s^2 + e s^4 (the quartic term absorbs the
    higher-order bend so the onset estimate is unbiased). ``chi_c`` estimates
    the bifurcation point, ``linear_coef`` should vanish for a pitchfork, and
    the sign of ``quadratic_coef`` is the measured turning direction.
    ``exponent`` is the fitted slope of log|s| against log|chi - chi_c|,
    which is 1/2 for a pitchfork; points whose chi gap drowns in the fit
    noise are excluded from that regression.
    """

    chi_c: float
    linear_coef: float
    quadratic_coef: float
    exponent: float
    n_points: int


def fit_pitchfork(branch: Branch) -> PitchforkFit:
    if len(branch.points) < 5:
        raise NumericalError(
            f"branch has {len(branch.points)} points; at least 5 needed for a quadratic fit"
        )
    s = np.array([p.amplitude for p in branch.points])
    chi = np.array([p.chi for p in branch.points])
    columns = (np.ones_like(s), s, s * s, s**4)
    scales = np.array([max(float(np.max(np.abs(col))), 1e-300) for col in columns])
    design = np.column_stack(columns) / scales
    coef, *_ = np.linalg.lstsq(design, chi, rcond=None)
    coef = coef / scales
    a, b, cq = (float(t) for t in coef[:3])
    noise = float(np.max(np.abs(design @ (coef * scales) - chi)))

    gap = np.abs(chi - a)
    mask = gap > 20.0 * noise + 1e-13 * max(abs(a), 1.0)
    if np.count_nonzero(mask) >= 4:
        slope = float(np.polyfit(np.log(gap[mask]), np.log(np.abs(s[mask])), 1)[0])
    else:
        slope = math.nan
    return PitchforkFit(
        chi_c=a, linear_coef=b, quadratic_coef=cq, exponent=slope, n_points=len(branch.points)
    )
