"""Local branch classification at the critical values chi_k.

At chi = chi_k a branch of nonconstant steady states emerges from the
homogeneous equilibrium along the null direction (Q_k, 1) cos(k pi x / L).
The branch is a pitchfork: its expansion chi_k(s) = chi_k + K2 s + K3 s^2
has K2 = 0, so the turning direction and the stability of the small-amplitude
states are decided by the sign of the cubic coefficient K3 alone. K3 > 0
means the branch opens toward larger chi (supercritical) and the bifurcating
states are asymptotically stable; K3 < 0 means subcritical and unstable.

This module evaluates K3 from its general closed form for any smooth
sensitivity law, plus the fully resolved sign rules for the linear and
logarithmic laws, where the sign reduces to the position of d2 relative to
two explicit thresholds.

Normalization: the closed form naturally produces the product
(u_bar Phi'(v_bar) / (2 chi_k)) * K3. Both factors of the prefactor are
positive, so the sign is unaffected; ``k3`` values reported here are this
normalized quantity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModeError, ModelDomainError
from .linstab import chi_k, spatial_eigenvalue
from .model import ModelParams, V_EQUILIBRIUM, equilibrium, sensitivity_at
from .pde import Grid

__all__ = [
    "BranchClassification",
    "LogCaseIntermediates",
    "NondegeneracyReport",
    "q_k",
    "branch_seed",
    "k3_general",
    "classify_linear",
    "classify_log",
    "classify",
    "nondegeneracy",
]

# Equality tolerance for resonance/threshold hits, and the wider band that
# only flags a warning in the classification record.
_EXACT_RTOL = 1e-12
_NEAR_RTOL = 1e-6

# |k3| below this floor (scaled by the magnitude of its constituents) is
# reported as zero/indeterminate rather than assigned a side.
_SIGN_FLOOR = 1e-10


@dataclass(frozen=True)
class NondegeneracyReport:
    """Result of the mode-resonance scan d1 d2 j^2 k^2 (pi/L)^4 != lambda + 1."""

    nondegenerate: bool
    offending_j: int | None
    near_j: int | None
    j_checked: int


@dataclass(frozen=True)
class BranchClassification:
    """Per-mode branch record: cubic coefficient sign, direction, stability."""

    k: int
    q_k: float
    chi_k: float
    k2: float
    k3: float
    k3_sign: str  # "positive" | "negative" | "indeterminate"
    direction: str  # "right" | "left" | "indeterminate"
    stability: str  # "stable" | "unstable" | "indeterminate"
    nondegenerate: bool
    near_degenerate: bool


@dataclass(frozen=True)
class LogCaseIntermediates:
    """Quadratic-in-Q_k machinery behind the logarithmic sign rule.

    The sign of K3 equals the sign of (Q_k - q_hat) / (Q_k - q_tilde), where
    q_hat is the positive root of the quadratic A Q^2 + B Q + C and q_tilde is
    the pole coming from the second-harmonic resonance. Translated to d2,
    the numerator crosses zero at d2_star and the pole sits at
    d2_double_star. ``d2_star_formula`` is the equivalent published closed
    form, kept alongside the root-derived value as a cross-check.
    """

    a_coef: float
    b_coef: float
    c_coef: float
    delta: float
    q_hat: float
    q_tilde: float
    d2_star: float
    d2_star_formula: float
    d2_double_star: float


def q_k(params: ModelParams, k: int) -> float:
    """Slope of the null eigenvector: Q_k = d2 (k pi / L)^2 + 1 + lambda.

    The mode-k null space of the linearization at chi_k is spanned by
    (Q_k, 1) cos(k pi x / L); Q_k is the ligand-to-receptor amplitude ratio.
    Always exceeds lambda.
    """
    return params.d2 * spatial_eigenvalue(params, k) + 1.0 + params.lam


def branch_seed(
    params: ModelParams, k: int, s: float, grid: Grid
) -> tuple[np.ndarray, np.ndarray]:
    """First-order branch profile sampled at the grid's cell centers.

    Returns (lambda + s Q_k cos(k pi x / L), 1 + s cos(k pi x / L)). Valid as
    a Newton seed for small |s|; keeping |s| Q_k below about 0.2 lambda stays
    in the weakly nonlinear regime.
    """
    x = grid.cell_centers()
    c = np.cos(k * math.pi * x / params.length)
    eq = equilibrium(params)
    return eq.u_bar + s * q_k(params, k) * c, eq.v_bar + s * c


def nondegeneracy(params: ModelParams, k: int, j_max: int | None = None) -> NondegeneracyReport:
    """Check that no second mode resonates with mode k.

    The branch expansion requires d1 d2 j^2 k^2 (pi/L)^4 != lambda + 1 for
    every positive integer j != k. The left side is strictly increasing in j,
    so real-valued equality holds only at

        j* = sqrt((lambda + 1) / (d1 d2)) (L / pi)^2 / k,

    and the only integers that can violate the tolerance band are those
    inside [j* sqrt(1 - tol), j* sqrt(1 + tol)]; every other j is covered
    without being visited, whatever ``j_max`` a caller asks for. Equality is
    tested with relative tolerance 1e-12; anything within 1e-6 is reported
    as a near resonance without failing the check.
    """
    if k < 1:
        raise ModelDomainError(f"mode index must be a positive integer, got {k}")
    target = params.lam + 1.0
    base = params.d1 * params.d2 * k * k * (math.pi / params.length) ** 4
    j_star = math.sqrt(target / base)
    lo = max(1, math.floor(j_star * math.sqrt(1.0 - _NEAR_RTOL)))
    hi = math.ceil(j_star * math.sqrt(1.0 + _NEAR_RTOL))

    offending = None
    near = None
    for j in range(lo, hi + 1):
        if j == k:
            continue
        gap = abs(base * j * j - target)
        if gap <= _EXACT_RTOL * target:
            offending = j
            break
        if near is None and gap <= _NEAR_RTOL * target:
            near = j
    checked = max(j_max or 0, math.ceil(j_star) + 1)
    return NondegeneracyReport(
        nondegenerate=offending is None,
        offending_j=offending,
        near_j=near,
        j_checked=checked,
    )


def k3_general(params: ModelParams, k: int) -> float:
    """Normalized cubic branch coefficient for an arbitrary sensitivity law.

    Evaluates, with mu = (k pi / L)^2, u_bar = lambda, and the Phi derivatives
    taken at v_bar = 1:

        k3 = [ (Q_k / (2 u_bar Phi')) (d1 mu + 1) (Phi' Q_k + u_bar Phi'')
               (-u_bar Phi''/2 + Phi' Q_k - 3 Phi' (1 + lambda)/2) ]
             / (12 d1 d2 mu^2 - 3 (1 + lambda))
             - (u_bar Phi'''/2 + Phi'' Q_k) / 8.

    The denominator vanishes exactly at the second-harmonic resonance
    (j = 2k in the nondegeneracy condition); that case raises
    DegenerateModeError.
    """
    mu = spatial_eigenvalue(params, k)
    u_bar = equilibrium(params).u_bar
    _, p1, p2, p3 = sensitivity_at(params.sensitivity, V_EQUILIBRIUM)
    if p1 <= 0.0:
        raise ModelDomainError(f"cubic coefficient undefined: Phi'(v_bar) = {p1:g} <= 0")

    q = q_k(params, k)
    denom = 12.0 * params.d1 * params.d2 * mu * mu - 3.0 * (1.0 + params.lam)
    if abs(denom) <= _EXACT_RTOL * 3.0 * (1.0 + params.lam):
        raise DegenerateModeError(
            f"second-harmonic resonance at mode k={k}: "
            f"12 d1 d2 mu_k^2 = 3 (1 + lambda) within tolerance",
            offending_j=2 * k,
        )
    numer = (
        (q / (2.0 * u_bar * p1))
        * (params.d1 * mu + 1.0)
        * (p1 * q + u_bar * p2)
        * (-0.5 * u_bar * p2 + p1 * q - 1.5 * p1 * (1.0 + params.lam))
    )
    return numer / denom - 0.125 * (0.5 * u_bar * p3 + p2 * q)


def _k3_scale(params: ModelParams, k: int) -> float:
    """Magnitude scale of the two constituents of k3, for the sign floor."""
    mu = spatial_eigenvalue(params, k)
    u_bar = equilibrium(params).u_bar
    _, p1, p2, p3 = sensitivity_at(params.sensitivity, V_EQUILIBRIUM)
    q = q_k(params, k)
    denom = 12.0 * params.d1 * params.d2 * mu * mu - 3.0 * (1.0 + params.lam)
    if denom == 0.0:
        return math.inf
    numer = (
        (q / (2.0 * u_bar * p1))
        * (params.d1 * mu + 1.0)
        * (abs(p1 * q) + abs(u_bar * p2))
        * (abs(0.5 * u_bar * p2) + p1 * q + 1.5 * p1 * (1.0 + params.lam))
    )
    return abs(numer / denom) + 0.125 * (abs(0.5 * u_bar * p3) + abs(p2 * q))


def _sign_label(value: float, scale: float) -> str:
    if not math.isfinite(value) or abs(value) < _SIGN_FLOOR * (1.0 + scale):
        return "indeterminate"
    return "positive" if value > 0.0 else "negative"


def _build_classification(
    params: ModelParams, k: int, k3_value: float, k3_sign: str
) -> BranchClassification:
    report = nondegeneracy(params, k)
    if not report.nondegenerate:
        k3_sign = "indeterminate"
    direction = {"positive": "right", "negative": "left"}.get(k3_sign, "indeterminate")
    stability = {"positive": "stable", "negative": "unstable"}.get(k3_sign, "indeterminate")
    return BranchClassification(
        k=k,
        q_k=q_k(params, k),
        chi_k=chi_k(params, k),
        k2=0.0,
        k3=k3_value,
        k3_sign=k3_sign,
        direction=direction,
        stability=stability,
        nondegenerate=report.nondegenerate,
        near_degenerate=report.near_j is not None,
    )


def _k3_value_or_nan(params: ModelParams, k: int) -> float:
    try:
        return k3_general(params, k)
    except DegenerateModeError:
        return math.nan


def classify_linear(params: ModelParams, k: int) -> BranchClassification:
    """Branch classification for the linear law Phi(v) = v.

    The sign of K3 equals the sign of

        (1 + lambda - 2 d2 mu) / (1 + lambda - 4 d1 d2 mu^2),    mu = (k pi/L)^2,

    so in d2 it flips only at t1 = (lambda + 1)/(2 mu) and at the resonance
    t2 = (lambda + 1)/(4 d1 mu^2): positive outside [min(t1, t2), max(t1, t2)],
    negative strictly between, indeterminate on an exact threshold hit. When
    d1 = 1/(2 mu) the thresholds coincide and K3 > 0 for every admissible d2.
    """
    if params.sensitivity.kind != "linear":
        raise ModelDomainError(
            f"classify_linear requires the linear sensitivity, got {params.sensitivity.kind!r}"
        )
    mu = spatial_eigenvalue(params, k)
    t_zero = (params.lam + 1.0) / (2.0 * mu)
    t_pole = (params.lam + 1.0) / (4.0 * params.d1 * mu * mu)
    d2 = params.d2

    k3_value = _k3_value_or_nan(params, k)
    hit_zero = abs(d2 - t_zero) <= _EXACT_RTOL * t_zero
    hit_pole = abs(d2 - t_pole) <= _EXACT_RTOL * t_pole
    if hit_zero or hit_pole:
        sign = "indeterminate"
    elif abs(t_zero - t_pole) <= _EXACT_RTOL * max(t_zero, t_pole):
        sign = "positive"
    else:
        lo, hi = sorted((t_zero, t_pole))
        sign = "negative" if lo < d2 < hi else "positive"
    if sign != "indeterminate" and math.isfinite(k3_value):
        if abs(k3_value) < _SIGN_FLOOR * (1.0 + _k3_scale(params, k)):
            sign = "indeterminate"
    return _build_classification(params, k, k3_value, sign)


def classify_log(
    params: ModelParams, k: int
) -> tuple[BranchClassification, LogCaseIntermediates]:
    """Branch classification for the logarithmic law Phi(v) = ln v.

    sign K3 = sign((Q_k - q_hat) / (Q_k - q_tilde)) with q_hat the positive
    root of A Q^2 + B Q + C and q_tilde the second-harmonic pole. The
    discriminant of the quadratic is positive for every positive parameter
    set, and q_hat > 1 + lambda, which makes the d2 threshold d2_star always
    positive. Exactly at the pole (d2 = d2_double_star) the expansion is
    degenerate and the record is flagged accordingly.
    """
    if params.sensitivity.kind != "logarithmic":
        raise ModelDomainError(
            f"classify_log requires the logarithmic sensitivity, got {params.sensitivity.kind!r}"
        )
    mu = spatial_eigenvalue(params, k)
    lam = params.lam
    d1mu = params.d1 * mu

    a_coef = (d1mu + 1.0) / 2.0
    b_coef = 0.25 * lam * (7.0 * d1mu + 1.0) - 0.75 * (lam + 1.0) * (d1mu + 1.0)
    c_coef = -0.125 * lam * (lam + 1.0) * (12.0 * d1mu + 3.0)
    delta = b_coef * b_coef - 4.0 * a_coef * c_coef
    q_hat = (-b_coef + math.sqrt(delta)) / (2.0 * a_coef)
    q_tilde = (1.0 / (4.0 * d1mu) + 1.0) * (lam + 1.0)

    d2_star = (q_hat - 1.0 - lam) / mu
    d2_star_formula = (
        1.5 * lam / (d1mu + 1.0) - 0.25 - 2.0 * lam + math.sqrt(delta) / (d1mu + 1.0)
    ) / mu
    d2_double_star = (lam + 1.0) / (4.0 * params.d1 * mu * mu)
    if abs(d2_star - d2_star_formula) > 1e-8 * max(abs(d2_star), 1.0):
        warnings.warn(
            f"published d2_star form disagrees with the root-derived value at k={k}: "
            f"{d2_star_formula:.12g} vs {d2_star:.12g}; using the root-derived value",
            RuntimeWarning,
            stacklevel=2,
        )

    intermediates = LogCaseIntermediates(
        a_coef=a_coef,
        b_coef=b_coef,
        c_coef=c_coef,
        delta=delta,
        q_hat=q_hat,
        q_tilde=q_tilde,
        d2_star=d2_star,
        d2_star_formula=d2_star_formula,
        d2_double_star=d2_double_star,
    )

    q = q_k(params, k)
    k3_value = _k3_value_or_nan(params, k)
    scale = max(q, q_hat, q_tilde)
    if abs(q - q_tilde) <= _EXACT_RTOL * scale:
        sign = "indeterminate"  # sitting exactly on the pole
    elif abs(q - q_hat) <= _EXACT_RTOL * scale:
        sign = "indeterminate"
    else:
        sign = "positive" if (q - q_hat) / (q - q_tilde) > 0.0 else "negative"
    if sign != "indeterminate" and math.isfinite(k3_value):
        if abs(k3_value) < _SIGN_FLOOR * (1.0 + _k3_scale(params, k)):
            sign = "indeterminate"
    return _build_classification(params, k, k3_value, sign), intermediates


def classify(params: ModelParams, k: int) -> BranchClassification:
    """Classify mode k for whatever sensitivity the parameters carry.

    Linear and logarithmic laws dispatch to their resolved sign rules; a
    custom law falls back to the sign of the general closed form.
    """
    kind = params.sensitivity.kind
    if kind == "linear":
        return classify_linear(params, k)
    if kind == "logarithmic":
        return classify_log(params, k)[0]
    k3_value = _k3_value_or_nan(params, k)
    if math.isnan(k3_value):
        sign = "indeterminate"
    else:
        sign = _sign_label(k3_value, _k3_scale(params, k))
    return _build_classification(params, k, k3_value, sign)
