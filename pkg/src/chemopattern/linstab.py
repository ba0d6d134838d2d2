"""Linearized stability of the homogeneous equilibrium.

Perturbations about (lambda, 1) decompose into Neumann cosine modes
cos(k pi x / L). Mode k evolves under the 2x2 matrix

    J_k = [ -d1 mu_k - 1              chi u_bar Phi'(v_bar) mu_k ]
          [  1                        -d2 mu_k - 1 - lambda      ]

with mu_k = (k pi / L)^2. The trace is negative for every mode and every
positive parameter set, so instability is governed entirely by the sign of
det(J_k): the mode grows exactly when the determinant is negative, which
happens once chi exceeds the mode's critical value chi_k. The equilibrium
as a whole destabilizes at chi_0 = min_k chi_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ModelDomainError, NumericalError
from .model import ModelParams, V_EQUILIBRIUM, equilibrium, sensitivity_at

__all__ = [
    "ModeAnalysis",
    "ChiZeroResult",
    "StabilityVerdict",
    "spatial_eigenvalue",
    "mode_analysis",
    "chi_k",
    "chi_0",
    "is_unstable",
]

DEFAULT_K_MAX = 1000

# Relative tie tolerance below which two modes share the minimum of chi_k and
# the threshold is reported as degenerate (double bifurcation).
_TIE_RTOL = 1e-12


def spatial_eigenvalue(params: ModelParams, k: int) -> float:
    """Eigenvalue (k pi / L)^2 of -d^2/dx^2 under zero-flux boundaries."""
    if k < 1:
        raise ModelDomainError(f"mode index must be a positive integer, got {k}")
    return (k * math.pi / params.length) ** 2


def _coupling(params: ModelParams) -> float:
    """u_bar Phi'(v_bar), the strength of the chemotactic coupling at equilibrium."""
    _, p1, _, _ = sensitivity_at(params.sensitivity, V_EQUILIBRIUM)
    return equilibrium(params).u_bar * p1


@dataclass(frozen=True)
class ModeAnalysis:
    """Stability data of a single cosine mode."""

    k: int
    mu_k: float
    j11: float
    j12: float
    j21: float
    j22: float
    trace: float
    det: float
    growth_rates: tuple[complex, complex]
    chi_k: float


def mode_analysis(params: ModelParams, k: int) -> ModeAnalysis:
    """Assemble the mode-k stability matrix and its growth eigenvalues.

    The growth rates are the roots of r^2 - trace r + det, sorted by
    descending real part (ties broken by descending imaginary part). Mode
    k = 0 is rejected: its matrix has positive determinant for every chi, so
    it never participates in the instability.
    """
    mu = spatial_eigenvalue(params, k)
    j11 = -params.d1 * mu - 1.0
    j12 = params.chi * _coupling(params) * mu
    j21 = 1.0
    j22 = -params.d2 * mu - 1.0 - params.lam
    trace = j11 + j22
    det = j11 * j22 - j12 * j21

    disc = trace * trace - 4.0 * det
    if disc >= 0.0:
        root = math.sqrt(disc)
        rates = (complex((trace + root) / 2.0), complex((trace - root) / 2.0))
    else:
        root = math.sqrt(-disc)
        rates = (complex(trace / 2.0, root / 2.0), complex(trace / 2.0, -root / 2.0))
    rates = tuple(sorted(rates, key=lambda r: (-r.real, -r.imag)))

    return ModeAnalysis(
        k=k,
        mu_k=mu,
        j11=j11,
        j12=j12,
        j21=j21,
        j22=j22,
        trace=trace,
        det=det,
        growth_rates=rates,
        chi_k=chi_k(params, k),
    )


def chi_k(params: ModelParams, k: int) -> float:
    """Critical chemoattraction strength at which mode k becomes neutral.

    det(J_k) is affine and strictly decreasing in chi; it vanishes at

        chi_k = (d1 mu_k + 1)(d2 mu_k + 1 + lambda) / (u_bar Phi'(v_bar) mu_k).

    Requires an attractive coupling, i.e. Phi'(v_bar) > 0; otherwise no finite
    critical value exists and a ModelDomainError is raised.
    """
    mu = spatial_eigenvalue(params, k)
    coupling = _coupling(params)
    if coupling <= 0.0:
        raise ModelDomainError(
            f"no finite critical chemoattraction value: u_bar Phi'(v_bar) = {coupling:g} <= 0"
        )
    return (params.d1 * mu + 1.0) * (params.d2 * mu + 1.0 + params.lam) / (coupling * mu)


@dataclass(frozen=True)
class ChiZeroResult:
    """Instability threshold chi_0 with its minimizing mode."""

    chi0: float
    k_star: int
    degenerate: bool


def chi_0(params: ModelParams, k_max: int = DEFAULT_K_MAX) -> ChiZeroResult:
    """Minimize chi_k over modes 1..k_max and certify global minimality.

    chi_k grows like d1 d2 mu_k for large k, so the minimum over all positive
    integers is attained at finite k. Viewing chi as a function of the
    continuous variable mu = (k pi / L)^2,

        chi(mu) = (d1 d2 mu + d1 (1 + lambda) + d2 + (1 + lambda) / mu) / coupling

    has a unique interior minimizer mu* = sqrt((1 + lambda) / (d1 d2)). The
    scan is provably global once mu_{k_max} >= mu* and chi_{k_max} exceeds the
    scanned minimum; both are verified and a NumericalError asks for a larger
    k_max otherwise.

    A tie between two distinct modes (relative gap below 1e-12) is a double
    bifurcation; the smaller mode is reported with ``degenerate=True``.
    """
    if k_max < 1:
        raise ModelDomainError(f"k_max must be >= 1, got {k_max}")
    values = [chi_k(params, k) for k in range(1, k_max + 1)]
    k_star = min(range(k_max), key=values.__getitem__) + 1
    chi0 = values[k_star - 1]

    mu_star = math.sqrt((1.0 + params.lam) / (params.d1 * params.d2))
    if spatial_eigenvalue(params, k_max) < mu_star or values[-1] <= chi0 * (1.0 + _TIE_RTOL):
        raise NumericalError(
            f"k_max={k_max} too small to certify the global minimum of chi_k; "
            f"continuous minimizer sits at mode ~{math.sqrt(mu_star) * params.length / math.pi:.1f}"
        )

    degenerate = any(
        k + 1 != k_star and value <= chi0 * (1.0 + _TIE_RTOL) for k, value in enumerate(values)
    )
    return ChiZeroResult(chi0=chi0, k_star=k_star, degenerate=degenerate)


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the equilibrium stability test at the configured chi."""

    unstable: bool
    witness_k: int | None
    chi0: float
    k_star: int


def is_unstable(params: ModelParams, k_max: int = DEFAULT_K_MAX) -> StabilityVerdict:
    """Decide stability of (lambda, 1): unstable if and only if chi > chi_0.

    When unstable, the witness is a mode with negative determinant (a growing
    cosine perturbation). Chemorepulsion (chi < 0) and chi = 0 are always
    stable: every mode then has positive determinant and negative trace.
    """
    result = chi_0(params, k_max)
    unstable = params.chi > result.chi0
    witness = None
    if unstable:
        witness = result.k_star
        if not mode_analysis(params, witness).det < 0.0:
            # chi barely above threshold can round det to zero; report honestly.
            unstable = False
            witness = None
    return StabilityVerdict(
        unstable=unstable, witness_k=witness, chi0=result.chi0, k_star=result.k_star
    )
