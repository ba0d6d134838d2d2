"""Model parameters, sensitivity laws, and the homogeneous equilibrium.

The package studies the one-dimensional receptor-ligand chemotaxis system

    u_t = (d1 u_x - chi u Phi'(v) v_x)_x + lambda - u,
    v_t = d2 v_xx + 1 - (1 + lambda) v + u,        x in (0, L),

with zero-flux boundaries. ``u`` is the ligand density, ``v`` the receptor
density, and ``Phi`` the sensitivity law translating receptor levels into a
perceived signal. The spatially constant state (u, v) = (lambda, 1) solves the
system for every chemoattraction strength ``chi``.

A more general system with ligand decay ``mu`` and receptor kinetics
``1 - alpha v + beta u`` reduces to the form above by rescaling; see
:func:`nondimensionalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ModelDomainError

__all__ = [
    "SensitivitySpec",
    "LINEAR",
    "LOGARITHMIC",
    "custom_sensitivity",
    "ModelParams",
    "RawParams",
    "Equilibrium",
    "equilibrium",
    "nondimensionalize",
    "sensitivity_at",
    "V_EQUILIBRIUM",
]

# The receptor equation's kinetics pin the equilibrium receptor density at 1.
V_EQUILIBRIUM = 1.0

ScalarFunc = Callable[[np.ndarray], np.ndarray]

# Relative tolerance of the construction-time finite-difference consistency
# check for user-supplied derivative chains; absolute floor guards the
# comparison when a derivative is identically zero.
_FD_CHECK_RTOL = 1e-6
_FD_CHECK_FLOOR = 1e-12
_FD_STEP = 1e-5


def _lin_phi(v):
    return np.asarray(v, dtype=float)


def _lin_phi1(v):
    return np.ones_like(np.asarray(v, dtype=float))


def _lin_phi23(v):
    return np.zeros_like(np.asarray(v, dtype=float))


def _log_phi(v):
    return np.log(v)


def _log_phi1(v):
    return 1.0 / np.asarray(v, dtype=float)


def _log_phi2(v):
    v = np.asarray(v, dtype=float)
    return -1.0 / v**2


def _log_phi3(v):
    v = np.asarray(v, dtype=float)
    return 2.0 / v**3


@dataclass(frozen=True)
class SensitivitySpec:
    """A sensitivity law Phi together with its first three derivatives.

    ``kind`` is one of ``"linear"`` (Phi(v) = v), ``"logarithmic"``
    (Phi(v) = ln v, the Weber-Fechner law), or ``"custom"``. Use the module
    constants :data:`LINEAR` and :data:`LOGARITHMIC`, or
    :func:`custom_sensitivity` for a user-supplied chain.
    """

    kind: str
    phi: ScalarFunc = field(repr=False)
    phi1: ScalarFunc = field(repr=False)
    phi2: ScalarFunc = field(repr=False)
    phi3: ScalarFunc = field(repr=False)

    def evaluate(self, v):
        """Return (Phi, Phi', Phi'', Phi''') at ``v``; requires v > 0."""
        arr = np.asarray(v, dtype=float)
        if np.any(arr <= 0.0):
            raise ModelDomainError(f"sensitivity evaluated at non-positive v = {np.min(arr):g}")
        return (
            np.asarray(self.phi(arr), dtype=float),
            np.asarray(self.phi1(arr), dtype=float),
            np.asarray(self.phi2(arr), dtype=float),
            np.asarray(self.phi3(arr), dtype=float),
        )


LINEAR = SensitivitySpec("linear", _lin_phi, _lin_phi1, _lin_phi23, _lin_phi23)
LOGARITHMIC = SensitivitySpec("logarithmic", _log_phi, _log_phi1, _log_phi2, _log_phi3)


def _check_derivative_pair(f: ScalarFunc, df: ScalarFunc, v: float, label: str) -> None:
    h = _FD_STEP
    approx = (float(f(v + h)) - float(f(v - h))) / (2.0 * h)
    exact = float(df(v))
    scale = max(abs(exact), _FD_CHECK_FLOOR / _FD_CHECK_RTOL)
    if abs(approx - exact) > _FD_CHECK_RTOL * scale:
        raise ModelDomainError(
            f"inconsistent custom sensitivity: finite difference of {label} at v={v:g} "
            f"gives {approx:.12g}, supplied derivative gives {exact:.12g}"
        )


def custom_sensitivity(
    phi: ScalarFunc, phi1: ScalarFunc, phi2: ScalarFunc, phi3: ScalarFunc
) -> SensitivitySpec:
    """Build a custom sensitivity law from an explicit derivative chain.

    The four callables must accept positive floats (numpy arrays are used in
    the solvers, so vectorized callables are strongly recommended). Each
    supplied derivative is validated against a central finite difference of
    its antiderivative at v = 1; an inconsistent chain is rejected.
    """
    spec = SensitivitySpec("custom", phi, phi1, phi2, phi3)
    _check_derivative_pair(phi, phi1, 1.0, "Phi")
    _check_derivative_pair(phi1, phi2, 1.0, "Phi'")
    _check_derivative_pair(phi2, phi3, 1.0, "Phi''")
    return spec


def sensitivity_at(spec: SensitivitySpec, v: float) -> tuple[float, float, float, float]:
    """Evaluate (Phi, Phi', Phi'', Phi''') at a single point v > 0."""
    p0, p1, p2, p3 = spec.evaluate(float(v))
    return float(p0), float(p1), float(p2), float(p3)


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ModelDomainError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the reduced system.

    ``chi`` may be any real number: positive for chemoattraction, negative for
    chemorepulsion (useful in stability experiments). All other constants must
    be strictly positive.
    """

    d1: float
    d2: float
    chi: float
    lam: float
    length: float
    sensitivity: SensitivitySpec

    def __post_init__(self):
        _require_positive("d1", self.d1)
        _require_positive("d2", self.d2)
        _require_positive("lambda", self.lam)
        _require_positive("length", self.length)
        if not math.isfinite(float(self.chi)):
            raise ModelDomainError(f"chi must be finite, got {self.chi!r}")


@dataclass(frozen=True)
class RawParams:
    """Coefficients of the general system before rescaling.

    The general receptor equation reads ``v_t = d2 v_xx + 1 - alpha v + beta u``
    and the ligand decays at rate ``mu``. All seven coefficients are strictly
    positive.
    """

    d1: float
    d2: float
    chi: float
    lam: float
    mu: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("d1", "d2", "chi", "lam", "mu", "alpha", "beta"):
            _require_positive(name, getattr(self, name))


@dataclass(frozen=True)
class Equilibrium:
    """The unique spatially constant steady state (u, v) = (lambda, 1)."""

    u_bar: float
    v_bar: float


def equilibrium(params: ModelParams) -> Equilibrium:
    """Return the homogeneous equilibrium; independent of d1, d2, chi, L."""
    return Equilibrium(u_bar=params.lam, v_bar=V_EQUILIBRIUM)


def nondimensionalize(raw: RawParams, length: float, sensitivity: SensitivitySpec) -> ModelParams:
    """Rescale the general system onto the reduced form.

    The transform divides time scales by the ligand decay rate ``mu`` and
    rescales the receptor field by (mu + beta lambda) / (alpha mu):

        d1 -> d1 / mu
        d2 -> d2 (mu + beta lambda) / (alpha mu)
        chi -> chi (mu + beta lambda) / (alpha mu^2)
        lambda -> lambda / mu

    Space is not rescaled, so the domain size passes through unchanged.
    """
    factor = (raw.mu + raw.beta * raw.lam) / (raw.alpha * raw.mu)
    return ModelParams(
        d1=raw.d1 / raw.mu,
        d2=factor * raw.d2,
        chi=raw.chi * factor / raw.mu,
        lam=raw.lam / raw.mu,
        length=_require_positive("length", length),
        sensitivity=sensitivity,
    )
