"""Numerical laboratory for a 1D receptor-ligand chemotaxis model.

Four entry points mirror the CLI subcommands:

* :mod:`chemopattern.linstab` - per-mode stability of the constant state and
  the instability threshold in the chemoattraction strength.
* :mod:`chemopattern.bifurcation` - pitchfork classification of the branches
  of nonconstant steady states (turning direction, stability).
* :mod:`chemopattern.pde` - finite-volume IMEX integration of the
  time-dependent system with pattern diagnostics.
* :mod:`chemopattern.steady` - Newton solution of the stationary system and
  pseudo-arclength continuation of the branches, cross-validating the
  analytical classification.
"""

from .errors import (
    ChemopatternError,
    ConfigError,
    DegenerateModeError,
    ModelDomainError,
    NoConvergenceError,
    NumericalError,
    StepRejectedError,
)
from .model import (
    LINEAR,
    LOGARITHMIC,
    Equilibrium,
    ModelParams,
    RawParams,
    SensitivitySpec,
    custom_sensitivity,
    equilibrium,
    nondimensionalize,
    sensitivity_at,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ChemopatternError",
    "ConfigError",
    "DegenerateModeError",
    "ModelDomainError",
    "NoConvergenceError",
    "NumericalError",
    "StepRejectedError",
    "LINEAR",
    "LOGARITHMIC",
    "Equilibrium",
    "ModelParams",
    "RawParams",
    "SensitivitySpec",
    "custom_sensitivity",
    "equilibrium",
    "nondimensionalize",
    "sensitivity_at",
]
