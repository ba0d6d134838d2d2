from __future__ import annotations

import numpy as np
import pytest

from chemopattern import LINEAR, LOGARITHMIC, ModelParams


@pytest.fixture
def log_unit_params() -> ModelParams:
    """The work-horse parameter set: d1 = d2 = lambda = L = 1, log sensitivity."""
    return ModelParams(d1=1.0, d2=1.0, chi=20.0, lam=1.0, length=1.0,
                       sensitivity=LOGARITHMIC)


@pytest.fixture
def linear_unit_params() -> ModelParams:
    return ModelParams(d1=1.0, d2=1.0, chi=20.0, lam=1.0, length=1.0, sensitivity=LINEAR)


def random_params(rng: np.random.Generator, sensitivity=LOGARITHMIC, chi=None) -> ModelParams:
    """Positive parameter draw on wide log-uniform ranges."""
    def draw(lo, hi):
        return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))

    return ModelParams(
        d1=draw(1e-2, 1e2),
        d2=draw(1e-2, 1e2),
        chi=float(rng.uniform(-30.0, 30.0)) if chi is None else chi,
        lam=draw(1e-1, 1e1),
        length=draw(0.3, 10.0),
        sensitivity=sensitivity,
    )
