"""Shared helpers for the test suite."""

import numpy as np
import pytest

from corrsearch.domain import ExponentialDensity, SpaceSpec
from corrsearch.sampler import SamplerSettings

HE_ZETA = 27.0 / 16.0


@pytest.fixture
def he_density():
    return ExponentialDensity(zeta=HE_ZETA, n_electrons=2)


@pytest.fixture
def h_density():
    return ExponentialDensity(zeta=1.0, n_electrons=1)


@pytest.fixture
def space3d():
    return SpaceSpec(dim=3, radius=10.0, n_electrons=2)


def fast_settings(**kw) -> SamplerSettings:
    """Small but statistically usable sampler budgets for unit tests."""
    base = dict(
        conditioning_points=64,
        samples=64,
        burn_in=128,
        thinning=2,
        walkers=1,
        sigma=0.5,
        seed=0,
        tune=True,
        workers=1,
    )
    base.update(kw)
    return SamplerSettings(**base)


def random_points(rng: np.random.Generator, n: int, dim: int, r_min: float = 0.1,
                  r_max: float = 4.0) -> np.ndarray:
    """Random points with radius in [r_min, r_max], shape (n, dim)."""
    out = np.empty((n, dim))
    k = 0
    while k < n:
        cand = rng.uniform(-r_max, r_max, size=(2 * n, dim))
        r = np.sqrt(np.sum(cand * cand, axis=-1))
        good = cand[(r > r_min) & (r < r_max)]
        take = min(n - k, good.shape[0])
        out[k : k + take] = good[:take]
        k += take
    return out
