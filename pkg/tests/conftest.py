import numpy as np
import pytest

from nitrospec.synth import SynthConfig, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_synth():
    """A quick planted-signal dataset: 80 samples on a coarse 120-band grid."""
    return generate(SynthConfig(n_samples=80, n_bands=120, seed=3))


@pytest.fixture(scope="session")
def planted_three():
    """Three informative bands followed by 30 pure-noise bands."""
    r = np.random.default_rng(11)
    n = 120
    y = r.uniform(1.6, 3.4, n)
    signal = np.column_stack([y + r.normal(0, 0.05, n) for _ in range(3)])
    noise = r.normal(0, 1, (n, 30))
    return np.hstack([signal, noise]), y
