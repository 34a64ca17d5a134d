import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from paraprod.grid import Grid, Signal

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_signal(grid, rng, band=None):
    """Complex white noise, optionally band-limited to |k| <= band."""
    if band is None:
        return Signal(grid, rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
    spec = np.zeros(grid.size, dtype=complex)
    k = np.arange(-band, band + 1)
    spec[k % grid.size] = rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)
    return Signal.from_spectrum(grid, spec)


def direct_convolution(samples, kernel):
    """O(N^2) circular convolution sum_y a(y) b(x - y)."""
    n = len(samples)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return (kernel[idx] * samples[None, :]).sum(axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid10():
    return Grid(10)
