import numpy as np
import pytest

from headprint.geometry import Frame, SphericalAngles, from_spherical
from headprint.trace import HeadMovementTrace


def equator_trace(azimuths, period_ms=100, frame=Frame.VR, altitudes=None):
    az = np.asarray(azimuths, dtype=float)
    alt = np.zeros_like(az) if altitudes is None else np.asarray(altitudes, dtype=float)
    v = from_spherical(SphericalAngles(az, alt))
    return HeadMovementTrace(np.arange(len(az)) * period_ms, v, frame, "test")


def random_trace(rng, n, period_ms=100, frame=Frame.VR):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return HeadMovementTrace(np.arange(n) * period_ms, v, frame, "rand")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def minute_trace(rng):
    """60 s trace sampled every 100 ms (600 samples, last at 59.9 s)."""
    return random_trace(rng, 600)
