import warnings

import numpy as np
import pytest

from tvrir.transition import ReflectionTrack


@pytest.fixture
def toy():
    """Three reflections at integer TOAs, L=3, 2*eps/Ts = 3."""
    Ts, eps, N, L = 1.0, 1.5, 24, 3
    tracks = [
        ReflectionTrack.from_endpoints(3, 5, L),
        ReflectionTrack.from_endpoints(10, 8, L),
        ReflectionTrack.from_endpoints(16, 20, L),
    ]
    h0 = np.zeros(N)
    h0[[3, 10, 16]] = [1.0, 0.7, 0.5]
    hL = np.zeros(N)
    hL[[5, 8, 20]] = [1.0, 0.7, 0.5]
    return dict(Ts=Ts, eps=eps, N=N, L=L, tracks=tracks, h0=h0, hL=hL)


@pytest.fixture(autouse=True)
def _quiet_user_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield
