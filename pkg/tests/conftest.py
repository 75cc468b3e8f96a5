import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bearingtrack.preprocess import SpectrumVector  # noqa: E402

T0 = datetime(2004, 2, 12, 10, 32, 39)


def spectra(values, start=T0, step=timedelta(minutes=10)):
    """Wrap rows of ``values`` as timestamped SpectrumVectors."""
    return [SpectrumVector(v, 1.0, start + i * step, "t") for i, v in enumerate(np.asarray(values, float))]


def planar_spectra(n, dim=128, seed=0, offset=5.0):
    """Vectors on a 2D affine plane in R^dim, kept non-negative.

    The plane passes through the origin direction so that it also contains
    the zero vector's distances exactly: every vector is a*e1 + b*e2 with
    e1, e2 orthonormal and non-negative.
    """
    rng = np.random.default_rng(seed)
    e = np.zeros((2, dim))
    e[0, : dim // 2] = 1.0
    e[1, dim // 2:] = 1.0
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    ab = offset + rng.uniform(0.0, 2.0, size=(n, 2))
    return ab @ e, ab


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
