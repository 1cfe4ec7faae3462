"""Shared generators for randomized smooth inputs."""

import numpy as np
import pytest

from cfcontrol import DenseMatrixFamily


def make_smooth_fn(rng, scale=1.0):
    """Random smooth scalar function: polynomial plus trig plus soft exp."""
    c = rng.uniform(-scale, scale, 6)
    w = rng.uniform(0.5, 2.0)

    def fn(t):
        return (c[0] + c[1] * t + c[2] * t * t
                + c[3] * np.sin(w * t) + c[4] * np.cos(t)
                + c[5] * np.exp(0.3 * t))
    return fn


def make_positive_fn(rng, low=1.5):
    """Random smooth function bounded away from zero."""
    c = rng.uniform(-0.3, 0.3, 3)
    w = rng.uniform(0.5, 1.5)

    def fn(t):
        return low + c[0] * np.sin(w * t) + c[1] * np.cos(t) + c[2] * t * 0.1
    return fn


def make_dense_family(rng, dim, drift=0.4, base=0.5):
    """Random smooth matrix family with spectral norm around one."""
    a0 = rng.standard_normal((dim, dim)) * base / np.sqrt(dim)
    a1 = rng.standard_normal((dim, dim)) * drift / np.sqrt(dim)
    w = rng.uniform(0.8, 1.6)

    def mat(t, a0=a0, a1=a1, w=w):
        return a0 + np.sin(w * t) * a1
    return DenseMatrixFamily(mat, dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
