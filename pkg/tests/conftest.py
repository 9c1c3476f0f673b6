import numpy as np
import pytest

from doublephase import Mesh1D, WeightField, plap_shooting


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def mesh200():
    return Mesh1D(0.0, 1.0, 200)


@pytest.fixture
def unit_weight(mesh200):
    return WeightField.constant(mesh200, 1.0)


@pytest.fixture(scope="session")
def shoot():
    """Memoized shooting oracle: shoot(p, mesh, m) -> lambda."""
    cache = {}

    def call(p, mesh, m=1):
        key = (p, mesh.a, mesh.b, mesh.n, m)
        if key not in cache:
            cache[key] = plap_shooting(p, mesh, m)
        return cache[key]

    return call


def bisect_scalar(fn, lo, hi, tol=1e-15, iters=200):
    """Plain scalar bisection used as an in-suite oracle (fn decreasing)."""
    flo, fhi = fn(lo), fn(hi)
    assert flo > 0 > fhi, "oracle bracket must straddle the root"
    for _ in range(iters):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
