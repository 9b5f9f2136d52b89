"""Shared finite-difference oracles and test helpers."""

import numpy as np
import pytest


def fd_gradient(f, x, h=1e-6):
    """Central finite difference of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_jacobian(g, x, h=1e-6):
    """Central finite difference of a vector function (rows: d g / d x_i)."""
    x = np.asarray(x, dtype=np.float64)
    g0 = np.asarray(g(x))
    jac = np.zeros((x.size, g0.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        jac[i] = (np.asarray(g(xp)).ravel() - np.asarray(g(xm)).ravel()) / (2.0 * h)
    return jac


def rel_err(a, b, floor=1.0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(floor, np.abs(b).max())
    return np.abs(a - b).max() / scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
