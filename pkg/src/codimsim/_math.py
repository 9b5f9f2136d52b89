"""Small njit-compatible vector helpers shared by the geometry kernels."""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True, inline="always")
def norm_sq3(a):
    return a[0] * a[0] + a[1] * a[1] + a[2] * a[2]


@njit(cache=True, inline="always")
def norm3(a):
    return np.sqrt(norm_sq3(a))


@njit(cache=True, inline="always")
def cross3(a, b):
    c = np.empty(3)
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]
    return c


@njit(cache=True, inline="always")
def skew3(v):
    """Matrix m with m @ u == cross3(v, u)."""
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@njit(cache=True)
def outer(a, b):
    n = a.shape[0]
    m = b.shape[0]
    o = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            o[i, j] = a[i] * b[j]
    return o


@njit(cache=True)
def _chol_psd_test(a, shift):
    """In-place lower Cholesky attempt of (a + shift*I); True on success."""
    n = a.shape[0]
    for j in range(n):
        s = a[j, j] + shift
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0:
            return False
        d = np.sqrt(s)
        a[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / d
    return True


@njit(cache=True)
def project_psd(h, floor=0.0):
    """Clamp negative eigenvalues of a symmetric matrix to `floor`.

    A shifted Cholesky factorization screens matrices that are already
    (numerically) positive semidefinite; only indefinite ones pay for the
    eigendecomposition. The shift keeps the accepted minimum eigenvalue
    within -1e-12 of the matrix scale.
    """
    hs = 0.5 * (h + h.T)
    n = hs.shape[0]
    trace = 0.0
    for i in range(n):
        trace += abs(hs[i, i])
    shift = 1e-12 * (trace / n) if trace > 0.0 else 0.0
    work = hs.copy()
    if _chol_psd_test(work, shift):
        return hs
    w, v = np.linalg.eigh(hs)
    for i in range(n):
        if w[i] < floor:
            w[i] = floor
    return (v * w) @ v.T
