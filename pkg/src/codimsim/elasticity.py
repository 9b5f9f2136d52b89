"""Mixed-dimensional hyperelastic energies with analytic derivatives.

Shells combine a membrane model (StVK / neo-Hookean / orthotropic) with a
discrete-hinge bending term; rods carry a stretch energy; volumes use fixed
corotated elasticity. All energies vanish with zero gradient at rest, and all
Hessians can be projected per element to positive semidefinite.
"""

import numpy as np
from numba import njit, prange

from . import strain_limit as _sl
from ._math import outer, project_psd
from .world import MODEL_IDS, SimMesh

# ---------------------------------------------------------------------------
# Membrane energies via the Green-strain chain
# ---------------------------------------------------------------------------

_I2 = np.eye(2)


def _green_strain(f):
    c = np.einsum("nab,nac->nbc", f, f)
    return 0.5 * (c - _I2), c


def _stvk_st(e, mu, lam):
    """Second PK stress and constant tangent for StVK; e is (N,2,2)."""
    tr = np.trace(e, axis1=1, axis2=2)
    s = 2.0 * mu[:, None, None] * e + lam[:, None, None] * tr[:, None, None] * _I2
    n = e.shape[0]
    t = np.zeros((n, 2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            for m in range(2):
                for j in range(2):
                    t[:, a, b, m, j] = mu * (
                        (a == m) * (b == j) + (a == j) * (b == m)
                    ) + lam * (a == b) * (m == j)
    psi = mu * np.einsum("nab,nab->n", e, e) + 0.5 * lam * tr * tr
    return psi, s, t


def _neohookean_st(e, mu, lam):
    """Membrane neo-Hookean: psi = mu/2 (I1 - 2) - mu ln J + lam/2 (ln J)^2."""
    c = 2.0 * e + _I2
    det = c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] * c[:, 1, 0]
    if np.any(det <= 0.0):
        raise ValueError("neo-Hookean membrane requires positive metric determinant")
    logj = 0.5 * np.log(det)
    b = np.empty_like(c)
    b[:, 0, 0] = c[:, 1, 1]
    b[:, 1, 1] = c[:, 0, 0]
    b[:, 0, 1] = -c[:, 0, 1]
    b[:, 1, 0] = -c[:, 1, 0]
    b /= det[:, None, None]
    i1 = c[:, 0, 0] + c[:, 1, 1]
    psi = 0.5 * mu * (i1 - 2.0) - mu * logj + 0.5 * lam * logj * logj
    s = mu[:, None, None] * (_I2 - b) + (lam * logj)[:, None, None] * b
    coeff = 2.0 * mu - 2.0 * lam * logj
    t = 0.5 * coeff[:, None, None, None, None] * (
        np.einsum("nam,njb->nabmj", b, b) + np.einsum("naj,nmb->nabmj", b, b)
    ) + lam[:, None, None, None, None] * np.einsum("nab,nmj->nabmj", b, b)
    return psi, s, t


def _orthotropic_st(e, moduli, limits, use_barrier):
    """Stress/tangent from the anisotropic basis; loops triangles (small sets)."""
    n = e.shape[0]
    psi = np.empty(n)
    s = np.empty((n, 2, 2))
    t = np.zeros((n, 2, 2, 2, 2))
    for i in range(n):
        comps = (e[i, 0, 0], e[i, 0, 1], e[i, 1, 1])
        p, g, h = _sl.aniso_psi(comps, moduli, limits, barrier=use_barrier)
        psi[i] = p
        s[i, 0, 0] = g[0]
        s[i, 1, 1] = g[2]
        s[i, 0, 1] = s[i, 1, 0] = 0.5 * g[1]
        # Map the (E11, E12, E22) Hessian onto symmetric tensor indices.
        idx = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}
        wgt = {0: 1.0, 1: 0.5, 2: 1.0}
        for ab, ai in idx.items():
            for mj, mi in idx.items():
                t[i, ab[0], ab[1], mj[0], mj[1]] = (
                    h[ai, mi] * wgt[ai] * wgt[mi]
                )
    return psi, s, t


def membrane_jacobian(w_map):
    """Constant chain dvec(F)/dx as (N, 6, 9) for triangles."""
    n = w_map.shape[0]
    jac = np.zeros((n, 6, 9))
    for b in range(3):
        for c in range(2):
            for i in range(3):
                jac[:, b * 2 + c, i * 3 + b] = w_map[:, i, c]
    return jac


def membrane_batch(f, w_map, volume, mu, lam, model_id, project=True,
                   moduli=None, limits=None, use_barrier=False, jac=None):
    """Energy, per-node gradients (N,9) and Hessians (N,9,9) of a membrane set."""
    e, _ = _green_strain(f)
    if model_id == MODEL_IDS["stvk"]:
        psi, s, t = _stvk_st(e, mu, lam)
    elif model_id == MODEL_IDS["neohookean"]:
        psi, s, t = _neohookean_st(e, mu, lam)
    else:
        psi, s, t = _orthotropic_st(e, moduli, limits, use_barrier)

    n = f.shape[0]
    p = np.einsum("nae,nec->nac", f, s)
    h4 = np.einsum("ab,ndc->nacbd", np.eye(3), s) + np.einsum(
        "nae,necdj,nbj->nacbd", f, t, f
    )
    g_x = np.einsum("nbc,nic->nib", p, w_map).reshape(n, 9)
    h_f = h4.reshape(n, 6, 6)
    if project:
        h_f = _batch_project(h_f)
    if jac is None:
        jac = membrane_jacobian(w_map)
    h_x = np.swapaxes(jac, 1, 2) @ h_f @ jac
    vol = np.asarray(volume)
    return vol * psi, vol[:, None] * g_x, vol[:, None, None] * h_x


def _batch_project(h):
    w, v = np.linalg.eigh(h)
    w = np.maximum(w, 0.0)
    return np.einsum("nik,nk,njk->nij", v, w, v)


def membrane_energy(x0, x1, x2, rest_inv, volume, mu, lam, model="stvk",
                    project=True, moduli=None, limits=None, use_barrier=False):
    """Single-triangle membrane energy with gradient (3,3) and Hessian (9,9)."""
    x = np.vstack([x0, x1, x2]).astype(np.float64)
    tris = np.array([[0, 1, 2]])
    f = _sl.deformation_gradients(x, tris, rest_inv[None])
    w = _sl._w_map(rest_inv[None])
    e, g, h = membrane_batch(
        f, w, np.array([volume]), np.array([mu]), np.array([lam]),
        MODEL_IDS[model], project=project, moduli=moduli, limits=limits,
        use_barrier=use_barrier,
    )
    return float(e[0]), g[0].reshape(3, 3), h[0]


# ---------------------------------------------------------------------------
# Discrete-hinge bending
# ---------------------------------------------------------------------------


@njit(cache=True)
def dihedral_angle(x0, x1, x2, x3):
    """Signed dihedral angle about edge (x0, x1); x2/x3 oppose the two faces."""
    a = x1 - x0
    b = x2 - x0
    c = x3 - x0
    n1 = np.empty(3)
    n1[0] = a[1] * b[2] - a[2] * b[1]
    n1[1] = a[2] * b[0] - a[0] * b[2]
    n1[2] = a[0] * b[1] - a[1] * b[0]
    n2 = np.empty(3)
    n2[0] = c[1] * a[2] - c[2] * a[1]
    n2[1] = c[2] * a[0] - c[0] * a[2]
    n2[2] = c[0] * a[1] - c[1] * a[0]
    m = np.empty(3)
    m[0] = n1[1] * n2[2] - n1[2] * n2[1]
    m[1] = n1[2] * n2[0] - n1[0] * n2[2]
    m[2] = n1[0] * n2[1] - n1[1] * n2[0]
    l = np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    y = (m[0] * a[0] + m[1] * a[1] + m[2] * a[2]) / l
    z = n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2]
    return np.arctan2(y, z)


@njit(cache=True)
def _skew(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@njit(cache=True)
def _cross(a, b):
    c = np.empty(3)
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]
    return c


@njit(cache=True, inline="always")
def _mm33(a, b):
    c = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            c[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return c


@njit(cache=True, inline="always")
def _set_block(h, i, j, blk):
    for a in range(3):
        for b in range(3):
            h[3 * i + a, 3 * j + b] += blk[a, b]


@njit(cache=True)
def dihedral_grad_hess(x0, x1, x2, x3):
    """(theta, grad (12,), hess (12,12)) of the dihedral angle.

    Built from the chain theta = atan2((n1 x n2).a/|a|, n1.n2) over the edge
    and wing difference vectors a = x1-x0, b = x2-x0, c = x3-x0.
    """
    a = x1 - x0
    b = x2 - x0
    c = x3 - x0
    n1 = _cross(a, b)
    n2 = _cross(c, a)
    sa = _skew(a)
    sb = _skew(b)
    sc = _skew(c)
    sn1 = _skew(n1)
    sn2 = _skew(n2)

    # z = n1 . n2
    gz = np.empty(9)
    gz[0:3] = _cross(b, n2) - _cross(c, n1)
    gz[3:6] = -_cross(a, n2)
    gz[6:9] = _cross(a, n1)

    hz = np.zeros((9, 9))
    sbsc = _mm33(sb, sc)
    sbsa = _mm33(sb, sa)
    sasc = _mm33(sa, sc)
    sasa = _mm33(sa, sa)
    # J1^T J2 blocks and their transposes.
    _set_block(hz, 0, 0, sbsc + sbsc.T)
    _set_block(hz, 0, 2, -sbsa)
    _set_block(hz, 2, 0, -sbsa.T)
    _set_block(hz, 1, 0, -sasc)
    _set_block(hz, 0, 1, -sasc.T)
    _set_block(hz, 1, 2, sasa)
    _set_block(hz, 2, 1, sasa.T)
    _set_block(hz, 0, 1, -sn2)
    _set_block(hz, 1, 0, sn2)
    _set_block(hz, 2, 0, -sn1)
    _set_block(hz, 0, 2, sn1)

    # w = (n1 x n2) . a
    m = _cross(n1, n2)
    r1 = _cross(n2, a)
    r2 = _cross(a, n1)
    gw = np.empty(9)
    gw[0:3] = _cross(b, r1) - _cross(c, r2) + m
    gw[3:6] = -_cross(a, r1)
    gw[6:9] = _cross(a, r2)

    hw = np.zeros((9, 9))
    d1aa = -_mm33(sa, sc) + sn2  # dr1/da
    d1ca = _mm33(sa, sa)  # dr1/dc
    d2aa = -sn1 - _mm33(sa, sb)  # dr2/da
    d2ba = _mm33(sa, sa)  # dr2/db
    d3aa = _mm33(sn2, sb) + _mm33(sn1, sc)
    d3ba = -_mm33(sn2, sa)
    d3ca = -_mm33(sn1, sa)
    # J1^T dr1 rows (a: sb, b: -sa).
    _set_block(hw, 0, 0, _mm33(sb, d1aa))
    _set_block(hw, 0, 2, _mm33(sb, d1ca))
    _set_block(hw, 1, 0, -_mm33(sa, d1aa))
    _set_block(hw, 1, 2, -_mm33(sa, d1ca))
    # J2^T dr2 rows (a: -sc, c: sa).
    _set_block(hw, 0, 0, -_mm33(sc, d2aa))
    _set_block(hw, 0, 1, -_mm33(sc, d2ba))
    _set_block(hw, 2, 0, _mm33(sa, d2aa))
    _set_block(hw, 2, 1, _mm33(sa, d2ba))
    # J3^T dr3 row (a: I).
    _set_block(hw, 0, 0, d3aa)
    _set_block(hw, 0, 1, d3ba)
    _set_block(hw, 0, 2, d3ca)
    # Cross-derivative contractions.
    sr1 = _skew(r1)
    sr2 = _skew(r2)
    _set_block(hw, 0, 1, -sr1)
    _set_block(hw, 1, 0, sr1)
    _set_block(hw, 2, 0, -sr2)
    _set_block(hw, 0, 2, sr2)

    # y = w / |a|
    l = np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    ahat = a / l
    w_val = m[0] * a[0] + m[1] * a[1] + m[2] * a[2]
    inv_l = 1.0 / l
    gy = gw * inv_l
    gy[0:3] -= (w_val * inv_l * inv_l) * ahat
    hy = hw * inv_l
    coef = inv_l * inv_l
    for i in range(9):
        for jj in range(3):
            hy[i, jj] -= gw[i] * ahat[jj] * coef
            hy[jj, i] -= gw[i] * ahat[jj] * coef
    for i in range(3):
        for jj in range(3):
            hy[i, jj] += 2.0 * w_val * coef * inv_l * ahat[i] * ahat[jj]
            hy[i, jj] -= w_val * coef * (
                (1.0 if i == jj else 0.0) - ahat[i] * ahat[jj]
            ) * inv_l
    y = w_val * inv_l

    # theta = atan2(y, z)
    z = n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2]
    r2_ = y * y + z * z
    g9 = (z * gy - y * gz) / r2_
    u9 = 2.0 * y * gy + 2.0 * z * gz
    h9 = np.empty((9, 9))
    inv_r2 = 1.0 / r2_
    for i in range(9):
        for jj in range(9):
            h9[i, jj] = (
                z * hy[i, jj] - y * hz[i, jj] + gz[i] * gy[jj] - gy[i] * gz[jj]
            ) * inv_r2 - g9[i] * u9[jj] * inv_r2
    for i in range(9):
        for jj in range(i + 1, 9):
            s = 0.5 * (h9[i, jj] + h9[jj, i])
            h9[i, jj] = s
            h9[jj, i] = s

    # Map base differences (a, b, c) onto (x0, x1, x2, x3).
    g12 = np.empty(12)
    g12[0:3] = -(g9[0:3] + g9[3:6] + g9[6:9])
    g12[3:6] = g9[0:3]
    g12[6:9] = g9[3:6]
    g12[9:12] = g9[6:9]
    h12 = np.empty((12, 12))
    for bi in range(3):
        for bj in range(3):
            for i in range(3):
                for jj in range(3):
                    h12[3 + 3 * bi + i, 3 + 3 * bj + jj] = h9[3 * bi + i, 3 * bj + jj]
    for bj in range(3):
        for i in range(3):
            for jj in range(3):
                s = h9[0 + i, 3 * bj + jj] + h9[3 + i, 3 * bj + jj] + \
                    h9[6 + i, 3 * bj + jj]
                h12[i, 3 + 3 * bj + jj] = -s
    for bi in range(3):
        for i in range(3):
            for jj in range(3):
                s = h9[3 * bi + i, 0 + jj] + h9[3 * bi + i, 3 + jj] + \
                    h9[3 * bi + i, 6 + jj]
                h12[3 + 3 * bi + i, jj] = -s
    for i in range(3):
        for jj in range(3):
            s = 0.0
            for bi in range(3):
                for bj in range(3):
                    s += h9[3 * bi + i, 3 * bj + jj]
            h12[i, jj] = s
    theta = np.arctan2(y, z)
    return theta, g12, h12


@njit(cache=True, inline="always")
def _wrap_angle(d):
    while d > np.pi:
        d -= 2.0 * np.pi
    while d < -np.pi:
        d += 2.0 * np.pi
    return d


@njit(cache=True)
def bending_kernel(x0, x1, x2, x3, rest_angle, stiffness, project):
    theta, g, h = dihedral_grad_hess(x0, x1, x2, x3)
    d = _wrap_angle(theta - rest_angle)
    energy = stiffness * d * d
    grad = (2.0 * stiffness * d) * g
    hess = 2.0 * stiffness * (outer(g, g) + d * h)
    if project:
        hess = project_psd(hess)
    return energy, grad, hess


@njit(cache=True, parallel=True)
def bending_batch(x, hinges, rest_angle, stiffness, project):
    n = hinges.shape[0]
    energies = np.empty(n)
    grads = np.empty((n, 12))
    hesses = np.empty((n, 12, 12))
    for i in prange(n):
        e, g, h = bending_kernel(
            x[hinges[i, 0]],
            x[hinges[i, 1]],
            x[hinges[i, 2]],
            x[hinges[i, 3]],
            rest_angle[i],
            stiffness[i],
            project,
        )
        energies[i] = e
        grads[i] = g
        hesses[i] = h
    return energies, grads, hesses


@njit(cache=True)
def bending_energy_only(x, hinges, rest_angle, stiffness):
    total = 0.0
    for i in range(hinges.shape[0]):
        theta = dihedral_angle(
            x[hinges[i, 0]], x[hinges[i, 1]], x[hinges[i, 2]], x[hinges[i, 3]]
        )
        d = _wrap_angle(theta - rest_angle[i])
        total += stiffness[i] * d * d
    return total


def bending_energy(x0, x1, x2, x3, rest_angle, stiffness, project=True):
    """Single-hinge bending energy, gradient (4,3) and Hessian (12,12)."""
    pts = [np.asarray(p, dtype=np.float64) for p in (x0, x1, x2, x3)]
    e, g, h = bending_kernel(*pts, float(rest_angle), float(stiffness), project)
    return float(e), g.reshape(4, 3), h


def hinge_rest_geometry(rest, hinges):
    """Rest angles and edge/height ratios L/h_avg for a hinge set."""
    n = len(hinges)
    angles = np.empty(n)
    ratios = np.empty(n)
    for i, (e0, e1, a, b) in enumerate(hinges):
        angles[i] = dihedral_angle(rest[e0], rest[e1], rest[a], rest[b])
        ln = np.linalg.norm(rest[e1] - rest[e0])
        a1 = 0.5 * np.linalg.norm(np.cross(rest[e1] - rest[e0], rest[a] - rest[e0]))
        a2 = 0.5 * np.linalg.norm(np.cross(rest[e1] - rest[e0], rest[b] - rest[e0]))
        h1 = 2.0 * a1 / ln
        h2 = 2.0 * a2 / ln
        ratios[i] = ln / (0.5 * (h1 + h2))
    return angles, ratios


# ---------------------------------------------------------------------------
# Rod stretch
# ---------------------------------------------------------------------------


def rod_stretch_batch(x, edges, rest_len, ks, project=True):
    """Energy (N,), gradients (N,6) and Hessians (N,6,6) of rod segments."""
    n = len(edges)
    if n == 0:
        return np.zeros(0), np.zeros((0, 6)), np.zeros((0, 6, 6))
    e = x[edges[:, 1]] - x[edges[:, 0]]
    ln = np.linalg.norm(e, axis=1)
    ehat = e / ln[:, None]
    strain = ln / rest_len - 1.0
    energy = 0.5 * ks * strain * strain * rest_len
    f = (ks * strain)[:, None] * ehat  # dE/dx1
    grads = np.concatenate([-f, f], axis=1)
    eye = np.eye(3)
    ee = np.einsum("ni,nj->nij", ehat, ehat)
    lam_perp = ks * strain / ln
    if project:
        lam_perp = np.maximum(lam_perp, 0.0)
    h_block = (ks / rest_len)[:, None, None] * ee + lam_perp[:, None, None] * (
        eye - ee
    )
    hesses = np.empty((n, 6, 6))
    hesses[:, 0:3, 0:3] = h_block
    hesses[:, 3:6, 3:6] = h_block
    hesses[:, 0:3, 3:6] = -h_block
    hesses[:, 3:6, 0:3] = -h_block
    return energy, grads, hesses


def rod_stretch_energy(x0, x1, rest_len, ks, project=True):
    """Single-segment stretch energy with gradient (2,3) and Hessian (6,6)."""
    x = np.vstack([x0, x1]).astype(np.float64)
    e, g, h = rod_stretch_batch(
        x, np.array([[0, 1]]), np.array([float(rest_len)]), np.array([float(ks)]),
        project=project,
    )
    return float(e[0]), g[0].reshape(2, 3), h[0]


# ---------------------------------------------------------------------------
# Fixed corotated tets
# ---------------------------------------------------------------------------


def _svd_rotation_variant(f):
    """SVD with proper rotations; reflections pushed into the last sigma."""
    u, s, vt = np.linalg.svd(f)
    v = np.swapaxes(vt, 1, 2)
    flip_u = np.linalg.det(u) < 0.0
    u[flip_u, :, 2] *= -1.0
    s[flip_u, 2] *= -1.0
    flip_v = np.linalg.det(v) < 0.0
    v[flip_v, :, 2] *= -1.0
    s[flip_v, 2] *= -1.0
    return u, s, v


def corotated_batch(f, w_map, volume, mu, lam, project=True):
    """Fixed corotated energy/grad/Hessian for (N,3,3) deformation gradients."""
    n = f.shape[0]
    u, sig, v = _svd_rotation_variant(f.copy())
    j = sig[:, 0] * sig[:, 1] * sig[:, 2]
    t = np.empty((n, 3))  # dJ/dsigma_i = product of the others
    t[:, 0] = sig[:, 1] * sig[:, 2]
    t[:, 1] = sig[:, 0] * sig[:, 2]
    t[:, 2] = sig[:, 0] * sig[:, 1]

    psi = mu * np.sum((sig - 1.0) ** 2, axis=1) + 0.5 * lam * (j - 1.0) ** 2
    g_s = 2.0 * mu[:, None] * (sig - 1.0) + (lam * (j - 1.0))[:, None] * t

    # sigma-space Hessian block.
    a_blk = np.empty((n, 3, 3))
    for i in range(3):
        for jj in range(3):
            if i == jj:
                a_blk[:, i, i] = 2.0 * mu + lam * t[:, i] * t[:, i]
            else:
                k = 3 - i - jj
                a_blk[:, i, jj] = lam * (t[:, i] * t[:, jj] + (j - 1.0) * sig[:, k])

    p = np.einsum("nik,nk,njk->nij", u, g_s, v)

    pairs = ((0, 1), (0, 2), (1, 2))
    modes = []
    lams = []
    if project:
        wa, va = np.linalg.eigh(a_blk)
        wa = np.maximum(wa, 0.0)
        for k in range(3):
            d = np.einsum("nik,njk->nij", u * va[:, None, :, k], v)
            modes.append(d)
            lams.append(wa[:, k])
    else:
        # Exact Hessian: keep the full sigma block via its eigen decomposition.
        wa, va = np.linalg.eigh(a_blk)
        for k in range(3):
            d = np.einsum("nik,njk->nij", u * va[:, None, :, k], v)
            modes.append(d)
            lams.append(wa[:, k])
    for (i, jj) in pairs:
        k = 3 - i - jj
        denom = np.maximum(np.abs(sig[:, i] + sig[:, jj]), 1e-12) * np.sign(
            sig[:, i] + sig[:, jj] + 1e-300
        )
        lam_tw = (g_s[:, i] + g_s[:, jj]) / denom
        lam_fl = 2.0 * mu - lam * (j - 1.0) * sig[:, k]
        if project:
            lam_tw = np.maximum(lam_tw, 0.0)
            lam_fl = np.maximum(lam_fl, 0.0)
        ui = u[:, :, i]
        uj = u[:, :, jj]
        vi = v[:, :, i]
        vj = v[:, :, jj]
        m_tw = (
            ui[:, :, None] * vj[:, None, :] - uj[:, :, None] * vi[:, None, :]
        ) / np.sqrt(2.0)
        m_fl = (
            ui[:, :, None] * vj[:, None, :] + uj[:, :, None] * vi[:, None, :]
        ) / np.sqrt(2.0)
        modes.extend([m_tw, m_fl])
        lams.extend([lam_tw, lam_fl])

    modes = np.stack(modes, axis=1)  # (N, 9, 3, 3)
    lams = np.stack(lams, axis=1)  # (N, 9)

    g_x = np.einsum("nbc,nic->nib", p, w_map).reshape(n, 12)
    mx = np.einsum("nkbc,nic->nkib", modes, w_map).reshape(n, 9, 12)
    h_x = np.einsum("nk,nki,nkj->nij", lams, mx, mx)
    vol = np.asarray(volume)
    return vol * psi, vol[:, None] * g_x, vol[:, None, None] * h_x


def tet_w_map(rest_inv):
    b = np.asarray(rest_inv)
    w = np.empty((b.shape[0], 4, 3))
    w[:, 0, :] = -(b[:, 0, :] + b[:, 1, :] + b[:, 2, :])
    w[:, 1, :] = b[:, 0, :]
    w[:, 2, :] = b[:, 1, :]
    w[:, 3, :] = b[:, 2, :]
    return w


def tet_deformation_gradients(positions, tets, rest_inv):
    x = np.asarray(positions, dtype=np.float64)
    ds = np.stack(
        [
            x[tets[:, 1]] - x[tets[:, 0]],
            x[tets[:, 2]] - x[tets[:, 0]],
            x[tets[:, 3]] - x[tets[:, 0]],
        ],
        axis=2,
    )
    return ds @ rest_inv


def fixed_corotated_tet_energy(x0, x1, x2, x3, rest_inv, volume, mu, lam,
                               project=True):
    """Single-tet energy with gradient (4,3) and Hessian (12,12)."""
    x = np.vstack([x0, x1, x2, x3]).astype(np.float64)
    f = tet_deformation_gradients(x, np.array([[0, 1, 2, 3]]), rest_inv[None])
    w = tet_w_map(rest_inv[None])
    e, g, h = corotated_batch(
        f, w, np.array([volume]), np.array([mu]), np.array([lam]), project=project
    )
    return float(e[0]), g[0].reshape(4, 3), h[0]


# ---------------------------------------------------------------------------
# Mass and volume lumping
# ---------------------------------------------------------------------------


def lump_mass_and_volume(mesh: SimMesh):
    """Node masses and per-element volumes for every codimension.

    Volumes: shells A*xi, rods L*pi*r^2 (stored), particles 4/3 pi r^3
    (stored), tets their rest volume. Element mass splits equally over nodes.
    """
    mass = np.zeros(mesh.n_nodes)
    volumes = {}

    if len(mesh.particles):
        vol = mesh.particle_volume
        np.add.at(mass, mesh.particles, mesh.particle_density * vol)
        volumes["particles"] = vol.copy()
    if len(mesh.rod_edges):
        vol = mesh.rod_volume
        m = mesh.rod_density * vol
        np.add.at(mass, mesh.rod_edges.ravel(), np.repeat(m / 2.0, 2))
        volumes["rods"] = vol.copy()
    if len(mesh.triangles):
        vol = mesh.tri_area * mesh.tri_thickness
        m = mesh.tri_density * vol
        np.add.at(mass, mesh.triangles.ravel(), np.repeat(m / 3.0, 3))
        volumes["triangles"] = vol
    if len(mesh.tets):
        vol = mesh.tet_volume
        if np.any(vol <= 0.0):
            raise ValueError("tets must be positively oriented with nonzero volume")
        m = mesh.tet_density * vol
        np.add.at(mass, mesh.tets.ravel(), np.repeat(m / 4.0, 4))
        volumes["tets"] = vol.copy()

    if np.any(mass < 0.0):
        raise ValueError("negative lumped mass")
    return mass, volumes
