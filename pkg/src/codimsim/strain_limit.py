"""Constitutive strain limiting for shell membranes.

An upper bound s on the principal stretches of each triangle's 3x2 deformation
gradient is enforced by a smoothly clamped barrier per singular value,
integrated over rest volume (area times thickness) and scaled by an adaptive
stiffness. The anisotropic variant replaces the membrane basis functions with
log barriers on reduced Green-strain components.
"""

from dataclasses import dataclass, field

import numpy as np

KAPPA_S_INITIAL = 1e3  # Pa
KAPPA_S_MAX = 1e5  # Pa
GAP_FRACTION = 1e-4  # doubling trigger: (s - sigma) < GAP_FRACTION * (s - shat)
SIGMA_SPLIT_EPS = 1e-12  # relative perturbation decoupling repeated sigmas


class StrainLimitError(RuntimeError):
    """Raised when a stretch reaches or exceeds the hard limit."""


@dataclass
class StrainLimitParams:
    s: float
    shat: float = 1.0
    kappa: float = KAPPA_S_INITIAL
    kappa_max: float = KAPPA_S_MAX

    def __post_init__(self):
        if self.s <= 1.0:
            raise ValueError("stretch limit s must exceed 1")
        if self.shat >= self.s:
            raise ValueError("activation threshold shat must be below s")


# ---------------------------------------------------------------------------
# Scalar barrier
# ---------------------------------------------------------------------------


def sl_barrier_normalized(y):
    """Barrier on limit-normalized strain y = (shat - sigma)/(s - shat)."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= -1.0):
        raise StrainLimitError("normalized strain at or beyond the limit (y <= -1)")
    out = np.where(y < 0.0, -np.square(y) * np.log1p(np.minimum(y, 0.0)), 0.0)
    return out if out.ndim else float(out)


def sl_barrier(sigma, s, shat):
    """Barrier value at stretch sigma; zero for sigma <= shat, divergent at s."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma >= s):
        raise StrainLimitError(f"stretch {np.max(sigma)} at or beyond limit {s}")
    y = (shat - sigma) / (s - shat)
    return sl_barrier_normalized(y)


def sl_barrier_derivs(sigma, s, shat):
    """(db/dsigma, d2b/dsigma2); both zero for sigma <= shat."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma >= s):
        raise StrainLimitError(f"stretch {np.max(sigma)} at or beyond limit {s}")
    w = s - shat
    y = (shat - sigma) / w
    active = y < 0.0
    ya = np.where(active, y, 0.0)
    one_py = 1.0 + ya
    db_dy = np.where(active, -2.0 * ya * np.log(one_py) - ya * ya / one_py, 0.0)
    d2b_dy2 = np.where(
        active,
        -2.0 * np.log(one_py) - 4.0 * ya / one_py + ya * ya / (one_py * one_py),
        0.0,
    )
    g = db_dy * (-1.0 / w)
    h = d2b_dy2 / (w * w)
    if g.ndim:
        return g, h
    return float(g), float(h)


# ---------------------------------------------------------------------------
# Deformation gradients
# ---------------------------------------------------------------------------


def triangle_rest_inverse(r0, r1, r2):
    """Inverse of the 2x2 rest tangent matrix of a triangle (local frame)."""
    e1 = np.asarray(r1, dtype=np.float64) - r0
    e2 = np.asarray(r2, dtype=np.float64) - r0
    n1 = np.linalg.norm(e1)
    if n1 == 0.0:
        raise ValueError("degenerate rest triangle (zero edge)")
    t1 = e1 / n1
    nrm = np.cross(e1, e2)
    if np.linalg.norm(nrm) == 0.0:
        raise ValueError("degenerate rest triangle (zero area)")
    t2 = np.cross(nrm / np.linalg.norm(nrm), t1)
    dm = np.array([[n1, np.dot(e2, t1)], [0.0, np.dot(e2, t2)]])
    return np.linalg.inv(dm)


def deformation_gradient(x0, x1, x2, rest_inverse):
    """3x2 deformation gradient mapping rest tangent coordinates to world."""
    ds = np.column_stack(
        [np.asarray(x1, dtype=np.float64) - x0, np.asarray(x2, dtype=np.float64) - x0]
    )
    return ds @ rest_inverse


def deformation_gradients(positions, tris, rest_inv):
    """Batched 3x2 deformation gradients: (N, 3, 2)."""
    x = np.asarray(positions, dtype=np.float64)
    e1 = x[tris[:, 1]] - x[tris[:, 0]]
    e2 = x[tris[:, 2]] - x[tris[:, 0]]
    ds = np.stack([e1, e2], axis=2)
    return ds @ rest_inv


def singular_values(f):
    """Descending singular values of one or many 3x2 deformation gradients."""
    return np.linalg.svd(np.asarray(f, dtype=np.float64), compute_uv=False)


def max_stretch(positions, tris, rest_inv):
    """Largest principal stretch over all triangles (line-search filter probe)."""
    if len(tris) == 0:
        return 0.0
    f = deformation_gradients(positions, tris, rest_inv)
    return float(np.linalg.svd(f, compute_uv=False).max())


# ---------------------------------------------------------------------------
# Batched SVD eigensystem for energies of 3x2 singular values
# ---------------------------------------------------------------------------


def _svd_3x2(f):
    """Thin SVD of (N,3,2) with descending nonnegative singular values."""
    u, sig, vt = np.linalg.svd(f, full_matrices=False)
    return u, sig, np.swapaxes(vt, 1, 2)  # v columns are right singular vectors


def sigma_energy_grad_hess(f, dpsi_fn, w_map, project=True):
    """Assemble per-triangle gradient (N,9) and Hessian (N,9,9) of an energy
    psi(F) = sum_i b(sigma_i) given its sigma-derivatives.

    dpsi_fn(sig) must return (psi, dpsi, d2psi) with shapes (N,), (N,2), (N,2).
    w_map is the (N,3,2) map W with dF_ac/dx_ib = delta_ab W_ic.
    """
    n = f.shape[0]
    u, sig, v = _svd_3x2(f)
    psi, g_s, h_s = dpsi_fn(sig)

    # Rank-one bases u_i v_i^T, u_1 v_2^T etc.
    u1, u2 = u[:, :, 0], u[:, :, 1]
    v1, v2 = v[:, :, 0], v[:, :, 1]
    u3 = np.cross(u1, u2)

    d1 = u1[:, :, None] * v1[:, None, :]
    d2 = u2[:, :, None] * v2[:, None, :]
    m_tw = (u1[:, :, None] * v2[:, None, :] - u2[:, :, None] * v1[:, None, :]) / np.sqrt(2.0)
    m_fl = (u1[:, :, None] * v2[:, None, :] + u2[:, :, None] * v1[:, None, :]) / np.sqrt(2.0)
    m_n1 = u3[:, :, None] * v1[:, None, :]
    m_n2 = u3[:, :, None] * v2[:, None, :]

    p_stress = g_s[:, 0, None, None] * d1 + g_s[:, 1, None, None] * d2

    s1, s2 = sig[:, 0], sig[:, 1]
    denom_sum = np.maximum(s1 + s2, 1e-32)
    lam_tw = (g_s[:, 0] + g_s[:, 1]) / denom_sum
    split = np.maximum(s1 - s2, SIGMA_SPLIT_EPS * np.maximum(s1, 1.0))
    lam_fl = (g_s[:, 0] - g_s[:, 1]) / split
    lam_n1 = g_s[:, 0] / np.maximum(s1, 1e-32)
    lam_n2 = g_s[:, 1] / np.maximum(s2, 1e-32)
    lam_sc1 = h_s[:, 0]
    lam_sc2 = h_s[:, 1]

    if project:
        lam_tw = np.maximum(lam_tw, 0.0)
        lam_fl = np.maximum(lam_fl, 0.0)
        lam_n1 = np.maximum(lam_n1, 0.0)
        lam_n2 = np.maximum(lam_n2, 0.0)
        lam_sc1 = np.maximum(lam_sc1, 0.0)
        lam_sc2 = np.maximum(lam_sc2, 0.0)

    modes = np.stack([d1, d2, m_tw, m_fl, m_n1, m_n2], axis=1)  # (N,6,3,2)
    lams = np.stack([lam_sc1, lam_sc2, lam_tw, lam_fl, lam_n1, lam_n2], axis=1)

    # Chain to stacked node coordinates via W.
    g_x = np.einsum("nbc,nic->nib", p_stress, w_map).reshape(n, 9)
    mx = np.einsum("nkbc,nic->nkib", modes, w_map).reshape(n, 6, 9)
    h_x = np.einsum("nk,nki,nkj->nij", lams, mx, mx)
    return psi, g_x, h_x


# ---------------------------------------------------------------------------
# The strain-limit potential over a triangle set
# ---------------------------------------------------------------------------


def sl_potential(positions, tris, rest_inv, volumes, params: StrainLimitParams,
                 project=True, with_derivs=True):
    """Energy, gradient and per-triangle Hessians of the strain-limit potential.

    Returns (energy, grad (nnodes,3), hess (N,9,9)). Contributions are exactly
    zero (bitwise) for triangles with all stretches at or below shat.
    """
    x = np.asarray(positions, dtype=np.float64)
    nnodes = x.shape[0]
    grad = np.zeros((nnodes, 3))
    n = len(tris)
    hess = np.zeros((n, 9, 9))
    if n == 0:
        return 0.0, grad, hess

    f = deformation_gradients(x, tris, rest_inv)
    sig = np.linalg.svd(f, compute_uv=False)
    if np.any(sig >= params.s):
        raise StrainLimitError(
            f"stretch {sig.max()} at or beyond limit {params.s}"
        )
    active = sig[:, 0] > params.shat
    scale = params.kappa * np.asarray(volumes)
    if not np.any(active):
        return 0.0, grad, hess
    if not with_derivs:
        b = sl_barrier(sig[active], params.s, params.shat)
        return float(np.sum(scale[active, None] * b)), grad, hess

    idx = np.flatnonzero(active)
    fa = f[idx]
    wa = _w_map(rest_inv[idx])

    def dpsi(sig_a):
        b = sl_barrier(sig_a, params.s, params.shat)
        g, h = sl_barrier_derivs(sig_a, params.s, params.shat)
        return np.sum(b, axis=1), g, h

    psi, g_x, h_x = sigma_energy_grad_hess(fa, dpsi, wa, project=project)
    sc = scale[idx]
    energy = float(np.sum(sc * psi))
    g_x = sc[:, None] * g_x
    hess[idx] = sc[:, None, None] * h_x
    np.add.at(grad, tris[idx].ravel(), g_x.reshape(-1, 3, 3).reshape(-1, 3))
    return energy, grad, hess


def _w_map(rest_inv):
    """dF/dx map W (N,3,2) for triangles: rows are per-node weights."""
    b = np.asarray(rest_inv)
    w = np.empty((b.shape[0], 3, 2))
    w[:, 0, :] = -(b[:, 0, :] + b[:, 1, :])
    w[:, 1, :] = b[:, 0, :]
    w[:, 2, :] = b[:, 1, :]
    return w


# ---------------------------------------------------------------------------
# Adaptive stiffness
# ---------------------------------------------------------------------------


@dataclass
class StrainLimitStiffness:
    """kappa_s doubles (capped) when the smallest strain gap stays below
    GAP_FRACTION*(s - shat) for two consecutive iterations; reset per step."""

    params: StrainLimitParams
    kappa: float = 0.0
    _history: list = field(default_factory=list)

    def __post_init__(self):
        if self.kappa == 0.0:
            self.kappa = KAPPA_S_INITIAL

    def reset_step(self):
        self.kappa = KAPPA_S_INITIAL
        self._history = []

    def update(self, min_gap):
        """min_gap: smallest (s - sigma) over all triangles and singular values."""
        threshold = GAP_FRACTION * (self.params.s - self.params.shat)
        self._history.append(float(min_gap))
        if len(self._history) > 2:
            self._history.pop(0)
        if len(self._history) == 2 and all(g < threshold for g in self._history):
            if self.kappa < self.params.kappa_max:
                self.kappa = min(2.0 * self.kappa, self.params.kappa_max)
        self.params.kappa = self.kappa
        return self.kappa


def sl_stiffness_update(stiffness: StrainLimitStiffness, min_gap):
    return stiffness.update(min_gap)


# ---------------------------------------------------------------------------
# Anisotropic barrier basis on reduced Green strain
# ---------------------------------------------------------------------------


def aniso_eta(e, e_max):
    """Barrier basis value and derivatives: eta(E) = -Emax*log((Emax-E)/Emax).

    Satisfies eta(0) = 0 and eta'(0) = 1; diverges as E -> Emax.
    """
    e = float(e)
    if e >= e_max:
        raise StrainLimitError(f"strain component {e} at or beyond bound {e_max}")
    rem = e_max - e
    val = -e_max * np.log(rem / e_max)
    d1 = e_max / rem
    d2 = e_max / (rem * rem)
    return val, d1, d2


def _eta_identity(e, e_max):
    return e, 1.0, 0.0


def aniso_psi(e_tilde, moduli, limits, barrier=True):
    """Energy density and derivatives of the anisotropic membrane model.

    e_tilde = (E11, E12, E22) reduced Green strain; moduli = (a11, a22, a12, g12);
    limits = per-basis argument bounds for (E11^2, E11*E22, E22^2, E12^2).
    With barrier=False the basis is the identity (plain orthotropic quadratic).
    Returns (psi, grad (3,), hess (3,3)) w.r.t. (E11, E12, E22).
    """
    e11, e12, e22 = (float(v) for v in e_tilde)
    a11, a22, a12, g12 = moduli
    eta = aniso_eta if barrier else _eta_identity

    v1, d1, dd1 = eta(e11 * e11, limits[0])
    v2, d2_, dd2 = eta(e11 * e22, limits[1])
    v3, d3, dd3 = eta(e22 * e22, limits[2])
    v4, d4, dd4 = eta(e12 * e12, limits[3])

    psi = 0.5 * a11 * v1 + 0.5 * a22 * v3 + a12 * v2 + g12 * v4

    g = np.array(
        [
            a11 * d1 * e11 + a12 * d2_ * e22,
            2.0 * g12 * d4 * e12,
            a22 * d3 * e22 + a12 * d2_ * e11,
        ]
    )
    h = np.zeros((3, 3))
    h[0, 0] = a11 * (2.0 * e11 * e11 * dd1 + d1) + a12 * dd2 * e22 * e22
    h[2, 2] = a22 * (2.0 * e22 * e22 * dd3 + d3) + a12 * dd2 * e11 * e11
    h[0, 2] = h[2, 0] = a12 * (dd2 * e11 * e22 + d2_)
    h[1, 1] = 2.0 * g12 * (2.0 * e12 * e12 * dd4 + d4)
    return psi, g, h


def match_moduli(target_hessian):
    """Solve (a11, a22, a12, g12) so the rest Hessian of aniso_psi equals the
    given small-strain stiffness in (E11, E12, E22) ordering."""
    h = np.asarray(target_hessian, dtype=np.float64)
    return float(h[0, 0]), float(h[2, 2]), float(h[0, 2]), float(h[1, 1]) / 2.0
