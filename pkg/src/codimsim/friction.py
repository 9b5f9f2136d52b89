"""Smoothed, semi-implicit lagged friction.

Normal force magnitudes, tangent frames and closest-point weights are frozen
from a lagged iterate; during each minimization the friction term is then a
well-defined C^1 potential of the tangential relative displacement u, with
force magnitude saturating at mu*lambda for ||u|| >= epsv*h.
"""

from dataclasses import dataclass

import numpy as np

from .barrier import barrier_grad, offset_dhat_sq
from .distance import (
    PairKind,
    ee_classify,
    pe_classify,
    pt_classify,
)

DEFAULT_EPSV = 1e-3  # m/s


@dataclass
class LaggedContacts:
    """Frozen per-contact data for one lag iteration (struct of arrays)."""

    nodes: np.ndarray  # (N, 4) node ids, -1 padded
    weights: np.ndarray  # (N, 4) signed witness weights (A minus B)
    lam: np.ndarray  # (N,) physical normal force magnitudes
    tangent: np.ndarray  # (N, 3, 2) orthonormal tangent frames
    anchor: np.ndarray  # (nnodes, 3) positions u is measured from
    mu: float
    epsv: float
    h: float

    def __len__(self):
        return len(self.lam)


def _tangent_frame(normal):
    axis = np.zeros(3)
    axis[np.argmin(np.abs(normal))] = 1.0
    t1 = np.cross(normal, axis)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return np.column_stack([t1, t2])


def _witness(kind, pts):
    """Closest points and signed weights (A-side positive) of an active pair."""
    if kind == PairKind.POINT_POINT:
        w = np.array([1.0, -1.0, 0.0, 0.0])
        return pts[0], pts[1], w
    if kind == PairKind.POINT_EDGE:
        _, _, g = pe_classify(pts[0], pts[1], pts[2])
        w = np.array([1.0, -(1.0 - g), -g, 0.0])
        return pts[0], (1 - g) * pts[1] + g * pts[2], w
    if kind == PairKind.POINT_TRIANGLE:
        _, _, b1, b2 = pt_classify(pts[0], pts[1], pts[2], pts[3])
        b0 = 1.0 - b1 - b2
        w = np.array([1.0, -b0, -b1, -b2])
        return pts[0], b0 * pts[1] + b1 * pts[2] + b2 * pts[3], w
    _, _, ga, gb = ee_classify(pts[0], pts[1], pts[2], pts[3])
    w = np.array([1.0 - ga, ga, -(1.0 - gb), -gb])
    return (1 - ga) * pts[0] + ga * pts[1], (1 - gb) * pts[2] + gb * pts[3], w


def build_lagged_contacts(pairs, x, dhat, kappa, h, mu, epsv=DEFAULT_EPSV,
                          anchor=None):
    """Freeze normal forces and frames from the active pairs of an iterate.

    pairs: CandidateSet-like with kinds, nodes, xi. Pairs outside the barrier
    support are excluded; lambda = |dB/dd| / h^2 (physical normal force). The
    tangential displacement u is measured from `anchor` (the step-start
    positions; defaults to x).
    """
    from .distance import pair_d2

    x = np.asarray(x, dtype=np.float64)
    anchor = x.copy() if anchor is None else np.asarray(anchor, np.float64).copy()
    rows_nodes = []
    rows_w = []
    rows_lam = []
    rows_t = []
    zero = np.zeros(3)
    for k in range(len(pairs)):
        kind = PairKind(int(pairs.kinds[k]))
        nd = pairs.nodes[k]
        xi = float(pairs.xi[k])
        pts = [x[i] if i >= 0 else zero for i in nd]
        d2 = pair_d2(int(kind), *pts)
        if d2 >= (xi + dhat) ** 2:
            continue
        shifted = d2 - xi * xi
        if shifted <= 0.0:
            continue
        bg = barrier_grad(shifted, offset_dhat_sq(xi, dhat))
        lam = -kappa * bg * 2.0 * np.sqrt(d2) / (h * h)
        if lam <= 0.0:
            continue
        pa, pb, w = _witness(kind, pts)
        dvec = pa - pb
        dist = np.linalg.norm(dvec)
        if dist == 0.0:
            continue
        normal = dvec / dist
        rows_nodes.append(nd)
        rows_w.append(w)
        rows_lam.append(lam)
        rows_t.append(_tangent_frame(normal))
    n = len(rows_lam)
    if n == 0:
        return LaggedContacts(
            np.empty((0, 4), np.int64), np.empty((0, 4)), np.empty(0),
            np.empty((0, 3, 2)), anchor, mu, epsv, h,
        )
    return LaggedContacts(
        np.array(rows_nodes, dtype=np.int64),
        np.array(rows_w),
        np.array(rows_lam),
        np.array(rows_t),
        anchor,
        mu,
        epsv,
        h,
    )


def _f0(y, eps_h):
    """C^1 mollified magnitude potential; slope saturates at 1 beyond eps_h."""
    small = y < eps_h
    return np.where(
        small,
        y * y / eps_h - y * y * y / (3.0 * eps_h * eps_h),
        y - eps_h / 3.0,
    )


def _f1(y, eps_h):
    small = y < eps_h
    return np.where(small, 2.0 * y / eps_h - y * y / (eps_h * eps_h), 1.0)


def _f1_over_y(y, eps_h):
    """f1(y)/y with the finite y->0 limit 2/eps_h."""
    small = y < eps_h
    safe = np.where(y > 0.0, y, 1.0)
    return np.where(small, 2.0 / eps_h - y / (eps_h * eps_h), 1.0 / safe)


def _df1(y, eps_h):
    small = y < eps_h
    return np.where(small, 2.0 / eps_h - 2.0 * y / (eps_h * eps_h), 0.0)


def _tangential_u(x, contacts: LaggedContacts):
    """Per-contact tangential relative displacement u (N,2) since the anchor."""
    dx = x - contacts.anchor
    nd = np.maximum(contacts.nodes, 0)
    valid = (contacts.nodes >= 0).astype(np.float64)
    w = contacts.weights * valid
    rel = np.einsum("nk,nkc->nc", w, dx[nd])
    return np.einsum("ncm,nc->nm", contacts.tangent, rel)


def friction_energy(x, contacts: LaggedContacts):
    """Total physical friction energy sum(mu*lam*f0(||u||)) in joules."""
    if len(contacts) == 0:
        return 0.0
    u = _tangential_u(np.asarray(x, dtype=np.float64), contacts)
    y = np.linalg.norm(u, axis=1)
    eps_h = contacts.epsv * contacts.h
    return float(np.sum(contacts.mu * contacts.lam * _f0(y, eps_h)))


def friction_grad_hess(x, contacts: LaggedContacts):
    """(energy, grad (nnodes,3), hess (N,12,12)) of the friction potential.

    The per-contact Hessian is PSD by construction (both mollifier slopes are
    nonnegative), so no projection is required.
    """
    x = np.asarray(x, dtype=np.float64)
    nnodes = x.shape[0]
    grad = np.zeros((nnodes, 3))
    n = len(contacts)
    hess = np.zeros((n, 12, 12))
    if n == 0:
        return 0.0, grad, hess

    u = _tangential_u(x, contacts)
    y = np.linalg.norm(u, axis=1)
    eps_h = contacts.epsv * contacts.h
    scale = contacts.mu * contacts.lam

    energy = float(np.sum(scale * _f0(y, eps_h)))

    f1y = _f1_over_y(y, eps_h)
    df1 = _df1(y, eps_h)

    # dE/du = scale * f1(y) * u/y = scale * f1y * u
    dEdu = scale[:, None] * f1y[:, None] * u

    # d2E/du2 = scale * [f1y * I + (df1 - f1y)/y^2 * u u^T]  (guard y -> 0)
    safe_y2 = np.where(y > 0.0, y * y, 1.0)
    coef = np.where(y > 0.0, (df1 - f1y) / safe_y2, 0.0)
    uu = np.einsum("ni,nj->nij", u, u)
    h_u = scale[:, None, None] * (
        f1y[:, None, None] * np.eye(2) + coef[:, None, None] * uu
    )

    # Chain through the constant map u = T^T W dx.
    valid = (contacts.nodes >= 0).astype(np.float64)
    w = contacts.weights * valid  # (N,4)
    # L (N, 2, 12): du_m/dx_(k,c) = w_k * T_cm
    l_map = np.einsum("nk,ncm->nmkc", w, contacts.tangent).reshape(n, 2, 12)
    g_pair = np.einsum("nm,nmi->ni", dEdu, l_map)  # (N,12)
    hess[:] = np.einsum("nmi,nml,nlj->nij", l_map, h_u, l_map)

    nd = np.maximum(contacts.nodes, 0)
    np.add.at(grad, nd.ravel(), g_pair.reshape(n, 4, 3).reshape(-1, 3))
    return energy, grad, hess
