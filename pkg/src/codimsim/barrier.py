"""Smoothly clamped contact barrier on squared distances with thickness offsets.

The barrier acts on the shifted squared distance d^2 - xi^2 with an effective
activation threshold (xi + dhat)^2 - xi^2 = 2*xi*dhat + dhat^2, so forces
diverge exactly at gap d = xi and vanish for d >= xi + dhat.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ._math import outer, project_psd
from .distance import pair_d2, pair_d2_grad_hess

KAPPA_CAP_FACTOR = 1e4
# Barrier curvature target relative to the mean lumped mass at init; keeps
# transient gaps inside the elastic layer instead of pinned at the offset.
KAPPA_CURVATURE_SCALE = 100.0
STAGNATION_GAP = 1e-9  # m
STAGNATION_REL_CHANGE = 0.01


class OffsetPenetrationError(RuntimeError):
    """Raised when a squared distance at or below the offset reaches a barrier."""


@dataclass
class BarrierParams:
    dhat: float
    kappa: float = 1.0
    s_conservative: float = 0.1

    def __post_init__(self):
        if self.dhat <= 0.0:
            raise ValueError("dhat must be positive")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if not 0.0 < self.s_conservative < 1.0:
            raise ValueError("s_conservative must lie in (0, 1)")


@njit(cache=True, inline="always")
def barrier_value(d_sq, dhat_sq):
    if d_sq >= dhat_sq:
        return 0.0
    t = d_sq - dhat_sq
    return -t * t * np.log(d_sq / dhat_sq)


@njit(cache=True, inline="always")
def barrier_grad(d_sq, dhat_sq):
    """db/d(d^2)."""
    if d_sq >= dhat_sq:
        return 0.0
    t = d_sq - dhat_sq
    return -2.0 * t * np.log(d_sq / dhat_sq) - t * t / d_sq


@njit(cache=True, inline="always")
def barrier_hess(d_sq, dhat_sq):
    """d^2 b/d(d^2)^2."""
    if d_sq >= dhat_sq:
        return 0.0
    t = d_sq - dhat_sq
    return -2.0 * np.log(d_sq / dhat_sq) - 4.0 * t / d_sq + t * t / (d_sq * d_sq)


def barrier(d_sq, dhat_sq):
    """Barrier energy density: -(d^2-dhat^2)^2 ln(d^2/dhat^2) inside the support."""
    if d_sq <= 0.0:
        raise OffsetPenetrationError(f"barrier evaluated at d_sq={d_sq} <= 0")
    return barrier_value(float(d_sq), float(dhat_sq))


def barrier_derivs(d_sq, dhat_sq):
    """(db/d(d^2), d^2b/d(d^2)^2); both vanish continuously at d_sq = dhat_sq."""
    if d_sq <= 0.0:
        raise OffsetPenetrationError(f"barrier derivatives at d_sq={d_sq} <= 0")
    return barrier_grad(float(d_sq), float(dhat_sq)), barrier_hess(
        float(d_sq), float(dhat_sq)
    )


def offset_dhat_sq(xi, dhat):
    """Effective squared threshold for the shifted distance: 2*xi*dhat + dhat^2."""
    return 2.0 * xi * dhat + dhat * dhat


def offset_barrier(d_sq, xi, dhat):
    """Barrier with a hard offset: zero for d >= xi + dhat, divergent at d -> xi."""
    shifted = d_sq - xi * xi
    if shifted <= 0.0:
        raise OffsetPenetrationError(
            f"offset penetration: d_sq={d_sq} <= xi^2={xi * xi}"
        )
    return barrier_value(float(shifted), offset_dhat_sq(xi, dhat))


def offset_barrier_derivs(d_sq, xi, dhat):
    """Derivatives of offset_barrier w.r.t. d_sq (shift leaves them unchanged)."""
    shifted = d_sq - xi * xi
    if shifted <= 0.0:
        raise OffsetPenetrationError(
            f"offset penetration: d_sq={d_sq} <= xi^2={xi * xi}"
        )
    eff = offset_dhat_sq(xi, dhat)
    return barrier_grad(float(shifted), eff), barrier_hess(float(shifted), eff)


# ---------------------------------------------------------------------------
# Near-parallel edge-edge mollifier (C^1), keeping the EE barrier smooth across
# the parallel configuration. eps_cross is fixed from rest edge lengths.
# ---------------------------------------------------------------------------

EE_MOLLIFIER_SCALE = 1e-3


@njit(cache=True, inline="always")
def ee_cross_sq(a0, a1, b0, b1):
    u = a1 - a0
    v = b1 - b0
    cx = u[1] * v[2] - u[2] * v[1]
    cy = u[2] * v[0] - u[0] * v[2]
    cz = u[0] * v[1] - u[1] * v[0]
    return cx * cx + cy * cy + cz * cz


@njit(cache=True, inline="always")
def mollifier_value(c, eps):
    if c >= eps:
        return 1.0
    return (-c / (eps * eps) + 2.0 / eps) * c


@njit(cache=True, inline="always")
def mollifier_grad(c, eps):
    if c >= eps:
        return 0.0
    return -2.0 * c / (eps * eps) + 2.0 / eps


@njit(cache=True, inline="always")
def mollifier_hess(c, eps):
    if c >= eps:
        return 0.0
    return -2.0 / (eps * eps)


@njit(cache=True)
def _ee_cross_sq_grad_hess(a0, a1, b0, b1):
    """Value, gradient (12,) and Hessian (12,12) of ||(a1-a0) x (b1-b0)||^2."""
    u = a1 - a0
    v = b1 - b0
    c = np.empty(3)
    c[0] = u[1] * v[2] - u[2] * v[1]
    c[1] = u[2] * v[0] - u[0] * v[2]
    c[2] = u[0] * v[1] - u[1] * v[0]
    val = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]

    sv = np.zeros((3, 3))
    sv[0, 1] = -v[2]
    sv[0, 2] = v[1]
    sv[1, 0] = v[2]
    sv[1, 2] = -v[0]
    sv[2, 0] = -v[1]
    sv[2, 1] = v[0]
    su = np.zeros((3, 3))
    su[0, 1] = -u[2]
    su[0, 2] = u[1]
    su[1, 0] = u[2]
    su[1, 2] = -u[0]
    su[2, 0] = -u[1]
    su[2, 1] = u[0]
    sc = np.zeros((3, 3))
    sc[0, 1] = -c[2]
    sc[0, 2] = c[1]
    sc[1, 0] = c[2]
    sc[1, 2] = -c[0]
    sc[2, 0] = -c[1]
    sc[2, 1] = c[0]

    ju = -sv  # dc/du
    jv = su  # dc/dv
    gu = 2.0 * (ju.T @ c)
    gv = 2.0 * (jv.T @ c)

    g6 = np.empty(6)
    g6[:3] = gu
    g6[3:] = gv
    h6 = np.empty((6, 6))
    h6[:3, :3] = 2.0 * (ju.T @ ju)
    h6[3:, 3:] = 2.0 * (jv.T @ jv)
    cross_block = 2.0 * (ju.T @ jv - sc)
    h6[:3, 3:] = cross_block
    h6[3:, :3] = cross_block.T

    amap = np.zeros((6, 12))
    for i in range(3):
        amap[i, i] = -1.0
        amap[i, 3 + i] = 1.0
        amap[3 + i, 6 + i] = -1.0
        amap[3 + i, 9 + i] = 1.0
    g = amap.T @ g6
    h = amap.T @ h6 @ amap
    return val, g, h


# ---------------------------------------------------------------------------
# Per-pair contact energy with chain rule through the distance derivatives.
# ---------------------------------------------------------------------------


@njit(cache=True)
def contact_pair_energy(kind, x0, x1, x2, x3, xi, dhat, kappa, eps_cross):
    """kappa * mollifier * offset barrier at the pair's current distance."""
    d2 = pair_d2(kind, x0, x1, x2, x3)
    shifted = d2 - xi * xi
    if shifted <= 0.0:
        return np.inf
    b = barrier_value(shifted, 2.0 * xi * dhat + dhat * dhat)
    if b == 0.0:
        return 0.0
    if kind == 3 and eps_cross > 0.0:
        m = mollifier_value(ee_cross_sq(x0, x1, x2, x3), eps_cross)
        return kappa * m * b
    return kappa * b


@njit(cache=True)
def contact_pair_grad_hess(kind, x0, x1, x2, x3, xi, dhat, kappa, eps_cross, psd):
    """Energy, gradient (12,) and (optionally PSD-projected) Hessian (12,12)."""
    d2, region, gd, hd = pair_d2_grad_hess(kind, x0, x1, x2, x3)
    shifted = d2 - xi * xi
    eff = 2.0 * xi * dhat + dhat * dhat
    if shifted <= 0.0:
        return np.inf, np.zeros(12), np.zeros((12, 12))
    b = barrier_value(shifted, eff)
    if b == 0.0 and shifted >= eff:
        return 0.0, np.zeros(12), np.zeros((12, 12))
    bg = barrier_grad(shifted, eff)
    bh = barrier_hess(shifted, eff)

    if kind == 3 and eps_cross > 0.0:
        cval, cg, ch = _ee_cross_sq_grad_hess(x0, x1, x2, x3)
        m = mollifier_value(cval, eps_cross)
        mg = mollifier_grad(cval, eps_cross)
        mh = mollifier_hess(cval, eps_cross)
        energy = kappa * m * b
        g = kappa * (m * bg * gd + b * mg * cg)
        h = kappa * (
            m * (bh * outer(gd, gd) + bg * hd)
            + bg * mg * (outer(gd, cg) + outer(cg, gd))
            + b * (mh * outer(cg, cg) + mg * ch)
        )
    else:
        energy = kappa * b
        g = kappa * bg * gd
        h = kappa * (bh * outer(gd, gd) + bg * hd)

    if psd:
        h = project_psd(h)
    return energy, g, h


def contact_energy(pair, positions, params: BarrierParams):
    """Contact energy of one pair; raises on offset penetration."""
    x = np.asarray(positions, dtype=np.float64)
    pts = _padded_points(pair, x)
    d2 = pair_d2(int(pair.kind), *pts)
    if d2 - pair.xi**2 <= 0.0:
        raise OffsetPenetrationError(
            f"pair {pair.nodes}: d_sq={d2} <= xi^2={pair.xi**2}"
        )
    if d2 >= (pair.xi + params.dhat) ** 2:
        return 0.0
    return float(
        contact_pair_energy(
            int(pair.kind), *pts, pair.xi, params.dhat, params.kappa, 0.0
        )
    )


def contact_grad_hess(pair, positions, params: BarrierParams, project=True):
    """Gradient and Hessian of the pair's contact energy w.r.t. its nodes."""
    x = np.asarray(positions, dtype=np.float64)
    pts = _padded_points(pair, x)
    d2 = pair_d2(int(pair.kind), *pts)
    if d2 - pair.xi**2 <= 0.0:
        raise OffsetPenetrationError(
            f"pair {pair.nodes}: d_sq={d2} <= xi^2={pair.xi**2}"
        )
    e, g, h = contact_pair_grad_hess(
        int(pair.kind), *pts, pair.xi, params.dhat, params.kappa, 0.0, project
    )
    n = 3 * len(pair.nodes)
    return e, g[:n], h[:n, :n]


def _padded_points(pair, x):
    pts = [x[i] for i in pair.nodes]
    while len(pts) < 4:
        pts.append(np.zeros(3))
    return pts


# ---------------------------------------------------------------------------
# Batched candidate evaluation (solver hot path)
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def batch_contact_energy(kinds, nodes, xis, eps_cross, x, dhat, kappa):
    """Total barrier energy over candidates; +inf on any offset penetration."""
    m = kinds.shape[0]
    partial = np.zeros(m)
    zero = np.zeros(3)
    for i in prange(m):
        x0 = x[nodes[i, 0]]
        x1 = x[nodes[i, 1]]
        x2 = x[nodes[i, 2]] if nodes[i, 2] >= 0 else zero
        x3 = x[nodes[i, 3]] if nodes[i, 3] >= 0 else zero
        partial[i] = contact_pair_energy(
            kinds[i], x0, x1, x2, x3, xis[i], dhat, kappa, eps_cross[i]
        )
    return np.sum(partial)


@njit(cache=True, parallel=True)
def batch_contact_grad_hess(kinds, nodes, xis, eps_cross, x, dhat, kappa, psd):
    """Energies, gradients (M,12), Hessians (M,12,12) and distances of pairs.

    Pairs outside the barrier support contribute exact zeros and skip the
    derivative evaluation entirely.
    """
    m = kinds.shape[0]
    energies = np.zeros(m)
    grads = np.zeros((m, 12))
    hesses = np.zeros((m, 12, 12))
    d2s = np.empty(m)
    zero = np.zeros(3)
    for i in prange(m):
        x0 = x[nodes[i, 0]]
        x1 = x[nodes[i, 1]]
        x2 = x[nodes[i, 2]] if nodes[i, 2] >= 0 else zero
        x3 = x[nodes[i, 3]] if nodes[i, 3] >= 0 else zero
        d2 = pair_d2(kinds[i], x0, x1, x2, x3)
        d2s[i] = d2
        support = xis[i] + dhat
        if d2 >= support * support:
            continue
        e, g, h = contact_pair_grad_hess(
            kinds[i], x0, x1, x2, x3, xis[i], dhat, kappa, eps_cross[i], psd
        )
        energies[i] = e
        grads[i] = g
        hesses[i] = h
    return energies, grads, hesses, d2s


# ---------------------------------------------------------------------------
# Adaptive contact stiffness
# ---------------------------------------------------------------------------


@dataclass
class ContactStiffness:
    """Adaptive kappa: initialized from a Hessian-scale heuristic, doubled on
    stagnation of the minimal gap, never decreased within a step."""

    kappa: float = 0.0
    kappa_max: float = 0.0
    _prev_gaps: list = field(default_factory=list)

    def initialize(self, mass_diag_mean, xi_ref, dhat):
        """Scale kappa so the barrier's diagonal Hessian at d = xi + dhat/2
        is comparable to the mean lumped mass."""
        d = xi_ref + 0.5 * dhat
        shifted = d * d - xi_ref * xi_ref
        eff = offset_dhat_sq(xi_ref, dhat)
        curvature = barrier_hess(shifted, eff) * (2.0 * d) ** 2
        if curvature <= 0.0:
            curvature = 1.0
        self.kappa = max(
            KAPPA_CURVATURE_SCALE * mass_diag_mean / curvature, 1e-12
        )
        self.kappa_max = KAPPA_CAP_FACTOR * self.kappa
        self._prev_gaps = []
        return self.kappa

    def reset_step(self):
        self._prev_gaps = []

    def update(self, min_gap):
        """Per-Newton-iterate update from the current minimal (d - xi) gap.

        Doubles kappa whenever the gap sits below STAGNATION_GAP and has
        changed by less than 1% over two consecutive iterations (sliding
        window).
        """
        if min_gap is None or not np.isfinite(min_gap):
            self._prev_gaps = []
            return self.kappa
        self._prev_gaps.append(float(min_gap))
        if len(self._prev_gaps) > 2:
            self._prev_gaps.pop(0)
        if len(self._prev_gaps) == 2:
            g0, g1 = self._prev_gaps
            small = g0 < STAGNATION_GAP and g1 < STAGNATION_GAP
            ref = max(abs(g0), 1e-300)
            stagnant = abs(g1 - g0) <= STAGNATION_REL_CHANGE * ref
            if small and stagnant and self.kappa < self.kappa_max:
                self.kappa = min(2.0 * self.kappa, self.kappa_max)
        return self.kappa


def update_kappa(stiffness: ContactStiffness, min_gap):
    """Spec-level alias; no active contacts (min_gap None) leaves kappa as is."""
    return stiffness.update(min_gap)
