"""Unsigned squared distances between primitive pairs with exact derivatives.

Four pair kinds are supported: point-point, point-edge, point-triangle and
edge-edge. Every query classifies the closest-point sub-case (region) and all
derivatives differentiate the active sub-case's squared-distance expression,
including the sensitivity of the closest-point parameters.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from ._math import cross3, dot3, norm_sq3, outer, skew3

# Near-parallel / degenerate threshold: ||u x v||^2 < PARALLEL_EPS * |u|^2 |v|^2
# switches edge-edge (and degenerate-triangle) handling to sub-case enumeration.
PARALLEL_EPS = 1e-20


class PairKind(IntEnum):
    POINT_POINT = 0
    POINT_EDGE = 1
    POINT_TRIANGLE = 2
    EDGE_EDGE = 3


# Number of nodes per pair kind, indexed by PairKind value.
PAIR_NODE_COUNT = (2, 3, 4, 4)

# Point-edge regions.
PE_AT_E0 = 0
PE_AT_E1 = 1
PE_INTERIOR = 2
PE_DEGENERATE = 3

# Point-triangle regions.
PT_AT_T0 = 0
PT_AT_T1 = 1
PT_AT_T2 = 2
PT_EDGE_01 = 3
PT_EDGE_12 = 4
PT_EDGE_20 = 5
PT_INTERIOR = 6

# Edge-edge regions: code = 3*ia + ib, where 0/1 pick an endpoint of the edge
# and 2 marks an interior closest point.
EE_INTERIOR = 8


@dataclass(frozen=True)
class PrimitivePair:
    """A candidate contact pair with its combined thickness offset."""

    kind: PairKind
    nodes: tuple
    xi: float = 0.0

    def __post_init__(self):
        expected = PAIR_NODE_COUNT[int(self.kind)]
        if len(self.nodes) != expected:
            raise ValueError(f"{self.kind.name} pair needs {expected} nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("pair nodes must be pairwise distinct")


@dataclass(frozen=True)
class DistanceResult:
    d_sq: float
    region: int
    barycentric: np.ndarray


# ---------------------------------------------------------------------------
# Scalar classification kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def pp_d2(a, b):
    d = a - b
    return norm_sq3(d)


@njit(cache=True)
def pe_classify(p, e0, e1):
    """Return (d2, region, gamma) for a point against segment [e0, e1]."""
    e = e1 - e0
    length_sq = norm_sq3(e)
    if length_sq == 0.0:
        return pp_d2(p, e0), PE_DEGENERATE, 0.0
    gamma = dot3(p - e0, e) / length_sq
    if gamma <= 0.0:
        return pp_d2(p, e0), PE_AT_E0, 0.0
    if gamma >= 1.0:
        return pp_d2(p, e1), PE_AT_E1, 1.0
    closest = e0 + gamma * e
    return pp_d2(p, closest), PE_INTERIOR, gamma


@njit(cache=True)
def pt_classify(p, t0, t1, t2):
    """Return (d2, region, b1, b2); closest point is t0 + b1*(t1-t0) + b2*(t2-t0)."""
    ab = t1 - t0
    ac = t2 - t0
    nsq = norm_sq3(cross3(ab, ac))
    if nsq <= PARALLEL_EPS * norm_sq3(ab) * norm_sq3(ac):
        # Degenerate triangle: minimum over the three edge sub-cases.
        best_d2 = np.inf
        best_region = PT_AT_T0
        best_b1 = 0.0
        best_b2 = 0.0
        d2, reg, g = pe_classify(p, t0, t1)
        if d2 < best_d2:
            best_d2 = d2
            best_region = PT_AT_T0 if reg != PE_AT_E1 else PT_AT_T1
            if reg == PE_INTERIOR:
                best_region = PT_EDGE_01
            best_b1, best_b2 = g, 0.0
        d2, reg, g = pe_classify(p, t1, t2)
        if d2 < best_d2:
            best_d2 = d2
            best_region = PT_AT_T1 if reg != PE_AT_E1 else PT_AT_T2
            if reg == PE_INTERIOR:
                best_region = PT_EDGE_12
            best_b1, best_b2 = 1.0 - g, g
        d2, reg, g = pe_classify(p, t2, t0)
        if d2 < best_d2:
            best_d2 = d2
            best_region = PT_AT_T2 if reg != PE_AT_E1 else PT_AT_T0
            if reg == PE_INTERIOR:
                best_region = PT_EDGE_20
            best_b1, best_b2 = 0.0, 1.0 - g
        return best_d2, best_region, best_b1, best_b2

    ap = p - t0
    d1 = dot3(ab, ap)
    d2_ = dot3(ac, ap)
    if d1 <= 0.0 and d2_ <= 0.0:
        return pp_d2(p, t0), PT_AT_T0, 0.0, 0.0

    bp = p - t1
    d3 = dot3(ab, bp)
    d4 = dot3(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return pp_d2(p, t1), PT_AT_T1, 1.0, 0.0

    cp = p - t2
    d5 = dot3(ab, cp)
    d6 = dot3(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return pp_d2(p, t2), PT_AT_T2, 0.0, 1.0

    vc = d1 * d4 - d3 * d2_
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        closest = t0 + v * ab
        return pp_d2(p, closest), PT_EDGE_01, v, 0.0

    vb = d5 * d2_ - d1 * d6
    if vb <= 0.0 and d2_ >= 0.0 and d6 <= 0.0:
        w = d2_ / (d2_ - d6)
        closest = t0 + w * ac
        return pp_d2(p, closest), PT_EDGE_20, 0.0, w

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        closest = t1 + w * (t2 - t1)
        return pp_d2(p, closest), PT_EDGE_12, 1.0 - w, w

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    closest = t0 + v * ab + w * ac
    return pp_d2(p, closest), PT_INTERIOR, v, w


@njit(cache=True)
def ee_classify(a0, a1, b0, b1):
    """Return (d2, region, ga, gb) for segments [a0,a1] and [b0,b1]."""
    u = a1 - a0
    v = b1 - b0
    uu = norm_sq3(u)
    vv = norm_sq3(v)
    uv = dot3(u, v)
    denom = uu * vv - uv * uv  # == ||u x v||^2
    if denom > PARALLEL_EPS * uu * vv:
        r = a0 - b0
        ru = dot3(u, r)
        rv = dot3(v, r)
        s = (uv * rv - ru * vv) / denom
        t = (uu * rv - uv * ru) / denom
        if 0.0 < s < 1.0 and 0.0 < t < 1.0:
            pa = a0 + s * u
            pb = b0 + t * v
            return pp_d2(pa, pb), EE_INTERIOR, s, t

    # Boundary (or near-parallel): minimum over the four point-edge sub-cases.
    best_d2 = np.inf
    best_region = 0
    best_ga = 0.0
    best_gb = 0.0

    d2, reg, g = pe_classify(a0, b0, b1)
    if d2 < best_d2:
        best_d2 = d2
        ib = 2 if reg == PE_INTERIOR else (0 if reg != PE_AT_E1 else 1)
        best_region = 0 * 3 + ib
        best_ga, best_gb = 0.0, g

    d2, reg, g = pe_classify(a1, b0, b1)
    if d2 < best_d2:
        best_d2 = d2
        ib = 2 if reg == PE_INTERIOR else (0 if reg != PE_AT_E1 else 1)
        best_region = 1 * 3 + ib
        best_ga, best_gb = 1.0, g

    d2, reg, g = pe_classify(b0, a0, a1)
    if d2 < best_d2:
        best_d2 = d2
        ia = 2 if reg == PE_INTERIOR else (0 if reg != PE_AT_E1 else 1)
        best_region = ia * 3 + 0
        best_ga, best_gb = g, 0.0

    d2, reg, g = pe_classify(b1, a0, a1)
    if d2 < best_d2:
        best_d2 = d2
        ia = 2 if reg == PE_INTERIOR else (0 if reg != PE_AT_E1 else 1)
        best_region = ia * 3 + 1
        best_ga, best_gb = g, 1.0

    return best_d2, best_region, best_ga, best_gb


# ---------------------------------------------------------------------------
# Derivative kernels
#
# The interior sub-cases reduce to two core expressions:
#   point-line:  f = ||(p-e0) x (e1-e0)||^2 / ||e1-e0||^2
#   line-plane:  f = ((w . n)^2) / ||n||^2  with n = u x v
# Everything else is a point-point expression on a node subset.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _pp_grad_hess(a, b):
    g = np.zeros(6)
    d = a - b
    for i in range(3):
        g[i] = 2.0 * d[i]
        g[3 + i] = -2.0 * d[i]
    h = np.zeros((6, 6))
    for i in range(3):
        h[i, i] = 2.0
        h[3 + i, 3 + i] = 2.0
        h[i, 3 + i] = -2.0
        h[3 + i, i] = -2.0
    return g, h


@njit(cache=True)
def _pe_interior_grad_hess(p, e0, e1):
    """Gradient/Hessian of the point-line squared distance over (p, e0, e1)."""
    w = p - e0
    e = e1 - e0
    c = cross3(w, e)
    ssum = norm_sq3(c)
    lsum = norm_sq3(e)

    jw = -skew3(e)
    je = skew3(w)

    gs = np.zeros(6)
    gs[:3] = 2.0 * (jw.T @ c)
    gs[3:] = 2.0 * (je.T @ c)

    hs = np.zeros((6, 6))
    hs[:3, :3] = 2.0 * (jw.T @ jw)
    hs[3:, 3:] = 2.0 * (je.T @ je)
    cross_block = 2.0 * (jw.T @ je - skew3(c))
    hs[:3, 3:] = cross_block
    hs[3:, :3] = cross_block.T

    gl = np.zeros(6)
    gl[3:] = 2.0 * e
    hl = np.zeros((6, 6))
    for i in range(3):
        hl[3 + i, 3 + i] = 2.0

    inv_l = 1.0 / lsum
    g6 = gs * inv_l - (ssum * inv_l * inv_l) * gl
    h6 = (
        hs * inv_l
        - (outer(gs, gl) + outer(gl, gs)) * inv_l * inv_l
        - (ssum * inv_l * inv_l) * hl
        + (2.0 * ssum * inv_l * inv_l * inv_l) * outer(gl, gl)
    )

    # Map (w, e) -> (p, e0, e1).
    g9 = np.zeros(9)
    g9[:3] = g6[:3]
    g9[3:6] = -g6[:3] - g6[3:]
    g9[6:] = g6[3:]
    amap = np.zeros((6, 9))
    for i in range(3):
        amap[i, i] = 1.0
        amap[i, 3 + i] = -1.0
        amap[3 + i, 3 + i] = -1.0
        amap[3 + i, 6 + i] = 1.0
    h9 = amap.T @ h6 @ amap
    return g9, h9


@njit(cache=True)
def _line_plane_grad_hess(w, u, v):
    """Gradient/Hessian of ((w.n)^2)/||n||^2 over stacked (w, u, v), n = u x v."""
    n = cross3(u, v)
    q = dot3(w, n)
    lsum = norm_sq3(n)

    gq = np.zeros(9)
    gq[:3] = n
    gq[3:6] = cross3(v, w)
    gq[6:] = cross3(w, u)

    hq = np.zeros((9, 9))
    sv = skew3(v)
    su = skew3(u)
    sw = skew3(w)
    hq[:3, 3:6] = -sv
    hq[3:6, :3] = sv  # (-sv)^T
    hq[:3, 6:] = su
    hq[6:, :3] = -su
    hq[3:6, 6:] = -sw
    hq[6:, 3:6] = sw

    ju = -sv
    jv = su
    gl = np.zeros(9)
    gl[3:6] = 2.0 * (ju.T @ n)
    gl[6:] = 2.0 * (jv.T @ n)
    hl = np.zeros((9, 9))
    hl[3:6, 3:6] = 2.0 * (ju.T @ ju)
    hl[6:, 6:] = 2.0 * (jv.T @ jv)
    cross_block = 2.0 * (ju.T @ jv - skew3(n))
    hl[3:6, 6:] = cross_block
    hl[6:, 3:6] = cross_block.T

    inv_l = 1.0 / lsum
    g9 = (2.0 * q * inv_l) * gq - (q * q * inv_l * inv_l) * gl
    h9 = (
        (2.0 * inv_l) * outer(gq, gq)
        + (2.0 * q * inv_l) * hq
        - (2.0 * q * inv_l * inv_l) * (outer(gq, gl) + outer(gl, gq))
        - (q * q * inv_l * inv_l) * hl
        + (2.0 * q * q * inv_l * inv_l * inv_l) * outer(gl, gl)
    )
    return g9, h9


@njit(cache=True)
def _scatter(g_small, h_small, slots, n_slots):
    """Scatter per-node 3-blocks of a sub-case derivative into the pair layout."""
    g = np.zeros(3 * n_slots)
    h = np.zeros((3 * n_slots, 3 * n_slots))
    k = slots.shape[0]
    for i in range(k):
        si = slots[i]
        g[3 * si : 3 * si + 3] = g_small[3 * i : 3 * i + 3]
        for j in range(k):
            sj = slots[j]
            h[3 * si : 3 * si + 3, 3 * sj : 3 * sj + 3] = h_small[
                3 * i : 3 * i + 3, 3 * j : 3 * j + 3
            ]
    return g, h


@njit(cache=True)
def pp_d2_grad_hess(a, b):
    g, h = _pp_grad_hess(a, b)
    return pp_d2(a, b), 0, g, h


@njit(cache=True)
def pe_d2_grad_hess(p, e0, e1):
    d2, region, _ = pe_classify(p, e0, e1)
    if region == PE_INTERIOR:
        g, h = _pe_interior_grad_hess(p, e0, e1)
        return d2, region, g, h
    if region == PE_AT_E1:
        gs, hs = _pp_grad_hess(p, e1)
        g, h = _scatter(gs, hs, np.array([0, 2]), 3)
        return d2, region, g, h
    gs, hs = _pp_grad_hess(p, e0)
    g, h = _scatter(gs, hs, np.array([0, 1]), 3)
    return d2, region, g, h


@njit(cache=True)
def pt_d2_grad_hess(p, t0, t1, t2):
    d2, region, _, _ = pt_classify(p, t0, t1, t2)
    if region == PT_INTERIOR:
        w = p - t0
        u = t1 - t0
        v = t2 - t0
        g9, h9 = _line_plane_grad_hess(w, u, v)
        amap = np.zeros((9, 12))
        for i in range(3):
            amap[i, i] = 1.0
            amap[i, 3 + i] = -1.0
            amap[3 + i, 3 + i] = -1.0
            amap[3 + i, 6 + i] = 1.0
            amap[6 + i, 3 + i] = -1.0
            amap[6 + i, 9 + i] = 1.0
        g = amap.T @ g9
        h = amap.T @ h9 @ amap
        return d2, region, g, h
    tri = (t0, t1, t2)
    if region <= PT_AT_T2:
        gs, hs = _pp_grad_hess(p, tri[region])
        g, h = _scatter(gs, hs, np.array([0, 1 + region]), 4)
        return d2, region, g, h
    if region == PT_EDGE_01:
        i, j = 0, 1
    elif region == PT_EDGE_12:
        i, j = 1, 2
    else:
        i, j = 2, 0
    gs, hs = _pe_interior_grad_hess(p, tri[i], tri[j])
    g, h = _scatter(gs, hs, np.array([0, 1 + i, 1 + j]), 4)
    return d2, region, g, h


@njit(cache=True)
def ee_d2_grad_hess(a0, a1, b0, b1):
    d2, region, _, _ = ee_classify(a0, a1, b0, b1)
    if region == EE_INTERIOR:
        w = b0 - a0
        u = a1 - a0
        v = b1 - b0
        g9, h9 = _line_plane_grad_hess(w, u, v)
        amap = np.zeros((9, 12))
        for i in range(3):
            amap[i, i] = -1.0
            amap[i, 6 + i] = 1.0
            amap[3 + i, i] = -1.0
            amap[3 + i, 3 + i] = 1.0
            amap[6 + i, 6 + i] = -1.0
            amap[6 + i, 9 + i] = 1.0
        g = amap.T @ g9
        h = amap.T @ h9 @ amap
        return d2, region, g, h
    ia = region // 3
    ib = region % 3
    a_pts = (a0, a1)
    b_pts = (b0, b1)
    if ia < 2 and ib < 2:
        gs, hs = _pp_grad_hess(a_pts[ia], b_pts[ib])
        g, h = _scatter(gs, hs, np.array([ia, 2 + ib]), 4)
        return d2, region, g, h
    if ia < 2:
        gs, hs = _pe_interior_grad_hess(a_pts[ia], b0, b1)
        g, h = _scatter(gs, hs, np.array([ia, 2, 3]), 4)
        return d2, region, g, h
    gs, hs = _pe_interior_grad_hess(b_pts[ib], a0, a1)
    g, h = _scatter(gs, hs, np.array([2 + ib, 0, 1]), 4)
    return d2, region, g, h


@njit(cache=True)
def pair_d2(kind, x0, x1, x2, x3):
    """Squared distance for a pair given up to four node positions."""
    if kind == 0:
        return pp_d2(x0, x1)
    if kind == 1:
        d2, _, _ = pe_classify(x0, x1, x2)
        return d2
    if kind == 2:
        d2, _, _, _ = pt_classify(x0, x1, x2, x3)
        return d2
    d2, _, _, _ = ee_classify(x0, x1, x2, x3)
    return d2


@njit(cache=True)
def pair_d2_grad_hess(kind, x0, x1, x2, x3):
    """(d2, region, grad(12), hess(12,12)) with unused trailing slots zeroed."""
    g = np.zeros(12)
    h = np.zeros((12, 12))
    if kind == 0:
        d2, region, gs, hs = pp_d2_grad_hess(x0, x1)
        g[:6] = gs
        h[:6, :6] = hs
    elif kind == 1:
        d2, region, gs, hs = pe_d2_grad_hess(x0, x1, x2)
        g[:9] = gs
        h[:9, :9] = hs
    elif kind == 2:
        d2, region, g2, h2 = pt_d2_grad_hess(x0, x1, x2, x3)
        g[:] = g2
        h[:, :] = h2
    else:
        d2, region, g2, h2 = ee_d2_grad_hess(x0, x1, x2, x3)
        g[:] = g2
        h[:, :] = h2
    return d2, region, g, h


@njit(cache=True)
def batch_pair_d2(kinds, nodes, x):
    """d2 for each (kind, node-quad) pair against positions x (n, 3)."""
    n = kinds.shape[0]
    out = np.empty(n)
    zero = np.zeros(3)
    for i in range(n):
        k = kinds[i]
        x0 = x[nodes[i, 0]]
        x1 = x[nodes[i, 1]]
        x2 = x[nodes[i, 2]] if nodes[i, 2] >= 0 else zero
        x3 = x[nodes[i, 3]] if nodes[i, 3] >= 0 else zero
        out[i] = pair_d2(k, x0, x1, x2, x3)
    return out


# ---------------------------------------------------------------------------
# Public single-pair API
# ---------------------------------------------------------------------------


def dist_sq_point_point(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return DistanceResult(pp_d2(a, b), 0, np.empty(0))


def dist_sq_point_edge(p, e0, e1):
    p = np.asarray(p, dtype=np.float64)
    e0 = np.asarray(e0, dtype=np.float64)
    e1 = np.asarray(e1, dtype=np.float64)
    d2, region, gamma = pe_classify(p, e0, e1)
    return DistanceResult(d2, int(region), np.array([gamma]))


def dist_sq_point_triangle(p, t0, t1, t2):
    p = np.asarray(p, dtype=np.float64)
    t0 = np.asarray(t0, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    d2, region, b1, b2 = pt_classify(p, t0, t1, t2)
    return DistanceResult(d2, int(region), np.array([b1, b2]))


def dist_sq_edge_edge(a0, a1, b0, b1):
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    b0 = np.asarray(b0, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)
    d2, region, ga, gb = ee_classify(a0, a1, b0, b1)
    return DistanceResult(d2, int(region), np.array([ga, gb]))


def dist_sq_derivatives(pair: PrimitivePair, positions):
    """Gradient and Hessian of d^2 w.r.t. the stacked coordinates of pair.nodes."""
    x = np.asarray(positions, dtype=np.float64)
    pts = [x[i] for i in pair.nodes]
    if pair.kind == PairKind.POINT_POINT:
        _, _, g, h = pp_d2_grad_hess(pts[0], pts[1])
    elif pair.kind == PairKind.POINT_EDGE:
        _, _, g, h = pe_d2_grad_hess(pts[0], pts[1], pts[2])
    elif pair.kind == PairKind.POINT_TRIANGLE:
        _, _, g, h = pt_d2_grad_hess(pts[0], pts[1], pts[2], pts[3])
    else:
        _, _, g, h = ee_d2_grad_hess(pts[0], pts[1], pts[2], pts[3])
    return g, h


def dist_sq_pair(pair: PrimitivePair, positions):
    """Squared distance of a pair against a full position array."""
    x = np.asarray(positions, dtype=np.float64)
    pts = [x[i] for i in pair.nodes]
    if pair.kind == PairKind.POINT_POINT:
        return DistanceResult(pp_d2(pts[0], pts[1]), 0, np.empty(0))
    if pair.kind == PairKind.POINT_EDGE:
        d2, region, gamma = pe_classify(pts[0], pts[1], pts[2])
        return DistanceResult(d2, int(region), np.array([gamma]))
    if pair.kind == PairKind.POINT_TRIANGLE:
        d2, region, b1, b2 = pt_classify(pts[0], pts[1], pts[2], pts[3])
        return DistanceResult(d2, int(region), np.array([b1, b2]))
    d2, region, ga, gb = ee_classify(pts[0], pts[1], pts[2], pts[3])
    return DistanceResult(d2, int(region), np.array([ga, gb]))
