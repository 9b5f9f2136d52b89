"""Dense time-sampling oracle for CCD validation.

Independent of the conservative-advancement algorithm: it sweeps the
trajectory at uniformly sampled times and evaluates distances with its own
allocation-free scalar kernels (cross-checked against the geometry module in
the test suite).
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _pp(ax, ay, az, bx, by, bz):
    dx = ax - bx
    dy = ay - by
    dz = az - bz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, inline="always")
def _pe(px, py, pz, ax, ay, az, bx, by, bz):
    ex = bx - ax
    ey = by - ay
    ez = bz - az
    ll = ex * ex + ey * ey + ez * ez
    if ll == 0.0:
        return _pp(px, py, pz, ax, ay, az)
    t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return _pp(px, py, pz, ax + t * ex, ay + t * ey, az + t * ez)


@njit(cache=True)
def _pt(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return _pp(px, py, pz, ax, ay, az)
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return _pp(px, py, pz, bx, by, bz)
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return _pp(px, py, pz, cx, cy, cz)
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return _pp(px, py, pz, ax + v * abx, ay + v * aby, az + v * abz)
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return _pp(px, py, pz, ax + w * acx, ay + w * acy, az + w * acz)
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return _pp(
            px, py, pz,
            bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz),
        )
    denom = va + vb + vc
    if denom == 0.0:  # degenerate triangle: best edge
        e1 = _pe(px, py, pz, ax, ay, az, bx, by, bz)
        e2 = _pe(px, py, pz, bx, by, bz, cx, cy, cz)
        e3 = _pe(px, py, pz, cx, cy, cz, ax, ay, az)
        return min(e1, min(e2, e3))
    v = vb / denom
    w = vc / denom
    return _pp(
        px, py, pz,
        ax + v * abx + w * acx, ay + v * aby + w * acy, az + v * abz + w * acz,
    )


@njit(cache=True)
def _ee(ax, ay, az, bx, by, bz, cx, cy, cz, dx_, dy_, dz_):
    ux = bx - ax
    uy = by - ay
    uz = bz - az
    vx = dx_ - cx
    vy = dy_ - cy
    vz = dz_ - cz
    uu = ux * ux + uy * uy + uz * uz
    vv = vx * vx + vy * vy + vz * vz
    uv = ux * vx + uy * vy + uz * vz
    denom = uu * vv - uv * uv
    best = np.inf
    if denom > 1e-20 * uu * vv:
        rx = ax - cx
        ry = ay - cy
        rz = az - cz
        ru = ux * rx + uy * ry + uz * rz
        rv = vx * rx + vy * ry + vz * rz
        s = (uv * rv - ru * vv) / denom
        t = (uu * rv - uv * ru) / denom
        if 0.0 < s < 1.0 and 0.0 < t < 1.0:
            best = _pp(
                ax + s * ux, ay + s * uy, az + s * uz,
                cx + t * vx, cy + t * vy, cz + t * vz,
            )
    e = _pe(ax, ay, az, cx, cy, cz, dx_, dy_, dz_)
    if e < best:
        best = e
    e = _pe(bx, by, bz, cx, cy, cz, dx_, dy_, dz_)
    if e < best:
        best = e
    e = _pe(cx, cy, cz, ax, ay, az, bx, by, bz)
    if e < best:
        best = e
    e = _pe(dx_, dy_, dz_, ax, ay, az, bx, by, bz)
    if e < best:
        best = e
    return best


@njit(cache=True, inline="always")
def oracle_d2(kind, x, n):
    """Minimum squared distance over the pair's sub-cases (lean scalar path)."""
    if kind == 0:
        return _pp(x[0, 0], x[0, 1], x[0, 2], x[1, 0], x[1, 1], x[1, 2])
    if kind == 1:
        return _pe(
            x[0, 0], x[0, 1], x[0, 2], x[1, 0], x[1, 1], x[1, 2],
            x[2, 0], x[2, 1], x[2, 2],
        )
    if kind == 2:
        return _pt(
            x[0, 0], x[0, 1], x[0, 2], x[1, 0], x[1, 1], x[1, 2],
            x[2, 0], x[2, 1], x[2, 2], x[3, 0], x[3, 1], x[3, 2],
        )
    return _ee(
        x[0, 0], x[0, 1], x[0, 2], x[1, 0], x[1, 1], x[1, 2],
        x[2, 0], x[2, 1], x[2, 2], x[3, 0], x[3, 1], x[3, 2],
    )


@njit(cache=True)
def min_gap_up_to(kind, xs, ps, xi, t_end, nsamples):
    """Minimum gap d - xi over nsamples+1 uniform times in [0, t_end]."""
    n = xs.shape[0]
    best = np.inf
    work = np.empty((n, 3))
    for i in range(nsamples + 1):
        t = t_end * i / nsamples
        for j in range(n):
            work[j, 0] = xs[j, 0] + t * ps[j, 0]
            work[j, 1] = xs[j, 1] + t * ps[j, 1]
            work[j, 2] = xs[j, 2] + t * ps[j, 2]
        gap = np.sqrt(oracle_d2(kind, work, n)) - xi
        if gap < best:
            best = gap
    return best


@njit(cache=True)
def first_below_target(kind, xs, ps, xi, g, t_max, nsamples):
    """First sampled time whose gap measure falls below g; inf if none."""
    n = xs.shape[0]
    work = np.empty((n, 3))
    for i in range(nsamples + 1):
        t = t_max * i / nsamples
        for j in range(n):
            work[j, 0] = xs[j, 0] + t * ps[j, 0]
            work[j, 1] = xs[j, 1] + t * ps[j, 1]
            work[j, 2] = xs[j, 2] + t * ps[j, 2]
        d_sq = oracle_d2(kind, work, n)
        measure = (d_sq - xi * xi) / (np.sqrt(d_sq) + xi)
        if measure < g:
            return t
    return np.inf


@njit(cache=True)
def gap_at(kind, xs, ps, xi, t):
    n = xs.shape[0]
    work = np.empty((n, 3))
    for j in range(n):
        work[j, 0] = xs[j, 0] + t * ps[j, 0]
        work[j, 1] = xs[j, 1] + t * ps[j, 1]
        work[j, 2] = xs[j, 2] + t * ps[j, 2]
    return np.sqrt(oracle_d2(kind, work, n)) - xi


@njit(cache=True)
def verify_query_core(kind, xs, ps, xi, s, t_c, t_returned, has_t, nsamples):
    """(safe, tight) oracle verdicts for one ACCD result."""
    n = xs.shape[0]
    d0_sq = oracle_d2(kind, xs, n)
    g = s * (d0_sq - xi * xi) / (np.sqrt(d0_sq) + xi)
    first = first_below_target(kind, xs, ps, xi, g, t_c, nsamples)
    if not has_t:
        return np.isinf(first), True
    min_gap = min_gap_up_to(kind, xs, ps, xi, t_returned, nsamples)
    safe = min_gap > 0.0
    tight = t_returned <= first + t_c / nsamples
    return safe, tight


def verify_query(query, t_returned, nsamples=10_000):
    """Oracle verdict for one ACCD result.

    Checks that (a) the gap stays positive along [0, t] and (b) t does not
    exceed the first sampled time the gap measure undershoots the target
    g = s*(d0 - xi). Returns (safe, tight, min_gap, first_crossing_time).
    """
    kind = int(query.kind)
    xs = query.x
    ps = query.p
    xi = float(query.xi)
    d0_sq = oracle_d2(kind, xs, xs.shape[0])
    g = query.s * (d0_sq - xi * xi) / (np.sqrt(d0_sq) + xi)
    first = first_below_target(kind, xs, ps, xi, g, query.t_c, nsamples)
    if t_returned is None:
        return np.isinf(first), True, np.inf, first
    min_gap = min_gap_up_to(kind, xs, ps, xi, t_returned, nsamples)
    safe = min_gap > 0.0
    resolution = query.t_c / nsamples
    tight = t_returned <= first + resolution
    return safe, tight, min_gap, first


@njit(cache=True)
def batch_verify(kinds, xs, ps, xis, s, t_c, ts, nsamples):
    """Vector verdicts for a query batch; ts uses inf for 'no collision'."""
    m = kinds.shape[0]
    safe = np.empty(m, np.bool_)
    tight = np.empty(m, np.bool_)
    for i in range(m):
        kind = kinds[i]
        n = 2
        if kind == 1:
            n = 3
        elif kind >= 2:
            n = 4
        has_t = np.isfinite(ts[i])
        t_r = ts[i] if has_t else 0.0
        sf, tg = verify_query_core(
            kind, xs[i, :n], ps[i, :n], xis[i], s, t_c, t_r, has_t, nsamples
        )
        safe[i] = sf
        tight[i] = tg
    return safe, tight
