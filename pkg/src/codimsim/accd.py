"""Additive conservative-advancement CCD with thickness offsets.

Each query advances local copies of a primitive pair by guaranteed-safe time
increments until the gap measure (d^2 - xi^2)/(sqrt(d^2) + xi) = d - xi first
drops below the target g = s * (initial gap). The returned time is the last
accumulated safe time, so stepping to it keeps the pair's distance strictly
above the offset.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .distance import PAIR_NODE_COUNT, pair_d2

ITERATION_CAP = 1_000_000
# Line-search queries use a tighter operational cap: a capped query still
# returns a valid conservative time, it just restricts the step more.
SOLVER_ITERATION_CAP = 2_000

# Nodes in the first primitive per pair kind (point=1, edge=2).
FIRST_PRIMITIVE_NODES = (1, 1, 1, 2)

NO_COLLISION = np.inf


class StartGapError(RuntimeError):
    """Raised when a CCD query starts at or below its offset distance."""


@dataclass
class CcdQuery:
    """A single CCD query: start positions, displacements, offset and targets."""

    kind: int
    x: np.ndarray  # (n, 3) start positions
    p: np.ndarray  # (n, 3) displacements over the step
    xi: float = 0.0
    s: float = 0.1
    t_c: float = 1.0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        n = PAIR_NODE_COUNT[int(self.kind)]
        if self.x.shape != (n, 3) or self.p.shape != (n, 3):
            raise ValueError(f"kind {self.kind} expects shape ({n}, 3)")
        if not 0.0 < self.s < 1.0:
            raise ValueError("conservative factor s must lie in (0, 1)")


@njit(cache=True, inline="always")
def _gap_measure(d_sq, xi):
    return (d_sq - xi * xi) / (np.sqrt(d_sq) + xi)


@njit(cache=True)
def _centered_lp(p, kind, nfirst, n):
    """Center displacements in place; return l_p (sum of per-primitive maxima)."""
    mean = np.zeros(3)
    for i in range(n):
        mean += p[i]
    mean /= n
    for i in range(n):
        p[i] -= mean
    max_a = 0.0
    for i in range(nfirst):
        v = np.sqrt(p[i, 0] ** 2 + p[i, 1] ** 2 + p[i, 2] ** 2)
        if v > max_a:
            max_a = v
    max_b = 0.0
    for i in range(nfirst, n):
        v = np.sqrt(p[i, 0] ** 2 + p[i, 1] ** 2 + p[i, 2] ** 2)
        if v > max_b:
            max_b = v
    return max_a + max_b


@njit(cache=True)
def _pair_d2_n(kind, xs, n):
    zero = np.zeros(3)
    x2 = xs[2] if n > 2 else zero
    x3 = xs[3] if n > 3 else zero
    return pair_d2(kind, xs[0], xs[1], x2, x3)


@njit(cache=True)
def accd_core(kind, x_in, p_in, xi, s, t_c, max_iter):
    """Conservative-advancement TOI. Returns (t, iterations); t = inf means the
    gap target is never approached within t_c."""
    n = x_in.shape[0]
    nfirst = FIRST_PRIMITIVE_NODES[kind]

    xs = x_in.copy()
    ps = p_in.copy()
    l_p = _centered_lp(ps, kind, nfirst, n)
    if l_p == 0.0:
        return NO_COLLISION, 0

    d_sqr = _pair_d2_n(kind, xs, n)
    if d_sqr - xi * xi <= 0.0:
        return 0.0, 0  # start already at/inside the offset: no safe motion
    sqrt_d = np.sqrt(d_sqr)
    g = s * (d_sqr - xi * xi) / (sqrt_d + xi)

    t = 0.0
    t_l = (1.0 - s) * (d_sqr - xi * xi) / ((sqrt_d + xi) * l_p)
    iterations = 0
    while True:
        iterations += 1
        if iterations > max_iter:
            return t, iterations
        for i in range(n):
            xs[i, 0] += t_l * ps[i, 0]
            xs[i, 1] += t_l * ps[i, 1]
            xs[i, 2] += t_l * ps[i, 2]
        d_sqr = _pair_d2_n(kind, xs, n)
        shifted = d_sqr - xi * xi
        if shifted <= 0.0:
            # Safety net; the conservative bounds keep this unreachable.
            return t, iterations
        sqrt_d = np.sqrt(d_sqr)
        if t > 0.0 and shifted / (sqrt_d + xi) < g:
            return t, iterations
        t += t_l
        if t > t_c:
            return NO_COLLISION, iterations
        t_l = 0.9 * shifted / ((sqrt_d + xi) * l_p)


def toi_lower_bound(query: CcdQuery):
    """Directly computable TOI bound: (d - xi) / l_p with centered displacements.

    Returns inf when relative motion vanishes (no collision possible).
    """
    n = query.x.shape[0]
    ps = query.p.copy()
    l_p = _centered_lp(ps, int(query.kind), FIRST_PRIMITIVE_NODES[int(query.kind)], n)
    if l_p == 0.0:
        return NO_COLLISION
    d_sqr = _pair_d2_n(int(query.kind), query.x, n)
    if d_sqr - query.xi**2 <= 0.0:
        raise StartGapError(f"start gap non-positive: d_sq={d_sqr}, xi={query.xi}")
    return _gap_measure(d_sqr, query.xi) / l_p


def accd_query(query: CcdQuery, max_iter=ITERATION_CAP):
    """Run the additive-CCD refinement. Returns the TOI t or None (no approach
    below the conservative gap target within t_c)."""
    n = query.x.shape[0]
    d_sqr = _pair_d2_n(int(query.kind), query.x, n)
    if d_sqr - query.xi**2 <= 0.0:
        raise StartGapError(f"start gap non-positive: d_sq={d_sqr}, xi={query.xi}")
    t, _ = accd_core(
        int(query.kind), query.x, query.p, query.xi, query.s, query.t_c, max_iter
    )
    return None if t == NO_COLLISION else float(t)


def accd_query_stats(query: CcdQuery, max_iter=ITERATION_CAP):
    """As accd_query but also reports the iteration count."""
    n = query.x.shape[0]
    d_sqr = _pair_d2_n(int(query.kind), query.x, n)
    if d_sqr - query.xi**2 <= 0.0:
        raise StartGapError(f"start gap non-positive: d_sq={d_sqr}, xi={query.xi}")
    t, iters = accd_core(
        int(query.kind), query.x, query.p, query.xi, query.s, query.t_c, max_iter
    )
    return (None if t == NO_COLLISION else float(t)), int(iters)


@njit(cache=True, parallel=True)
def batch_accd(kinds, nodes, x, dx, xis, s, t_c, max_iter):
    """TOI per candidate pair against full position/displacement arrays."""
    m = kinds.shape[0]
    out = np.empty(m)
    for i in prange(m):
        kind = kinds[i]
        n = 2
        if kind == 1:
            n = 3
        elif kind >= 2:
            n = 4
        xs = np.empty((n, 3))
        ps = np.empty((n, 3))
        for j in range(n):
            idx = nodes[i, j]
            xs[j] = x[idx]
            ps[j] = dx[idx]
        t, _ = accd_core(kind, xs, ps, xis[i], s, t_c, max_iter)
        out[i] = t
    return out


def max_step(queries, default=1.0):
    """Global step scale: min over per-query TOIs, capped at `default` (=1)."""
    alpha = default
    for q in queries:
        t = accd_query(q)
        if t is not None and t < alpha:
            alpha = t
    return alpha


def max_step_indexed(kinds, nodes, x, dx, xis, s, t_c=1.0, max_iter=ITERATION_CAP):
    """max_step over index-based candidates (solver hot path)."""
    if len(kinds) == 0:
        return 1.0
    ts = batch_accd(
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(nodes, dtype=np.int64),
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(dx, dtype=np.float64),
        np.ascontiguousarray(xis, dtype=np.float64),
        float(s),
        float(t_c),
        int(max_iter),
    )
    t_min = float(ts.min())
    return min(1.0, t_min)


# ---------------------------------------------------------------------------
# Replay corpus format: one query per line,
#   KIND x... (3 per node) p... (3 per node) xi s
# with KIND in {PP, PE, PT, EE}.
# ---------------------------------------------------------------------------

KIND_NAMES = ("PP", "PE", "PT", "EE")


def format_query(query: CcdQuery):
    nums = np.concatenate([query.x.ravel(), query.p.ravel(), [query.xi, query.s]])
    body = " ".join(f"{v:.17g}" for v in nums)
    return f"{KIND_NAMES[int(query.kind)]} {body}"


def parse_query(line):
    parts = line.split()
    if not parts:
        raise ValueError("empty query line")
    name = parts[0].upper()
    if name not in KIND_NAMES:
        raise ValueError(f"unknown pair kind {parts[0]!r}")
    kind = KIND_NAMES.index(name)
    n = PAIR_NODE_COUNT[kind]
    need = 6 * n + 2
    if len(parts) != 1 + need:
        raise ValueError(f"{name} line needs {need} numbers, got {len(parts) - 1}")
    vals = np.array([float(v) for v in parts[1:]])
    xs = vals[: 3 * n].reshape(n, 3)
    ps = vals[3 * n : 6 * n].reshape(n, 3)
    return CcdQuery(kind, xs, ps, xi=float(vals[-2]), s=float(vals[-1]))


def load_corpus(path):
    queries = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            queries.append(parse_query(line))
    return queries


def save_corpus(path, queries):
    with open(path, "w") as fh:
        for q in queries:
            fh.write(format_query(q) + "\n")
