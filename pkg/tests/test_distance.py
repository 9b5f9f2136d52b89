"""Squared-distance kernels against sampling oracles and finite differences."""

import numpy as np
import pytest

from codimsim import distance as D
from conftest import fd_gradient, fd_jacobian, rel_err


def sample_oracle_pe(p, e0, e1, n=10_000):
    """Dense gamma sampling of the point-segment distance, with one local
    refinement pass around the coarse minimizer."""
    gammas = np.linspace(0.0, 1.0, n)
    pts = e0[None, :] + gammas[:, None] * (e1 - e0)[None, :]
    d = np.sum((pts - p[None, :]) ** 2, axis=1)
    k = int(np.argmin(d))
    lo = gammas[max(0, k - 1)]
    hi = gammas[min(n - 1, k + 1)]
    fine = np.linspace(lo, hi, n)
    pts = e0[None, :] + fine[:, None] * (e1 - e0)[None, :]
    return min(d[k], np.min(np.sum((pts - p[None, :]) ** 2, axis=1)))


def sample_oracle_pt(p, t0, t1, t2, n=200):
    """Barycentric grid sampling of the point-triangle distance."""
    best = np.inf
    us = np.linspace(0.0, 1.0, n)
    for u in us:
        vs = np.linspace(0.0, 1.0 - u, max(2, int(n * (1.0 - u)) + 1))
        pts = t0 + u * (t1 - t0) + vs[:, None] * (t2 - t0)
        best = min(best, np.min(np.sum((pts - p) ** 2, axis=1)))
    return best


def sample_oracle_ee(a0, a1, b0, b1, n=300):
    """2-D grid sampling over both segment parameters."""
    ga = np.linspace(0.0, 1.0, n)
    gb = np.linspace(0.0, 1.0, n)
    pa = a0[None, :] + ga[:, None] * (a1 - a0)[None, :]
    pb = b0[None, :] + gb[:, None] * (b1 - b0)[None, :]
    d = pa[:, None, :] - pb[None, :, :]
    return np.min(np.sum(d * d, axis=2))


def test_point_point_trivials():
    assert D.dist_sq_point_point((0, 0, 0), (0, 0, 0)).d_sq == 0.0
    assert D.dist_sq_point_point((0, 0, 0), (2, 0, 0)).d_sq == 4.0
    # direct arithmetic cross-check: 3^2 + 4^2 = 25
    assert D.dist_sq_point_point((1, 2, 3), (4, 6, 3)).d_sq == 25.0


def test_point_edge_trivials():
    r = D.dist_sq_point_edge((0, 1, 0), (-1, 0, 0), (1, 0, 0))
    assert r.d_sq == pytest.approx(1.0, abs=1e-15)
    assert r.region == D.PE_INTERIOR
    assert r.barycentric[0] == pytest.approx(0.5)

    r = D.dist_sq_point_edge((3, 0, 0), (-1, 0, 0), (1, 0, 0))
    assert r.d_sq == pytest.approx(4.0, abs=1e-15)
    assert r.region == D.PE_AT_E1


def test_point_edge_degenerate():
    r = D.dist_sq_point_edge((1, 0, 0), (0, 0, 0), (0, 0, 0))
    assert r.region == D.PE_DEGENERATE
    assert r.d_sq == 1.0


def test_point_edge_sampling_oracle(rng):
    for _ in range(50):
        p = rng.uniform(-1, 1, 3)
        e0 = rng.uniform(-1, 1, 3)
        e1 = rng.uniform(-1, 1, 3)
        r = D.dist_sq_point_edge(p, e0, e1)
        oracle = sample_oracle_pe(p, e0, e1)
        assert r.d_sq <= oracle + 1e-14
        assert abs(r.d_sq - oracle) <= 1e-7 * max(1.0, oracle)
    # the pinned example state
    p = np.array([0.3, 0.7, 0.2])
    e0 = np.array([-0.4, -0.1, 0.3])
    e1 = np.array([0.8, 0.2, -0.5])
    r = D.dist_sq_point_edge(p, e0, e1)
    assert abs(r.d_sq - sample_oracle_pe(p, e0, e1)) <= 1e-10 * max(1.0, r.d_sq)


def test_point_triangle_trivials():
    t0 = np.array([-1.0, -0.5, 0.0])
    t1 = np.array([1.0, -0.5, 0.0])
    t2 = np.array([0.0, 1.0, 0.0])
    r = D.dist_sq_point_triangle((0, 0, 1), t0, t1, t2)
    assert r.d_sq == pytest.approx(1.0, abs=1e-15)
    assert r.region == D.PT_INTERIOR
    # coplanar point inside the triangle
    r = D.dist_sq_point_triangle((0, 0, 0), t0, t1, t2)
    assert r.d_sq == pytest.approx(0.0, abs=1e-15)


def test_point_triangle_grid_oracle(rng):
    worst = 0.0
    for _ in range(120):
        pts = rng.uniform(-1, 1, (4, 3))
        r = D.dist_sq_point_triangle(*pts)
        oracle = sample_oracle_pt(*pts)
        assert r.d_sq <= oracle + 1e-12
        worst = max(worst, oracle - r.d_sq)
    assert worst < 1e-3  # grid resolution bound; exactness checked via subcases


def test_point_triangle_matches_subcase_minimum(rng):
    """d_sq equals the exhaustive minimum over all 7 sub-case evaluations."""
    for _ in range(2000):
        p, t0, t1, t2 = rng.uniform(-1, 1, (4, 3))
        r = D.dist_sq_point_triangle(p, t0, t1, t2)
        cases = [
            D.pp_d2(p, t0), D.pp_d2(p, t1), D.pp_d2(p, t2),
            D.pe_classify(p, t0, t1)[0],
            D.pe_classify(p, t1, t2)[0],
            D.pe_classify(p, t2, t0)[0],
        ]
        n = np.cross(t1 - t0, t2 - t0)
        w = p - t0
        # plane distance counts only when the projection lands inside
        bary = np.linalg.lstsq(
            np.column_stack([t1 - t0, t2 - t0]), w - n * (w @ n) / (n @ n),
            rcond=None,
        )[0]
        if bary[0] >= 0 and bary[1] >= 0 and bary.sum() <= 1:
            cases.append((w @ n) ** 2 / (n @ n))
        assert r.d_sq <= min(cases) + 1e-12
        assert r.d_sq >= min(cases) - 1e-12


def test_edge_edge_trivials():
    r = D.dist_sq_edge_edge((-1, 0, 0), (1, 0, 0), (0, -1, 1), (0, 1, 1))
    assert r.d_sq == pytest.approx(1.0, abs=1e-15)
    assert r.region == D.EE_INTERIOR
    # parallel coplanar unit-offset segments
    r = D.dist_sq_edge_edge((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0))
    assert r.d_sq == pytest.approx(1.0, abs=1e-15)


def test_edge_edge_grid_oracle(rng):
    for _ in range(120):
        pts = rng.uniform(-1, 1, (4, 3))
        r = D.dist_sq_edge_edge(*pts)
        oracle = sample_oracle_ee(*pts)
        assert r.d_sq <= oracle + 1e-12
        assert oracle - r.d_sq < 1e-3


def test_edge_edge_symmetry_and_subcases(rng):
    for _ in range(2000):
        a0, a1, b0, b1 = rng.uniform(-1, 1, (4, 3))
        r1 = D.dist_sq_edge_edge(a0, a1, b0, b1)
        r2 = D.dist_sq_edge_edge(b0, b1, a0, a1)
        assert r1.d_sq == pytest.approx(r2.d_sq, rel=1e-14, abs=1e-300)
        # min over the 4 point-edge reductions bounds the result from above,
        # and the interior case can only improve on it
        subcases = [
            D.pe_classify(a0, b0, b1)[0], D.pe_classify(a1, b0, b1)[0],
            D.pe_classify(b0, a0, a1)[0], D.pe_classify(b1, a0, a1)[0],
        ]
        assert r1.d_sq <= min(subcases) + 1e-12


def test_rigid_invariance(rng):
    for _ in range(200):
        pts = rng.uniform(-1, 1, (4, 3))
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, 2 * np.pi)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
             [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(ang) * k + (1 - np.cos(ang)) * (k @ k)
        shift = rng.uniform(-5, 5, 3)
        moved = pts @ rot.T + shift
        for kind, n in ((0, 2), (1, 3), (2, 4), (3, 4)):
            d_a = D.pair_d2(kind, *pts)
            d_b = D.pair_d2(kind, *moved)
            assert abs(d_a - d_b) <= 1e-12 * max(1.0, d_a)


def test_classification_continuity(rng):
    """d_sq stays continuous across sub-case boundaries.

    Boundary states are found by bisecting between random configurations
    whose regions differ; distances on both sides of the crossing agree.
    """

    def classify(kind, pts):
        if kind == 1:
            r = D.pe_classify(pts[0], pts[1], pts[2])
        elif kind == 2:
            r = D.pt_classify(*pts)
        else:
            r = D.ee_classify(*pts)
        return r[0], r[1]

    checked = 0
    attempts = 0
    while checked < 200 and attempts < 5000:
        attempts += 1
        kind = int(rng.integers(1, 4))
        a = rng.uniform(-1, 1, (4, 3))
        b = a + rng.normal(scale=0.5, size=(4, 3))
        _, reg_a = classify(kind, list(a))
        _, reg_b = classify(kind, list(b))
        if reg_a == reg_b:
            continue
        lo, hi = 0.0, 1.0
        for _ in range(45):  # bisect onto the boundary
            mid = 0.5 * (lo + hi)
            _, reg_m = classify(kind, list(a + mid * (b - a)))
            if reg_m == reg_a:
                lo = mid
            else:
                hi = mid
        d_lo, r_lo = classify(kind, list(a + lo * (b - a)))
        d_hi, r_hi = classify(kind, list(a + hi * (b - a)))
        if r_lo == r_hi:
            continue
        checked += 1
        assert abs(d_lo - d_hi) <= 1e-10 * max(1.0, d_lo)
    assert checked >= 150


def _grad_of(kind, z):
    pts = z.reshape(-1, 3)
    if kind == 0:
        return D.pp_d2_grad_hess(pts[0], pts[1])
    if kind == 1:
        return D.pe_d2_grad_hess(pts[0], pts[1], pts[2])
    if kind == 2:
        return D.pt_d2_grad_hess(pts[0], pts[1], pts[2], pts[3])
    return D.ee_d2_grad_hess(pts[0], pts[1], pts[2], pts[3])


def _value_of(kind, z):
    pts = z.reshape(-1, 3)
    return D.pair_d2(kind, pts[0], pts[1],
                     pts[2] if len(pts) > 2 else np.zeros(3),
                     pts[3] if len(pts) > 3 else np.zeros(3))


@pytest.mark.parametrize("kind,nnodes", [(0, 2), (1, 3), (2, 4), (3, 4)])
def test_derivatives_match_finite_differences(kind, nnodes, rng):
    tested = 0
    while tested < 50:
        z = rng.uniform(-1, 1, 3 * nnodes)
        d2, region, g, h = _grad_of(kind, z)
        # skip states whose region flips under the FD probe
        stable = all(
            _grad_of(kind, z + rng.normal(scale=3e-6, size=z.size))[1] == region
            for _ in range(4)
        )
        if not stable:
            continue
        tested += 1
        gfd = fd_gradient(lambda zz: _value_of(kind, zz), z)
        assert rel_err(g[: z.size], gfd) < 1e-5
        hfd = fd_jacobian(lambda zz: _grad_of(kind, zz)[2][: zz.size], z, h=1e-7)
        assert rel_err(h[: z.size, : z.size], hfd) < 1e-4
        assert np.allclose(h, h.T, atol=1e-9)


def test_point_point_gradient_example():
    _, _, g, _ = D.pp_d2_grad_hess(np.zeros(3), np.array([1.0, 0, 0]))
    assert np.allclose(g[:3], [-2.0, 0.0, 0.0])


def test_edge_edge_interior_hessian_example():
    a0 = np.array([-1.0, 0, 0])
    a1 = np.array([1.0, 0, 0])
    b0 = np.array([0.0, -1, 1])
    b1 = np.array([0.0, 1, 1])
    d2, region, g, h = D.ee_d2_grad_hess(a0, a1, b0, b1)
    assert region == D.EE_INTERIOR
    assert np.allclose(h, h.T, atol=1e-12)
    z = np.concatenate([a0, a1, b0, b1])
    hfd = fd_jacobian(lambda zz: _grad_of(3, zz)[2], z, h=1e-6)
    assert rel_err(h, hfd) < 1e-4


def test_primitive_pair_validation():
    with pytest.raises(ValueError):
        D.PrimitivePair(D.PairKind.POINT_POINT, (3, 3))
    with pytest.raises(ValueError):
        D.PrimitivePair(D.PairKind.POINT_TRIANGLE, (0, 1, 2))
    pair = D.PrimitivePair(D.PairKind.EDGE_EDGE, (0, 1, 2, 3), xi=0.01)
    assert pair.xi == 0.01


def test_dist_sq_derivatives_api(rng):
    x = rng.normal(size=(6, 3))
    pair = D.PrimitivePair(D.PairKind.POINT_TRIANGLE, (5, 0, 2, 3))
    g, h = D.dist_sq_derivatives(pair, x)
    assert g.shape == (12,)
    assert h.shape == (12, 12)
    flat = np.concatenate([x[5], x[0], x[2], x[3]])
    gfd = fd_gradient(lambda z: _value_of(2, z), flat)
    assert rel_err(g, gfd) < 1e-5
