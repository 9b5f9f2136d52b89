"""Contact barrier values, derivatives, offset algebra and stiffness rules."""

import math

import numpy as np
import pytest

from codimsim import barrier as B
from codimsim.distance import PairKind, PrimitivePair
from conftest import fd_gradient, fd_jacobian, rel_err

# Frozen from an independent closed-form evaluation:
# -(0.25-1)^2 * ln(0.25/1) and -(0.44-1.25)^2 * ln(0.44/1.25).
BARRIER_QUARTER = 0.7797905781299385
OFFSET_EXAMPLE = 0.6850498242302688


def test_barrier_closed_form_values():
    assert B.barrier(1.0, 1.0) == 0.0
    assert B.barrier(2.0, 1.0) == 0.0
    assert B.barrier(0.25, 1.0) == pytest.approx(BARRIER_QUARTER, rel=1e-14)


def test_barrier_rejects_nonpositive():
    with pytest.raises(B.OffsetPenetrationError):
        B.barrier(0.0, 1.0)
    with pytest.raises(B.OffsetPenetrationError):
        B.barrier(-1.0, 1.0)


def test_barrier_diverges_toward_zero():
    vals = [B.barrier(d, 1.0) for d in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e1


def test_offset_barrier_values():
    # zero offset reduces to the plain barrier
    for d_sq in (0.1, 0.25, 0.5, 0.99, 1.5):
        assert B.offset_barrier(d_sq, 0.0, 1.0) == B.barrier(d_sq, 1.0)
    # exact zero at the support boundary d = xi + dhat
    xi, dhat = 1.0, 0.5
    assert B.offset_barrier((xi + dhat) ** 2, xi, dhat) == 0.0
    assert B.offset_barrier(1.2**2, 1.0, 0.5) == pytest.approx(
        OFFSET_EXAMPLE, rel=1e-14
    )


def test_offset_penetration_fatal():
    with pytest.raises(B.OffsetPenetrationError):
        B.offset_barrier(0.9, 1.0, 0.5)


def test_offset_substitution_identity(rng):
    """offset_barrier is the plain barrier on the shifted squared distance:
    bitwise for the 2*xi*dhat + dhat^2 threshold form, and to roundoff for the
    algebraically equal (xi+dhat)^2 - xi^2 form."""
    for _ in range(100_000):
        xi = rng.uniform(0.0, 2.0)
        dhat = rng.uniform(1e-4, 1.0)
        d = rng.uniform(xi + 1e-9, xi + 2.0 * dhat)
        lhs = B.offset_barrier(d * d, xi, dhat)
        exact = B.barrier(d * d - xi * xi, 2.0 * xi * dhat + dhat * dhat)
        assert lhs == exact
        rounded = B.barrier(d * d - xi * xi, (xi + dhat) ** 2 - xi * xi)
        assert abs(lhs - rounded) <= 1e-11 * max(1.0, abs(lhs))


def test_support_property(rng):
    for _ in range(2000):
        xi = rng.uniform(0.0, 1.0)
        dhat = rng.uniform(1e-3, 1.0)
        d = rng.uniform(xi + 1e-9, xi + 3 * dhat)
        val = B.offset_barrier(d * d, xi, dhat)
        if d >= xi + dhat:
            assert val == 0.0
        else:
            assert val > 0.0


def test_barrier_derivs_match_finite_differences(rng):
    for _ in range(300):
        dhat_sq = rng.uniform(0.5, 2.0)
        d_sq = rng.uniform(0.02, 0.995) * dhat_sq
        g, h = B.barrier_derivs(d_sq, dhat_sq)
        eps = 1e-7 * d_sq
        gfd = (B.barrier(d_sq + eps, dhat_sq) - B.barrier(d_sq - eps, dhat_sq)) / (
            2 * eps
        )
        hfd = (
            B.barrier_derivs(d_sq + eps, dhat_sq)[0]
            - B.barrier_derivs(d_sq - eps, dhat_sq)[0]
        ) / (2 * eps)
        assert abs(g - gfd) <= 1e-6 * max(1.0, abs(gfd))
        assert abs(h - hfd) <= 1e-6 * max(1.0, abs(hfd))


def test_barrier_derivs_clamp_boundary():
    assert B.barrier_derivs(1.0, 1.0) == (0.0, 0.0)
    # repulsive (negative) first derivative deep inside the support
    g, _ = B.barrier_derivs(0.01, 1.0)
    assert g < 0.0


def test_monotonicity_inside_support(rng):
    for _ in range(2000):
        dhat_sq = rng.uniform(0.1, 4.0)
        d_sq = rng.uniform(1e-6, 1.0 - 1e-9) * dhat_sq
        g, _ = B.barrier_derivs(d_sq, dhat_sq)
        assert g < 0.0


def test_c2_continuity_at_clamp():
    """Value/first/second derivatives all tend to 0 at the support boundary."""
    dhat_sq = 1.0
    gap = 1e-6 * dhat_sq
    below = dhat_sq - gap
    assert B.barrier(below, dhat_sq) < 1e-6
    g, h = B.barrier_derivs(below, dhat_sq)
    assert abs(g) < 1e-5
    assert abs(h) < 1e-4
    # straddle: discrepancy across the boundary
    assert abs(B.barrier(below, dhat_sq) - B.barrier(dhat_sq + gap, dhat_sq)) < 1e-6


def test_offset_c2_continuity():
    xi, dhat = 0.3, 0.2
    boundary_sq = (xi + dhat) ** 2
    gap = 1e-6 * dhat**2
    v_in = B.offset_barrier(boundary_sq - gap, xi, dhat)
    v_out = B.offset_barrier(boundary_sq + gap, xi, dhat)
    assert abs(v_in - v_out) < 1e-6
    g, h = B.offset_barrier_derivs(boundary_sq - gap, xi, dhat)
    assert abs(g) < 1e-5 and abs(h) < 1e-3


def test_contact_energy_outside_support(rng):
    pos = np.array([[10.0, 0, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0]])
    pair = PrimitivePair(PairKind.POINT_TRIANGLE, (0, 1, 2, 3), xi=0.01)
    params = B.BarrierParams(dhat=0.5, kappa=3.0)
    assert B.contact_energy(pair, pos, params) == 0.0
    _, g, h = B.contact_grad_hess(pair, pos, params)
    assert np.all(g == 0.0) and np.all(h == 0.0)


def test_contact_gradient_matches_fd(rng):
    params = B.BarrierParams(dhat=0.6, kappa=2.5)
    checked = 0
    while checked < 40:
        pos = rng.normal(size=(4, 3))
        pos[0] = pos[1:].mean(axis=0) + rng.normal(scale=0.3, size=3)
        pair = PrimitivePair(PairKind.POINT_TRIANGLE, (0, 1, 2, 3), xi=0.05)
        try:
            e = B.contact_energy(pair, pos, params)
        except B.OffsetPenetrationError:
            continue
        if e == 0.0:
            continue
        checked += 1
        _, g, _ = B.contact_grad_hess(pair, pos, params, project=False)
        gfd = fd_gradient(
            lambda z: B.contact_energy(pair, z.reshape(4, 3), params),
            pos.ravel(), h=1e-7,
        )
        assert rel_err(g, gfd) < 1e-4


def test_psd_projection_contract(rng):
    params = B.BarrierParams(dhat=0.6, kappa=2.5)
    checked = 0
    while checked < 30:
        pos = rng.normal(size=(4, 3))
        pos[0] = pos[1:].mean(axis=0) + rng.normal(scale=0.2, size=3)
        pair = PrimitivePair(PairKind.POINT_TRIANGLE, (0, 1, 2, 3), xi=0.0)
        try:
            e, _, h = B.contact_grad_hess(pair, pos, params, project=True)
        except B.OffsetPenetrationError:
            continue
        if e == 0.0:
            continue
        checked += 1
        w = np.linalg.eigvalsh(h)
        assert w.min() >= -1e-10 * max(1.0, np.abs(w).max())


def test_ee_mollifier_smooths_parallel_crossing():
    """Mollified EE energy varies C^1 through a near-parallel sweep."""
    a0 = np.array([-0.5, 0.0, 0.0])
    a1 = np.array([0.5, 0.0, 0.0])
    angles = np.linspace(-0.03, 0.03, 601)
    eps = 1e-3
    es = []
    for th in angles:
        b0 = np.array([-0.5 * np.cos(th), -0.5 * np.sin(th), 0.25])
        b1 = np.array([0.5 * np.cos(th), 0.5 * np.sin(th), 0.25])
        es.append(B.contact_pair_energy(3, a0, a1, b0, b1, 0.0, 1.0, 1.0, eps))
    es = np.array(es)
    slopes = np.diff(es) / np.diff(angles)
    # without mollification the slope jumps at zero; with it, curvature stays
    # bounded through the crossing
    assert np.abs(np.diff(slopes)).max() < 50.0 * np.abs(es).max()


def test_kappa_initialize_and_update():
    ks = B.ContactStiffness()
    ks.initialize(mass_diag_mean=2.0, xi_ref=0.0, dhat=0.01)
    k0 = ks.kappa
    assert k0 > 0.0
    assert ks.kappa_max == pytest.approx(B.KAPPA_CAP_FACTOR * k0)

    # no active contacts: unchanged
    assert B.update_kappa(ks, None) == k0

    # stagnation two consecutive iterations below the gap threshold: doubled
    ks.update(5e-10)
    assert ks.update(5.01e-10) == pytest.approx(2.0 * k0)

    # large gap: unchanged
    ks2 = B.ContactStiffness()
    ks2.initialize(2.0, 0.0, 0.01)
    ks2.update(1.0)
    assert ks2.update(1.0) == ks2.kappa_max / B.KAPPA_CAP_FACTOR

    # saturation at the cap
    ks3 = B.ContactStiffness()
    ks3.initialize(2.0, 0.0, 0.01)
    ks3.kappa = ks3.kappa_max
    ks3.update(1e-12)
    assert ks3.update(1e-12) == ks3.kappa_max


def test_kappa_never_decreases_within_step():
    ks = B.ContactStiffness()
    ks.initialize(1.0, 0.0, 0.01)
    history = [ks.kappa]
    gaps = [1e-10, 1.001e-10, 0.5, 1e-10, 1.0001e-10, 1e-10]
    for g in gaps:
        history.append(ks.update(g))
    assert all(b >= a for a, b in zip(history, history[1:]))


def test_barrier_params_validation():
    with pytest.raises(ValueError):
        B.BarrierParams(dhat=0.0)
    with pytest.raises(ValueError):
        B.BarrierParams(dhat=1.0, kappa=-1.0)
    with pytest.raises(ValueError):
        B.BarrierParams(dhat=1.0, s_conservative=1.0)
    p = B.BarrierParams(dhat=1.0)
    assert p.s_conservative == 0.1
