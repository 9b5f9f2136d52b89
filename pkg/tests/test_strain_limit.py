"""Strain-limit barrier, potential, stiffness adaptation and anisotropic basis."""

import numpy as np
import pytest

from codimsim import strain_limit as SL
from conftest import fd_gradient, rel_err

# Frozen closed-form cross-checks: -(0.5)^2*ln(0.5) and -0.14*ln(0.5).
SL_EXAMPLE = 0.17328679513998632
ETA_EXAMPLE = 0.09704060527839235

RIGHT_TRI = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])


@pytest.fixture
def rest_inv():
    return SL.triangle_rest_inverse(*RIGHT_TRI)


def test_sl_barrier_values():
    assert SL.sl_barrier(1.0, 1.1, 1.0) == 0.0  # activation boundary
    assert SL.sl_barrier(0.9, 1.1, 1.0) == 0.0  # below threshold
    assert SL.sl_barrier(1.05, 1.1, 1.0) == pytest.approx(SL_EXAMPLE, rel=1e-14)


def test_sl_barrier_limit_breach_fatal():
    with pytest.raises(SL.StrainLimitError):
        SL.sl_barrier(1.1, 1.1, 1.0)
    with pytest.raises(SL.StrainLimitError):
        SL.sl_barrier(1.2, 1.1, 1.0)


def test_sl_barrier_normalized():
    assert SL.sl_barrier_normalized(0.0) == 0.0
    assert SL.sl_barrier_normalized(0.5) == 0.0
    assert SL.sl_barrier_normalized(-0.5) == pytest.approx(SL_EXAMPLE, rel=1e-14)


def test_normalization_identity(rng):
    """Barrier value is the normalized barrier of y for all (s, shat, sigma)."""
    for _ in range(100):
        s = rng.uniform(1.005, 1.6)
        shat = rng.uniform(0.7, 1.0)
        sigma = rng.uniform(0.3, s - 1e-9)
        lhs = SL.sl_barrier(sigma, s, shat)
        rhs = SL.sl_barrier_normalized((shat - sigma) / (s - shat))
        assert abs(lhs - rhs) <= 1e-14 * max(1.0, abs(lhs))


def test_sl_barrier_divergence():
    s, shat = 1.1, 1.0
    vals = [SL.sl_barrier(s - gap, s, shat) for gap in (1e-2, 1e-4, 1e-8)]
    assert vals[0] < vals[1] < vals[2]


def test_sl_barrier_c2_at_activation():
    """Value, gradient and Hessian all vanish continuously at sigma = shat.

    The second derivative decays linearly, (6/(s-shat)^3)*(sigma-shat) to
    leading order, so its straddle discrepancy at offset eps is bounded by
    that analytic slope rather than by the value/gradient tolerance.
    """
    s, shat = 1.1, 1.0
    w = s - shat
    eps = 1e-6
    v_lo = SL.sl_barrier(shat - eps, s, shat)
    v_hi = SL.sl_barrier(shat + eps, s, shat)
    assert abs(v_hi - v_lo) < 1e-8
    g_lo, h_lo = SL.sl_barrier_derivs(shat - eps, s, shat)
    g_hi, h_hi = SL.sl_barrier_derivs(shat + eps, s, shat)
    assert abs(g_hi - g_lo) < 1e-8
    assert abs(h_hi - h_lo) < 6.1 * eps / w**3
    # and the limit itself is exactly zero from both sides
    assert h_lo == 0.0
    assert h_hi > 0.0


def test_sl_barrier_derivs_fd(rng):
    for _ in range(200):
        s = rng.uniform(1.01, 1.5)
        shat = rng.uniform(0.8, 1.0)
        sigma = rng.uniform(shat + 1e-4, s - 1e-4)
        g, h = SL.sl_barrier_derivs(sigma, s, shat)
        eps = 1e-8
        gfd = (
            SL.sl_barrier(sigma + eps, s, shat)
            - SL.sl_barrier(sigma - eps, s, shat)
        ) / (2 * eps)
        hfd = (
            SL.sl_barrier_derivs(sigma + eps, s, shat)[0]
            - SL.sl_barrier_derivs(sigma - eps, s, shat)[0]
        ) / (2 * eps)
        assert abs(g - gfd) <= 1e-6 * max(1.0, abs(gfd))
        assert abs(h - hfd) <= 1e-6 * max(1.0, abs(hfd))


def test_deformation_gradient_rest_and_scaling(rest_inv):
    f = SL.deformation_gradient(*RIGHT_TRI, rest_inv)
    assert np.allclose(SL.singular_values(f), [1.0, 1.0], atol=1e-14)
    f2 = SL.deformation_gradient(*(2.0 * RIGHT_TRI), rest_inv)
    assert np.allclose(SL.singular_values(f2), [2.0, 2.0], atol=1e-14)


def test_deformation_gradient_rotation_invariance(rest_inv, rng):
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, 2 * np.pi)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
             [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(ang) * k + (1 - np.cos(ang)) * (k @ k)
        f = SL.deformation_gradient(*(RIGHT_TRI @ rot.T), rest_inv)
        assert np.abs(SL.singular_values(f) - 1.0).max() < 1e-12


def test_degenerate_rest_triangle_rejected():
    with pytest.raises(ValueError):
        SL.triangle_rest_inverse((0, 0, 0), (1, 0, 0), (2, 0, 0))
    with pytest.raises(ValueError):
        SL.triangle_rest_inverse((0, 0, 0), (0, 0, 0), (0, 1, 0))


def test_potential_composition_example(rest_inv):
    """kappa * V * b at sigma = (1.05, 1.0) with the pinned constants."""
    params = SL.StrainLimitParams(s=1.1, shat=1.0, kappa=1e3)
    x = RIGHT_TRI.copy()
    x[:, 0] *= 1.05
    e, _, _ = SL.sl_potential(
        x, np.array([[0, 1, 2]]), rest_inv[None], np.array([1e-6]), params
    )
    assert e == pytest.approx(1e3 * 1e-6 * SL_EXAMPLE, rel=1e-12)


def test_rest_state_bitwise_zero(rest_inv):
    params = SL.StrainLimitParams(s=1.1, shat=1.0)
    e, g, h = SL.sl_potential(
        RIGHT_TRI, np.array([[0, 1, 2]]), rest_inv[None], np.array([1e-6]), params
    )
    assert e == 0.0
    assert np.all(g == 0.0)
    assert np.all(h == 0.0)
    # compressed below the threshold: still exactly zero
    x = RIGHT_TRI * 0.8
    e, g, h = SL.sl_potential(
        x, np.array([[0, 1, 2]]), rest_inv[None], np.array([1e-6]), params
    )
    assert e == 0.0 and np.all(g == 0.0) and np.all(h == 0.0)


def test_potential_gradient_fd(rest_inv, rng):
    params = SL.StrainLimitParams(s=1.1, shat=1.0)
    tris = np.array([[0, 1, 2]])
    vols = np.array([1e-6])

    def energy(z):
        return SL.sl_potential(
            z.reshape(3, 3), tris, rest_inv[None], vols, params,
            with_derivs=False,
        )[0]

    checked = 0
    while checked < 30:
        x = RIGHT_TRI + rng.normal(scale=0.04, size=(3, 3))
        x[:, :2] *= rng.uniform(1.02, 1.08)
        sig = SL.singular_values(SL.deformation_gradient(*x, rest_inv))
        if sig.max() >= 1.095 or sig.max() <= 1.005 or sig[0] - sig[1] < 1e-3:
            continue
        checked += 1
        _, g, _ = SL.sl_potential(
            x, tris, rest_inv[None], vols, params, project=False
        )
        gfd = fd_gradient(energy, x.ravel(), h=1e-7)
        assert rel_err(g.ravel(), gfd) < 1e-4


def test_repeated_singular_values_bounded(rest_inv):
    """Uniform stretch (sigma1 == sigma2) keeps derivatives finite."""
    params = SL.StrainLimitParams(s=1.1, shat=1.0)
    x = RIGHT_TRI.copy()
    x[:, :2] *= 1.05
    _, g, h = SL.sl_potential(
        x, np.array([[0, 1, 2]]), rest_inv[None], np.array([1e-6]), params,
        project=False,
    )
    assert np.all(np.isfinite(g)) and np.all(np.isfinite(h))


def test_potential_limit_breach(rest_inv):
    params = SL.StrainLimitParams(s=1.1, shat=1.0)
    x = RIGHT_TRI.copy()
    x[:, 0] *= 1.2
    with pytest.raises(SL.StrainLimitError):
        SL.sl_potential(
            x, np.array([[0, 1, 2]]), rest_inv[None], np.array([1e-6]), params
        )


def test_stiffness_update_rule():
    params = SL.StrainLimitParams(s=1.1, shat=1.0)
    stiff = SL.StrainLimitStiffness(params)
    k0 = stiff.kappa
    assert k0 == SL.KAPPA_S_INITIAL
    threshold = 1e-4 * (params.s - params.shat)

    # quoted rule: two consecutive iterations below 1e-4*(s - shat) double it
    stiff.update(0.1 * threshold)
    assert SL.sl_stiffness_update(stiff, 0.1 * threshold) == 2.0 * k0

    # large gap: unchanged
    stiff2 = SL.StrainLimitStiffness(params)
    stiff2.update(10 * threshold)
    assert stiff2.update(10 * threshold) == k0

    # saturation at the 1e5 Pa bound
    stiff3 = SL.StrainLimitStiffness(params, kappa=SL.KAPPA_S_MAX)
    stiff3.update(0.0)
    assert stiff3.update(0.0) == SL.KAPPA_S_MAX

    # reset at step start
    stiff.reset_step()
    assert stiff.kappa == SL.KAPPA_S_INITIAL


def test_aniso_eta_properties():
    v, d1, _ = SL.aniso_eta(0.0, 0.14)
    assert v == 0.0
    assert d1 == pytest.approx(1.0, abs=1e-15)
    v, _, _ = SL.aniso_eta(0.07, 0.14)
    assert v == pytest.approx(ETA_EXAMPLE, rel=1e-14)
    # eta'(0) = 1 by finite difference
    eps = 1e-9
    dfd = (SL.aniso_eta(eps, 0.14)[0] - SL.aniso_eta(-eps, 0.14)[0]) / (2 * eps)
    assert abs(dfd - 1.0) < 1e-8
    with pytest.raises(SL.StrainLimitError):
        SL.aniso_eta(0.14, 0.14)


def test_aniso_eta_divergence():
    vals = [SL.aniso_eta(0.14 - g, 0.14)[0] for g in (1e-2, 1e-5, 1e-9)]
    assert vals[0] < vals[1] < vals[2]


MODULI = (5e5, 3e5, 1e5, 4e4)
LIMITS = (0.14**2, 0.14 * 0.14, 0.14**2, 0.063**2)


def test_aniso_psi_rest_consistency():
    psi, g, h = SL.aniso_psi((0.0, 0.0, 0.0), MODULI, LIMITS)
    assert psi == 0.0
    assert np.all(g == 0.0)
    target = np.array(
        [[MODULI[0], 0, MODULI[2]], [0, 2 * MODULI[3], 0],
         [MODULI[2], 0, MODULI[1]]]
    )
    assert np.allclose(h, target, rtol=1e-14)


def test_aniso_psi_shear_isolation():
    e12 = 0.03
    psi, _, _ = SL.aniso_psi((0.0, e12, 0.0), MODULI, LIMITS)
    eta_val, _, _ = SL.aniso_eta(e12 * e12, LIMITS[3])
    assert psi == pytest.approx(MODULI[3] * eta_val, rel=1e-14)


def test_aniso_psi_rest_hessian_matches_by_fd(rng):
    """Matched moduli reproduce the small-strain stiffness at zero strain,
    via central finite differences of the analytic gradient."""
    target = np.array([[4e5, 0, 8e4], [0, 6e4, 0], [8e4, 0, 2.5e5]])
    mod = SL.match_moduli(target)
    eps = 3e-6
    hfd = np.zeros((3, 3))
    for i in range(3):
        ep = np.zeros(3)
        em = np.zeros(3)
        ep[i] += eps
        em[i] -= eps
        hfd[i] = (
            SL.aniso_psi(ep, mod, LIMITS)[1] - SL.aniso_psi(em, mod, LIMITS)[1]
        ) / (2 * eps)
    assert rel_err(hfd, target, floor=np.abs(target).max()) < 1e-8


def test_aniso_psi_stretch_compression_symmetry(rng):
    """Squared arguments make the diagonal/shear terms sign-symmetric."""
    for _ in range(50):
        e11 = rng.uniform(-0.1, 0.1)
        e12 = rng.uniform(-0.05, 0.05)
        p1, _, _ = SL.aniso_psi((e11, e12, 0.0), MODULI, LIMITS)
        p2, _, _ = SL.aniso_psi((-e11, -e12, 0.0), MODULI, LIMITS)
        assert p1 == pytest.approx(p2, rel=1e-12)


def test_aniso_psi_limit_breach():
    with pytest.raises(SL.StrainLimitError):
        SL.aniso_psi((0.15, 0.0, 0.0), MODULI, LIMITS)


def test_aniso_psi_gradient_hessian_fd(rng):
    for _ in range(30):
        et = rng.uniform(-0.08, 0.08, 3)
        et[1] = rng.uniform(-0.05, 0.05)  # shear bound is tighter
        psi, g, h = SL.aniso_psi(et, MODULI, LIMITS)
        gfd = np.zeros(3)
        hfd = np.zeros((3, 3))
        for i in range(3):
            ep = et.copy()
            em = et.copy()
            ep[i] += 1e-7
            em[i] -= 1e-7
            gfd[i] = (SL.aniso_psi(ep, MODULI, LIMITS)[0]
                      - SL.aniso_psi(em, MODULI, LIMITS)[0]) / 2e-7
            hfd[i] = (SL.aniso_psi(ep, MODULI, LIMITS)[1]
                      - SL.aniso_psi(em, MODULI, LIMITS)[1]) / 2e-7
        assert rel_err(g, gfd) < 1e-6
        assert rel_err(h, hfd) < 1e-6


def test_params_validation():
    with pytest.raises(ValueError):
        SL.StrainLimitParams(s=1.0)
    with pytest.raises(ValueError):
        SL.StrainLimitParams(s=1.1, shat=1.1)
