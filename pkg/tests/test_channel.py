import cmath
import math

import numpy as np
import pytest

from rotacell.channel import (
    channel_and_gradients,
    channel_gradient,
    channel_hessian,
    channel_magnitude_bounds,
    channel_matrix,
    default_orientations,
    element_gain,
    export_channel_text,
    los_coefficient,
    nlos_coefficient,
    parse_channel_text,
    validate_orientations,
)
from rotacell.scenario import Scatterer, scenario_from_seed

from conftest import cap_set, hand_scenario, small_config

BETA0 = (0.125 / (4 * math.pi)) ** 2  # (lambda/4pi)^2 at the hand wavelength


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# element pattern


def test_element_gain_peak():
    assert element_gain(0.0, 2.0) == pytest.approx(10.0, abs=1e-14)


def test_element_gain_handcase():
    # kappa_max cos^{2p}: 10 * 0.5^4
    assert element_gain(math.pi / 3, 2.0) == pytest.approx(0.625, abs=1e-14)


def test_element_gain_edge_and_back():
    assert element_gain(math.pi / 2, 3.0) == pytest.approx(0.0, abs=1e-90)
    assert element_gain(2.0, 3.0) == 0.0
    assert element_gain(math.pi, 3.0) == 0.0


# ---------------------------------------------------------------------------
# LoS coefficient, hand geometry (identity pose, user on the local z-axis)


def test_los_aligned_magnitude():
    scn = hand_scenario(user_pos=(0, 0, 100.0), wavelength=0.125, p=2.0)
    orient = np.array([[[0.0, 0.0, 1.0]]])
    h = los_coefficient(scn, orient, 0, 0, 0)
    # sqrt(beta0 * kappa_max) / r with beta0 = 9.8948e-5, kappa_max = 10
    assert abs(h) == pytest.approx(math.sqrt(BETA0 * 10.0) / 100.0, rel=1e-12)
    assert abs(h) == pytest.approx(3.1456e-4, rel=1e-4)


def test_los_aligned_phase():
    scn = hand_scenario(user_pos=(0, 0, 100.0), wavelength=0.125, p=2.0)
    orient = np.array([[[0.0, 0.0, 1.0]]])
    h = los_coefficient(scn, orient, 0, 0, 0)
    want = cmath.exp(-2j * math.pi * 100.0 / 0.125)
    assert cmath.phase(h) == pytest.approx(cmath.phase(want), abs=1e-9)


def test_los_perpendicular_boresight_is_zero():
    scn = hand_scenario(user_pos=(0, 0, 100.0), wavelength=0.125, p=2.0)
    orient = np.array([[[1.0, 0.0, 0.0]]])  # 90 degrees off the user
    assert los_coefficient(scn, orient, 0, 0, 0) == 0.0


def test_los_pattern_cosine_power():
    # off-axis by angle eps: amplitude scales by cos(eps)^p
    eps = 0.3
    scn = hand_scenario(user_pos=(0, 0, 100.0), p=3.0)
    orient = np.array([[[math.sin(eps), 0.0, math.cos(eps)]]])
    aligned = np.array([[[0.0, 0.0, 1.0]]])
    h_off = los_coefficient(scn, orient, 0, 0, 0)
    h_on = los_coefficient(scn, aligned, 0, 0, 0)
    assert abs(h_off) / abs(h_on) == pytest.approx(math.cos(eps) ** 3, rel=1e-12)


# ---------------------------------------------------------------------------
# NLoS coefficient


def test_nlos_empty_sum():
    scn = hand_scenario(user_pos=(0, 0, 100.0), scatterers=())
    orient = np.array([[[0.0, 0.0, 1.0]]])
    assert nlos_coefficient(scn, orient, 0, 0, 0) == 0.0


def test_nlos_single_scatterer_hand_value():
    # one scatterer on the boresight axis, user off to the side
    sc = Scatterer(np.array([0.0, 0.0, 50.0]), rcs=2.0, phase=1.25)
    scn = hand_scenario(user_pos=(30.0, 0.0, 90.0), scatterers=(sc,), p=2.0)
    f = unit([0.05, -0.02, 1.0])
    orient = f.reshape(1, 1, 3)
    got = nlos_coefficient(scn, orient, 0, 0, 0)

    # scalar hand evaluation of the bistatic path
    lam, p, kappa = 0.125, 2.0, 10.0
    r_el_sc = 50.0  # element -> scatterer
    r_sc_us = math.sqrt(30.0**2 + 40.0**2)  # scatterer -> user
    cosang = f @ unit([0.0, 0.0, 1.0])
    gain = kappa * cosang ** (2 * p)
    beta0 = (lam / (4 * math.pi)) ** 2
    amp = math.sqrt(beta0 * gain) / r_el_sc * math.sqrt(2.0 / (4 * math.pi)) / r_sc_us
    want = amp * cmath.exp(-2j * math.pi * (r_el_sc + r_sc_us) / lam + 1.25j)
    assert got == pytest.approx(want, rel=1e-12)


def test_nlos_back_facing_zero():
    sc = Scatterer(np.array([0.0, 0.0, 50.0]), rcs=1.0, phase=0.0)
    scn = hand_scenario(user_pos=(30.0, 0.0, 90.0), scatterers=(sc,))
    orient = np.array([[[0.0, 0.0, -1.0]]])  # cap-invalid but evaluable
    assert nlos_coefficient(scn, orient, 0, 0, 0) == 0.0


# ---------------------------------------------------------------------------
# assembly


def test_channel_matrix_assembly_identity(rng):
    scn = scenario_from_seed(small_config(), seed=5)
    orient = cap_set(scn, rng)
    cs = channel_matrix(scn, orient)
    assert cs.h.shape == (scn.num_users, scn.num_aps * scn.elements_per_ap)
    for k in (0, 2):
        for b in (0, 2):
            for m in (0, 1):
                scalar = los_coefficient(scn, orient, k, b, m) + nlos_coefficient(
                    scn, orient, k, b, m
                )
                col = b * scn.elements_per_ap + m
                assert cs.h[k, col] == pytest.approx(scalar, rel=1e-12)


def test_user_permutation_permutes_rows(rng):
    scn = scenario_from_seed(small_config(), seed=6)
    orient = cap_set(scn, rng)
    h = channel_matrix(scn, orient).h
    import dataclasses

    swapped = dataclasses.replace(scn, users=scn.users[::-1])
    h2 = channel_matrix(swapped, orient).h
    assert np.allclose(h2, h[::-1], rtol=1e-14)


def test_lemma1_scaling_handcase(rng):
    # all norms 0.8 at p=2: every entry of the normalized channel is
    # 0.8^-2 = 1.5625 times the raw sub-unit one
    scn = scenario_from_seed(small_config(p=2.0), seed=7)
    unit_orient = cap_set(scn, rng)
    sub = 0.8 * unit_orient
    h_unit = channel_matrix(scn, unit_orient).h
    h_sub = channel_matrix(scn, sub).h
    ratio = h_unit / h_sub
    assert np.allclose(ratio, 1.5625, rtol=1e-12)


def test_los_phase_invariant_to_boresight(rng):
    # orientation enters through the real gain only (Remark on phases)
    scn = scenario_from_seed(small_config(Q=0), seed=8)
    h1 = channel_matrix(scn, cap_set(scn, rng)).h
    h2 = channel_matrix(scn, cap_set(scn, rng)).h
    mask = (np.abs(h1) > 0) & (np.abs(h2) > 0)
    assert np.allclose(np.angle(h1[mask]), np.angle(h2[mask]), atol=1e-12)


def test_isotropic_mode_orientation_independent(rng):
    scn = scenario_from_seed(small_config(), seed=9, isotropic=True)
    h1 = channel_matrix(scn, cap_set(scn, rng)).h
    h2 = channel_matrix(scn, cap_set(scn, rng)).h
    assert np.array_equal(h1, h2)
    assert np.all(np.abs(h1) > 0)


def test_orientation_validation():
    with pytest.raises(ValueError, match="norm"):
        validate_orientations(np.array([[[0.0, 0.0, 0.9]]]), math.pi / 3)
    validate_orientations(np.array([[[0.0, 0.0, 0.9]]]), math.pi / 3, subunit=True)
    bad_cap = unit([1.0, 0.0, 0.2]).reshape(1, 1, 3)
    with pytest.raises(ValueError, match="cap"):
        validate_orientations(bad_cap, math.pi / 6)


# ---------------------------------------------------------------------------
# derivatives


def fd_gradient(scn, orient, k, b, m, step=1e-6):
    g = np.zeros(3, dtype=complex)
    for ax in range(3):
        fp = orient.copy()
        fp[b, m, ax] += step
        fm = orient.copy()
        fm[b, m, ax] -= step
        col = b * scn.elements_per_ap + m
        g[ax] = (channel_matrix(scn, fp).h[k, col] - channel_matrix(scn, fm).h[k, col]) / (
            2 * step
        )
    return g


def test_gradient_matches_fd(rng):
    scn = scenario_from_seed(small_config(p=3.0), seed=10)
    orient = cap_set(scn, rng)
    for k, b, m in [(0, 0, 0), (1, 2, 1), (3, 1, 0)]:
        an = channel_gradient(scn, orient, k, b, m)
        fd = fd_gradient(scn, orient, k, b, m)
        scale = max(np.max(np.abs(fd)), 1e-12)
        assert np.max(np.abs(an - fd)) / scale < 1e-5


def test_gradient_back_facing_zero():
    sc = Scatterer(np.array([0.0, 0.0, 50.0]), rcs=1.0, phase=0.0)
    scn = hand_scenario(user_pos=(0, 0, 100.0), scatterers=(sc,), p=2.0)
    orient = np.array([[[0.0, 0.0, -1.0]]])
    assert np.all(channel_gradient(scn, orient, 0, 0, 0) == 0.0)


def test_gradient_lies_in_path_span(rng):
    sc = Scatterer(np.array([10.0, 5.0, 60.0]), rcs=1.0, phase=0.3)
    scn = hand_scenario(user_pos=(20.0, -5.0, 80.0), scatterers=(sc,), p=3.0)
    orient = unit([0.1, 0.05, 1.0]).reshape(1, 1, 3)
    g = channel_gradient(scn, orient, 0, 0, 0)
    # identity pose: span of the user and scatterer directions from the element
    dirs = np.stack([unit([20.0, -5.0, 80.0]), unit([10.0, 5.0, 60.0])])
    coef, *_ = np.linalg.lstsq(dirs.T, g, rcond=None)
    assert np.linalg.norm(dirs.T @ coef - g) < 1e-12 * max(np.linalg.norm(g), 1.0)


def test_vectorized_gradients_match_scalar(rng):
    scn = scenario_from_seed(small_config(p=3.0), seed=11)
    orient = cap_set(scn, rng)
    h, grads = channel_and_gradients(scn, orient)
    for k, b, m in [(0, 1, 0), (2, 0, 1)]:
        scalar = channel_gradient(scn, orient, k, b, m)
        assert np.allclose(grads[k, b, m], scalar, rtol=1e-12, atol=1e-300)


def test_hessian_symmetric_and_fd(rng):
    scn = scenario_from_seed(small_config(p=3.0), seed=12)
    orient = cap_set(scn, rng)
    step = 1e-5
    for k, b, m in [(0, 0, 0), (2, 1, 1)]:
        hess = channel_hessian(scn, orient, k, b, m)
        assert np.array_equal(hess, hess.T)
        fd = np.zeros((3, 3), dtype=complex)
        for ax in range(3):
            fp = orient.copy()
            fp[b, m, ax] += step
            fm = orient.copy()
            fm[b, m, ax] -= step
            fd[:, ax] = (
                channel_gradient(scn, fp, k, b, m) - channel_gradient(scn, fm, k, b, m)
            ) / (2 * step)
        scale = max(np.max(np.abs(fd)), 1e-12)
        assert np.max(np.abs(hess - fd)) / scale < 1e-4


def test_hessian_rejects_low_p():
    scn = scenario_from_seed(small_config(p=1.5), seed=0)
    orient = default_orientations(scn.num_aps, scn.elements_per_ap)
    with pytest.raises(ValueError, match="p >= 2"):
        channel_hessian(scn, orient, 0, 0, 0)


# ---------------------------------------------------------------------------
# magnitude bounds


def test_bounds_q0_closed_form():
    scn = hand_scenario(user_pos=(0, 0, 100.0), p=2.0)
    h_max, g_max, h2_max = channel_magnitude_bounds(scn, 0, 0, 0)
    assert h_max == pytest.approx(math.sqrt(BETA0 * 10.0) / 100.0, rel=1e-12)
    assert g_max > 0 and h2_max > 0


def test_bounds_dominate_samples(rng):
    sc = Scatterer(np.array([5.0, -3.0, 40.0]), rcs=1.5, phase=0.7)
    scn = hand_scenario(user_pos=(10.0, 4.0, 70.0), scatterers=(sc,), p=3.0)
    h_max, g_max, h2_max = channel_magnitude_bounds(scn, 0, 0, 0)
    for _ in range(300):
        f = rng.normal(size=3)
        f = unit(f) if f[2] > 0 else unit(f * np.array([1, 1, -1]))
        orient = f.reshape(1, 1, 3)
        h = los_coefficient(scn, orient, 0, 0, 0) + nlos_coefficient(scn, orient, 0, 0, 0)
        assert abs(h) <= h_max * (1 + 1e-12)
        g = channel_gradient(scn, orient, 0, 0, 0)
        assert np.linalg.norm(g) <= g_max * (1 + 1e-12)
        hess = channel_hessian(scn, orient, 0, 0, 0)
        assert np.linalg.norm(hess) <= h2_max * (1 + 1e-12)


def test_bounds_monotone_in_directivity():
    lo = hand_scenario(user_pos=(0, 0, 100.0), p=2.0)
    hi = hand_scenario(user_pos=(0, 0, 100.0), p=3.0)
    assert channel_magnitude_bounds(hi, 0, 0, 0)[0] > channel_magnitude_bounds(lo, 0, 0, 0)[0]


# ---------------------------------------------------------------------------
# text round trip


def test_channel_text_round_trip(rng):
    scn = scenario_from_seed(small_config(), seed=13)
    cs = channel_matrix(scn, cap_set(scn, rng))
    text = export_channel_text(cs)
    back = parse_channel_text(text)
    assert np.allclose(back, cs.h, rtol=0, atol=1e-300)
