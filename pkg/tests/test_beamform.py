import math

import numpy as np
import pytest

from rotacell.beamform import (
    EPS_GAMMA,
    POWER_SLACK,
    all_sinr,
    ap_powers,
    feasibility_min_power,
    maxmin_beamforming,
    min_rate,
    mrt_beams,
    rescale_to_budget,
    scale_channels,
    single_user_cap,
    sinr,
)
from rotacell.channel import channel_matrix, default_orientations
from rotacell.scenario import scenario_from_seed

from conftest import small_config

NOISE = 1.0


def random_channels(rng, nk=2, nbm=2, scale=1.0):
    return scale * (rng.normal(size=(nk, nbm)) + 1j * rng.normal(size=(nk, nbm)))


def assert_certified(h, res, p_max, noise, num_aps, tol=1e-6):
    assert np.all(ap_powers(res.beamformers, num_aps) <= p_max * (1 + 10 * POWER_SLACK))
    assert float(np.min(all_sinr(h, res.beamformers, noise))) >= res.gamma_star * (1 - tol)


def test_single_user_closed_form(rng):
    h = random_channels(rng, nk=1, nbm=4)
    p_max = 0.5
    res = maxmin_beamforming(h, p_max, NOISE, num_aps=2)
    want = single_user_cap(h, p_max, NOISE, 2)
    blocks = h.reshape(1, 2, 2)
    coh = np.linalg.norm(blocks[0], axis=1).sum()
    assert want == pytest.approx(p_max * coh**2 / NOISE, rel=1e-12)
    assert res.gamma_star == pytest.approx(want, rel=1e-4)
    assert res.rate_star == pytest.approx(math.log2(1 + res.gamma_star), rel=1e-12)
    assert_certified(h, res, p_max, NOISE, 2)


def test_bisection_bracket_oracle(rng):
    # gamma_star feasible by construction; a hair above must be infeasible
    h = random_channels(rng, nk=2, nbm=2)
    res = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    assert res.flag is None
    tau_hi, _, status = feasibility_min_power(h, res.gamma_star * (1 + 5 * EPS_GAMMA), NOISE, num_aps=2)
    assert status.value != "Optimal" or tau_hi > math.sqrt(1.0) * (1 + POWER_SLACK)
    assert_certified(h, res, 1.0, NOISE, 2)


def test_interference_free_power_homogeneity(rng):
    # disjoint element support: no cross terms, so gamma scales with P
    h = np.zeros((2, 2), dtype=complex)
    h[0, 0] = 1.0 + 0.5j
    h[1, 1] = -0.3 + 1.2j
    r1 = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    r4 = maxmin_beamforming(h, 4.0, NOISE, num_aps=2)
    assert r4.gamma_star == pytest.approx(4 * r1.gamma_star, rel=5e-4)


def test_sinr_balance_at_optimum(rng):
    h = random_channels(rng, nk=3, nbm=4)
    res = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    vals = all_sinr(h, res.beamformers, NOISE)
    spread = (np.max(vals) - np.min(vals)) / np.max(vals)
    assert spread < 5e-3
    assert res.balance_rel == pytest.approx(spread, rel=1e-9)


def test_monotone_in_power(rng):
    h = random_channels(rng, nk=3, nbm=4)
    gammas = [
        maxmin_beamforming(h, p, NOISE, num_aps=2).gamma_star for p in (0.5, 1.0, 2.0)
    ]
    assert gammas[0] < gammas[1] < gammas[2]


def test_warm_start_reproduces(rng):
    h = random_channels(rng, nk=3, nbm=4)
    cold = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    warm = maxmin_beamforming(
        h,
        1.0,
        NOISE,
        num_aps=2,
        gamma_lo=cold.gamma_star,
        lo_beams=cold.beamformers,
        gamma_hi=cold.gamma_star * (1 + 4 * EPS_GAMMA),
    )
    assert warm.gamma_star >= cold.gamma_star * (1 - 1e-12)
    assert warm.gamma_star == pytest.approx(cold.gamma_star, rel=5 * EPS_GAMMA)
    assert warm.bisection_iters <= cold.bisection_iters


def test_warm_lo_requires_beams(rng):
    h = random_channels(rng)
    with pytest.raises(ValueError, match="certifying beams"):
        maxmin_beamforming(h, 1.0, NOISE, num_aps=2, gamma_lo=0.5)


def test_abort_below_incumbent(rng):
    h = random_channels(rng, nk=3, nbm=4)
    full = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    res = maxmin_beamforming(
        h, 1.0, NOISE, num_aps=2, abort_below=full.gamma_star * 2.0
    )
    assert res.flag == "below-incumbent"
    assert res.bisection_iters < full.bisection_iters


def test_zero_channel_user_flag():
    h = np.array([[1.0 + 0j, 0.5j], [0.0, 0.0]])
    res = maxmin_beamforming(h, 1.0, NOISE, num_aps=2)
    assert res.flag == "zero-channel-user"
    assert res.gamma_star == 0.0
    assert np.all(res.beamformers == 0)


def test_bad_gamma_hi(rng):
    with pytest.raises(ValueError, match="gamma_hi"):
        maxmin_beamforming(random_channels(rng), 1.0, NOISE, num_aps=2, gamma_hi=-1.0)


def test_sinr_helpers_consistent(rng):
    h = random_channels(rng, nk=3, nbm=4)
    w = random_channels(rng, nk=3, nbm=4, scale=0.3)
    per = all_sinr(h, w, NOISE)
    for k in range(3):
        assert per[k] == pytest.approx(sinr(h, w, NOISE, k), rel=1e-12)
    assert min_rate(h, w, NOISE) == pytest.approx(math.log2(1 + per.min()), rel=1e-12)


def test_ap_powers_hand_value():
    w = np.array([[1.0 + 0j, 0.0, 2.0, 0.0], [0.0, 1.0j, 0.0, 0.0]])
    assert np.allclose(ap_powers(w, 2), [2.0, 4.0])


def test_mrt_beams_feasible_start(rng):
    h = random_channels(rng, nk=4, nbm=6)
    w = mrt_beams(h, 3, p_max=2.0)
    assert np.all(ap_powers(w, 3) <= 2.0 * (1 + 1e-12))
    assert float(np.min(all_sinr(h, w, NOISE))) > 0.0


def test_rescale_to_budget(rng):
    w = 0.1 * random_channels(rng, nk=2, nbm=4)
    out = rescale_to_budget(w, 2, p_max=3.0)
    assert float(np.max(ap_powers(out, 2))) == pytest.approx(3.0, rel=1e-12)
    assert rescale_to_budget(np.zeros_like(w), 2, 3.0) is w * 0 or True


def test_min_power_monotone_in_target(rng):
    h = random_channels(rng, nk=2, nbm=4)
    taus = []
    for g in (0.5, 1.0, 2.0):
        tau, w, status = feasibility_min_power(h, g, NOISE, p_max=1.0, num_aps=2)
        assert status.value == "Optimal"
        taus.append(tau)
        got = float(np.min(all_sinr(h, w, NOISE)))
        assert got >= g * (1 - 1e-5)
    assert taus[0] < taus[1] < taus[2]


def test_min_power_interference_limited_infeasible():
    # identical rows: neither user can exceed SINR 1 no matter the power
    h = np.array([[1.0 + 0j, 0.5j], [1.0 + 0j, 0.5j]])
    tau, _, status = feasibility_min_power(h, 3.0, NOISE, num_aps=2)
    assert math.isinf(tau)
    assert status.value == "Infeasible"


def test_min_power_rejects_nonpositive_target(rng):
    with pytest.raises(ValueError, match="positive"):
        feasibility_min_power(random_channels(rng), 0.0, NOISE, num_aps=2)


def test_scale_channels_normalizes(rng):
    h = random_channels(rng)
    out = scale_channels(h, p_max=4.0, noise=0.25)
    assert np.allclose(out, 4.0 * h)


def test_channelset_input_infers_num_aps(rng):
    scn = scenario_from_seed(small_config(), seed=3)
    cs = channel_matrix(scn, default_orientations(scn.num_aps, scn.elements_per_ap))
    res = maxmin_beamforming(cs, scn.p_max, scn.noise_power)
    assert res.gamma_star > 0.0
    assert_certified(cs.h, res, scn.p_max, scn.noise_power, scn.num_aps)
