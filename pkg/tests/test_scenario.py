import math

import numpy as np
import pytest

from rotacell.scenario import (
    ConfigError,
    boresight_rotation,
    build_scenario,
    dbm_to_watts,
    default_config,
    element_local_offsets,
    grid_index,
    make_ap_ring,
    sample_cap_uniform,
    scenario_from_seed,
    validate_config,
    watts_to_dbm,
    with_isotropic,
)

from conftest import small_config


def test_default_config_validates():
    cfg = validate_config(default_config())
    assert cfg["B"] == 5 and cfg["K"] == 8
    assert cfg["M_x"] * cfg["M_y"] == 4


def test_dbm_round_trip():
    for dbm in (-80.0, 0.0, 15.0):
        assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-12)
    assert dbm_to_watts(15.0) == pytest.approx(0.0316227766, rel=1e-8)


def test_unknown_key_rejected():
    cfg = default_config()
    cfg["bandwidth"] = 1.0
    with pytest.raises(ConfigError, match="bandwidth"):
        validate_config(cfg)


@pytest.mark.parametrize(
    "key,val",
    [("B", 0), ("theta_max", math.pi / 2), ("p", -1.0), ("R_cov", 0.0), ("Q", -1)],
)
def test_bad_values_rejected(key, val):
    cfg = default_config()
    cfg[key] = val
    with pytest.raises(ConfigError, match=key):
        validate_config(cfg)


def test_scenario_reproducible_from_seed():
    cfg = small_config()
    a = scenario_from_seed(cfg, seed=11)
    b = scenario_from_seed(cfg, seed=11)
    assert np.array_equal(a.users, b.users)
    assert len(a.scatterers) == len(b.scatterers)
    for sa, sb in zip(a.scatterers, b.scatterers):
        assert np.array_equal(sa.position, sb.position)
        assert sa.phase == sb.phase
    c = scenario_from_seed(cfg, seed=12)
    assert not np.array_equal(a.users, c.users)


def test_draw_order_pairs_across_topology_knobs():
    # user/scatterer draws must not depend on B, p, or theta_max, so the
    # same drop seed yields paired realizations across sweep values
    base = scenario_from_seed(small_config(), seed=3)
    for over in ({"B": 5}, {"p": 5.0}, {"theta_max": math.pi / 6}):
        other = scenario_from_seed(small_config(**over), seed=3)
        assert np.array_equal(base.users, other.users)
        for sa, sb in zip(base.scatterers, other.scatterers):
            assert np.array_equal(sa.position, sb.position)


def test_ap_ring_geometry():
    aps = make_ap_ring(5, 300.0, 30.0, math.radians(5.7), 2, 2, 0.0625)
    assert len(aps) == 5
    for b, ap in enumerate(aps):
        ang = 2 * math.pi * b / 5
        assert ap.center_position[0] == pytest.approx(300 * math.cos(ang), abs=1e-9)
        assert ap.center_position[1] == pytest.approx(300 * math.sin(ang), abs=1e-9)
        assert ap.center_position[2] == 30.0
        # local z maps to the aim direction: toward center, tilted down
        z_global = ap.pose @ np.array([0.0, 0.0, 1.0])
        assert np.linalg.norm(z_global) == pytest.approx(1.0, abs=1e-12)
        assert z_global[2] == pytest.approx(-math.sin(math.radians(5.7)), abs=1e-12)
        horiz = -ap.center_position[:2] / np.linalg.norm(ap.center_position[:2])
        cosang = z_global[:2] @ horiz / np.linalg.norm(z_global[:2])
        assert cosang == pytest.approx(1.0, abs=1e-12)


def test_boresight_rotation_is_rotation():
    r = boresight_rotation(
        np.array([300.0, 0.0, 30.0]), np.array([0.0, 0.0, 30.0]), math.radians(5.7)
    )
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


def test_element_grid_layout():
    # 1-based row-major grid index m = m_x + (m_y - 1) M_x
    assert grid_index(1, 1, 2) == 1
    assert grid_index(2, 1, 2) == 2
    assert grid_index(1, 2, 2) == 3
    with pytest.raises(ValueError):
        grid_index(3, 1, 2)
    off = element_local_offsets(2, 2, 0.0625)
    assert off.shape == (4, 3)
    assert np.allclose(off.sum(axis=0), 0.0, atol=1e-12)
    assert np.allclose(off[:, 2], 0.0)  # panel plane
    d01 = np.linalg.norm(off[1] - off[0])
    assert d01 == pytest.approx(0.0625, abs=1e-12)


def test_cap_sampling(rng):
    theta_max = math.pi / 3
    draws = np.array([sample_cap_uniform(theta_max, rng) for _ in range(4000)])
    norms = np.linalg.norm(draws, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    assert np.all(draws[:, 2] >= math.cos(theta_max) - 1e-12)
    # area-uniform on the cap: cos(theta) uniform on [cos(theta_max), 1]
    mean_cos = draws[:, 2].mean()
    assert mean_cos == pytest.approx((1 + math.cos(theta_max)) / 2, abs=0.01)
    az = np.arctan2(draws[:, 1], draws[:, 0])
    assert abs(np.mean(az > 0) - 0.5) < 0.03


def test_cap_sampling_degenerate(rng):
    v = sample_cap_uniform(0.0, rng)
    assert np.allclose(v, [0.0, 0.0, 1.0], atol=1e-12)


def test_with_isotropic_flips_mode_only():
    scn = scenario_from_seed(small_config(), seed=0)
    iso = with_isotropic(scn)
    assert iso.isotropic and not scn.isotropic
    assert np.array_equal(iso.users, scn.users)
    assert iso.kappa_max == 2.0
    assert scn.kappa_max == pytest.approx(2 * (2 * 3.0 + 1))


def test_noise_and_power_units():
    scn = scenario_from_seed(small_config(), seed=0)
    assert scn.noise_power == pytest.approx(dbm_to_watts(-80.0))
    assert scn.p_max == pytest.approx(dbm_to_watts(15.0))
    # c = 3e8 by design, so 2.4 GHz gives exactly 0.125 m
    assert scn.wavelength == pytest.approx(0.125, abs=1e-15)


def test_build_scenario_uses_config_counts():
    cfg = small_config(B=4, K=6, Q=3)
    scn = build_scenario(validate_config(cfg), np.random.default_rng(0))
    assert scn.num_aps == 4
    assert scn.num_users == 6
    assert len(scn.scatterers) == 3
    assert scn.elements_per_ap == 2
