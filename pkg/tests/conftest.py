import math

import numpy as np
import pytest

from rotacell.scenario import ApConfig, Scatterer, Scenario, default_config


def small_config(**over):
    """Desk-scale topology config for fast tests."""
    cfg = default_config()
    cfg.update({"B": 3, "M_x": 2, "M_y": 1, "K": 4, "Q": 2, "p": 3.0})
    cfg.update(over)
    return cfg


def hand_scenario(
    user_pos=(0.0, 0.0, 100.0),
    wavelength=0.125,
    p=2.0,
    scatterers=(),
    theta_max=math.pi / 3,
    m_x=1,
    m_y=1,
    isotropic=False,
):
    """One AP at the origin with identity pose; geometry set by hand.

    The local frame equals the global frame, so boresights are global
    directions and the user direction is controlled exactly.
    """
    ap = ApConfig(
        np.zeros(3), np.eye(3), m_x=m_x, m_y=m_y, spacing=wavelength / 2
    )
    return Scenario(
        aps=(ap,),
        users=np.atleast_2d(np.asarray(user_pos, dtype=float)),
        scatterers=tuple(scatterers),
        wavelength=wavelength,
        directivity=p,
        theta_max=theta_max,
        noise_power=1e-12,
        p_max=0.0316,
        isotropic=isotropic,
    )


def cap_set(scn, rng):
    """Random cap-uniform orientation set for a scenario."""
    from rotacell.scenario import sample_cap_uniform

    out = np.empty((scn.num_aps, scn.elements_per_ap, 3))
    for b in range(scn.num_aps):
        for m in range(scn.elements_per_ap):
            out[b, m] = sample_cap_uniform(scn.theta_max, rng)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
