"""Network geometry, physical constants, and scenario construction.

Builds the downlink topology: access points (APs) on a ring, each
carrying a uniform planar array (UPA) whose pose is a rotation matrix,
plus single-antenna users and point scatterers dropped in the coverage
disc.  All positions are in meters, angles in radians, powers in watts;
dBm appears only at the config boundary.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s

ROTATION_TOL = 1e-12

E_Z = np.array([0.0, 0.0, 1.0])


class ConfigError(ValueError):
    """Raised for an invalid scenario config; message names the offending key."""


def dbm_to_watts(p_dbm):
    """Convert dBm to watts: 10^((p - 30)/10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_watts):
    return 10.0 * math.log10(p_watts) + 30.0


def as_vec3(x, name="vector"):
    """Coerce to a finite float64 array of shape (3,)."""
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite components")
    return v


def validate_rotation(r, tol=ROTATION_TOL):
    """Check RᵀR = I and det R = +1 within ``tol``; return the matrix.

    Raises
    ------
    ValueError
        If the matrix is not a proper rotation within tolerance.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    err = np.max(np.abs(r.T @ r - np.eye(3)))
    if err > tol:
        raise ValueError(f"matrix is not orthogonal: max |R^T R - I| = {err:.3e}")
    det = np.linalg.det(r)
    if abs(det - 1.0) > tol:
        raise ValueError(f"matrix is not proper: det = {det!r}")
    return r


def grid_index(m_x, m_y, m_x_count):
    """Row-major 1-based element index m = m_x + (m_y - 1) M_x."""
    if m_x < 1 or m_x > m_x_count:
        raise ValueError(f"m_x = {m_x} out of range [1, {m_x_count}]")
    if m_y < 1:
        raise ValueError(f"m_y = {m_y} out of range")
    return m_x + (m_y - 1) * m_x_count


def element_local_offsets(m_x_count, m_y_count, spacing):
    """Local element coordinates of the centered M_x x M_y grid, shape (M, 3).

    Element m = m_x + (m_y - 1) M_x sits at
    ((m_x - (M_x + 1)/2) d, (m_y - (M_y + 1)/2) d, 0), so the grid's
    geometric center is the local origin and the panel lies in the local
    xy-plane (boresight along local z).
    """
    mx = np.arange(1, m_x_count + 1, dtype=float)
    my = np.arange(1, m_y_count + 1, dtype=float)
    off_x = (mx - (m_x_count + 1) / 2.0) * spacing
    off_y = (my - (m_y_count + 1) / 2.0) * spacing
    out = np.zeros((m_x_count * m_y_count, 3))
    # row-major: m_x varies fastest
    gx, gy = np.meshgrid(off_x, off_y, indexing="xy")
    out[:, 0] = gx.ravel()
    out[:, 1] = gy.ravel()
    return out


@dataclass(frozen=True)
class ApConfig:
    """One access point: panel center, pose, and UPA grid layout."""

    center_position: np.ndarray  # (3,) m
    pose: np.ndarray  # (3,3) rotation, local -> global
    m_x: int
    m_y: int
    spacing: float  # m

    def __post_init__(self):
        center = as_vec3(self.center_position, "center_position").copy()
        center.setflags(write=False)
        object.__setattr__(self, "center_position", center)
        pose = validate_rotation(self.pose).copy()
        pose.setflags(write=False)
        object.__setattr__(self, "pose", pose)
        if self.m_x < 1 or self.m_y < 1:
            raise ValueError("grid dimensions must be positive")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @property
    def num_elements(self):
        return self.m_x * self.m_y

    def element_positions(self):
        """Global element positions p_{b,m} = p_{b,0} + R_b p̃_{b,m}, shape (M, 3)."""
        local = element_local_offsets(self.m_x, self.m_y, self.spacing)
        return self.center_position[None, :] + local @ self.pose.T


def element_global_position(ap: ApConfig, m: int):
    """Global position of element m (1-based row-major index)."""
    if m < 1 or m > ap.num_elements:
        raise ValueError(f"element index m = {m} out of range [1, {ap.num_elements}]")
    return ap.element_positions()[m - 1]


def boresight_rotation(ap_position, aim_point, downtilt):
    """Rotation whose local z-axis points from the AP toward ``aim_point``
    (horizontally) then tilts down by ``downtilt``.

    The local x-axis stays horizontal, which pins the azimuthal roll left
    free by the physical setup.  Raises if the AP sits directly above the
    aim point (azimuth undefined).
    """
    ap_position = as_vec3(ap_position, "ap_position")
    aim_point = as_vec3(aim_point, "aim_point")
    dx = aim_point[0] - ap_position[0]
    dy = aim_point[1] - ap_position[1]
    hor = math.hypot(dx, dy)
    if hor < 1e-12:
        raise ValueError("AP is directly above the aim point: azimuth undefined")
    ux, uy = dx / hor, dy / hor
    ct, st = math.cos(downtilt), math.sin(downtilt)
    z_axis = np.array([ct * ux, ct * uy, -st])
    x_axis = np.array([-uy, ux, 0.0])
    y_axis = np.cross(z_axis, x_axis)
    r = np.column_stack([x_axis, y_axis, z_axis])
    return validate_rotation(r)


def sample_cap_uniform(theta_max, rng):
    """Draw a unit vector uniformly over the spherical cap {v : vᵀe_z ≥ cos θ_max}.

    cos θ is uniform on [cos θ_max, 1] and azimuth uniform on [0, 2π),
    which is area-uniform on the cap.
    """
    if not 0.0 <= theta_max < math.pi / 2:
        raise ValueError("theta_max must lie in [0, pi/2)")
    cos_min = math.cos(theta_max)
    cz = rng.uniform(cos_min, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    sz = math.sqrt(max(0.0, 1.0 - cz * cz))
    return np.array([sz * math.cos(phi), sz * math.sin(phi), cz])


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer with radar cross section sigma_q and phase shift chi_q."""

    position: np.ndarray  # (3,) m
    rcs: float  # m^2
    phase: float  # rad, in [0, 2pi)

    def __post_init__(self):
        pos = as_vec3(self.position, "position").copy()
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        if self.rcs <= 0:
            raise ValueError("rcs must be positive")
        if not 0.0 <= self.phase < 2.0 * math.pi:
            raise ValueError("phase must lie in [0, 2pi)")


@dataclass(frozen=True)
class Scenario:
    """Immutable network snapshot used by the channel and optimizer layers.

    ``directivity`` is the element pattern exponent p; the peak gain
    kappa_max = 2(2p+1) is derived from it, never stored.  ``isotropic``
    switches the element model to a constant front-hemisphere gain of 2,
    making channels independent of panel orientation.
    """

    aps: tuple  # tuple of ApConfig
    users: np.ndarray  # (K, 3) m
    scatterers: tuple  # tuple of Scatterer
    wavelength: float  # m
    directivity: float  # p >= 0
    theta_max: float  # rad, in [0, pi/2)
    noise_power: float  # W per user
    p_max: float  # W per AP
    isotropic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        users = np.atleast_2d(np.asarray(self.users, dtype=float))
        if users.ndim != 2 or users.shape[1] != 3:
            raise ValueError(f"users must have shape (K, 3), got {users.shape}")
        users = users.copy()
        users.setflags(write=False)
        object.__setattr__(self, "users", users)
        if not self.aps:
            raise ValueError("scenario needs at least one AP")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.directivity < 0:
            raise ValueError("directivity must be nonnegative")
        if not 0.0 <= self.theta_max < math.pi / 2:
            raise ValueError("theta_max must lie in [0, pi/2)")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        for b, ap in enumerate(self.aps):
            elems = ap.element_positions()
            d2 = np.sum((users[:, None, :] - elems[None, :, :]) ** 2, axis=-1)
            if np.min(d2) <= 0.0:
                raise ValueError(f"a user coincides with an element of AP {b}")

    @property
    def num_aps(self):
        return len(self.aps)

    @property
    def num_users(self):
        return self.users.shape[0]

    @property
    def elements_per_ap(self):
        return self.aps[0].num_elements

    @property
    def kappa_max(self):
        """Peak element gain 2(2p+1); 2 in isotropic mode."""
        if self.isotropic:
            return 2.0
        return 2.0 * (2.0 * self.directivity + 1.0)


# ---------------------------------------------------------------------------
# Config handling


DEFAULT_CONFIG = {
    "B": 5,
    "M_x": 2,
    "M_y": 2,
    "K": 8,
    "R_cov": 300.0,  # m, AP ring radius and user-drop disc radius
    "heights": {"ap": 30.0, "user": 1.5, "scatterer": [5.0, 20.0]},
    "f_c": 2.4e9,  # Hz
    "d_over_lambda": 0.5,
    "downtilt_deg": 5.7,
    "theta_max": math.pi / 3,
    "p": 3.0,
    "P_max_dBm": 15.0,
    "noise_dBm": -80.0,
    "Q": 2,
    "rcs": 1.0,  # m^2, shared by all scatterers
    "seed": 0,
}


def default_config():
    """Fresh copy of the default topology config."""
    cfg = dict(DEFAULT_CONFIG)
    cfg["heights"] = {"ap": 30.0, "user": 1.5, "scatterer": [5.0, 20.0]}
    return cfg


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate_config(cfg):
    """Validate a config mapping; raises ConfigError naming the first bad key."""
    merged = default_config()
    for key in cfg:
        _require(key in merged, key, "unknown config key")
    merged.update(cfg)
    if "heights" in cfg:
        h = default_config()["heights"]
        _require(isinstance(cfg["heights"], dict), "heights", "must be a mapping")
        for key in cfg["heights"]:
            _require(key in h, f"heights.{key}", "unknown height key")
        h.update(cfg["heights"])
        merged["heights"] = h

    _require(int(merged["B"]) >= 1, "B", "need at least one AP")
    _require(int(merged["M_x"]) >= 1, "M_x", "must be a positive integer")
    _require(int(merged["M_y"]) >= 1, "M_y", "must be a positive integer")
    _require(int(merged["K"]) >= 1, "K", "need at least one user")
    _require(merged["R_cov"] > 0, "R_cov", "must be positive")
    h = merged["heights"]
    _require(h["ap"] > 0, "heights.ap", "must be positive")
    _require(h["user"] >= 0, "heights.user", "must be nonnegative")
    lo, hi = h["scatterer"]
    _require(0 < lo <= hi, "heights.scatterer", "need 0 < min <= max")
    _require(merged["f_c"] > 0, "f_c", "must be positive")
    _require(merged["d_over_lambda"] > 0, "d_over_lambda", "must be positive")
    _require(
        0.0 <= merged["theta_max"] < math.pi / 2,
        "theta_max",
        "must lie in [0, pi/2)",
    )
    _require(merged["p"] >= 0, "p", "must be nonnegative")
    _require(math.isfinite(merged["P_max_dBm"]), "P_max_dBm", "must be finite")
    _require(math.isfinite(merged["noise_dBm"]), "noise_dBm", "must be finite")
    _require(int(merged["Q"]) >= 0, "Q", "must be nonnegative")
    _require(merged["rcs"] > 0, "rcs", "must be positive")
    _require(int(merged["seed"]) >= 0, "seed", "must be a nonnegative integer")
    return merged


def load_config(path):
    """Load and validate a YAML scenario config file."""
    import yaml

    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return validate_config(raw)


def make_ap_ring(num_aps, radius, height, downtilt, m_x, m_y, spacing):
    """APs uniformly spaced on a circle, each aimed at the network center.

    Placement is deterministic: AP b sits at azimuth 2πb/B.
    """
    aps = []
    center = np.array([0.0, 0.0, height])
    for b in range(num_aps):
        ang = 2.0 * math.pi * b / num_aps
        pos = np.array([radius * math.cos(ang), radius * math.sin(ang), height])
        pose = boresight_rotation(pos, center, downtilt)
        aps.append(ApConfig(pos, pose, m_x, m_y, spacing))
    return aps


def build_scenario(cfg, rng, isotropic=False):
    """Construct a Scenario from a validated config, drawing users and
    scatterers from ``rng``.

    Draw order is pinned (users first, then scatterer positions, heights,
    phases) so a given generator state always yields the same drop.
    """
    cfg = validate_config(cfg)
    lam = SPEED_OF_LIGHT / cfg["f_c"]
    spacing = cfg["d_over_lambda"] * lam
    aps = make_ap_ring(
        int(cfg["B"]),
        cfg["R_cov"],
        cfg["heights"]["ap"],
        math.radians(cfg["downtilt_deg"]),
        int(cfg["M_x"]),
        int(cfg["M_y"]),
        spacing,
    )
    users = _sample_disc(rng, int(cfg["K"]), cfg["R_cov"], cfg["heights"]["user"])
    lo, hi = cfg["heights"]["scatterer"]
    q = int(cfg["Q"])
    sc_xy = _sample_disc(rng, q, cfg["R_cov"], 0.0)
    sc_h = rng.uniform(lo, hi, size=q)
    sc_phase = rng.uniform(0.0, 2.0 * math.pi, size=q)
    scatterers = [
        Scatterer(np.array([sc_xy[i, 0], sc_xy[i, 1], sc_h[i]]), cfg["rcs"], sc_phase[i])
        for i in range(q)
    ]
    return Scenario(
        aps=aps,
        users=users,
        scatterers=scatterers,
        wavelength=lam,
        directivity=float(cfg["p"]),
        theta_max=float(cfg["theta_max"]),
        noise_power=dbm_to_watts(cfg["noise_dBm"]),
        p_max=dbm_to_watts(cfg["P_max_dBm"]),
        isotropic=isotropic,
    )


def _sample_disc(rng, n, radius, height):
    """n points uniform in the disc of given radius at fixed height, shape (n, 3)."""
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    ang = rng.uniform(0.0, 2.0 * math.pi, size=n)
    out = np.empty((n, 3))
    out[:, 0] = r * np.cos(ang)
    out[:, 1] = r * np.sin(ang)
    out[:, 2] = height
    return out


def scenario_from_seed(cfg, seed=None, isotropic=False):
    """Build a drop from a config using its seed (or an override)."""
    cfg = validate_config(cfg)
    if seed is None:
        seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    return build_scenario(cfg, rng, isotropic=isotropic)


def with_isotropic(scn: Scenario):
    """Same geometry, isotropic element mode."""
    return dataclasses.replace(scn, isotropic=True)
