"""Fast invariant suites behind the ``validate`` CLI subcommand.

Each check is a trimmed-down version of the property tests: small
sample counts, seconds not minutes, same invariants.  The full-strength
versions live in the test suite; this entry point exists so a fresh
install can be sanity-checked without pytest.
"""

from __future__ import annotations

import math

import numpy as np

from .beamform import all_sinr, ap_powers, maxmin_beamforming, single_user_cap
from .channel import (
    channel_and_gradients,
    channel_matrix,
    default_orientations,
    precompute_paths,
)
from .drivers import run_ao
from .orient_fw import cap_linear_oracle, run_fw
from .orient_sca import (
    curvature_constants,
    normalize_orientations,
    si_gradients,
    signal_interference_values,
)
from .scenario import (
    default_config,
    sample_cap_uniform,
    scenario_from_seed,
    with_isotropic,
)


def _small_config(p=3.0, **over):
    cfg = default_config()
    cfg.update({"B": 3, "M_x": 2, "M_y": 1, "K": 4, "Q": 2, "p": p})
    cfg.update(over)
    return cfg


def _rand_cap_set(scn, rng):
    f = np.empty((scn.num_aps, scn.elements_per_ap, 3))
    for b in range(scn.num_aps):
        for m in range(scn.elements_per_ap):
            f[b, m] = sample_cap_uniform(scn.theta_max, rng)
    return f


def check_channel_gradient(seed=0, instances=10, tol=1e-5):
    """Analytic channel gradients against central finite differences."""
    rng = np.random.default_rng([101, seed])
    worst = 0.0
    for i in range(instances):
        scn = scenario_from_seed(_small_config(p=float(rng.choice([2, 3, 5]))), seed=seed + i)
        orient = _rand_cap_set(scn, rng)
        cs, grads = channel_and_gradients(scn, orient)
        step = 1e-6
        for _ in range(4):
            k = int(rng.integers(scn.num_users))
            b = int(rng.integers(scn.num_aps))
            m = int(rng.integers(scn.elements_per_ap))
            axis = int(rng.integers(3))
            fp = orient.copy()
            fp[b, m, axis] += step
            fm = orient.copy()
            fm[b, m, axis] -= step
            col = b * scn.elements_per_ap + m
            hp = channel_matrix(scn, fp).h[k, col]
            hm = channel_matrix(scn, fm).h[k, col]
            fd = (hp - hm) / (2 * step)
            an = grads[k, b, m, axis]
            scale = max(abs(an), abs(fd), 1e-12)
            worst = max(worst, abs(an - fd) / scale)
    return worst <= tol, f"max rel grad error {worst:.2e} over {instances} instances"


def check_lemma1(seed=0, sets=10, tol=1e-10):
    """Sub-unit orientation rescale: h scales by norm^p per column."""
    rng = np.random.default_rng([102, seed])
    scn = scenario_from_seed(_small_config(p=3.0), seed=seed)
    worst = 0.0
    for _ in range(sets):
        raw = _rand_cap_set(scn, rng)
        norms = rng.uniform(0.3, 1.0, size=raw.shape[:2])
        sub = raw * norms[..., None]
        h_sub = channel_matrix(scn, sub).h
        h_unit = channel_matrix(scn, raw).h
        d = norms.reshape(-1) ** scn.directivity
        worst = max(worst, float(np.max(np.abs(h_unit * d[None, :] - h_sub))
                                 / max(np.max(np.abs(h_sub)), 1e-300)))
    return worst <= tol, f"max rel rescale error {worst:.2e} over {sets} sets"


def check_surrogate_bounds(seed=0, scenarios=3, points=100, tol=1e-10):
    """Sampled global validity of the SCA signal/interference bounds."""
    rng = np.random.default_rng([103, seed])
    bad = 0
    for i in range(scenarios):
        scn = scenario_from_seed(_small_config(p=3.0), seed=seed + i)
        f0 = _rand_cap_set(scn, rng)
        h0 = channel_matrix(scn, f0)
        n = scn.num_aps * scn.elements_per_ap
        w = (rng.normal(size=(scn.num_users, n)) + 1j * rng.normal(size=(scn.num_users, n)))
        w *= math.sqrt(scn.p_max / scn.num_aps) / np.linalg.norm(w, axis=1, keepdims=True)
        coeffs = []
        for k in range(scn.num_users):
            s0, i0 = signal_interference_values(h0, w, k)
            gs, gi = si_gradients(scn, f0, w, k)
            xi, chi = curvature_constants(scn, w, k)
            coeffs.append((s0, i0, gs.ravel(), gi.ravel(), xi, chi))
        for _ in range(points):
            f = _rand_cap_set(scn, rng)
            f *= rng.uniform(0.5, 1.0, size=f.shape[:2])[..., None]
            h = channel_matrix(scn, f)
            d = (f - f0).ravel()
            dd = float(d @ d)
            for k in range(scn.num_users):
                s0, i0, gs, gi, xi, chi = coeffs[k]
                st, it = signal_interference_values(h, w, k)
                lower = s0 + gs @ d - 0.5 * xi * dd
                upper = i0 + gi @ d + 0.5 * chi * dd
                scale = max(1.0, abs(st), abs(it))
                if st < lower - tol * scale or it > upper + tol * scale:
                    bad += 1
    return bad == 0, f"{bad} bound violations over {scenarios}x{points} sampled points"


def check_cap_oracle(seed=0, gradients=100):
    """Closed-form cap maximizer at least as good as a 1-degree grid."""
    rng = np.random.default_rng([104, seed])
    worst = math.inf
    for theta_max in (math.pi / 6, math.pi / 3):
        az = np.linspace(0.0, 2 * math.pi, 360, endpoint=False)
        zen = np.linspace(0.0, theta_max, 60)
        aa, zz = np.meshgrid(az, zen)
        grid = np.stack(
            [np.sin(zz) * np.cos(aa), np.sin(zz) * np.sin(aa), np.cos(zz)], axis=-1
        ).reshape(-1, 3)
        for _ in range(gradients):
            g = rng.normal(size=3)
            y = cap_linear_oracle(g, theta_max)
            worst = min(worst, float(y @ g) - float(np.max(grid @ g)))
    return worst >= -1e-12, f"min closed-form margin over grid {worst:.2e}"


def check_single_user(seed=0, tol=1e-4):
    """K=1 bisection against the coherent power-budget closed form."""
    cfg = _small_config(p=3.0)
    cfg["K"] = 1
    scn = scenario_from_seed(cfg, seed=seed)
    h = channel_matrix(scn, default_orientations(scn.num_aps, scn.elements_per_ap)).h
    mm = maxmin_beamforming(h, scn.p_max, scn.noise_power, num_aps=scn.num_aps)
    closed = single_user_cap(h, scn.p_max, scn.noise_power, scn.num_aps)
    rel = abs(mm.gamma_star - closed) / closed
    return rel <= tol, f"gamma {mm.gamma_star:.6g} vs closed form {closed:.6g} (rel {rel:.2e})"


def check_beam_feasibility(seed=0):
    """Returned beams respect per-AP budgets and certify gamma_star."""
    scn = scenario_from_seed(_small_config(p=3.0), seed=seed)
    h = channel_matrix(scn, default_orientations(scn.num_aps, scn.elements_per_ap)).h
    mm = maxmin_beamforming(h, scn.p_max, scn.noise_power, num_aps=scn.num_aps)
    pow_ok = bool(np.all(ap_powers(mm.beamformers, scn.num_aps) <= scn.p_max * (1 + 1e-9)))
    sinr_min = float(np.min(all_sinr(h, mm.beamformers, scn.noise_power)))
    sinr_ok = sinr_min >= mm.gamma_star * (1 - 1e-6)
    ok = pow_ok and sinr_ok
    return ok, f"per-AP power ok={pow_ok}, min SINR {sinr_min:.6g} vs gamma {mm.gamma_star:.6g}"


def check_fw_monotone(seed=0, iters=25):
    """Stage-1 utility trace is non-decreasing."""
    scn = scenario_from_seed(_small_config(p=3.0), seed=seed)
    rows = []
    init = default_orientations(scn.num_aps, scn.elements_per_ap)
    run_fw(scn, init, max_iter=iters, trace=rows)
    utils = [r["utility"] for r in rows]
    drops = sum(b < a - 1e-9 for a, b in zip(utils, utils[1:]))
    return drops == 0, f"{len(utils)} iterations, {drops} utility decreases"


def check_ao_monotone(seed=0, outers=3):
    """Outer AO trace is non-decreasing within 1e-6."""
    scn = scenario_from_seed(_small_config(p=3.0), seed=seed)
    rep = run_ao(scn, seed=seed, max_outer=outers)
    rates = [r for _, r in rep.trace]
    drops = sum(b < a - 1e-6 for a, b in zip(rates, rates[1:]))
    return drops == 0 and rep.flag is None, (
        f"trace {['%.4f' % r for r in rates]}, flag={rep.flag}"
    )


def check_isotropic_invariance(seed=0):
    """Isotropic min rate does not depend on the steering cap."""
    vals = []
    for theta in (math.pi / 6, math.pi / 3):
        scn = with_isotropic(scenario_from_seed(_small_config(p=3.0, theta_max=theta), seed=seed))
        h = channel_matrix(scn, default_orientations(scn.num_aps, scn.elements_per_ap)).h
        mm = maxmin_beamforming(h, scn.p_max, scn.noise_power, num_aps=scn.num_aps)
        vals.append(math.log2(1.0 + mm.gamma_star))
    diff = abs(vals[0] - vals[1])
    return diff <= 1e-6, f"min rates {vals[0]:.6f} vs {vals[1]:.6f} across caps"


def check_normalization(seed=0):
    """normalize_orientations restores unit norm without leaving the cap."""
    rng = np.random.default_rng([105, seed])
    scn = scenario_from_seed(_small_config(p=3.0), seed=seed)
    raw = _rand_cap_set(scn, rng) * rng.uniform(0.4, 1.0, size=(scn.num_aps, scn.elements_per_ap, 1))
    unit = normalize_orientations(raw)
    norm_ok = bool(np.allclose(np.linalg.norm(unit, axis=-1), 1.0, atol=1e-12))
    cos_ok = bool(np.all(unit[..., 2] >= raw[..., 2] - 1e-12))
    return norm_ok and cos_ok, f"unit norms={norm_ok}, cap cosines non-decreasing={cos_ok}"


CHECKS = [
    ("channel-gradient-fd", check_channel_gradient),
    ("lemma1-rescale", check_lemma1),
    ("sca-surrogate-bounds", check_surrogate_bounds),
    ("cap-linear-oracle", check_cap_oracle),
    ("single-user-closed-form", check_single_user),
    ("beam-feasibility-certificate", check_beam_feasibility),
    ("fw-utility-monotone", check_fw_monotone),
    ("ao-trace-monotone", check_ao_monotone),
    ("isotropic-cap-invariance", check_isotropic_invariance),
    ("orientation-normalization", check_normalization),
]


def run_validation_suite(seed=0):
    """Run every check; returns (name, ok, detail) triples."""
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(seed=seed)
        except Exception as exc:  # noqa: BLE001 - a crash is a failing check
            ok, detail = False, f"crashed: {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
