"""Successive convex approximation over antenna boresights at fixed beams.

For fixed beamformers the worst-user SINR is a ratio of two nonconvex
smooth functions of the stacked boresights f.  Each iteration builds a
convex restriction around the incumbent:

* signal power gets a global quadratic lower bound
  S_k(f) >= S_k(f0) + grad_S(f - f0) - (xi_k/2)|f - f0|^2,
* interference an upper bound with curvature chi_k,
* the bilinear coupling S_k >= gamma z_k is relaxed through Young's
  inequality at the incumbent (gamma_t, z_t),

and the resulting SOC program is solved for (f, gamma, z).  Curvature
constants come from conservative channel-magnitude bounds, so the
surrogates hold globally and the gamma sequence cannot decrease.

Internally the program is assembled in noise units (powers divided by
sigma^2) so variables are O(1)-O(100); states and the public operations
stay in physical watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .channel import (
    as_orientations,
    channel_and_gradients,
    magnitude_bound_arrays,
    precompute_paths,
    validate_orientations,
)

EPS_XI = 1e-12  # floor for curvature constants (zero-precoder degeneracy)
EPS_INIT = 1e-9  # positivity floor for gamma^0 and z^0
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 30
ADAPTIVE_START = 1e-2  # initial fraction of the analytic curvature
ADAPTIVE_GROWTH = 4.0


@dataclass
class ScaState:
    """Incumbent of the orientation SCA loop.

    Orientations are the relaxed boresights (sub-unit norms allowed
    mid-iteration), ``gamma`` the current worst-user SINR target and
    ``z`` the per-user interference-plus-noise auxiliaries in watts.
    """

    orientations: np.ndarray  # (B, M, 3)
    gamma: float
    z: np.ndarray  # (K,)
    iter: int = 0


def validate_state(state: ScaState, scenario):
    if not state.gamma > 0.0:
        raise ValueError("state gamma must be positive")
    if np.any(state.z < scenario.noise_power - 1e-12):
        raise ValueError("auxiliary z below the noise floor")
    validate_orientations(state.orientations, scenario.theta_max, subunit=True)


@dataclass
class SurrogateCoefficients:
    """Values, gradients and curvature constants at an expansion point."""

    s0: np.ndarray  # (K,) signal powers
    grad_s: np.ndarray  # (K, B, M, 3)
    xi: np.ndarray  # (K,) signal curvature bounds
    i0: np.ndarray  # (K,) interference powers
    grad_i: np.ndarray  # (K, B, M, 3)
    chi: np.ndarray  # (K,)


def signal_interference_values(channels, beams, k):
    """(S_k, I_k) = (|h_k^H w_k|^2, sum_{j != k} |h_k^H w_j|^2)."""
    h = channels.h if hasattr(channels, "h") else np.asarray(channels)
    w = np.asarray(beams)
    prods = np.conj(h[k]) @ w.T
    sig = float(abs(prods[k]) ** 2)
    interf = float(np.sum(np.abs(prods) ** 2)) - sig
    return sig, max(interf, 0.0)


def _values_and_gradients(h, grad, w):
    """Vectorized S, I and their boresight gradients for every user.

    Shapes: h (K, B*M), grad (K, B, M, 3), w (K, B*M).  Returns
    (s0, i0, gs, gi) with gradients shaped (K, B, M, 3).
    """
    nk = h.shape[0]
    nb, nm = grad.shape[1], grad.shape[2]
    wr = w.reshape(nk, nb, nm)
    U = np.conj(h) @ w.T  # U[k, j] = h_k^H w_j
    diag = np.diagonal(U)
    pw = np.abs(U) ** 2
    s0 = np.abs(diag) ** 2
    i0 = pw.sum(axis=1) - np.diagonal(pw)
    # grad S_k over f_{b,m}: 2 Re{(h_k^H w_k) conj(w_{k,b,m}) grad h_{k,b,m}}
    gs = 2.0 * np.real(
        (diag[:, None, None] * np.conj(wr))[..., None] * grad
    )
    t_all = np.einsum("kj,jbm->kbm", U, np.conj(wr))
    t_int = t_all - diag[:, None, None] * np.conj(wr)
    gi = 2.0 * np.real(t_int[..., None] * grad)
    return s0, np.maximum(i0, 0.0), gs, gi


def si_gradients(scenario, orientations, beams, k, geom=None):
    """Boresight gradients of S_k and I_k, each shaped (B, M, 3)."""
    if scenario.directivity < 1.0 and not scenario.isotropic:
        raise ValueError("gradients need directivity p >= 1")
    h, grad = channel_and_gradients(scenario, orientations, geom)
    _, _, gs, gi = _values_and_gradients(h, grad, np.asarray(beams))
    return gs[k], gi[k]


def curvature_constants(scenario, beams, k, bounds=None):
    """Conservative Hessian-norm bounds (xi_k, chi_k) for user k.

    Assembled from orientation-independent channel magnitude bounds:
    per element, |w|^2 g_max^2 covers the gradient outer product and
    |w| ||w|| h_sum H_max the second-derivative term; the worst element
    is taken for the served beam and summed over interferers.  Values
    are floored at EPS_XI so downstream divisions stay defined.
    """
    _require_p2(scenario)
    xi, chi = _curvatures(scenario, np.asarray(beams), bounds)
    return float(xi[k]), float(chi[k])


def _curvatures(scenario, w, bounds=None):
    if bounds is None:
        bounds = magnitude_bound_arrays(scenario)
    h_max, g_max, big_h = bounds
    nk = w.shape[0]
    nb, nm = h_max.shape[1], h_max.shape[2]
    aw = np.abs(w).reshape(nk, nb, nm)
    norms = np.linalg.norm(w, axis=1)
    h_sum = h_max.reshape(nk, -1).sum(axis=1)  # (K,)
    xi = np.empty(nk)
    chi = np.empty(nk)
    for k in range(nk):
        per_el = aw[k] ** 2 * g_max[k] ** 2 + aw[k] * norms[k] * h_sum[k] * big_h[k]
        xi[k] = 2.0 * float(per_el.max())
        acc = 0.0
        for j in range(nk):
            if j == k:
                continue
            per_el = aw[j] ** 2 * g_max[k] ** 2 + aw[j] * norms[j] * h_sum[k] * big_h[k]
            acc += 2.0 * float(per_el.max())
        chi[k] = acc
    return np.maximum(xi, EPS_XI), np.maximum(chi, EPS_XI)


def young_upper_bound(z_t, gamma_t, z, gamma):
    """1/2 ((z_t/gamma_t) gamma^2 + (gamma_t/z_t) z^2) >= z gamma."""
    if z_t <= 0.0 or gamma_t <= 0.0:
        raise ValueError("Young anchors must be positive")
    return 0.5 * ((z_t / gamma_t) * gamma**2 + (gamma_t / z_t) * z**2)


def _require_p2(scenario):
    if scenario.isotropic:
        return
    if scenario.directivity < 2.0:
        raise ValueError(
            "orientation surrogates need directivity p >= 2 "
            f"(got p = {scenario.directivity}); use the gradient-based "
            "two-stage scheme for smaller exponents"
        )


def variable_layout(scenario):
    """Index ranges (f, gamma, z) for the surrogate program variables."""
    nf = 3 * scenario.num_aps * scenario.elements_per_ap
    nk = scenario.num_users
    return slice(0, nf), nf, slice(nf + 1, nf + 1 + nk)


def incumbent_vector(state: ScaState, scenario):
    """Incumbent in program coordinates: (delta = 0, gamma, z/sigma^2)."""
    nf = 3 * state.orientations.shape[0] * state.orientations.shape[1]
    return np.concatenate(
        [np.zeros(nf), [state.gamma], state.z / scenario.noise_power]
    )


def build_surrogate_program(
    state: ScaState, beams, scenario, geom=None, curvatures=None
):
    """Convex restriction at the incumbent as a ConicProgram.

    Variables are ordered (boresights stacked AP-major/element-major,
    gamma, z) per ``variable_layout``; for conditioning the boresight
    block is expressed as the offset delta = f - f^t from the expansion
    point and z in noise units, so the incumbent is the vector from
    ``incumbent_vector`` (zero offsets).  Every surrogate is tight at
    the expansion point, hence the incumbent is feasible.
    """
    _require_p2(scenario)
    validate_state(state, scenario)
    w = np.asarray(beams)
    sigma2 = scenario.noise_power
    if geom is None:
        geom = precompute_paths(scenario)
    h, grad = channel_and_gradients(scenario, state.orientations, geom)
    s0, i0, gs, gi = _values_and_gradients(h, grad, w)
    if curvatures is None:
        xi, chi = _curvatures(scenario, w, magnitude_bound_arrays(scenario, geom))
    else:
        xi, chi = curvatures
    # noise units
    s0 = s0 / sigma2
    i0 = i0 / sigma2
    gs = gs / sigma2
    gi = gi / sigma2
    xi = np.maximum(xi / sigma2, EPS_XI)
    chi = np.maximum(chi / sigma2, EPS_XI)
    z_t = state.z / sigma2
    gamma_t = state.gamma

    nb, nm = state.orientations.shape[0], state.orientations.shape[1]
    nf = 3 * nb * nm
    nk = w.shape[0]
    n = nf + 1 + nk
    ig = nf  # gamma index
    f0 = state.orientations.reshape(-1)
    cons = []
    for k in range(nk):
        gsf = gs[k].reshape(-1)
        gif = gi[k].reshape(-1)
        # signal lower bound vs Young upper bound:
        # (a/2) g^2 + (b/2) z^2 + (xi/2)|d|^2 - gs d - s0 <= 0
        a = z_t[k] / gamma_t
        b = gamma_t / z_t[k]
        P = np.zeros((n, n))
        P[np.arange(nf), np.arange(nf)] = 0.5 * xi[k]
        P[ig, ig] = 0.5 * a
        P[ig + 1 + k, ig + 1 + k] = 0.5 * b
        q = np.zeros(n)
        q[:nf] = -gsf
        cons.append(conic.quad_constraint_to_soc(P, q, -s0[k]))
        # interference upper bound + noise below z:
        # (chi/2)|d|^2 + gi d + i0 + 1 - z <= 0
        P = np.zeros((n, n))
        P[np.arange(nf), np.arange(nf)] = 0.5 * chi[k]
        q = np.zeros(n)
        q[:nf] = gif
        q[ig + 1 + k] = -1.0
        cons.append(conic.quad_constraint_to_soc(P, q, i0[k] + 1.0))
    # relaxed unit-norm ball per element: |f0 + delta| <= 1
    for e in range(nb * nm):
        A = np.zeros((3, n))
        A[:, 3 * e : 3 * e + 3] = np.eye(3)
        cons.append(conic.SocConstraint(A, f0[3 * e : 3 * e + 3], np.zeros(n), 1.0))
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    cz = math.cos(scenario.theta_max)
    z_coords = 3 * np.arange(nb * nm) + 2
    lower[z_coords] = cz - f0[z_coords]
    upper[z_coords] = 1.0 - f0[z_coords]
    lower[ig] = 0.0
    c = np.zeros(n)
    c[ig] = -1.0  # maximize gamma
    return conic.ConicProgram(n, c, cons, lower=lower, upper=upper)


def normalize_orientations(raw):
    """Project relaxed boresights back to unit norm, f/|f| per element."""
    raw = np.asarray(raw, dtype=float)
    norms = np.linalg.norm(raw, axis=-1)
    if np.any(norms <= 0.0):
        raise ValueError("cannot normalize a zero boresight")
    return raw / norms[..., None]


def _snap_feasible(orient, theta_max):
    """Clip solver output onto the exact relaxed-feasible set.

    Removes O(solver tolerance) violations: norms are clipped to 1 and
    directions lifted to the cap boundary when marginally outside.
    """
    out = np.array(orient, dtype=float)
    flat = out.reshape(-1, 3)
    cz = math.cos(theta_max)
    for i in range(flat.shape[0]):
        v = flat[i]
        nrm = float(np.linalg.norm(v))
        if nrm > 1.0:
            v /= nrm
            nrm = 1.0
        if nrm == 0.0:
            continue
        dz = v[2] / nrm
        if dz < cz:
            horiz = math.hypot(v[0], v[1])
            root = nrm * math.sqrt(max(1.0 - cz * cz, 0.0))
            if horiz > 0.0:
                v[0] *= root / horiz
                v[1] *= root / horiz
            else:
                v[0], v[1] = root, 0.0
            v[2] = nrm * cz
    return out


def initial_state(scenario, beams, init, geom=None, iteration=0):
    """Incumbent state from achieved SINR values at the given point.

    Used both for iteration 0 and after every accepted step: anchoring
    gamma and z at the true achieved values keeps the incumbent feasible
    for the next surrogate and makes the reported sequence the true
    worst-user SINR, which is the monotone quantity of interest.
    """
    if geom is None:
        geom = precompute_paths(scenario)
    h, _ = channel_and_gradients(scenario, init, geom)
    w = np.asarray(beams)
    prods = np.conj(h) @ w.T
    pw = np.abs(prods) ** 2
    sig = np.diagonal(pw)
    interf = pw.sum(axis=1) - sig
    z0 = np.maximum(interf + scenario.noise_power, scenario.noise_power)
    gamma0 = max(float(np.min(sig / z0)), EPS_INIT)
    return ScaState(np.array(init, dtype=float), gamma0, z0, iteration)


def _surrogate_check(s_true, i_true, s0, gs, i0, gi, xi, chi, d):
    """Pointwise validity of the used surrogates at displacement d.

    Returns per-user booleans marking violated signal or interference
    bounds (used by the adaptive curvature mode).
    """
    nk = s_true.shape[0]
    bad = np.zeros(nk, dtype=bool)
    dn2 = float(d @ d)
    for k in range(nk):
        under = s0[k] + float(gs[k].reshape(-1) @ d) - 0.5 * xi[k] * dn2
        over = i0[k] + float(gi[k].reshape(-1) @ d) + 0.5 * chi[k] * dn2
        tol_s = 1e-9 * max(1.0, abs(s_true[k]))
        tol_i = 1e-9 * max(1.0, abs(i_true[k]))
        if under > s_true[k] + tol_s or over < i_true[k] - tol_i:
            bad[k] = True
    return bad


def run_sca(
    scenario,
    beams,
    init,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    adaptive=False,
    adaptive_start=ADAPTIVE_START,
    trace=None,
    geom=None,
    solver_tol=1e-7,
):
    """Iterate surrogate builds until the SINR target stalls.

    Returns ``(orientations, gamma)`` where orientations are the relaxed
    (possibly sub-unit) boresights of the last accepted iterate and gamma
    the true worst-user SINR achieved there; callers normalize via
    ``normalize_orientations`` and rescale beams.  A candidate step is
    accepted only when the recomputed true SINR does not regress, so the
    gamma sequence is non-decreasing within 1e-8 regardless of solver
    tolerance.  On solver failure the incumbent is returned and the last
    trace row carries the failure status.
    """
    _require_p2(scenario)
    init = as_orientations(init, scenario)
    validate_orientations(init, scenario.theta_max)
    if geom is None:
        geom = precompute_paths(scenario)
    w = np.asarray(beams)
    sigma2 = scenario.noise_power
    bounds = magnitude_bound_arrays(scenario, geom)
    xi_full, chi_full = _curvatures(scenario, w, bounds)
    if adaptive:
        if not 0.0 < adaptive_start <= 1.0:
            raise ValueError("adaptive_start must lie in (0, 1]")
        xi_use = np.maximum(adaptive_start * xi_full, EPS_XI)
        chi_use = np.maximum(adaptive_start * chi_full, EPS_XI)
    else:
        xi_use = xi_full.copy()
        chi_use = chi_full.copy()
    state = initial_state(scenario, w, init, geom)
    nf = 3 * scenario.num_aps * scenario.elements_per_ap
    for t in range(1, max_iter + 1):
        cand = None
        retries = 0
        while cand is None:
            prog = build_surrogate_program(
                state, w, scenario, geom=geom, curvatures=(xi_use, chi_use)
            )
            sol = conic.solve(prog, tol=solver_tol)
            usable = sol.status == conic.SolveStatus.OPTIMAL or (
                sol.status == conic.SolveStatus.MAX_ITER
                and sol.x is not None
                and sol.primal_residual <= 100 * solver_tol
                and sol.relative_gap <= 100 * solver_tol
            )
            if not usable:
                _trace(trace, t, state.gamma, math.nan, sol.status.value, retries)
                return state.orientations, state.gamma
            delta = sol.x[:nf].reshape(state.orientations.shape)
            f_new = _snap_feasible(state.orientations + delta, scenario.theta_max)
            cand = initial_state(scenario, w, f_new, geom, iteration=t)
            if cand.gamma >= state.gamma - 1e-8:
                break
            # true SINR regressed: surrogate too aggressive somewhere
            if adaptive and (
                np.any(xi_use < xi_full) or np.any(chi_use < chi_full)
            ):
                h_old, grad_old = channel_and_gradients(
                    scenario, state.orientations, geom
                )
                s0, i0, gs, gi = _values_and_gradients(h_old, grad_old, w)
                prods = np.conj(
                    channel_and_gradients(scenario, f_new, geom)[0]
                ) @ w.T
                pw = np.abs(prods) ** 2
                s_true = np.diagonal(pw) / sigma2
                i_true = (pw.sum(axis=1) - np.diagonal(pw)) / sigma2
                d = f_new.reshape(-1) - state.orientations.reshape(-1)
                bad = _surrogate_check(
                    s_true, i_true, s0 / sigma2, gs / sigma2,
                    i0 / sigma2, gi / sigma2,
                    xi_use / sigma2, chi_use / sigma2, d,
                )
                if not np.any(bad):
                    bad[:] = True  # regression without a pinpointed bound
                xi_use[bad] = np.minimum(xi_use[bad] * ADAPTIVE_GROWTH, xi_full[bad])
                chi_use[bad] = np.minimum(chi_use[bad] * ADAPTIVE_GROWTH, chi_full[bad])
                retries += 1
                if retries > 8:
                    xi_use = xi_full.copy()
                    chi_use = chi_full.copy()
                cand = None
                continue
            _trace(trace, t, state.gamma, math.nan, "regressed", retries)
            return state.orientations, state.gamma
        step = float(np.max(np.linalg.norm(cand.orientations - state.orientations, axis=-1)))
        prev = state.gamma
        state = cand
        _trace(trace, t, state.gamma, step, "optimal", retries)
        if abs(state.gamma - prev) <= tol:
            break
    return state.orientations, state.gamma


def _trace(rows, it, gamma, step, status, retries):
    if rows is not None:
        rows.append(
            {
                "iter": it,
                "gamma": gamma,
                "step_norm": step,
                "status": status,
                "retries": retries,
            }
        )


def format_trace(rows):
    """Per-iteration trace as aligned text (for convergence plots)."""
    lines = ["iter  gamma             step_norm     status      retries"]
    for r in rows:
        lines.append(
            "%-5d %-17.10g %-13.6g %-11s %d"
            % (r["iter"], r["gamma"], r["step_norm"], r["status"], r["retries"])
        )
    return "\n".join(lines)
