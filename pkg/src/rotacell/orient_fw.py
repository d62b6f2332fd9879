"""Frank-Wolfe orientation design over a proportional-fair log utility.

Stage 1 of the low-complexity scheme: instead of touching the max-min
beamforming problem, boresights maximize U = sum_k ln(|h_k|^2 + eps).
The marginal weight 1/(eta_k + eps) emphasizes weak users, the feasible
set is the product of spherical caps, and the linear maximization over
one cap has a closed form, so each iteration is gradient + oracle +
retraction with one shared Armijo stepsize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    as_orientations,
    channel_and_gradients,
    precompute_paths,
    validate_orientations,
)

EPS_REG = 1e-12  # default utility regularizer, channel-power units
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
ARMIJO_C1 = 1e-4
ARMIJO_SHRINK = 0.5
RHO_MIN = 1e-8
UNIT_TOL = 1e-12


@dataclass
class FwState:
    """Strictly feasible Frank-Wolfe iterate."""

    orientations: np.ndarray  # (B, M, 3), exactly unit norm
    utility: float
    iter: int = 0


def aggregate_gain(channels, k):
    """Aggregate channel gain eta_k = |h_k|^2 over all AP elements."""
    h = channels.h if hasattr(channels, "h") else np.asarray(channels)
    return float(np.sum(np.abs(h[k]) ** 2))


def log_utility(channels, epsilon_reg=EPS_REG):
    """U = sum_k ln(eta_k + eps)."""
    if epsilon_reg <= 0.0:
        raise ValueError("epsilon_reg must be positive")
    h = channels.h if hasattr(channels, "h") else np.asarray(channels)
    eta = np.sum(np.abs(h) ** 2, axis=1)
    return float(np.sum(np.log(eta + epsilon_reg)))


def utility_gradient(scenario, orientations, epsilon_reg=EPS_REG, geom=None):
    """Euclidean gradient of U per element, shape (B, M, 3).

    d eta_k / d f_{b,m} = 2 Re{conj(h_{k,b,m}) grad h_{k,b,m}}, weighted
    by the proportional-fair factor 1/(eta_k + eps) and summed over k.
    """
    if epsilon_reg <= 0.0:
        raise ValueError("epsilon_reg must be positive")
    h, grad = channel_and_gradients(scenario, orientations, geom)
    nk = h.shape[0]
    nb, nm = grad.shape[1], grad.shape[2]
    eta = np.sum(np.abs(h) ** 2, axis=1)
    weights = 1.0 / (eta + epsilon_reg)
    hr = h.reshape(nk, nb, nm)
    per_user = 2.0 * np.real(np.conj(hr)[..., None] * grad)
    return np.einsum("k,kbmi->bmi", weights, per_user)


def riemannian_project(f, g_euclid):
    """Tangent-space projection (I - f f^T) g at a unit vector f."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g_euclid, dtype=float)
    return g - f * float(f @ g)


def cap_linear_oracle(g, theta_max, incumbent=None):
    """argmax of <g, x> over the cap {|x| = 1, x_z >= cos theta_max}.

    Three branches: the normalized gradient when it already lies in the
    cap; otherwise its azimuth carried to the cap rim; an arbitrary rim
    point when g points straight down.  A zero gradient returns the
    caller-provided incumbent (no first-order preference, no move).
    """
    if not 0.0 <= theta_max < 0.5 * math.pi:
        raise ValueError("theta_max must lie in [0, pi/2)")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        if incumbent is None:
            raise ValueError("zero gradient needs an incumbent orientation")
        return np.asarray(incumbent, dtype=float).copy()
    ghat = g / norm
    cz = math.cos(theta_max)
    if ghat[2] >= cz:
        return ghat
    horiz = math.hypot(ghat[0], ghat[1])
    rim = math.sqrt(max(1.0 - cz * cz, 0.0))
    if horiz > 0.0:
        return np.array(
            [rim * ghat[0] / horiz, rim * ghat[1] / horiz, cz]
        )
    return np.array([rim, 0.0, cz])  # g straight down: any rim point works


def fw_direction(f, y):
    """Search direction y - f between unit vectors."""
    return np.asarray(y, dtype=float) - np.asarray(f, dtype=float)


def retract(f, d, rho):
    """Normalized step (f + rho d)/|f + rho d| back onto the sphere."""
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    v = np.asarray(f, dtype=float) + rho * np.asarray(d, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("retraction through the origin; halve the stepsize")
    return v / norm


def run_fw(
    scenario,
    init,
    epsilon_reg=EPS_REG,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    trace=None,
    geom=None,
):
    """Maximize the log utility over cap-feasible unit boresights.

    Per iteration: utility gradient, per-element tangent projection and
    cap oracle, one shared Armijo backtracking stepsize, retraction.
    Every iterate is exactly unit norm and cap feasible; the utility
    sequence never decreases.  Returns the final orientation set.
    """
    init = as_orientations(init, scenario)
    validate_orientations(init, scenario.theta_max)
    if geom is None:
        geom = precompute_paths(scenario)
    f = np.array(init, dtype=float)
    nb, nm = f.shape[0], f.shape[1]
    h, _ = channel_and_gradients(scenario, f, geom)
    util = _utility_of(h, epsilon_reg)
    for t in range(1, max_iter + 1):
        g_euc = utility_gradient(scenario, f, epsilon_reg, geom)
        dirs = np.empty_like(f)
        gap = 0.0
        for b in range(nb):
            for m in range(nm):
                g_r = riemannian_project(f[b, m], g_euc[b, m])
                y = cap_linear_oracle(g_r, scenario.theta_max, incumbent=f[b, m])
                dirs[b, m] = y - f[b, m]
                gap += float(g_r @ dirs[b, m])
        if gap <= 0.0:
            _trace(trace, t, util, 0.0, 0.0, "stationary")
            break
        rho = 1.0
        accepted = False
        while rho >= RHO_MIN:
            f_try = _retract_all(f, dirs, rho, scenario.theta_max)
            h_try, _ = channel_and_gradients(scenario, f_try, geom)
            util_try = _utility_of(h_try, epsilon_reg)
            if util_try >= util + ARMIJO_C1 * rho * gap:
                accepted = True
                break
            rho *= ARMIJO_SHRINK
        if not accepted:
            _trace(trace, t, util, 0.0, gap, "linesearch-exhausted")
            break
        step = float(np.max(np.linalg.norm(f_try - f, axis=-1)))
        delta = util_try - util
        f, util = f_try, util_try
        _trace(trace, t, util, rho, step, "accepted")
        if abs(delta) <= tol:
            break
    return f


def _utility_of(h, epsilon_reg):
    eta = np.sum(np.abs(h) ** 2, axis=1)
    return float(np.sum(np.log(eta + epsilon_reg)))


def _retract_all(f, dirs, rho, theta_max):
    """Retraction of every element; asserts the cap is preserved."""
    v = f + rho * dirs
    norms = np.linalg.norm(v, axis=-1)
    if np.any(norms == 0.0):
        raise ValueError("retraction through the origin; halve the stepsize")
    out = v / norms[..., None]
    # convex combination of cap points keeps x_z >= cos(theta) before
    # normalization and norms <= 1 only raise it, but check anyway
    cz = math.cos(theta_max)
    if np.any(out[..., 2] < cz - UNIT_TOL):
        raise AssertionError("retraction left the spherical cap")
    return out


def _trace(rows, it, util, rho, step, status):
    if rows is not None:
        rows.append(
            {"iter": it, "utility": util, "rho": rho, "step_norm": step,
             "status": status}
        )


def format_trace(rows):
    """Per-iteration trace as aligned text."""
    lines = ["iter  utility            rho         step_norm   status"]
    for r in rows:
        lines.append(
            "%-5d %-18.10g %-11.3g %-11.6g %s"
            % (r["iter"], r["utility"], r["rho"], r["step_norm"], r["status"])
        )
    return "\n".join(lines)
