"""NumPy reference implementation of the orientation kernels.

Every path (LoS or scattered) contributes c · [vᵀf̃]₊^p to its channel
entry, where v is the path's unit direction in the panel's local frame
and c the orientation-independent complex path weight.  Derivatives
follow the same sum with powers p−1 (times v) and p−2 (times vvᵀ).

Shapes: c_los (K,B,M) complex, v_los (K,B,M,3) float, c_sc (K,Q,B,M)
complex, v_sc (Q,B,M,3) float, orient (B,M,3) float.  Q may be 0.
"""

import numpy as np


def _pos_pow(d, expo):
    """[d]₊^expo with the convention 0 for d <= 0 (any expo >= 0)."""
    out = np.zeros_like(d)
    mask = d > 0.0
    np.power(d, expo, out=out, where=mask)
    return out


def eval_channel(c_los, v_los, c_sc, v_sc, orient, p):
    """Channel entries h[k,b,m] for one orientation set."""
    d_los = np.einsum("kbmi,bmi->kbm", v_los, orient)
    h = c_los * _pos_pow(d_los, p)
    if c_sc.shape[1]:
        d_sc = np.einsum("qbmi,bmi->qbm", v_sc, orient)
        h = h + np.einsum("kqbm,qbm->kbm", c_sc, _pos_pow(d_sc, p))
    return h


def eval_channel_grad(c_los, v_los, c_sc, v_sc, orient, p):
    """Channel and its per-element gradient; grad[k,b,m] is a complex 3-vector."""
    d_los = np.einsum("kbmi,bmi->kbm", v_los, orient)
    h = c_los * _pos_pow(d_los, p)
    scale = p * c_los * _pos_pow(d_los, p - 1.0)
    grad = scale[..., None] * v_los
    if c_sc.shape[1]:
        d_sc = np.einsum("qbmi,bmi->qbm", v_sc, orient)
        h = h + np.einsum("kqbm,qbm->kbm", c_sc, _pos_pow(d_sc, p))
        grad = grad + p * np.einsum(
            "kqbm,qbm,qbmi->kbmi", c_sc, _pos_pow(d_sc, p - 1.0), v_sc
        )
    return h, grad


def eval_hessian(c_los, v_los, c_sc, v_sc, orient, p):
    """Per-element Hessians hess[k,b,m] (complex 3x3), valid for p >= 2."""
    d_los = np.einsum("kbmi,bmi->kbm", v_los, orient)
    scale = p * (p - 1.0) * c_los * _pos_pow(d_los, p - 2.0)
    hess = scale[..., None, None] * (v_los[..., :, None] * v_los[..., None, :])
    if c_sc.shape[1]:
        d_sc = np.einsum("qbmi,bmi->qbm", v_sc, orient)
        outer = v_sc[..., :, None] * v_sc[..., None, :]
        hess = hess + p * (p - 1.0) * np.einsum(
            "kqbm,qbm,qbmij->kbmij", c_sc, _pos_pow(d_sc, p - 2.0), outer
        )
    return hess
