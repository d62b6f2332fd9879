"""Orientation-dependent channel synthesis and derivatives.

Each channel entry is a sum of path contributions.  A path (direct or
via one scatterer) has an orientation-independent complex weight and a
unit direction expressed in the panel's local frame; pointing the
element boresight f̃ changes only the directional-gain factor
[vᵀf̃]₊^p of each path.  First and second derivatives with respect to
f̃ therefore share the path weights and differ only in the power of the
positive part.

Scalar per-entry operations (``los_coefficient`` and friends) evaluate
the model directly from geometry and serve as the reference for the
batched kernel path used by the optimizers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scenario import Scenario

UNIT_TOL = 1e-10
CAP_TOL = 1e-10


# ---------------------------------------------------------------------------
# Orientation sets


def default_orientations(num_aps, num_elements):
    """All boresights at the local zenith e_z, shape (B, M, 3)."""
    f = np.zeros((num_aps, num_elements, 3))
    f[:, :, 2] = 1.0
    return f


def as_orientations(orient, scn: Scenario):
    out = np.asarray(orient, dtype=float)
    expected = (scn.num_aps, scn.elements_per_ap, 3)
    if out.shape != expected:
        raise ValueError(f"orientations must have shape {expected}, got {out.shape}")
    return out


def validate_orientations(orient, theta_max, subunit=False):
    """Check unit norm (or sub-unit when ``subunit``) and cap membership.

    Norms must equal 1 within 1e-10 (or be <= 1 + 1e-10 in the relaxed
    SCA regime); every boresight must satisfy f̃ᵀe_z >= cos(theta_max) - 1e-10
    scaled by its own norm so that sub-unit vectors are judged by direction.
    """
    orient = np.asarray(orient, dtype=float)
    norms = np.linalg.norm(orient, axis=-1)
    if subunit:
        if np.any(norms > 1.0 + UNIT_TOL):
            raise ValueError("orientation norm exceeds 1 beyond tolerance")
        if np.any(norms <= 0.0):
            raise ValueError("zero orientation vector")
    else:
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("orientation norms must equal 1 within 1e-10")
    cz = orient[..., 2] / norms
    if np.any(cz < math.cos(theta_max) - CAP_TOL):
        raise ValueError("orientation outside the spherical cap")
    return orient


# ---------------------------------------------------------------------------
# Path geometry


@dataclass(frozen=True)
class PathGeometry:
    """Orientation-independent per-path data for one scenario drop.

    ``c0_*`` are complex path weights without the element-gain factor
    sqrt(kappa_max); ``v_*`` are local-frame unit path directions.
    ``amp_*`` are the corresponding magnitude factors used in bounds.
    """

    c0_los: np.ndarray  # (K, B, M) complex
    v_los: np.ndarray  # (K, B, M, 3)
    c0_sc: np.ndarray  # (K, Q, B, M) complex
    v_sc: np.ndarray  # (Q, B, M, 3)
    amp_los: np.ndarray  # (K, B, M)
    amp_sc: np.ndarray  # (K, Q, B, M)


def precompute_paths(scn: Scenario) -> PathGeometry:
    """Geometry pass: distances, local directions, complex path weights."""
    nb, nm, nk = scn.num_aps, scn.elements_per_ap, scn.num_users
    nq = len(scn.scatterers)
    lam = scn.wavelength
    beta0 = (lam / (4.0 * math.pi)) ** 2
    users = scn.users

    elem = np.stack([ap.element_positions() for ap in scn.aps])  # (B, M, 3)
    poses = np.stack([ap.pose for ap in scn.aps])  # (B, 3, 3)

    diff = users[:, None, None, :] - elem[None, :, :, :]  # (K, B, M, 3)
    r = np.linalg.norm(diff, axis=-1)
    if np.min(r) <= 0.0:
        raise ValueError("degenerate geometry: user coincides with an element")
    s_glob = diff / r[..., None]
    v_los = np.einsum("bji,kbmj->kbmi", poses, s_glob)  # R_bᵀ s
    amp_los = math.sqrt(beta0) / r
    c0_los = amp_los * np.exp(-2j * math.pi * r / lam)

    if nq:
        sc_pos = np.stack([s.position for s in scn.scatterers])  # (Q, 3)
        rcs = np.array([s.rcs for s in scn.scatterers])
        chi = np.array([s.phase for s in scn.scatterers])
        d_es = sc_pos[:, None, None, :] - elem[None, :, :, :]  # (Q, B, M, 3)
        r_es = np.linalg.norm(d_es, axis=-1)
        if np.min(r_es) <= 0.0:
            raise ValueError("degenerate geometry: scatterer coincides with an element")
        v_sc = np.einsum("bji,qbmj->qbmi", poses, d_es / r_es[..., None])
        r_su = np.linalg.norm(users[:, None, :] - sc_pos[None, :, :], axis=-1)  # (K, Q)
        if np.min(r_su) <= 0.0:
            raise ValueError("degenerate geometry: user coincides with a scatterer")
        amp_sc = (
            math.sqrt(beta0)
            * np.sqrt(rcs / (4.0 * math.pi))[None, :, None, None]
            / (r_es[None, :, :, :] * r_su[:, :, None, None])
        )
        phase = np.exp(
            -2j * math.pi * (r_es[None, :, :, :] + r_su[:, :, None, None]) / lam
            + 1j * chi[None, :, None, None]
        )
        c0_sc = amp_sc * phase
    else:
        v_sc = np.zeros((0, nb, nm, 3))
        c0_sc = np.zeros((nk, 0, nb, nm), dtype=complex)
        amp_sc = np.zeros((nk, 0, nb, nm))

    return PathGeometry(
        c0_los=c0_los,
        v_los=np.ascontiguousarray(v_los),
        c0_sc=np.ascontiguousarray(c0_sc),
        v_sc=np.ascontiguousarray(v_sc),
        amp_los=amp_los,
        amp_sc=amp_sc,
    )


def _weighted(geom: PathGeometry, kappa):
    root = math.sqrt(kappa)
    return (
        np.ascontiguousarray(root * geom.c0_los),
        np.ascontiguousarray(root * geom.c0_sc),
    )


def _isotropic_channel(geom: PathGeometry):
    """Constant gain 2 over the front hemisphere of the fixed panel normal."""
    root = math.sqrt(2.0)
    h = root * geom.c0_los * (geom.v_los[..., 2] > 0.0)
    if geom.c0_sc.shape[1]:
        front = geom.v_sc[..., 2] > 0.0
        h = h + root * np.einsum("kqbm,qbm->kbm", geom.c0_sc, front.astype(float))
    return h


# ---------------------------------------------------------------------------
# Channel sets


@dataclass(frozen=True)
class ChannelSet:
    """Stacked channels h[k] of length B*M (AP-major, element row-major)."""

    h: np.ndarray  # (K, B*M) complex
    scenario: Scenario
    orientations: np.ndarray  # (B, M, 3) snapshot

    def __post_init__(self):
        if not np.all(np.isfinite(self.h.view(float))):
            raise ValueError("channel entries must be finite")

    @property
    def num_users(self):
        return self.h.shape[0]

    def per_ap(self, k):
        """Channel of user k reshaped to (B, M)."""
        scn = self.scenario
        return self.h[k].reshape(scn.num_aps, scn.elements_per_ap)


def channel_matrix(scn: Scenario, orientations, geom: PathGeometry | None = None):
    """Synthesize the full ChannelSet for one orientation set.

    In isotropic mode the result is independent of ``orientations`` (the
    snapshot still records what was passed).
    """
    orientations = as_orientations(orientations, scn)
    if geom is None:
        geom = precompute_paths(scn)
    if scn.isotropic:
        h = _isotropic_channel(geom)
    else:
        c_los, c_sc = _weighted(geom, scn.kappa_max)
        h = _kernels.eval_channel(
            c_los, geom.v_los, c_sc, geom.v_sc,
            np.ascontiguousarray(orientations), scn.directivity,
        )
    nk = h.shape[0]
    snap = orientations.copy()
    snap.setflags(write=False)
    return ChannelSet(h=h.reshape(nk, -1), scenario=scn, orientations=snap)


def channel_and_gradients(scn: Scenario, orientations, geom: PathGeometry | None = None):
    """Channels plus per-element gradients, shapes (K, B*M) and (K, B, M, 3).

    Isotropic mode returns zero gradients (channels do not depend on the
    boresights there).
    """
    orientations = as_orientations(orientations, scn)
    if geom is None:
        geom = precompute_paths(scn)
    if scn.isotropic:
        h = _isotropic_channel(geom)
        grad = np.zeros(h.shape + (3,), dtype=complex)
    else:
        c_los, c_sc = _weighted(geom, scn.kappa_max)
        h, grad = _kernels.eval_channel_grad(
            c_los, geom.v_los, c_sc, geom.v_sc,
            np.ascontiguousarray(orientations), scn.directivity,
        )
    return h.reshape(h.shape[0], -1), grad


# ---------------------------------------------------------------------------
# Scalar reference operations


def element_gain(epsilon, p):
    """Cosine element power pattern kappa_max cos^{2p}(eps) on [0, pi/2], else 0."""
    if p < 0:
        raise ValueError("directivity p must be nonnegative")
    kappa = 2.0 * (2.0 * p + 1.0)
    eps = abs(float(epsilon))
    if eps > math.pi / 2.0:
        return 0.0
    return kappa * math.cos(eps) ** (2.0 * p)


def _local_geometry(scn: Scenario, k, b, m):
    """Distance and local-frame direction from element (b, m) to user k."""
    ap = scn.aps[b]
    pos = ap.element_positions()[m]
    diff = scn.users[k] - pos
    r = float(np.linalg.norm(diff))
    if r <= 0.0:
        raise ValueError("degenerate geometry: zero element-user distance")
    return r, ap.pose.T @ (diff / r), pos, ap


def los_coefficient(scn: Scenario, orientations, k, b, m):
    """Direct-path channel coefficient for user k, AP b, element m (0-based)."""
    orientations = as_orientations(orientations, scn)
    lam = scn.wavelength
    beta0 = (lam / (4.0 * math.pi)) ** 2
    r, v, _, _ = _local_geometry(scn, k, b, m)
    phase = np.exp(-2j * math.pi * r / lam)
    if scn.isotropic:
        if v[2] <= 0.0:
            return 0j
        return math.sqrt(beta0 * 2.0) / r * phase
    d = float(v @ orientations[b, m])
    if d <= 0.0:
        return 0j
    return math.sqrt(beta0 * scn.kappa_max) / r * d**scn.directivity * phase


def nlos_coefficient(scn: Scenario, orientations, k, b, m):
    """Scattered-path channel coefficient: sum over all scatterers."""
    orientations = as_orientations(orientations, scn)
    lam = scn.wavelength
    beta0 = (lam / (4.0 * math.pi)) ** 2
    _, _, pos, ap = _local_geometry(scn, k, b, m)
    total = 0j
    for sc in scn.scatterers:
        d_es = sc.position - pos
        r_es = float(np.linalg.norm(d_es))
        if r_es <= 0.0:
            raise ValueError("degenerate geometry: scatterer at element position")
        d_su = scn.users[k] - sc.position
        r_su = float(np.linalg.norm(d_su))
        if r_su <= 0.0:
            raise ValueError("degenerate geometry: user at scatterer position")
        v = ap.pose.T @ (d_es / r_es)
        if scn.isotropic:
            gain = 2.0 if v[2] > 0.0 else 0.0
        else:
            d = float(v @ orientations[b, m])
            gain = scn.kappa_max * d ** (2.0 * scn.directivity) if d > 0.0 else 0.0
        if gain == 0.0:
            continue
        amp = math.sqrt(sc.rcs * beta0 * gain / (4.0 * math.pi)) / (r_es * r_su)
        total += amp * np.exp(-2j * math.pi * (r_es + r_su) / lam + 1j * sc.phase)
    return total


def channel_gradient(scn: Scenario, orientations, k, b, m):
    """Gradient of h_{k,b,m} with respect to its boresight f̃_{b,m}.

    The positive-part factor [vᵀf̃]₊^{p-1} is 0 whenever vᵀf̃ <= 0.
    Requires p >= 1 (isotropic mode returns zeros).
    """
    orientations = as_orientations(orientations, scn)
    if scn.isotropic:
        return np.zeros(3, dtype=complex)
    p = scn.directivity
    if p < 1.0:
        raise ValueError("channel gradient requires directivity p >= 1")
    grad = np.zeros(3, dtype=complex)
    for c, v in _path_terms(scn, k, b, m):
        d = float(v @ orientations[b, m])
        if d > 0.0:
            grad += c * p * d ** (p - 1.0) * v
    return grad


def channel_hessian(scn: Scenario, orientations, k, b, m):
    """Hessian of h_{k,b,m} with respect to f̃_{b,m}; symmetric rank-one sum.

    Requires p >= 2.
    """
    if not scn.isotropic and scn.directivity < 2.0:
        raise ValueError("channel hessian requires directivity p >= 2")
    orientations = as_orientations(orientations, scn)
    if scn.isotropic:
        return np.zeros((3, 3), dtype=complex)
    p = scn.directivity
    hess = np.zeros((3, 3), dtype=complex)
    for c, v in _path_terms(scn, k, b, m):
        d = float(v @ orientations[b, m])
        if d > 0.0:
            hess += c * p * (p - 1.0) * d ** (p - 2.0) * np.outer(v, v)
    return hess


def _path_terms(scn: Scenario, k, b, m):
    """(complex weight, local direction) for every path of entry (k, b, m)."""
    lam = scn.wavelength
    beta0 = (lam / (4.0 * math.pi)) ** 2
    root = math.sqrt(beta0 * scn.kappa_max)
    r, v, pos, ap = _local_geometry(scn, k, b, m)
    yield root / r * np.exp(-2j * math.pi * r / lam), v
    for sc in scn.scatterers:
        d_es = sc.position - pos
        r_es = float(np.linalg.norm(d_es))
        d_su = scn.users[k] - sc.position
        r_su = float(np.linalg.norm(d_su))
        if r_es <= 0.0 or r_su <= 0.0:
            raise ValueError("degenerate geometry on a scattered path")
        c = (
            root
            * math.sqrt(sc.rcs / (4.0 * math.pi))
            / (r_es * r_su)
            * np.exp(-2j * math.pi * (r_es + r_su) / lam + 1j * sc.phase)
        )
        yield c, ap.pose.T @ (d_es / r_es)


def channel_magnitude_bounds(scn: Scenario, k, b, m):
    """Conservative (h_max, g_max, H_max) over all feasible orientations.

    Uses [vᵀf̃]₊^{·} <= 1 and unit path directions, so
    h_max = sqrt(beta0 kappa_max) (1/r + sum_q sqrt(sigma_q/4pi)/(r̃ r̂)),
    g_max = p h_max and H_max = p(p-1) h_max.
    """
    lam = scn.wavelength
    beta0 = (lam / (4.0 * math.pi)) ** 2
    root = math.sqrt(beta0 * scn.kappa_max)
    r, _, pos, _ = _local_geometry(scn, k, b, m)
    total = 1.0 / r
    for sc in scn.scatterers:
        r_es = float(np.linalg.norm(sc.position - pos))
        r_su = float(np.linalg.norm(scn.users[k] - sc.position))
        total += math.sqrt(sc.rcs / (4.0 * math.pi)) / (r_es * r_su)
    h_max = root * total
    if scn.isotropic:
        return h_max, 0.0, 0.0
    p = scn.directivity
    return h_max, p * h_max, p * (p - 1.0) * h_max


def magnitude_bound_arrays(scn: Scenario, geom: PathGeometry | None = None):
    """(h_max, g_max, H_max) arrays of shape (K, B, M) for the whole network."""
    if geom is None:
        geom = precompute_paths(scn)
    # amp_* already carry the sqrt(beta0) factor
    base = geom.amp_los + geom.amp_sc.sum(axis=1)
    h_max = math.sqrt(scn.kappa_max) * base
    if scn.isotropic:
        zero = np.zeros_like(h_max)
        return h_max, zero, zero
    p = scn.directivity
    return h_max, p * h_max, p * (p - 1.0) * h_max


# ---------------------------------------------------------------------------
# Text export for cross-implementation comparison


def export_channel_text(cs: ChannelSet):
    """Serialize a ChannelSet as plain text: one `k b m re im` line per entry."""
    scn = cs.scenario
    nm = scn.elements_per_ap
    lines = ["# k b m re im"]
    for k in range(cs.num_users):
        for col in range(cs.h.shape[1]):
            b, m = divmod(col, nm)
            z = cs.h[k, col]
            lines.append(f"{k} {b} {m} {float(z.real)!r} {float(z.imag)!r}")
    return "\n".join(lines) + "\n"


def parse_channel_text(text):
    """Inverse of export_channel_text; returns a dense complex (K, B*M) array."""
    entries = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, b, m, re, im = line.split()
        entries[(int(k), int(b), int(m))] = complex(float(re), float(im))
    nk = 1 + max(key[0] for key in entries)
    nm = 1 + max(key[2] for key in entries)
    nb = 1 + max(key[1] for key in entries)
    out = np.zeros((nk, nb * nm), dtype=complex)
    for (k, b, m), z in entries.items():
        out[k, b * nm + m] = z
    return out
