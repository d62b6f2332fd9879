"""Dense primal-dual interior-point engine for second-order cone programs.

Solves   min cᵀx   s.t.  Gx + s = h,  s ∈ K,
where K is a product of a nonnegative orthant (first ``l`` rows) and
second-order cones of the given dimensions.  The method is a Mehrotra
predictor-corrector on the homogeneous self-dual embedding with
Nesterov-Todd scaling, so primal infeasibility comes out as a Farkas
certificate rather than a stalled solve.

Per iteration the search directions reduce to solves with the normal
matrix H = Gᵀ W⁻² G, assembled as the Gram matrix of W⁻¹G (applying the
rank-one structure of each cone's scaling block to G's rows) so H stays
positive semidefinite by construction even when the scaling is highly
ill-conditioned near convergence.  One iterative-refinement pass on each
KKT solve recovers the accuracy the squared conditioning costs.

Cone-wise operations are batched over groups of equal-dimension blocks
(the programs here have many identical cones), which keeps the per
-iteration Python overhead flat in the number of cones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._kernels import CONE as _CK

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_MAX_ITER = "MaxIter"
STATUS_NUMERICAL = "NumericalFailure"

STEP_FRACTION = 0.98
MIN_STEP = 1e-13


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    relative_gap: float
    iterations: int


class ConeLayout:
    """Row layout: ``l`` nonnegative rows, then SOC blocks of dims ``q``."""

    def __init__(self, l, q):
        self.l = int(l)
        self.q = [int(d) for d in q]
        if any(d < 2 for d in self.q):
            raise ValueError("SOC blocks need dimension >= 2")
        self.slices = []
        start = self.l
        for d in self.q:
            self.slices.append(slice(start, start + d))
            start += d
        self.m = start
        # barrier degree: one per nonneg row, one per SOC block
        self.degree = self.l + len(self.q)
        # batch blocks of equal dimension: (dim, (g, dim) row-index grid)
        by_dim = {}
        pos = self.l
        for d in self.q:
            by_dim.setdefault(d, []).append(pos)
            pos += d
        self.groups = [
            (d, np.asarray(starts)[:, None] + np.arange(d)[None, :])
            for d, starts in sorted(by_dim.items())
        ]
        # flat block tables for the compiled cone kernels
        self.starts = np.array([sl.start for sl in self.slices], dtype=np.int64)
        self.dims = np.array(self.q, dtype=np.int64)

    def bring_to_cone(self, u):
        """Shift u into the interior of K (per-block)."""
        v = u.copy()
        if self.l:
            alpha = -np.min(v[: self.l])
            if alpha >= 0.0:
                v[: self.l] += 1.0 + alpha
        for _, idx in self.groups:
            blk = v[idx]
            alpha = np.linalg.norm(blk[:, 1:], axis=1) - blk[:, 0]
            lift = np.where(alpha >= 0.0, 1.0 + alpha, 0.0)
            v[idx[:, 0]] += lift
        return v

    def identity(self):
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for _, idx in self.groups:
            e[idx[:, 0]] = 1.0
        return e

    def max_step(self, lam, dlam):
        """Largest alpha with lam + alpha dlam in K, given lam interior."""
        if _CK is not None:
            return float(
                _CK.cone_max_step(self.l, self.starts, self.dims, lam, dlam)
            )
        alpha = np.inf
        if self.l:
            neg = dlam[: self.l] < 0.0
            if np.any(neg):
                alpha = np.min(-lam[: self.l][neg] / dlam[: self.l][neg])
        for _, idx in self.groups:
            lb, db = lam[idx], dlam[idx]
            a = db[:, 0] ** 2 - np.einsum("gi,gi->g", db[:, 1:], db[:, 1:])
            b = lb[:, 0] * db[:, 0] - np.einsum("gi,gi->g", lb[:, 1:], db[:, 1:])
            cq = lb[:, 0] ** 2 - np.einsum("gi,gi->g", lb[:, 1:], lb[:, 1:])
            step = _soc_boundary_steps(a, b, cq)
            m = float(np.min(step))
            if m < alpha:
                alpha = m
        return alpha


def _soc_boundary_steps(a, b, cq):
    """Smallest positive roots of a t² + 2 b t + cq = 0 with cq > 0, else inf.

    Vectorized version of the scalar branch logic: cq ≤ 0 gives 0 (lam on
    or past the boundary), a = 0 falls back to the linear equation, a > 0
    crosses only when b < 0 and the discriminant is positive, and a < 0
    always has exactly one positive crossing.
    """
    out = np.full(a.shape, np.inf)
    disc = b * b - a * cq
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
        lin = np.where(b < 0.0, -cq / (2.0 * b), np.inf)
        pos = np.where((b < 0.0) & (disc > 0.0), (-b - root) / a, np.inf)
        neg = (-b - root) / a
    out = np.where(a == 0.0, lin, out)
    out = np.where(a > 0.0, pos, out)
    out = np.where(a < 0.0, neg, out)
    return np.where(cq <= 0.0, 0.0, out)


class _Scaling:
    """Nesterov-Todd scaling state for the interior pair (s, z).

    Per SOC group the scaling point w̄ (g, d), the magnitude η (g,), and
    the scaled point λ are computed in closed form; all W applications
    below are batched rank-one updates per group.
    """

    def __init__(self, layout: ConeLayout, s, z):
        self.layout = layout
        self.ok = True
        lay = layout
        if _CK is not None:
            self.w_l = np.empty(lay.l)
            self.wbar_flat = np.empty(lay.m)
            self.eta_flat = np.empty(len(lay.q))
            self.lam = np.empty(lay.m)
            self.ok = bool(
                _CK.cone_nt_scaling(
                    lay.l, lay.starts, lay.dims, s, z,
                    self.w_l, self.wbar_flat, self.eta_flat, self.lam,
                )
            )
            return
        if lay.l and (np.any(s[: lay.l] <= 0.0) or np.any(z[: lay.l] <= 0.0)):
            self.ok = False
            return
        self.w_l = np.sqrt(s[: lay.l] / z[: lay.l]) if lay.l else np.empty(0)
        self.lam = np.empty(lay.m)
        if lay.l:
            self.lam[: lay.l] = np.sqrt(s[: lay.l] * z[: lay.l])
        self.eta = []
        self.wbar = []
        for _, idx in lay.groups:
            sb, zb = s[idx], z[idx]
            rs2 = sb[:, 0] ** 2 - np.einsum("gi,gi->g", sb[:, 1:], sb[:, 1:])
            rz2 = zb[:, 0] ** 2 - np.einsum("gi,gi->g", zb[:, 1:], zb[:, 1:])
            if (
                np.any(rs2 <= 0.0)
                or np.any(rz2 <= 0.0)
                or np.any(sb[:, 0] <= 0.0)
                or np.any(zb[:, 0] <= 0.0)
            ):
                self.ok = False
                return
            rs, rz = np.sqrt(rs2), np.sqrt(rz2)
            shat, zhat = sb / rs[:, None], zb / rz[:, None]
            gamma = np.sqrt(
                (1.0 + np.einsum("gi,gi->g", shat, zhat)) / 2.0
            )
            wb = shat.copy()
            wb[:, 0] += zhat[:, 0]
            wb[:, 1:] -= zhat[:, 1:]
            wb /= (2.0 * gamma)[:, None]
            self.eta.append(np.sqrt(rs / rz))
            self.wbar.append(wb)
            # scaled point lambda = W z = W⁻¹ s (closed form)
            root = np.sqrt(rs * rz)
            denom = shat[:, 0] + zhat[:, 0] + 2.0 * gamma
            lam_blk = np.empty_like(wb)
            lam_blk[:, 0] = gamma * root
            lam_blk[:, 1:] = (
                (gamma + zhat[:, 0])[:, None] * shat[:, 1:]
                + (gamma + shat[:, 0])[:, None] * zhat[:, 1:]
            ) * (root / denom)[:, None]
            self.lam[idx] = lam_blk

    def apply_w(self, v, out=None):
        """out = W v."""
        lay = self.layout
        if out is None:
            out = np.empty_like(v)
        if _CK is not None:
            _CK.cone_apply_w(
                lay.l, lay.starts, lay.dims,
                self.w_l, self.wbar_flat, self.eta_flat, v, out,
            )
            return out
        if lay.l:
            out[: lay.l] = self.w_l * v[: lay.l]
        for i, (_, idx) in enumerate(lay.groups):
            wb, eta = self.wbar[i], self.eta[i]
            vb = v[idx]
            dot1 = np.einsum("gi,gi->g", wb[:, 1:], vb[:, 1:])
            res = np.empty_like(vb)
            res[:, 0] = wb[:, 0] * vb[:, 0] + dot1
            coef = vb[:, 0] + dot1 / (1.0 + wb[:, 0])
            res[:, 1:] = vb[:, 1:] + coef[:, None] * wb[:, 1:]
            out[idx] = res * eta[:, None]
        return out

    def apply_winv(self, v, out=None):
        """out = W⁻¹ v."""
        lay = self.layout
        if out is None:
            out = np.empty_like(v)
        if _CK is not None:
            _CK.cone_apply_winv(
                lay.l, lay.starts, lay.dims,
                self.w_l, self.wbar_flat, self.eta_flat, v, out,
            )
            return out
        if lay.l:
            out[: lay.l] = v[: lay.l] / self.w_l
        for i, (_, idx) in enumerate(lay.groups):
            wb, eta = self.wbar[i], self.eta[i]
            vb = v[idx]
            dot1 = np.einsum("gi,gi->g", wb[:, 1:], vb[:, 1:])
            res = np.empty_like(vb)
            res[:, 0] = wb[:, 0] * vb[:, 0] - dot1
            coef = -vb[:, 0] + dot1 / (1.0 + wb[:, 0])
            res[:, 1:] = vb[:, 1:] + coef[:, None] * wb[:, 1:]
            out[idx] = res / eta[:, None]
        return out

    def apply_w2(self, v, out=None):
        """out = W² v = η²(2 w̄ (w̄ᵀv) - J v) per SOC block."""
        lay = self.layout
        if out is None:
            out = np.empty_like(v)
        if _CK is not None:
            _CK.cone_apply_w2(
                lay.l, lay.starts, lay.dims,
                self.w_l, self.wbar_flat, self.eta_flat, v, out,
            )
            return out
        if lay.l:
            out[: lay.l] = (self.w_l * self.w_l) * v[: lay.l]
        for i, (_, idx) in enumerate(lay.groups):
            wb, eta = self.wbar[i], self.eta[i]
            vb = v[idx]
            dot = np.einsum("gi,gi->g", wb, vb)
            res = 2.0 * dot[:, None] * wb
            res[:, 0] -= vb[:, 0]
            res[:, 1:] += vb[:, 1:]
            out[idx] = res * (eta * eta)[:, None]
        return out

    def apply_winv2(self, v, out=None):
        """out = W⁻² v = η⁻²(2 (Jw̄)(Jw̄)ᵀ - J) v per SOC block."""
        lay = self.layout
        if out is None:
            out = np.empty_like(v)
        if _CK is not None:
            _CK.cone_apply_winv2(
                lay.l, lay.starts, lay.dims,
                self.w_l, self.wbar_flat, self.eta_flat, v, out,
            )
            return out
        if lay.l:
            out[: lay.l] = v[: lay.l] / (self.w_l * self.w_l)
        for i, (_, idx) in enumerate(lay.groups):
            wb, eta = self.wbar[i], self.eta[i]
            vb = v[idx]
            dot = wb[:, 0] * vb[:, 0] - np.einsum(
                "gi,gi->g", wb[:, 1:], vb[:, 1:]
            )
            res = np.empty_like(vb)
            res[:, 0] = 2.0 * dot * wb[:, 0] - vb[:, 0]
            res[:, 1:] = -2.0 * dot[:, None] * wb[:, 1:] + vb[:, 1:]
            out[idx] = res / (eta * eta)[:, None]
        return out

    def scale_rows_winv(self, G, blocks=None, out=None):
        """Return W⁻¹ G (block rank-one application to G's rows).

        ``blocks`` may carry the per-group row gathers of G (G is fixed
        across iterations, so callers pre-gather once).
        """
        lay = self.layout
        if out is None:
            out = np.empty_like(G)
        if _CK is not None:
            _CK.cone_scale_rows_winv(
                lay.l, lay.starts, lay.dims,
                self.w_l, self.wbar_flat, self.eta_flat,
                G, out, np.empty(G.shape[1]),
            )
            return out
        if lay.l:
            out[: lay.l] = G[: lay.l] / self.w_l[:, None]
        for i, (_, idx) in enumerate(lay.groups):
            wb, eta = self.wbar[i], self.eta[i]
            blk = blocks[i] if blocks is not None else G[idx]  # (g, d, n)
            top = blk[:, 0, :]
            body = blk[:, 1:, :]
            dot1 = np.einsum("gi,gin->gn", wb[:, 1:], body)
            res = np.empty_like(blk)
            res[:, 0, :] = wb[:, 0][:, None] * top - dot1
            coef = -top + dot1 / (1.0 + wb[:, 0])[:, None]
            res[:, 1:, :] = body + wb[:, 1:][:, :, None] * coef[:, None, :]
            res /= eta[:, None, None]
            out[idx] = res
        return out


def _jordan_prod(lay: ConeLayout, u, v, out=None):
    if out is None:
        out = np.empty_like(u)
    if _CK is not None:
        _CK.cone_jordan_prod(lay.l, lay.starts, lay.dims, u, v, out)
        return out
    if lay.l:
        out[: lay.l] = u[: lay.l] * v[: lay.l]
    for _, idx in lay.groups:
        ub, vb = u[idx], v[idx]
        res = ub[:, 0][:, None] * vb
        res[:, 1:] += vb[:, 0][:, None] * ub[:, 1:]
        res[:, 0] = np.einsum("gi,gi->g", ub, vb)
        out[idx] = res
    return out


def _jordan_div(lay: ConeLayout, lam, d, out=None):
    """Solve lam ∘ x = d for x."""
    if out is None:
        out = np.empty_like(d)
    if _CK is not None:
        _CK.cone_jordan_div(lay.l, lay.starts, lay.dims, lam, d, out)
        return out
    if lay.l:
        out[: lay.l] = d[: lay.l] / lam[: lay.l]
    for _, idx in lay.groups:
        lb, db = lam[idx], d[idx]
        det = lb[:, 0] ** 2 - np.einsum("gi,gi->g", lb[:, 1:], lb[:, 1:])
        x0 = (
            lb[:, 0] * db[:, 0] - np.einsum("gi,gi->g", lb[:, 1:], db[:, 1:])
        ) / det
        res = np.empty_like(db)
        res[:, 0] = x0
        res[:, 1:] = (db[:, 1:] - x0[:, None] * lb[:, 1:]) / lb[:, 0][:, None]
        out[idx] = res
    return out


def solve_ipm(c, G, h, layout: ConeLayout, max_iter=200, tol=1e-8):
    """Run the predictor-corrector loop; see module docstring."""
    c = np.asarray(c, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m, n = G.shape
    if h.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent program dimensions")
    if layout.m != m:
        raise ValueError("cone layout does not match row count")

    norm_h = max(1.0, float(np.linalg.norm(h)))
    norm_c = max(1.0, float(np.linalg.norm(c)))
    degree = layout.degree + 1
    eye = np.eye(n)

    def factor(H):
        scale = max(float(np.trace(H)) / n, 1e-300)
        delta = 0.0
        for _ in range(6):
            try:
                return cho_factor(
                    H + delta * eye if delta else H, lower=True, check_finite=False
                )
            except np.linalg.LinAlgError:
                delta = max(delta * 100.0, 1e-14 * scale)
        return None

    def make_kkt(chol, sc, refine):
        """KKT solver for Gᵀq = b1, -G p + W² q = b2.

        ``refine`` adds one iterative-refinement pass against the exact
        block equations; it matters once the scaling gets stiff (small
        mu), while early coarse steps do fine without it.
        """

        def solve2(b1, b2):
            w2b = sc.apply_winv2(b2)
            p = cho_solve(chol, b1 - G.T @ w2b, check_finite=False)
            q = sc.apply_winv2(b2 + G @ p)
            return p, q

        def kkt(b1, b2):
            p, q = solve2(b1, b2)
            if not refine:
                return p, q
            r1 = b1 - G.T @ q
            r2 = b2 - (-(G @ p) + sc.apply_w2(q))
            dp, dq = solve2(r1, r2)
            return p + dp, q + dq

        return kkt

    # --- initialization: least-squares primal/dual start (W = I)
    H0 = G.T @ G
    chol0 = factor(H0)
    if chol0 is None:
        return _failure(n, m, 0)
    x = cho_solve(chol0, G.T @ h, check_finite=False)
    s = layout.bring_to_cone(h - G @ x)
    z = layout.bring_to_cone(G @ cho_solve(chol0, -c, check_finite=False))
    tau, kappa = 1.0, 1.0

    e_vec = layout.identity()
    best = None
    # G's rows are fixed: pre-gather the per-group blocks used by the
    # scaled-row assembly every iteration
    g_blocks = [np.ascontiguousarray(G[idx]) for _, idx in layout.groups]
    g_scaled = np.empty_like(G)

    for it in range(max_iter):
        Gtz = G.T @ z
        Gx = G @ x
        r1 = Gtz + c * tau
        r2 = -Gx + h * tau - s
        r3 = -float(c @ x) - float(h @ z) - kappa
        mu = (float(s @ z) + tau * kappa) / degree
        if it == 0:
            mu_first = mu

        # convergence tests on the de-homogenized point; the homogeneous
        # residuals r1, r2 are exactly tau times the de-homogenized ones
        pcost = float(c @ x) / tau
        pres = float(np.linalg.norm(r2)) / (tau * norm_h)
        dres = float(np.linalg.norm(r1)) / (tau * norm_c)
        gap = abs(float(s @ z)) / (tau * tau)
        relgap = gap / max(1.0, abs(pcost))
        if pres <= tol and dres <= tol and relgap <= tol:
            return IpmResult(
                STATUS_OPTIMAL, x / tau, s / tau, z / tau,
                pcost, pres, dres, relgap, it,
            )
        hz = float(h @ z)
        if hz < 0.0 and float(np.linalg.norm(Gtz)) <= tol * (-hz):
            # Farkas certificate z/(-hᵀz): Gᵀz ≈ 0, hᵀz = -1, z in K;
            # dual_residual carries the certificate residual ‖Gᵀz̄‖.
            zc = z / (-hz)
            return IpmResult(
                STATUS_INFEASIBLE, x / tau, s / tau, zc, float("nan"),
                pres, float(np.linalg.norm(G.T @ zc)), float("nan"), it,
            )
        ctx = float(c @ x)
        if ctx < 0.0 and float(np.linalg.norm(Gx + s)) <= tol * (-ctx):
            # dual infeasible (primal unbounded); not produced by our programs
            return _failure(n, m, it)
        if best is None or pres + dres + relgap < best[-1]:
            best = (
                x / tau, s / tau, z / tau,
                pcost, pres, dres, relgap, pres + dres + relgap,
            )

        sc = _Scaling(layout, s, z)
        if not sc.ok:
            break
        sc.scale_rows_winv(G, blocks=g_blocks, out=g_scaled)
        H = g_scaled.T @ g_scaled
        chol = factor(H)
        if chol is None:
            break
        kkt = make_kkt(chol, sc, refine=mu < 1e-3 * mu_first)
        p2, q2 = kkt(-c, -h)
        wq2 = sc.apply_w(q2)
        den = kappa / tau + float(wq2 @ wq2)
        if den <= 0.0 or not np.isfinite(den):
            break

        lam = sc.lam
        lam2 = _jordan_prod(layout, lam, lam)

        def direction(b1, b2, b3, ds_comb, dtk):
            dd = _jordan_div(layout, lam, ds_comb)
            b2p = b2 + sc.apply_w(dd)
            b3p = b3 + dtk / tau
            p1, q1 = kkt(b1, b2p)
            dtau = (b3p + float(c @ p1) + float(h @ q1)) / den
            dx = p1 + dtau * p2
            dz = q1 + dtau * q2
            w_dz = sc.apply_w(dz)
            winv_ds = dd - w_dz
            dkappa = (dtk - kappa * dtau) / tau
            return dx, dz, dtau, dkappa, w_dz, winv_ds

        # predictor (affine scaling direction)
        dxa, dza, dta, dka, wdza, wdsa = direction(-r1, -r2, -r3, -lam2, -tau * kappa)
        alpha_a = min(
            layout.max_step(lam, wdsa),
            layout.max_step(lam, wdza),
            (-tau / dta) if dta < 0.0 else np.inf,
            (-kappa / dka) if dka < 0.0 else np.inf,
            1.0,
        )
        lam_s = lam + alpha_a * wdsa
        lam_z = lam + alpha_a * wdza
        mu_a = (
            float(lam_s @ lam_z) + (tau + alpha_a * dta) * (kappa + alpha_a * dka)
        ) / degree
        sigma = min(1.0, max(0.0, mu_a / mu)) ** 3

        # combined centering-corrector step
        rs = -(1.0 - sigma)
        ds_comb = -lam2 - _jordan_prod(layout, wdsa, wdza) + sigma * mu * e_vec
        dtk = -tau * kappa - dta * dka + sigma * mu
        dx, dz, dtau, dkappa, w_dz, winv_ds = direction(
            rs * r1, rs * r2, rs * r3, ds_comb, dtk
        )
        alpha = min(
            layout.max_step(lam, winv_ds),
            layout.max_step(lam, w_dz),
            (-tau / dtau) if dtau < 0.0 else np.inf,
            (-kappa / dkappa) if dkappa < 0.0 else np.inf,
            1.0 / STEP_FRACTION,
        )
        alpha *= STEP_FRACTION
        if alpha < MIN_STEP:
            break
        x += alpha * dx
        z += alpha * dz
        s += alpha * sc.apply_w(winv_ds)
        tau += alpha * dtau
        kappa += alpha * dkappa

    if best is None:
        return _failure(n, m, 0)
    xh, sh, zh, pcost, pres, dres, relgap, _ = best
    status = STATUS_MAX_ITER
    if not (np.isfinite(pres) and np.isfinite(dres) and np.isfinite(relgap)):
        status = STATUS_NUMERICAL
    return IpmResult(status, xh, sh, zh, pcost, pres, dres, relgap, max_iter)


def _failure(n, m, it=0):
    return IpmResult(
        STATUS_NUMERICAL,
        np.full(n, np.nan),
        np.full(m, np.nan),
        np.full(m, np.nan),
        float("nan"),
        float("inf"),
        float("inf"),
        float("inf"),
        it,
    )
