"""Max-min SINR beamforming for fixed channels.

The worst-user SINR is maximized by a bisection over the target γ̄.
Each probe solves a power-minimization second-order cone program

    min τ  s.t.  ‖(h̃_kᴴ w̃_j)_{j≠k}, 1‖ ≤ (1/√γ̄) Re{h̃_kᴴ w̃_k},
                 ‖w̃ of AP b‖ ≤ τ  for all b,

in nondimensional units (channels scaled by √P_max/σ, beams by 1/√P_max)
so feasibility under the per-AP budget is exactly τ* ≤ 1.  The phase
convention Im{h_kᴴw_k} = 0, Re ≥ 0 is what makes the SOC right-hand
side legitimate: any beam can be phase-rotated onto it without changing
powers or interference magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conic
from .channel import ChannelSet

EPS_GAMMA = 1e-4  # relative bisection resolution
POWER_SLACK = 1e-9  # feasibility decision: tau <= sqrt(P) (1 + slack)
# probe accuracy: classification needs far less than the final-answer
# accuracy (gamma_star is recomputed from the returned beams anyway)
PROBE_TOL = 1e-7


class SolverError(RuntimeError):
    """Numerical failure in a cone solve; carries the offending program."""

    def __init__(self, message, program=None):
        super().__init__(message)
        self.program = program


@dataclass
class MaxMinResult:
    """Outcome of one max-min beamforming run."""

    gamma_star: float
    rate_star: float  # log2(1 + gamma_star), bps/Hz
    beamformers: np.ndarray  # (K, B*M) complex, stacked like ChannelSet
    bisection_iters: int
    flag: str | None = None  # diagnostic: "zero-channel-user" / "no-feasible-probe"
    failed_probes: int = 0  # probes ending in MaxIter/NumericalFailure
    balance_rel: float = 0.0  # relative SINR spread at the solution (K >= 2)


def sinr(h, w, noise, k):
    """|h_kᴴ w_k|² / (Σ_{j≠k} |h_kᴴ w_j|² + noise)."""
    h = _as_matrix(h)
    w = np.asarray(w)
    prods = np.conj(h[k]) @ w.T  # (K,)
    sig = abs(prods[k]) ** 2
    interf = float(np.sum(np.abs(prods) ** 2)) - sig
    return sig / (interf + noise)


def all_sinr(h, w, noise):
    """Per-user SINRs as an array of length K."""
    h = _as_matrix(h)
    w = np.asarray(w)
    prods = np.conj(h) @ w.T  # (K, K): row k holds h_kᴴ w_j
    pw = np.abs(prods) ** 2
    sig = np.diag(pw).copy()
    interf = pw.sum(axis=1) - sig
    return sig / (interf + noise)


def min_rate(h, w, noise):
    """Worst-user achievable rate log2(1 + min SINR)."""
    return math.log2(1.0 + float(np.min(all_sinr(h, w, noise))))


def ap_powers(w, num_aps):
    """Per-AP transmit powers Σ_k ‖w_{k,b}‖², shape (B,)."""
    w = np.asarray(w)
    k, bm = w.shape
    per_ap = w.reshape(k, num_aps, bm // num_aps)
    return np.sum(np.abs(per_ap) ** 2, axis=(0, 2))


def _as_matrix(h):
    if isinstance(h, ChannelSet):
        return h.h
    return np.asarray(h)


# ---------------------------------------------------------------------------
# Feasibility program assembly


class _FeasibilityFamily:
    """Standard-form data for min-power probes, reusable across γ̄ values.

    Variables: interleaved (re, im) beam coordinates user-major, then τ.
    Only the K SOC right-hand-side rows depend on γ̄, so probing a new
    target rescales K rows of G in place.
    """

    def __init__(self, h_tilde):
        nk, nbm = h_tilde.shape
        self.nk, self.nbm = nk, nbm
        n = 2 * nk * nbm + 1
        self.n = n
        emb = conic.embed_complex(nbm)
        self.emb = emb
        cones = []
        # SINR cones: dim 2K each (1 rhs + 2(K-1) interference rows + sigma row)
        rhs_rows = []
        row_at = 0
        G_blocks = []
        h_blocks = []
        for k in range(nk):
            dim = 2 * nk
            Gb = np.zeros((dim, n))
            hb = np.zeros(dim)
            coef = emb.real_coeff(h_tilde[k])
            base = np.zeros(n)
            base[2 * k * nbm : 2 * (k + 1) * nbm] = coef
            rhs_rows.append((row_at, base))
            Gb[0] = -base  # rescaled by 1/sqrt(gamma) per probe
            r = 1
            for j in range(nk):
                if j == k:
                    continue
                sl = slice(2 * j * nbm, 2 * (j + 1) * nbm)
                Gb[r, sl] = -emb.real_coeff(h_tilde[k])
                Gb[r + 1, sl] = -emb.imag_coeff(h_tilde[k])
                r += 2
            hb[r] = 1.0  # unit noise row in nondimensional units
            G_blocks.append(Gb)
            h_blocks.append(hb)
            row_at += dim
        self.num_aps = None  # set in build()
        self._sinr_G = G_blocks
        self._sinr_h = h_blocks
        self._rhs_rows = rhs_rows

    def build(self, num_aps):
        nk, nbm, n = self.nk, self.nbm, self.n
        if nbm % num_aps:
            raise ValueError("element count not divisible by AP count")
        m_el = nbm // num_aps
        blocks_G = list(self._sinr_G)
        blocks_h = list(self._sinr_h)
        dims = [2 * self.nk] * nk
        for b in range(num_aps):
            dim = 2 * m_el * nk + 1
            Gb = np.zeros((dim, n))
            hb = np.zeros(dim)
            Gb[0, n - 1] = -1.0  # rhs row: tau
            r = 1
            for k in range(nk):
                for m in range(m_el):
                    col = 2 * (k * nbm + b * m_el + m)
                    Gb[r, col] = -1.0
                    Gb[r + 1, col + 1] = -1.0
                    r += 2
            blocks_G.append(Gb)
            blocks_h.append(hb)
            dims.append(dim)
        G = np.vstack(blocks_G)
        h = np.concatenate(blocks_h)
        c = np.zeros(n)
        c[n - 1] = 1.0
        from ._ipm import ConeLayout

        self.sf = conic.StandardForm(c, G, h, ConeLayout(0, dims))
        self.num_aps = num_aps
        return self

    def probe(self, gamma, max_iter=200, tol=1e-8):
        """Solve the min-τ program at target γ̄ = gamma."""
        scale = 1.0 / math.sqrt(gamma)
        for row, base in self._rhs_rows:
            self.sf.G[row] = -scale * base
        return conic.solve_standard(self.sf, max_iter=max_iter, tol=tol)

    def extract_beams(self, x):
        """Beam matrix w̃ (K, B*M) from a solution vector."""
        nk, nbm = self.nk, self.nbm
        w = np.empty((nk, nbm), dtype=complex)
        for k in range(nk):
            w[k] = self.emb.to_complex(x[2 * k * nbm : 2 * (k + 1) * nbm])
        return w


def scale_channels(h, p_max, noise):
    """Nondimensional channels h̃ = h √P_max / σ (so the budget becomes 1)."""
    return _as_matrix(h) * math.sqrt(p_max / noise)


def feasibility_min_power(channels, gamma_target, noise, p_max=1.0, num_aps=None):
    """Min-power SOC probe at a fixed SINR target.

    Returns ``(tau_star, beams, status)`` in physical units: the target is
    feasible under the per-AP budget iff tau_star <= sqrt(p_max).  Beams
    are meaningful only for Optimal status.
    """
    if gamma_target <= 0.0:
        raise ValueError("gamma_target must be positive")
    h = _as_matrix(channels)
    if num_aps is None:
        num_aps = _infer_num_aps(channels)
    fam = _FeasibilityFamily(scale_channels(h, p_max, noise)).build(num_aps)
    sol = fam.probe(gamma_target)
    if sol.status == conic.SolveStatus.NUMERICAL_FAILURE:
        raise SolverError(
            f"cone solve failed at gamma_target = {gamma_target}", program=fam.sf
        )
    if sol.status != conic.SolveStatus.OPTIMAL:
        return math.inf, np.zeros_like(h), sol.status
    w = math.sqrt(p_max) * fam.extract_beams(sol.x)
    tau = math.sqrt(p_max) * float(sol.x[-1])
    return tau, w, sol.status


def _infer_num_aps(channels):
    if isinstance(channels, ChannelSet):
        return channels.scenario.num_aps
    raise ValueError("pass a ChannelSet or supply num_aps explicitly")


def single_user_cap(h, p_max, noise, num_aps):
    """Interference-free SINR ceiling min_k P (Σ_b ‖h_{k,b}‖)² / σ².

    Serving user k alone, each AP at full budget along its local channel
    block, gives the largest possible |h_kᴴ w_k|²; the worst user cannot
    exceed its own ceiling, so the min over k bounds the max-min value.
    """
    h = _as_matrix(h)
    nk, nbm = h.shape
    blocks = h.reshape(nk, num_aps, nbm // num_aps)
    coh = np.linalg.norm(blocks, axis=2).sum(axis=1)  # Σ_b ‖h_{k,b}‖
    return p_max * float(np.min(coh)) ** 2 / noise


def maxmin_beamforming(
    channels,
    p_max,
    noise,
    num_aps=None,
    eps_rel=EPS_GAMMA,
    gamma_lo=0.0,
    lo_beams=None,
    gamma_hi=None,
    max_probes=200,
    abort_below=None,
):
    """Bisection max-min SINR beamforming under per-AP power budgets.

    ``gamma_lo``/``lo_beams`` may carry a certified feasible warm start
    (the beams must attain min-SINR gamma_lo under the budget), and
    ``gamma_hi`` a guessed close upper bound; the guess is validated by
    a direct probe and, if it turns out feasible, the top climbs
    geometrically (one probe per doubling), so a low guess costs probes
    but never soundness.  The default bracket top is the interference
    -free ceiling min_k P (Σ_b ‖h_{k,b}‖)² / σ², which is always valid.
    Monotonicity of proven probe outcomes is asserted.  Probes that end
    without a certificate (MaxIter/NumericalFailure) are counted and
    treated as infeasible, which can only make the result conservative.

    ``abort_below`` stops early (flag "below-incumbent") once a probe
    PROVES the optimum is below that value, which makes best-of-many
    tournaments cheap: losers are usually dismissed by the first probe
    when combined with ``gamma_hi`` set to the incumbent.
    """
    h = _as_matrix(channels)
    if num_aps is None:
        num_aps = _infer_num_aps(channels)
    nk, nbm = h.shape
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms == 0.0):
        return MaxMinResult(0.0, 0.0, np.zeros_like(h), 0, flag="zero-channel-user")
    hard_cap = single_user_cap(h, p_max, noise, num_aps)
    lo = float(gamma_lo)
    if gamma_hi is not None and float(gamma_hi) <= 0.0:
        raise ValueError("gamma_hi guess must be positive")
    hi = min(float(gamma_hi), hard_cap) if gamma_hi is not None else hard_cap
    hi = max(hi, lo)
    if lo > 0.0 and lo_beams is None:
        raise ValueError("warm gamma_lo requires the certifying beams")
    best_beams = None if lo_beams is None else np.asarray(lo_beams)
    fam = _FeasibilityFamily(scale_channels(h, p_max, noise)).build(num_aps)
    feas_max = lo if lo > 0.0 else 0.0
    infeas_min = math.inf
    iters = 0
    failed = 0
    root_p = math.sqrt(p_max)

    def run_probe(gamma):
        nonlocal iters, failed, feas_max, infeas_min, best_beams
        sol = fam.probe(gamma, tol=PROBE_TOL)
        iters += 1
        if sol.status == conic.SolveStatus.OPTIMAL:
            if float(sol.x[-1]) <= 1.0 + POWER_SLACK:
                best_beams = root_p * fam.extract_beams(sol.x)
                feas_max = max(feas_max, gamma)
                return True
            infeas_min = min(infeas_min, gamma)
            return False
        if sol.status != conic.SolveStatus.INFEASIBLE:
            failed += 1
        else:
            infeas_min = min(infeas_min, gamma)
        return False

    def certified_below():
        return abort_below is not None and infeas_min <= abort_below * (1.0 + 1e-12)

    if gamma_hi is not None:
        # validate the guessed top before trusting it as a bracket
        step = max(hi - lo, eps_rel * max(1.0, lo))
        while iters < max_probes and hi < hard_cap * (1.0 - 1e-12):
            if not run_probe(hi):
                break
            lo = hi
            hi = min(hi + 2.0 * step, hard_cap)
            step *= 2.0

    aborted = certified_below()
    while not aborted and hi - lo > eps_rel * max(1.0, lo) and iters < max_probes:
        gamma = 0.5 * (lo + hi)
        if run_probe(gamma):
            lo = gamma
        else:
            hi = gamma
        if certified_below():
            aborted = True
            break
        if feas_max > infeas_min * (1.0 + 1e-12):
            raise RuntimeError(
                "bisection monotonicity violated: feasible "
                f"{feas_max} above proven-infeasible {infeas_min}"
            )
    if best_beams is None:
        return MaxMinResult(
            0.0, 0.0, np.zeros_like(h), iters,
            flag="below-incumbent" if aborted else "no-feasible-probe",
            failed_probes=failed,
        )
    w = rescale_to_budget(best_beams, num_aps, p_max)
    vals = all_sinr(h, w, noise)
    gamma_star = float(np.min(vals))
    balance = float((np.max(vals) - gamma_star) / gamma_star) if gamma_star > 0 else 0.0
    return MaxMinResult(
        gamma_star,
        math.log2(1.0 + gamma_star),
        w,
        iters,
        flag="below-incumbent" if aborted else None,
        failed_probes=failed,
        balance_rel=balance,
    )


def rescale_to_budget(w, num_aps, p_max):
    """Scale beams up so the most-loaded AP spends exactly p_max."""
    peak = float(np.max(ap_powers(w, num_aps)))
    if peak <= 0.0:
        return w
    return w * math.sqrt(p_max / peak)


def mrt_beams(h, num_aps, p_max):
    """Per-AP matched-filter beams at equal power split across users.

    A cheap certified-feasible starting point: each AP spends p_max/K on
    user k along its local channel direction.
    """
    h = _as_matrix(h)
    nk, nbm = h.shape
    m_el = nbm // num_aps
    w = np.zeros_like(h)
    for k in range(nk):
        blocks = h[k].reshape(num_aps, m_el)
        for b in range(num_aps):
            norm = np.linalg.norm(blocks[b])
            if norm > 0.0:
                w[k, b * m_el : (b + 1) * m_el] = (
                    math.sqrt(p_max / nk) * blocks[b] / norm
                )
    return w
