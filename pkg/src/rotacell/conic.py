"""Second-order cone programming front end.

A :class:`ConicProgram` is ``min cᵀx`` subject to constraints
``‖A x + b‖₂ ≤ cᵀx + d`` plus optional per-variable box bounds.  The
program is compiled to the standard form ``Gx + s = h, s ∈ K`` and
handed to the dense interior-point engine in :mod:`rotacell._ipm`.

Degenerate constraints with an empty norm body become nonnegative-
orthant rows, so linear inequalities ride along for free.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _ipm
from ._ipm import ConeLayout


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SocConstraint:
    """‖A x + b‖₂ ≤ cᵀx + d.  A may have zero rows (linear constraint)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.d = float(self.d)
        if self.A.size == 0:
            self.A = self.A.reshape(0, self.c.shape[0])
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b row counts differ")
        if self.A.shape[1] != self.c.shape[0]:
            raise ValueError("A and c column counts differ")

    def violation(self, x):
        """max(0, ‖Ax+b‖ - (cᵀx+d)); zero for feasible points."""
        lhs = np.linalg.norm(self.A @ x + self.b)
        return max(0.0, lhs - (float(self.c @ x) + self.d))


@dataclass
class ConicProgram:
    """min objectiveᵀ x over the intersection of the given constraints."""

    num_vars: int
    objective: np.ndarray
    constraints: list = field(default_factory=list)
    lower: np.ndarray | None = None  # per-variable bounds, -inf where absent
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective length must equal num_vars")
        for con in self.constraints:
            if con.c.shape[0] != self.num_vars:
                raise ValueError("constraint width must equal num_vars")
        if self.lower is not None:
            self.lower = np.asarray(self.lower, dtype=float)
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=float)
        has_bound = any(
            arr is not None and np.any(np.isfinite(arr))
            for arr in (self.lower, self.upper)
        )
        if not self.constraints and not has_bound:
            raise ValueError("program needs at least one constraint or bound")


@dataclass
class ConicSolution:
    status: SolveStatus
    x: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    relative_gap: float
    iterations: int


@dataclass
class StandardForm:
    """Compiled ``Gx + s = h`` data; kept so callers can reuse Gram caches."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    layout: ConeLayout


def compile_program(prog: ConicProgram) -> StandardForm:
    """Deterministic lowering: bound rows, then linear constraints, then SOCs."""
    n = prog.num_vars
    lin_rows = []
    lin_rhs = []
    if prog.upper is not None:
        for i in np.flatnonzero(np.isfinite(prog.upper)):
            row = np.zeros(n)
            row[i] = 1.0
            lin_rows.append(row)
            lin_rhs.append(prog.upper[i])
    if prog.lower is not None:
        for i in np.flatnonzero(np.isfinite(prog.lower)):
            row = np.zeros(n)
            row[i] = -1.0
            lin_rows.append(row)
            lin_rhs.append(-prog.lower[i])
    socs = []
    for con in prog.constraints:
        if con.A.shape[0] == 0:
            # cᵀx + d >= 0 is a plain nonnegative row
            lin_rows.append(-con.c)
            lin_rhs.append(con.d)
        else:
            socs.append(con)
    l = len(lin_rows)
    dims = [con.A.shape[0] + 1 for con in socs]
    m = l + sum(dims)
    G = np.zeros((m, n))
    h = np.zeros(m)
    if l:
        G[:l] = np.asarray(lin_rows)
        h[:l] = np.asarray(lin_rhs)
    at = l
    for con in socs:
        G[at] = -con.c
        h[at] = con.d
        rows = con.A.shape[0]
        G[at + 1 : at + 1 + rows] = -con.A
        h[at + 1 : at + 1 + rows] = con.b
        at += rows + 1
    return StandardForm(prog.objective.copy(), G, h, ConeLayout(l, dims))


def solve(prog: ConicProgram, max_iter=200, tol=1e-8) -> ConicSolution:
    """Solve a ConicProgram; Optimal implies primal residual and relative
    gap at or below ``tol``, Infeasible implies a Farkas certificate with
    residual at or below ``tol``."""
    sf = compile_program(prog)
    return solve_standard(sf, max_iter=max_iter, tol=tol)


def _equilibrate(c, G, h, layout, rounds=6):
    """Ruiz scaling: x = D x̂, rows premultiplied by E (uniform per cone).

    Linear rows scale individually; each SOC block gets one factor so
    the cone is preserved.  Returns (ĉ, Ĝ, ĥ, d, e) with Ĝ = E G D,
    ĥ = E h, ĉ = D c.
    """
    m, n = G.shape
    d = np.ones(n)
    e = np.ones(m)
    Gw = G.copy()
    # map each row to its scaling block: linear rows individually, one
    # shared factor per SOC block so the cone is preserved
    block_of = np.empty(m, dtype=np.intp)
    block_of[: layout.l] = np.arange(layout.l)
    at = layout.l
    for j, dim in enumerate(layout.q):
        block_of[at : at + dim] = layout.l + j
        at += dim
    nblocks = layout.l + len(layout.q)
    absbuf = np.empty_like(Gw)
    for _ in range(rounds):
        np.abs(Gw, out=absbuf)
        col = np.sqrt(absbuf.max(axis=0))
        col[col == 0.0] = 1.0
        Gw /= col
        d /= col
        np.abs(Gw, out=absbuf)
        row_peak = absbuf.max(axis=1)
        peak = np.zeros(nblocks)
        np.maximum.at(peak, block_of, row_peak)
        t_blk = np.where(peak > 0.0, 1.0 / np.sqrt(np.maximum(peak, 1e-300)), 1.0)
        t = t_blk[block_of]
        Gw *= t[:, None]
        e *= t
    return c * d, Gw, h * e, d, e


def solve_standard(sf: StandardForm, max_iter=200, tol=1e-8) -> ConicSolution:
    cs, Gs, hs, d, e = _equilibrate(sf.c, sf.G, sf.h, sf.layout)
    raw = _ipm.solve_ipm(cs, Gs, hs, sf.layout, max_iter=max_iter, tol=tol)
    x = raw.x * d if raw.x is not None else None
    primal, dual, gap, obj = (
        raw.primal_residual, raw.dual_residual, raw.relative_gap, raw.objective,
    )
    if raw.status == _ipm.STATUS_OPTIMAL and x is not None:
        # residuals of the original (unscaled) data; x = d x̂, s = ŝ/e, z = e ẑ
        s = raw.s / e
        z = raw.z * e
        obj = float(sf.c @ x)
        primal = float(
            np.linalg.norm(sf.G @ x + s - sf.h) / max(1.0, np.linalg.norm(sf.h))
        )
        dual = float(
            np.linalg.norm(sf.G.T @ z + sf.c) / max(1.0, np.linalg.norm(sf.c))
        )
        gap = float(abs(s @ z) / max(1.0, abs(obj)))
    elif raw.status == _ipm.STATUS_INFEASIBLE and raw.z is not None:
        z = raw.z * e  # keeps hᵀz = -1 since ĥᵀẑ = (Eh)ᵀ(ẑ) = hᵀ(Eẑ)
        dual = float(np.linalg.norm(sf.G.T @ z))
    return ConicSolution(
        status=SolveStatus(raw.status),
        x=x,
        objective_value=obj,
        primal_residual=primal,
        dual_residual=dual,
        relative_gap=gap,
        iterations=raw.iterations,
    )


def quad_constraint_to_soc(P, q, r, psd_tol=1e-10) -> SocConstraint:
    """Rewrite xᵀPx + qᵀx + r ≤ 0 (P PSD) as a second-order cone constraint.

    Uses P = LLᵀ and the standard embedding
    ‖(2Lᵀx, t-1)‖ ≤ t+1 with t = -qᵀx - r.  A (numerically) zero P
    degenerates to the linear constraint qᵀx + r ≤ 0.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.shape[0]
    if P.shape != (n, n):
        raise ValueError("P must be square and match q")
    scale = float(np.max(np.abs(P))) if P.size else 0.0
    if scale == 0.0:
        return SocConstraint(np.zeros((0, n)), np.zeros(0), -q, -float(r))
    evals, evecs = np.linalg.eigh(0.5 * (P + P.T))
    if np.min(evals) < -psd_tol * max(scale, 1.0):
        raise ValueError("P is not positive semidefinite within tolerance")
    keep = evals > psd_tol * scale
    if not np.any(keep):
        return SocConstraint(np.zeros((0, n)), np.zeros(0), -q, -float(r))
    L = evecs[:, keep] * np.sqrt(evals[keep])
    rows = L.shape[1]
    A = np.zeros((rows + 1, n))
    A[:rows] = 2.0 * L.T
    A[rows] = -q  # last body row is t - 1 with t = -qᵀx - r
    b = np.zeros(rows + 1)
    b[rows] = -float(r) - 1.0
    return SocConstraint(A, b, -q, -float(r) + 1.0)


@dataclass(frozen=True)
class ComplexEmbedding:
    """Interleaved mapping of n complex variables to 2n reals."""

    n_complex: int

    @property
    def n_real(self):
        return 2 * self.n_complex

    def re_index(self, i):
        return 2 * i

    def im_index(self, i):
        return 2 * i + 1

    def real_coeff(self, a):
        """Row vector g with gᵀx = Re{aᴴz} for stacked complex a."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        out = np.empty(2 * a.shape[0])
        out[0::2] = a.real
        out[1::2] = a.imag
        return out

    def imag_coeff(self, a):
        """Row vector g with gᵀx = Im{aᴴz}."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        out = np.empty(2 * a.shape[0])
        out[0::2] = -a.imag
        out[1::2] = a.real
        return out

    def to_real(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty(2 * z.shape[0])
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    def to_complex(self, x):
        x = np.asarray(x, dtype=float)
        return x[0::2] + 1j * x[1::2]


def embed_complex(n_complex) -> ComplexEmbedding:
    if n_complex < 1:
        raise ValueError("need at least one complex variable")
    return ComplexEmbedding(int(n_complex))


def dump_program(prog: ConicProgram) -> str:
    """Plain-text canonical form, stable across runs, for golden tests."""
    lines = [f"vars {prog.num_vars}", "minimize " + _fmt_vec(prog.objective)]
    if prog.lower is not None and np.any(np.isfinite(prog.lower)):
        lines.append("lower " + _fmt_vec(prog.lower))
    if prog.upper is not None and np.any(np.isfinite(prog.upper)):
        lines.append("upper " + _fmt_vec(prog.upper))
    for idx, con in enumerate(prog.constraints):
        lines.append(f"soc {idx} rows {con.A.shape[0]}")
        for row, bi in zip(con.A, con.b):
            lines.append("  body " + _fmt_vec(row) + " + " + repr(float(bi)))
        lines.append("  rhs  " + _fmt_vec(con.c) + " + " + repr(con.d))
    return "\n".join(lines) + "\n"


def _fmt_vec(v):
    return "[" + ", ".join(repr(float(t)) for t in np.asarray(v).ravel()) + "]"
