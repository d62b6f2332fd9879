# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the pure NumPy orientation kernels (see pure.py)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, pow, sqrt

cnp.import_array()

ctypedef double complex dcomplex


cdef inline double _dot3(const double[:, :, :, ::1] v, Py_ssize_t a,
                         Py_ssize_t b, Py_ssize_t m,
                         const double[:, :, ::1] f) noexcept nogil:
    return v[a, b, m, 0] * f[b, m, 0] + v[a, b, m, 1] * f[b, m, 1] \
        + v[a, b, m, 2] * f[b, m, 2]


def eval_channel(const dcomplex[:, :, ::1] c_los,
                 const double[:, :, :, ::1] v_los,
                 const dcomplex[:, :, :, ::1] c_sc,
                 const double[:, :, :, ::1] v_sc,
                 const double[:, :, ::1] orient,
                 double p):
    cdef Py_ssize_t nk = c_los.shape[0], nb = c_los.shape[1], nm = c_los.shape[2]
    cdef Py_ssize_t nq = c_sc.shape[1]
    cdef Py_ssize_t k, b, m, q
    cdef double d, t
    out = np.zeros((nk, nb, nm), dtype=np.complex128)
    cdef dcomplex[:, :, ::1] h = out
    cdef double[:, :, ::1] tq_buf = np.zeros((max(nq, 1), nb, nm))
    with nogil:
        for q in range(nq):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_sc, q, b, m, orient)
                    tq_buf[q, b, m] = pow(d, p) if d > 0.0 else 0.0
        for k in range(nk):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_los, k, b, m, orient)
                    t = pow(d, p) if d > 0.0 else 0.0
                    h[k, b, m] = c_los[k, b, m] * t
                    for q in range(nq):
                        h[k, b, m] = h[k, b, m] + c_sc[k, q, b, m] * tq_buf[q, b, m]
    return out


def eval_channel_grad(const dcomplex[:, :, ::1] c_los,
                      const double[:, :, :, ::1] v_los,
                      const dcomplex[:, :, :, ::1] c_sc,
                      const double[:, :, :, ::1] v_sc,
                      const double[:, :, ::1] orient,
                      double p):
    cdef Py_ssize_t nk = c_los.shape[0], nb = c_los.shape[1], nm = c_los.shape[2]
    cdef Py_ssize_t nq = c_sc.shape[1]
    cdef Py_ssize_t k, b, m, q, i
    cdef double d, t, t1
    cdef dcomplex s
    h_out = np.zeros((nk, nb, nm), dtype=np.complex128)
    g_out = np.zeros((nk, nb, nm, 3), dtype=np.complex128)
    cdef dcomplex[:, :, ::1] h = h_out
    cdef dcomplex[:, :, :, ::1] g = g_out
    cdef double[:, :, ::1] tq = np.zeros((max(nq, 1), nb, nm))
    cdef double[:, :, ::1] tq1 = np.zeros((max(nq, 1), nb, nm))
    with nogil:
        for q in range(nq):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_sc, q, b, m, orient)
                    if d > 0.0:
                        tq[q, b, m] = pow(d, p)
                        tq1[q, b, m] = pow(d, p - 1.0)
                    else:
                        tq[q, b, m] = 0.0
                        tq1[q, b, m] = 0.0
        for k in range(nk):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_los, k, b, m, orient)
                    if d > 0.0:
                        t = pow(d, p)
                        t1 = pow(d, p - 1.0)
                    else:
                        t = 0.0
                        t1 = 0.0
                    h[k, b, m] = c_los[k, b, m] * t
                    s = p * c_los[k, b, m] * t1
                    for i in range(3):
                        g[k, b, m, i] = s * v_los[k, b, m, i]
                    for q in range(nq):
                        h[k, b, m] = h[k, b, m] + c_sc[k, q, b, m] * tq[q, b, m]
                        s = p * c_sc[k, q, b, m] * tq1[q, b, m]
                        for i in range(3):
                            g[k, b, m, i] = g[k, b, m, i] + s * v_sc[q, b, m, i]
    return h_out, g_out


def eval_hessian(const dcomplex[:, :, ::1] c_los,
                 const double[:, :, :, ::1] v_los,
                 const dcomplex[:, :, :, ::1] c_sc,
                 const double[:, :, :, ::1] v_sc,
                 const double[:, :, ::1] orient,
                 double p):
    cdef Py_ssize_t nk = c_los.shape[0], nb = c_los.shape[1], nm = c_los.shape[2]
    cdef Py_ssize_t nq = c_sc.shape[1]
    cdef Py_ssize_t k, b, m, q, i, j
    cdef double d, t2
    cdef dcomplex s
    out = np.zeros((nk, nb, nm, 3, 3), dtype=np.complex128)
    cdef dcomplex[:, :, :, :, ::1] hs = out
    cdef double[:, :, ::1] tq2 = np.zeros((max(nq, 1), nb, nm))
    with nogil:
        for q in range(nq):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_sc, q, b, m, orient)
                    tq2[q, b, m] = pow(d, p - 2.0) if d > 0.0 else 0.0
        for k in range(nk):
            for b in range(nb):
                for m in range(nm):
                    d = _dot3(v_los, k, b, m, orient)
                    t2 = pow(d, p - 2.0) if d > 0.0 else 0.0
                    s = p * (p - 1.0) * c_los[k, b, m] * t2
                    for i in range(3):
                        for j in range(3):
                            hs[k, b, m, i, j] = s * v_los[k, b, m, i] * v_los[k, b, m, j]
                    for q in range(nq):
                        s = p * (p - 1.0) * c_sc[k, q, b, m] * tq2[q, b, m]
                        for i in range(3):
                            for j in range(3):
                                hs[k, b, m, i, j] = hs[k, b, m, i, j] \
                                    + s * v_sc[q, b, m, i] * v_sc[q, b, m, j]
    return out


# --- second-order-cone algebra over a flat row layout ------------------
#
# The interior-point engine stores its iterates as flat length-m vectors:
# l nonnegative rows followed by SOC blocks at rows starts[b] of size
# dims[b].  Each operation below walks every block in one call, which is
# where the compiled backend pays off (the blocks are small and many).
# wbar holds the NT scaling point per SOC block (linear head unused) and
# eta its magnitude, one entry per block.


def cone_nt_scaling(Py_ssize_t l,
                    const long long[::1] starts,
                    const long long[::1] dims,
                    const double[::1] s, const double[::1] z,
                    double[::1] w_l, double[::1] wbar,
                    double[::1] eta, double[::1] lam):
    """Build the NT scaling (w_l, wbar, eta) and scaled point lam.

    Returns 1 when (s, z) is interior to the cone, 0 otherwise (outputs
    are then only partially written and must be discarded).
    """
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double si, zi, rs2, rz2, rs, rz, dotf, gv, gamma
    cdef double sh0, zh0, root, denom, cs, cz
    for i in range(l):
        si = s[i]
        zi = z[i]
        if si <= 0.0 or zi <= 0.0:
            return 0
        w_l[i] = sqrt(si / zi)
        lam[i] = sqrt(si * zi)
    for b in range(nq):
        st = <Py_ssize_t> starts[b]
        d = <Py_ssize_t> dims[b]
        if s[st] <= 0.0 or z[st] <= 0.0:
            return 0
        rs2 = s[st] * s[st]
        rz2 = z[st] * z[st]
        dotf = s[st] * z[st]
        for j in range(st + 1, st + d):
            rs2 -= s[j] * s[j]
            rz2 -= z[j] * z[j]
            dotf += s[j] * z[j]
        if rs2 <= 0.0 or rz2 <= 0.0:
            return 0
        rs = sqrt(rs2)
        rz = sqrt(rz2)
        gv = (1.0 + dotf / (rs * rz)) / 2.0
        if gv <= 0.0:
            return 0
        gamma = sqrt(gv)
        sh0 = s[st] / rs
        zh0 = z[st] / rz
        wbar[st] = (sh0 + zh0) / (2.0 * gamma)
        for j in range(st + 1, st + d):
            wbar[j] = (s[j] / rs - z[j] / rz) / (2.0 * gamma)
        eta[b] = sqrt(rs / rz)
        root = sqrt(rs * rz)
        denom = sh0 + zh0 + 2.0 * gamma
        lam[st] = gamma * root
        cs = (gamma + zh0) * root / denom
        cz = (gamma + sh0) * root / denom
        for j in range(st + 1, st + d):
            lam[j] = cs * (s[j] / rs) + cz * (z[j] / rz)
    return 1


def cone_apply_w(Py_ssize_t l,
                 const long long[::1] starts,
                 const long long[::1] dims,
                 const double[::1] w_l, const double[::1] wbar,
                 const double[::1] eta,
                 const double[::1] v, double[::1] out):
    """out = W v (out must not alias v)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double dot1, w0, e, coef
    with nogil:
        for i in range(l):
            out[i] = w_l[i] * v[i]
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            w0 = wbar[st]
            e = eta[b]
            dot1 = 0.0
            for j in range(st + 1, st + d):
                dot1 += wbar[j] * v[j]
            out[st] = e * (w0 * v[st] + dot1)
            coef = v[st] + dot1 / (1.0 + w0)
            for j in range(st + 1, st + d):
                out[j] = e * (v[j] + coef * wbar[j])


def cone_apply_winv(Py_ssize_t l,
                    const long long[::1] starts,
                    const long long[::1] dims,
                    const double[::1] w_l, const double[::1] wbar,
                    const double[::1] eta,
                    const double[::1] v, double[::1] out):
    """out = W^-1 v (out must not alias v)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double dot1, w0, e, coef
    with nogil:
        for i in range(l):
            out[i] = v[i] / w_l[i]
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            w0 = wbar[st]
            e = eta[b]
            dot1 = 0.0
            for j in range(st + 1, st + d):
                dot1 += wbar[j] * v[j]
            out[st] = (w0 * v[st] - dot1) / e
            coef = -v[st] + dot1 / (1.0 + w0)
            for j in range(st + 1, st + d):
                out[j] = (v[j] + coef * wbar[j]) / e


def cone_apply_w2(Py_ssize_t l,
                  const long long[::1] starts,
                  const long long[::1] dims,
                  const double[::1] w_l, const double[::1] wbar,
                  const double[::1] eta,
                  const double[::1] v, double[::1] out):
    """out = W^2 v (out must not alias v)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double dotf, e2
    with nogil:
        for i in range(l):
            out[i] = w_l[i] * w_l[i] * v[i]
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            e2 = eta[b] * eta[b]
            dotf = 0.0
            for j in range(st, st + d):
                dotf += wbar[j] * v[j]
            out[st] = e2 * (2.0 * dotf * wbar[st] - v[st])
            for j in range(st + 1, st + d):
                out[j] = e2 * (2.0 * dotf * wbar[j] + v[j])


def cone_apply_winv2(Py_ssize_t l,
                     const long long[::1] starts,
                     const long long[::1] dims,
                     const double[::1] w_l, const double[::1] wbar,
                     const double[::1] eta,
                     const double[::1] v, double[::1] out):
    """out = W^-2 v (out must not alias v)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double dotj, e2
    with nogil:
        for i in range(l):
            out[i] = v[i] / (w_l[i] * w_l[i])
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            e2 = eta[b] * eta[b]
            dotj = wbar[st] * v[st]
            for j in range(st + 1, st + d):
                dotj -= wbar[j] * v[j]
            out[st] = (2.0 * dotj * wbar[st] - v[st]) / e2
            for j in range(st + 1, st + d):
                out[j] = (-2.0 * dotj * wbar[j] + v[j]) / e2


def cone_scale_rows_winv(Py_ssize_t l,
                         const long long[::1] starts,
                         const long long[::1] dims,
                         const double[::1] w_l, const double[::1] wbar,
                         const double[::1] eta,
                         const double[:, ::1] G, double[:, ::1] out,
                         double[::1] scratch):
    """out = W^-1 G row-block-wise; scratch is a length-n work vector."""
    cdef Py_ssize_t i, b, st, d, j, t, nq = starts.shape[0]
    cdef Py_ssize_t n = G.shape[1]
    cdef double w0, inv_e, opw, wj, g0, dt, wi
    with nogil:
        for i in range(l):
            wi = w_l[i]
            for t in range(n):
                out[i, t] = G[i, t] / wi
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            w0 = wbar[st]
            inv_e = 1.0 / eta[b]
            opw = 1.0 + w0
            for t in range(n):
                scratch[t] = 0.0
            for j in range(st + 1, st + d):
                wj = wbar[j]
                for t in range(n):
                    scratch[t] += wj * G[j, t]
            for t in range(n):
                g0 = G[st, t]
                dt = scratch[t]
                out[st, t] = (w0 * g0 - dt) * inv_e
                # reuse the buffer for the shared body coefficient / eta
                scratch[t] = (-g0 + dt / opw) * inv_e
            for j in range(st + 1, st + d):
                wj = wbar[j]
                for t in range(n):
                    out[j, t] = G[j, t] * inv_e + wj * scratch[t]


def cone_max_step(Py_ssize_t l,
                  const long long[::1] starts,
                  const long long[::1] dims,
                  const double[::1] lam, const double[::1] dlam):
    """Largest alpha with lam + alpha dlam in the cone (lam interior)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double alpha = INFINITY
    cdef double a, bq, cq, disc, step, t
    with nogil:
        for i in range(l):
            if dlam[i] < 0.0:
                t = -lam[i] / dlam[i]
                if t < alpha:
                    alpha = t
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            a = dlam[st] * dlam[st]
            bq = lam[st] * dlam[st]
            cq = lam[st] * lam[st]
            for j in range(st + 1, st + d):
                a -= dlam[j] * dlam[j]
                bq -= lam[j] * dlam[j]
                cq -= lam[j] * lam[j]
            # smallest positive root of a t^2 + 2 bq t + cq = 0
            if cq <= 0.0:
                step = 0.0
            elif a == 0.0:
                step = -cq / (2.0 * bq) if bq < 0.0 else INFINITY
            elif a > 0.0:
                if bq < 0.0:
                    disc = bq * bq - a * cq
                    step = (-bq - sqrt(disc)) / a if disc > 0.0 else INFINITY
                else:
                    step = INFINITY
            else:
                disc = bq * bq - a * cq
                step = (-bq - sqrt(disc if disc > 0.0 else 0.0)) / a
            if step < alpha:
                alpha = step
    return alpha


def cone_jordan_prod(Py_ssize_t l,
                     const long long[::1] starts,
                     const long long[::1] dims,
                     const double[::1] u, const double[::1] v,
                     double[::1] out):
    """out = u o v (out must not alias u or v)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double dotf, u0, v0
    with nogil:
        for i in range(l):
            out[i] = u[i] * v[i]
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            u0 = u[st]
            v0 = v[st]
            dotf = u0 * v0
            for j in range(st + 1, st + d):
                dotf += u[j] * v[j]
                out[j] = u0 * v[j] + v0 * u[j]
            out[st] = dotf


def cone_jordan_div(Py_ssize_t l,
                    const long long[::1] starts,
                    const long long[::1] dims,
                    const double[::1] lam, const double[::1] d_vec,
                    double[::1] out):
    """Solve lam o x = d_vec for x (out must not alias inputs)."""
    cdef Py_ssize_t i, b, st, d, j, nq = starts.shape[0]
    cdef double det, x0, l0
    with nogil:
        for i in range(l):
            out[i] = d_vec[i] / lam[i]
        for b in range(nq):
            st = <Py_ssize_t> starts[b]
            d = <Py_ssize_t> dims[b]
            l0 = lam[st]
            det = l0 * l0
            x0 = l0 * d_vec[st]
            for j in range(st + 1, st + d):
                det -= lam[j] * lam[j]
                x0 -= lam[j] * d_vec[j]
            x0 /= det
            for j in range(st + 1, st + d):
                out[j] = (d_vec[j] - x0 * lam[j]) / l0
            out[st] = x0
