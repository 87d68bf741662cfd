# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled angular kernel quadrature; same algorithm as ``_angular_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, pow, fabs, sqrt, tgamma, M_PI

from .errors import NonConvergence

cnp.import_array()

cdef enum:
    MAXSTACK = 4096


cdef inline double _panel(double n_k, double c, double d2, double t,
                          double a, double b,
                          const double[::1] xg, const double[::1] wg) nogil:
    cdef double half = 0.5 * (b - a)
    cdef double mid = 0.5 * (b + a)
    cdef double acc = 0.0, th, s
    cdef Py_ssize_t i
    for i in range(xg.shape[0]):
        th = mid + half * xg[i]
        s = sin(0.5 * th)
        acc += wg[i] * pow(d2 + 4.0 * t * s * s, c) * pow(sin(th), n_k)
    return half * acc


def angular_integrals(int n, double alpha, ts, xg, wg, xj, wj,
                      double tol, long budget):
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64).ravel()
    cdef const double[::1] gx = np.ascontiguousarray(xg, dtype=np.float64)
    cdef const double[::1] gw = np.ascontiguousarray(wg, dtype=np.float64)
    cdef const double[::1] jx = np.ascontiguousarray(xj, dtype=np.float64)
    cdef const double[::1] jw = np.ascontiguousarray(wj, dtype=np.float64)
    out_arr = np.empty(tv.shape[0])
    cnt_arr = np.zeros(tv.shape[0], dtype=np.int64)
    cdef double[::1] out = out_arr
    cdef long long[::1] counts = cnt_arr
    cdef double c = 0.5 * (alpha - n)
    cdef double n_k = n - 2.0
    cdef Py_ssize_t m = gx.shape[0]
    cdef Py_ssize_t idx, i, sp, npan
    cdef double t, d2, total, est, thr, a, b, q, mid, ql, qr, hi, scale, th, s, acc
    cdef long evals
    cdef int j
    cdef double sa[MAXSTACK]
    cdef double sb[MAXSTACK]
    cdef double sq[MAXSTACK]
    for idx in range(tv.shape[0]):
        t = tv[idx]
        if t == 0.0:
            out[idx] = sqrt(M_PI) * tgamma(0.5 * (n - 1)) / tgamma(0.5 * n)
            continue
        d2 = (1.0 - t) * (1.0 - t)
        evals = 0
        total = 0.0
        npan = 0
        if t == 1.0:
            a = 0.5 * M_PI
            acc = 0.0
            for i in range(jx.shape[0]):
                th = 0.5 * a * (jx[i] + 1.0)
                s = sin(0.5 * th)
                acc += jw[i] * pow(4.0 * s * s, c) * pow(sin(th), n_k) * pow(th, 2.0 - alpha)
            total += pow(0.5 * a, alpha - 1.0) * acc
            evals += jx.shape[0]
            sa[0] = a
            sb[0] = M_PI
            npan = 1
        else:
            scale = fabs(1.0 - t) / sqrt(t)
            hi = M_PI
            j = 0
            while j < 60 and 0.5 * hi > 0.01 * scale:
                sa[npan] = 0.5 * hi
                sb[npan] = hi
                npan += 1
                hi *= 0.5
                j += 1
            sa[npan] = 0.0
            sb[npan] = hi
            npan += 1
        est = total
        for i in range(npan):
            sq[i] = _panel(n_k, c, d2, t, sa[i], sb[i], gx, gw)
            evals += m
            est += sq[i]
        thr = 0.1 * tol * fabs(est)
        sp = npan
        while sp > 0:
            sp -= 1
            a = sa[sp]
            b = sb[sp]
            q = sq[sp]
            mid = 0.5 * (a + b)
            ql = _panel(n_k, c, d2, t, a, mid, gx, gw)
            qr = _panel(n_k, c, d2, t, mid, b, gx, gw)
            evals += 2 * m
            if fabs(ql + qr - q) <= thr or b - a < 1e-15:
                total += ql + qr
            else:
                if evals > budget or sp + 2 >= MAXSTACK:
                    raise NonConvergence(
                        f"angular quadrature budget exhausted at t={t!r}")
                sa[sp] = a
                sb[sp] = mid
                sq[sp] = ql
                sa[sp + 1] = mid
                sb[sp + 1] = b
                sq[sp + 1] = qr
                sp += 2
        out[idx] = total
        counts[idx] = evals
    return out_arr, cnt_arr
