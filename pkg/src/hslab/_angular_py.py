"""Pure-Python reference for the angular kernel quadrature.

Mirrors ``_angular.pyx`` step for step; used when the extension is not built.
"""
import math

import numpy as np

from .errors import NonConvergence


def _panel(n_k, c, d2, t, a, b, xg, wg):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    th = mid + half * xg
    s = np.sin(0.5 * th)
    g = (d2 + 4.0 * t * s * s) ** c * np.sin(th) ** n_k
    return half * float(np.dot(wg, g))


def angular_integrals(n, alpha, ts, xg, wg, xj, wj, tol, budget):
    """Return (integrals, evaluation counts) of the zonal angular integral.

    The value for each ``t`` is ``int_0^pi (1 + t^2 - 2 t cos th)^((alpha-n)/2)
    sin^(n-2) th dth``; the caller multiplies by ``|S^(n-2)|``.
    ``(xg, wg)`` is the per-panel Gauss-Legendre rule and ``(xj, wj)`` a
    Gauss-Jacobi rule for the weight ``(1+x)^(alpha-2)`` used at ``t == 1``.
    """
    ts = np.asarray(ts, dtype=float)
    out = np.empty(ts.shape)
    counts = np.zeros(ts.shape, dtype=np.int64)
    c = 0.5 * (alpha - n)
    n_k = float(n - 2)
    m = len(xg)
    for idx, t in enumerate(ts):
        if t == 0.0:
            # sin^(n-2) integrated over [0, pi]; exact by the Wallis ratio
            out[idx] = math.sqrt(math.pi) * math.gamma(0.5 * (n - 1)) / math.gamma(0.5 * n)
            continue
        d2 = (1.0 - t) * (1.0 - t)
        evals = 0
        total = 0.0
        panels = []
        if t == 1.0:
            a = 0.5 * math.pi
            th = 0.5 * a * (xj + 1.0)
            s = np.sin(0.5 * th)
            g = (4.0 * s * s) ** c * np.sin(th) ** n_k * th ** (2.0 - alpha)
            total += (0.5 * a) ** (alpha - 1.0) * float(np.dot(wj, g))
            evals += len(xj)
            panels.append((a, math.pi))
        else:
            scale = abs(1.0 - t) / math.sqrt(t)
            hi = math.pi
            j = 0
            while j < 60 and 0.5 * hi > 0.01 * scale:
                panels.append((0.5 * hi, hi))
                hi *= 0.5
                j += 1
            panels.append((0.0, hi))
        stack = []
        est = total
        for a, b in panels:
            q = _panel(n_k, c, d2, t, a, b, xg, wg)
            evals += m
            est += q
            stack.append((a, b, q))
        thr = 0.1 * tol * abs(est)
        while stack:
            a, b, q = stack.pop()
            mid = 0.5 * (a + b)
            ql = _panel(n_k, c, d2, t, a, mid, xg, wg)
            qr = _panel(n_k, c, d2, t, mid, b, xg, wg)
            evals += 2 * m
            if abs(ql + qr - q) <= thr or b - a < 1e-15:
                total += ql + qr
            else:
                if evals > budget:
                    raise NonConvergence(
                        f"angular quadrature budget exhausted at t={t!r}")
                stack.append((a, mid, ql))
                stack.append((mid, b, qr))
        out[idx] = total
        counts[idx] = evals
    return out, counts
