"""Radial reduction of the Riesz kernel.

For radial densities the potential ``int |x - y|^(alpha-n) f(|y|) dy`` only
needs the sphere average

    K(r, s) = int_{S^(n-1)} |r e - s w|^(alpha-n) dw = r^(alpha-n) kappa(s / r),

with ``kappa(t) = |S^(n-2)| int_0^pi (1 + t^2 - 2 t cos th)^((alpha-n)/2)
sin^(n-2) th dth``.  ``kappa`` is tabulated once per ``(n, alpha)`` and
interpolated in log-log coordinates by a monotone cubic (PCHIP) on each side
of the breakpoint ``t = 1``.
"""
from dataclasses import dataclass
from functools import cached_property
import hashlib
import logging
import math
import os
from pathlib import Path

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import DivergentIntegral, DomainError

logger = logging.getLogger(__name__)

if os.environ.get("HSLAB_BACKEND", "").lower() == "python":
    from ._angular_py import angular_integrals as _angular_integrals
    BACKEND = "python"
else:
    try:
        from ._angular import angular_integrals as _angular_integrals
        BACKEND = "cython"
    except ImportError:
        from ._angular_py import angular_integrals as _angular_integrals
        BACKEND = "python"

TABLE_VERSION = 1
QUAD_TOL = 1e-10
QUAD_BUDGET = 100_000
GL_ORDER = 10
JACOBI_ORDER = 24

_GL = np.polynomial.legendre.leggauss(GL_ORDER)


def sphere_area(n):
    """|S^(n-1)|, the surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n)


def _check_kernel_args(n, alpha):
    if n < 3:
        raise DomainError("n", "n >= 3")
    if not 1.0 < alpha < n:
        raise DomainError("alpha", "alpha in (1, n) required: the diagonal value diverges for alpha <= 1")


def angular_kernel_array(n, alpha, ts, tol=QUAD_TOL, budget=QUAD_BUDGET, backend=None):
    """Vectorised :func:`angular_kernel`."""
    _check_kernel_args(n, alpha)
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise DomainError("t", "t >= 0")
    xj, wj = special.roots_jacobi(JACOBI_ORDER, 0.0, alpha - 2.0)
    fn = _angular_integrals
    if backend == "python":
        from ._angular_py import angular_integrals as fn
    vals, _ = fn(int(n), float(alpha), ts.ravel(), _GL[0], _GL[1], xj, wj,
                 float(tol), int(budget))
    return (sphere_area(n - 1) * vals).reshape(ts.shape)


def angular_kernel(n, alpha, t, tol=QUAD_TOL, budget=QUAD_BUDGET):
    """kappa(t) = K(1, t) by adaptive panel quadrature.

    Near ``t = 1`` the integrand peaks like ``th^(alpha-2)`` at ``th = 0``;
    panels are graded geometrically toward the origin and the exact diagonal
    uses a Gauss-Jacobi rule for that weight.
    """
    return float(angular_kernel_array(n, alpha, np.array([t]), tol, budget)[0])


def table_abscissa(t_min=1e-6, t_max=1e6, n_log=2048, n_graded=256):
    """log t sample points of the kappa table, exactly symmetric under t -> 1/t.

    ``n_log`` log-spaced points over [t_min, t_max] (with t_min = 1/t_max),
    ``n_graded`` points graded geometrically toward t = 1, and t = 1 itself.
    """
    if not math.isclose(t_min * t_max, 1.0):
        raise DomainError("t_min", "t_min * t_max == 1")
    L = math.log(t_max)
    half = L * (2.0 * np.arange(n_log // 2) + (n_log % 2 == 0)) / (n_log - 1)
    eps = np.geomspace(1e-8, 1e-2, n_graded // 2)
    pos = np.unique(np.concatenate([half[half > 0], eps]))
    return np.concatenate([-pos[::-1], [0.0], pos])


@dataclass(frozen=True, eq=False)
class RadialKernelProfile:
    n: int
    alpha: float
    log_t: np.ndarray
    log_kappa: np.ndarray
    surface_area: float
    version: int = TABLE_VERSION
    backend: str = BACKEND

    @property
    def t(self):
        return np.exp(self.log_t)

    @property
    def kappa_table(self):
        return np.exp(self.log_kappa)

    @cached_property
    def _pieces(self):
        lo = self.log_t <= 0
        hi = self.log_t >= 0
        return (PchipInterpolator(self.log_t[lo], self.log_kappa[lo], extrapolate=False),
                PchipInterpolator(self.log_t[hi], self.log_kappa[hi], extrapolate=False))

    def kappa(self, t):
        """Interpolated kappa(t) for an array of ``t >= 0``."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        lo, hi = self.log_t[0], self.log_t[-1]
        pos = t > 0
        lt = np.full(t.shape, -np.inf)
        lt[pos] = np.log(t[pos])
        inside = (lt >= lo) & (lt <= hi)
        left, right = self._pieces
        li = lt[inside]
        out[inside] = np.exp(np.where(li <= 0, left(np.minimum(li, 0.0)),
                                      right(np.maximum(li, 0.0))))
        # beyond the table kappa is even in t at 0: kappa(0) + O(t^2)
        k0 = self.surface_area
        k_lo = math.exp(self.log_kappa[0])
        small = lt < lo
        ts = t[small]
        out[small] = k0 + (k_lo - k0) * (ts / math.exp(lo)) ** 2
        big = lt > hi
        if np.any(big):
            inv = 1.0 / t[big]
            out[big] = t[big] ** (self.alpha - self.n) * (
                k0 + (k_lo - k0) * (inv / math.exp(lo)) ** 2)
        return out

    def cache_key(self):
        return profile_cache_key(self.n, self.alpha, self.backend)


def profile_cache_key(n, alpha, backend=BACKEND):
    tag = f"v{TABLE_VERSION}-{backend}-n{int(n)}-a{float(alpha).hex()}"
    return hashlib.sha1(tag.encode()).hexdigest()[:16] + f"_n{int(n)}"


def build_profile(n, alpha, cache_dir=None):
    """Tabulate kappa for ``(n, alpha)``, reusing an on-disk cache if given."""
    _check_kernel_args(n, alpha)
    n = int(n)
    alpha = float(alpha)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"kappa_{profile_cache_key(n, alpha)}.npz"
        if path.exists():
            data = np.load(path)
            if int(data["version"]) == TABLE_VERSION:
                return RadialKernelProfile(n, alpha, data["log_t"], data["log_kappa"],
                                           sphere_area(n))
    log_t = table_abscissa()
    kap = angular_kernel_array(n, alpha, np.exp(log_t))
    kap[log_t == 0.0] = angular_kernel(n, alpha, 1.0)
    prof = RadialKernelProfile(n, alpha, log_t, np.log(kap), sphere_area(n))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, log_t=log_t, log_kappa=prof.log_kappa,
                 version=np.int64(TABLE_VERSION))
        logger.debug("wrote kappa table %s", path)
    return prof


_PROFILES = {}


def get_profile(n, alpha, cache_dir=None):
    """Memoised :func:`build_profile`; profiles are immutable and shareable."""
    key = (int(n), float(alpha), None if cache_dir is None else str(cache_dir))
    prof = _PROFILES.get(key)
    if prof is None:
        prof = _PROFILES[key] = build_profile(n, alpha, cache_dir)
    return prof


def kernel_value(profile, r, s):
    """K(r, s) = r^(alpha-n) kappa(s/r), evaluated symmetrically.

    Arrays broadcast.  The table abscissa is reflection symmetric, so the
    log-log interpolant respects ``K(r, s) = K(s, r)``.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    r, s = np.broadcast_arrays(r, s)
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    if np.any(big <= 0):
        raise DomainError("r", "r > 0")
    out = big ** (profile.alpha - profile.n) * profile.kappa(small / big)
    return out if out.ndim else float(out)


def riesz_moment(profile, beta):
    """int_{R^n} |z|^-beta |e - z|^(alpha-n) dz for a unit vector e.

    Equals ``int_0^inf kappa(s) s^(n-1-beta) ds``; the part ``s > 1`` is
    folded onto (0, 1) with ``kappa(1/u) = u^(n-alpha) kappa(u)``, leaving
    two integrals of ``kappa`` against ``s^a`` on (0, 1).  Gauss-Jacobi
    handles the power at 0 and geometric panels the kink at 1.
    """
    n, alpha = profile.n, profile.alpha
    if beta >= n:
        raise DivergentIntegral("origin", f"beta={beta} >= n={n}")
    if beta <= alpha:
        raise DivergentIntegral("infinity", f"beta={beta} <= alpha={alpha}")
    return (_kappa_power_moment(n, alpha, n - 1.0 - beta)
            + _kappa_power_moment(n, alpha, beta - alpha - 1.0))


def _kappa_power_moment(n, alpha, a, levels=44, order=12):
    """int_0^1 kappa(s) s^a ds with a > -1, kappa from direct quadrature."""
    xj, wj = special.roots_jacobi(30, 0.0, a)
    half = 0.5
    s_j = 0.5 * half * (xj + 1.0)
    head = (0.5 * half) ** (a + 1.0) * np.dot(wj, angular_kernel_array(n, alpha, s_j))
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    lo = half
    for k in range(levels):
        hi = 1.0 - 0.5 ** (k + 2)
        nodes.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * xg)
        weights.append(0.5 * (hi - lo) * wg)
        lo = hi
    nodes.append(0.5 * (1.0 + lo) + 0.5 * (1.0 - lo) * xg)
    weights.append(0.5 * (1.0 - lo) * wg)
    s = np.concatenate(nodes)
    w = np.concatenate(weights)
    body = np.dot(w * s ** a, angular_kernel_array(n, alpha, s))
    return float(head + body)


def riesz_moment_gamma(n, alpha, beta):
    """Closed-form Riesz composition value used as an independent check."""
    g = math.gamma
    return (math.pi ** (0.5 * n) * g(0.5 * (n - beta)) * g(0.5 * alpha) * g(0.5 * (beta - alpha))
            / (g(0.5 * beta) * g(0.5 * (n - alpha)) * g(0.5 * (n - beta + alpha))))
