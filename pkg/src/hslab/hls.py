"""The doubly weighted HLS bilinear form on radial pairs.

``J(f, g) = int int f(x) |x|^-sigma1 |x - y|^(alpha-n) g(y) |y|^-sigma2 dx dy``
reduces for radial ``f, g`` to ``|S^(n-1)| int f(r) (T g)(r) r^(n-1-sigma1) dr``
where ``T`` is the radial potential with weight ``sigma2``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DivergentIntegral, DomainError
from .kernel import get_profile, sphere_area
from .radial import RadialField, TailModel, weighted_integral
from .solver import get_operator, output_tail

INDEX_RTOL = 1e-12
DILATIONS = (0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class HlsIndices:
    n: int
    alpha: float
    sigma1: float
    sigma2: float
    r: float
    s: float

    def to_dict(self):
        return {"n": self.n, "alpha": self.alpha, "sigma1": self.sigma1,
                "sigma2": self.sigma2, "r": self.r, "s": self.s}

    @classmethod
    def conjugate(cls, n, alpha, sigma1, sigma2, r):
        """Indices with ``s`` solved from the index relation."""
        inv_s = (n + alpha - sigma1 - sigma2) / n - 1.0 / r
        if inv_s <= 0:
            raise DomainError("r", "no s > 0 satisfies the index relation")
        return cls(n, alpha, sigma1, sigma2, r, 1.0 / inv_s)


@dataclass(frozen=True)
class IndexCheck:
    valid: bool
    failures: tuple
    relation_residual: float

    def to_dict(self):
        return {"valid": self.valid, "failures": list(self.failures),
                "relation_residual": self.relation_residual}


def check_indices(ix):
    """Check every index constraint; ``failures`` names the ones that fail."""
    n, a, s1, s2, r, s = ix.n, ix.alpha, ix.sigma1, ix.sigma2, ix.r, ix.s
    fails = []
    if not 0 < a < n:
        fails.append("0 < alpha < n")
    if not 1 < r < math.inf:
        fails.append("1 < r < inf")
    if not 1 < s < math.inf:
        fails.append("1 < s < inf")
    if not 0 <= s1 + s2 <= a:
        fails.append("0 <= sigma1 + sigma2 <= alpha")
    if r > 1:
        if not a / n - 1.0 / r < s1 / n:
            fails.append("alpha/n - 1/r < sigma1/n")
        if not s1 / n < 1.0 - 1.0 / r:
            fails.append("sigma1/n < 1 - 1/r")
    lhs = 1.0 / r + 1.0 / s + (s1 + s2) / n if r and s else math.inf
    rhs = (n + a) / n
    res = abs(lhs - rhs) / rhs
    if not res <= INDEX_RTOL:
        fails.append("1/r + 1/s + (sigma1+sigma2)/n = (n+alpha)/n")
    return IndexCheck(not fails, tuple(fails), res)


def _product(f, g):
    """Pointwise product field with multiplied head and tail models."""
    f0, cf = f.head
    g0, cg = g.head
    tail = TailModel(f.tail.C * g.tail.C, f.tail.theta + g.tail.theta,
                     f.tail.log_power + g.tail.log_power)
    return RadialField(f.grid, f.values * g.values, (f0 * g0, cf + cg), tail)


def potential(g, n, alpha, sigma, profile=None):
    """``(T g)(r) = int K(r, s) g(s) s^(n-1-sigma) ds`` as a field."""
    profile = profile or get_profile(n, alpha)
    op = get_operator(profile, g.grid)
    try:
        vals = op.apply(g, 1.0, sigma)
    except DivergentIntegral as exc:
        raise DivergentIntegral("infinity", str(exc)) from exc
    theta, lp = output_tail(n, alpha, g.tail, 1.0, sigma)
    return RadialField.from_values(g.grid, vals, TailModel(
        vals[-1] * g.grid.r_max ** theta / (math.log(g.grid.r_max) ** lp if lp else 1.0),
        theta, lp))


def j_functional(f, g, ix, profile=None):
    """``J(f, g)`` for radial ``f, g`` on a common grid."""
    chk = check_indices(ix)
    if not chk.valid:
        raise DomainError("indices", "; ".join(chk.failures))
    if f.grid is not g.grid:
        raise DomainError("grid", "f and g must share a grid")
    if ix.sigma1 >= ix.n or ix.sigma2 >= ix.n:
        raise DivergentIntegral("origin", "weight exponent >= n")
    tg = potential(g, ix.n, ix.alpha, ix.sigma2, profile)
    try:
        inner = weighted_integral(_product(f, tg), ix.n - 1.0 - ix.sigma1, 1.0)
    except DivergentIntegral as exc:
        raise DivergentIntegral("infinity" if exc.endpoint == "tail" else "origin", str(exc)) from exc
    return sphere_area(ix.n) * inner


def lebesgue_norm(f, n, r):
    """``||f||_{L^r(R^n)}`` of a radial field."""
    return (sphere_area(n) * weighted_integral(f, n - 1.0, r)) ** (1.0 / r)


def dilate(f, lam):
    """``f(lam x)`` on the same grid."""
    g = f.grid
    t = f.tail
    vals = np.asarray(f(lam * g.r))
    tail = TailModel(t.C * lam ** (-t.theta), t.theta, t.log_power)
    if t.log_power:
        tail = TailModel(vals[-1] * g.r_max ** t.theta / math.log(g.r_max) ** t.log_power,
                         t.theta, t.log_power)
    return RadialField(g, vals, (f.head[0], f.head[1] * lam * lam), tail)


def normalized_ratio(f, g, ix, profile=None):
    return j_functional(f, g, ix, profile) / (lebesgue_norm(f, ix.n, ix.r) * lebesgue_norm(g, ix.n, ix.s))


@dataclass(frozen=True)
class DilationReport:
    lambdas: tuple
    ratios: tuple

    @property
    def variation(self):
        r = np.array(self.ratios)
        return float((r.max() - r.min()) / abs(r.mean()))

    def to_dict(self):
        return {"lambdas": list(self.lambdas), "ratios": list(self.ratios),
                "variation": self.variation}


def dilation_test(f, g, ix, lambdas=DILATIONS, profile=None):
    """``J(f_l, g_l) / (||f_l||_r ||g_l||_s)`` over the dilations ``f_l(x) = f(l x)``."""
    ratios = tuple(normalized_ratio(dilate(f, lam), dilate(g, lam), ix, profile)
                   for lam in lambdas)
    return DilationReport(tuple(lambdas), ratios)


def brute_j(fn_f, fn_g, ix, profile=None, epsrel=1e-10):
    """Dense 2-D adaptive quadrature of ``J`` for callables ``f, g``.

    Integrates the two triangles ``s < r`` and ``s > r`` separately so the
    kernel's diagonal kink lies on the boundary.  Slow; meant as a cross-check.
    """
    from scipy import integrate
    from .kernel import kernel_value
    profile = profile or get_profile(ix.n, ix.alpha)
    a1 = ix.n - 1.0 - ix.sigma1
    a2 = ix.n - 1.0 - ix.sigma2

    def integrand(s, r):
        return fn_f(r) * fn_g(s) * r ** a1 * s ** a2 * kernel_value(profile, r, s)

    lo = integrate.dblquad(integrand, 0.0, np.inf, lambda r: 0.0, lambda r: r,
                           epsabs=0.0, epsrel=epsrel)[0]
    hi = integrate.dblquad(integrand, 0.0, np.inf, lambda r: r, lambda r: np.inf,
                           epsabs=0.0, epsrel=epsrel)[0]
    return sphere_area(ix.n) * (lo + hi)
