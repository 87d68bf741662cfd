"""Log-spaced radial grids, radial fields and weighted radial integration.

Integrals over the grid use product quadrature in ``x = ln r``: the field is
interpolated by local cubic Lagrange polynomials in ``x`` and each basis
polynomial is integrated exactly (to rounding) against the power weight.
Head ``[0, r_min]`` and tail ``[r_max, inf)`` pieces are closed analytically
from the field's head and tail models.
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .errors import DivergentIntegral, DomainError, FitError

STENCIL = 4
_GL8 = np.polynomial.legendre.leggauss(8)
LOG_SWITCH_GAIN = 0.02
FIT_MAX_RESIDUAL = 0.1


def stencil_starts(N):
    """First node of the 4-point interpolation stencil for each interval."""
    k = np.arange(N - 1)
    return np.clip(k - 1, 0, N - STENCIL)


def lagrange_basis(offsets, y):
    """Cubic Lagrange basis on nodes ``offsets`` (in units of h) at points ``y``.

    Returns an array of shape ``(len(y), 4)``.
    """
    y = np.asarray(y, dtype=float)
    out = np.ones((y.size, len(offsets)))
    for m, om in enumerate(offsets):
        for l, ol in enumerate(offsets):
            if l != m:
                out[:, m] *= (y - ol) / (om - ol)
    return out


def stencil_offsets(N):
    """Offsets (relative to the interval's left node) of each stencil type.

    Type 0 is the first interval, 1 interior, 2 the last interval.
    """
    return [np.arange(4), np.arange(4) - 1, np.arange(4) - 2]


def stencil_type(N):
    t = np.ones(N - 1, dtype=int)
    t[0] = 0
    t[-1] = 2
    return t


@dataclass(frozen=True, eq=False)
class RadialGrid:
    r_min: float
    r_max: float
    N: int
    _weights: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max) or not math.isfinite(self.r_max):
            raise DomainError("grid", "0 < r_min < r_max required")
        if int(self.N) != self.N or self.N < 16:
            raise DomainError("N", "N >= 16 required")

    @cached_property
    def x(self):
        return np.linspace(math.log(self.r_min), math.log(self.r_max), self.N)

    @cached_property
    def r(self):
        return np.exp(self.x)

    @property
    def h(self):
        return (math.log(self.r_max) - math.log(self.r_min)) / (self.N - 1)

    def interval_weights(self):
        """Per-interval product weights ``W[k, m]`` for ``int g(s) ds``.

        ``g`` is interpolated in ``x = ln s``; the integral over interval
        ``k`` is ``sum_m W[k, m] g[start_k + m]``.
        """
        W = self._weights.get("interval")
        if W is None:
            y = 0.5 * (_GL8[0] + 1.0)
            wy = 0.5 * _GL8[1]
            h = self.h
            per_kind = np.array([
                (wy * np.exp(h * y)) @ lagrange_basis(o, y) for o in stencil_offsets(self.N)]) * h
            W = per_kind[stencil_type(self.N)] * self.r[:-1, None]
            self._weights["interval"] = W
        return W

    def weights(self, gamma=0.0):
        """Node weights ``w`` with ``int_{r_min}^{r_max} f(s) s^gamma ds ~ w @ f``.

        The product ``f s^gamma`` is what gets interpolated, so ``f = s^-gamma``
        integrates exactly for every ``gamma``.
        """
        w = self._weights.get("node")
        if w is None:
            W = self.interval_weights()
            starts = stencil_starts(self.N)
            w = np.zeros(self.N)
            for m in range(STENCIL):
                np.add.at(w, starts + m, W[:, m])
            self._weights["node"] = w
        return w * self.r ** gamma

    def integrate(self, values, gamma=0.0):
        return float(self.weights(gamma) @ np.asarray(values, dtype=float))

    def partial_integrals(self, values, gamma, upper):
        """``int_{r_min}^{R} f s^gamma ds`` for each ``R`` in ``upper`` (within the grid)."""
        g = np.asarray(values, dtype=float) * self.r ** gamma
        W = self.interval_weights()
        starts = stencil_starts(self.N)
        idx = starts[:, None] + np.arange(STENCIL)
        cum = np.concatenate([[0.0], np.cumsum(np.sum(W * g[idx], axis=1))])
        offs = stencil_offsets(self.N)
        kinds = stencil_type(self.N)
        out = []
        for R in np.atleast_1d(upper):
            if not self.r_min <= R <= self.r_max * (1 + 1e-12):
                raise DomainError("R", "upper limit outside the grid")
            xr = min(math.log(R), self.x[-1])
            k = min(int((xr - self.x[0]) / self.h), self.N - 2)
            frac = (xr - self.x[k]) / self.h
            y = 0.5 * frac * (_GL8[0] + 1.0)
            wy = 0.5 * frac * _GL8[1] * np.exp(self.x[k] + self.h * y)
            basis = lagrange_basis(offs[kinds[k]], y)
            out.append(cum[k] + self.h * (wy @ basis) @ g[starts[k]:starts[k] + STENCIL])
        return np.array(out)

    def to_dict(self):
        return {"r_min": self.r_min, "r_max": self.r_max, "N": self.N}


def make_grid(r_min=1e-4, r_max=1e4, N=1024):
    return RadialGrid(float(r_min), float(r_max), int(N))


@dataclass(frozen=True)
class TailModel:
    """``f(r) ~ C r^-theta (ln r)^log_power`` for ``r > r_max``."""

    C: float
    theta: float
    log_power: float = 0.0

    @property
    def log_flag(self):
        return self.log_power != 0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.C * r ** (-self.theta)
        if self.log_power:
            out = out * np.log(r) ** self.log_power
        return out

    def to_dict(self):
        return {"C": self.C, "theta": self.theta, "log": self.log_power}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["C"]), float(d["theta"]), float(d.get("log", 0.0)))


def matched_tail(r_last, f_last, theta, log_power=0.0):
    """Tail with the given exponent passing through ``(r_last, f_last)``."""
    C = f_last * r_last ** theta
    if log_power:
        C /= math.log(r_last) ** log_power
    return TailModel(C, theta, log_power)


def tail_integral(tail, gamma, power, R):
    """``int_R^inf tail(s)^power s^gamma ds`` in closed form."""
    k = tail.theta * power - gamma - 1.0
    if k <= 0:
        raise DivergentIntegral(
            "tail", f"theta*power - gamma = {tail.theta * power - gamma:.6g} <= 1")
    m = tail.log_power * power
    amp = tail.C ** power
    if m == 0:
        return amp * R ** (-k) / k
    if R <= 1:
        raise DomainError("R", "logarithmic tail closure needs r_max > 1")
    z = k * math.log(R)
    # int_{ln R}^inf x^m e^{-k x} dx = Gamma(m+1, k ln R) / k^(m+1)
    return amp * special.gammaincc(m + 1.0, z) * special.gamma(m + 1.0) / k ** (m + 1.0)


def head_integral(f0, c, gamma, power, a):
    """``int_0^a (f0 (1 + c r^2))^power r^gamma dr`` via the hypergeometric form."""
    if gamma <= -1:
        raise DivergentIntegral("head", f"gamma={gamma} <= -1")
    b = 0.5 * (gamma + 1.0)
    return f0 ** power * a ** (gamma + 1.0) / (gamma + 1.0) * special.hyp2f1(
        -power, b, b + 1.0, -c * a * a)


def fit_head(grid, values, k=8):
    """Even quadratic ``f0 (1 + c r^2)`` fitted to the first ``k`` nodes."""
    r2 = grid.r[:k] ** 2
    A = np.column_stack([np.ones(k), r2])
    (f0, b), *_ = np.linalg.lstsq(A, values[:k], rcond=None)
    if f0 <= 0:
        f0 = float(values[0])
        b = 0.0
    c = b / f0
    # keep the head positive on [0, r_min]
    if 1.0 + c * grid.r_min ** 2 <= 0:
        c = 0.0
    return float(f0), float(c)


@dataclass(frozen=True)
class TailFit:
    tail: TailModel
    residual: float
    residual_plain: float
    residual_log: float
    window: tuple


def fit_tail(r, f, log_candidates=True):
    """Least-squares fit of ``ln f`` against ``ln r`` on a trailing window.

    With ``log_candidates`` a ``ln r`` correction is also tried; it is kept
    only when it lowers the residual by more than 2 %.
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r.size < 16:
        raise FitError(f"fit window has {r.size} < 16 nodes")
    if r[-1] / r[0] < 10.0 * (1 - 1e-12):
        raise FitError("fit window spans less than one decade")
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise FitError("fit window contains non-positive values")
    lr = np.log(r)
    y = np.log(f)
    A = np.column_stack([np.ones_like(lr), -lr])

    def solve(target):
        coef, *_ = np.linalg.lstsq(A, target, rcond=None)
        res = target - A @ coef
        return coef, math.sqrt(float(np.mean(np.expm1(res) ** 2)))

    coef, res_plain = solve(y)
    best = TailModel(math.exp(coef[0]), float(coef[1]), 0.0)
    best_res = res_plain
    res_log = math.inf
    if log_candidates and r[0] > 1.0:
        coef_l, res_log = solve(y - np.log(lr))
        if res_log < (1.0 - LOG_SWITCH_GAIN) * res_plain:
            best = TailModel(math.exp(coef_l[0]), float(coef_l[1]), 1.0)
            best_res = res_log
    if not best_res <= FIT_MAX_RESIDUAL:
        raise FitError(f"tail fit relative RMS residual {best_res:.3g} > {FIT_MAX_RESIDUAL}")
    if best.theta <= 0:
        raise FitError(f"fitted exponent {best.theta:.4g} is not decaying")
    if abs(float(best(r[-1])) / f[-1] - 1.0) > 0.1:
        raise FitError("fitted tail misses the last window value by more than 10%")
    return TailFit(best, best_res, res_plain, res_log, (float(r[0]), float(r[-1])))


@dataclass(frozen=True)
class TwoTermFit:
    theta: float
    amplitude: float
    correction: float
    theta2: float
    residual: float
    window: tuple


def fit_two_term(r, f, theta2):
    """Fit ``f ~ a r^-theta + b r^-theta2`` with ``theta2`` known and ``theta < theta2``.

    For fixed ``theta`` the amplitudes solve a linear least-squares problem in
    relative error; ``theta`` is found by a bounded scalar search.  Meant for
    tails whose leading power is followed closely by a known subleading one.
    """
    from scipy.optimize import minimize_scalar
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r.size < 16:
        raise FitError(f"fit window has {r.size} < 16 nodes")
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise FitError("fit window contains non-positive values")
    ones = np.ones_like(f)

    def project(theta):
        A = np.column_stack([r ** -theta, r ** -theta2]) / f[:, None]
        coef, *_ = np.linalg.lstsq(A, ones, rcond=None)
        return math.sqrt(float(np.mean((A @ coef - 1.0) ** 2))), coef

    opt = minimize_scalar(lambda t: project(t)[0], bounds=(1e-3, theta2 - 1e-3),
                          method="bounded", options={"xatol": 1e-10})
    res, (a, b) = project(opt.x)
    if not res <= FIT_MAX_RESIDUAL or not a > 0:
        raise FitError(f"two-term tail fit failed (residual {res:.3g}, amplitude {a:.3g})")
    return TwoTermFit(float(opt.x), float(a), float(b), float(theta2), res,
                      (float(r[0]), float(r[-1])))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Positive radial samples with head and tail closures."""

    grid: RadialGrid
    values: np.ndarray
    head: tuple
    tail: TailModel

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.N,):
            raise DomainError("values", "one value per grid node")

    @classmethod
    def from_values(cls, grid, values, tail, head=None):
        values = np.asarray(values, dtype=float)
        if head is None:
            head = fit_head(grid, values)
        return cls(grid, values, tuple(head), tail)

    @classmethod
    def from_function(cls, grid, fn, tail=None, theta=None, log_power=0.0):
        """Sample ``fn`` on the grid; the tail is matched at ``r_max``.

        Give either a ready ``tail`` or its exponent ``theta``.
        """
        values = np.asarray(fn(grid.r), dtype=float)
        if tail is None:
            if theta is None:
                raise DomainError("tail", "need a tail model or its exponent")
            tail = matched_tail(grid.r_max, values[-1], theta, log_power)
        return cls.from_values(grid, values, tail)

    @property
    def positive(self):
        return bool(np.all(self.values > 0) and self.head[0] > 0 and self.tail.C > 0)

    def is_monotone_decreasing(self):
        return bool(np.all(np.diff(self.values) <= 0))

    @cached_property
    def _spline(self):
        return CubicSpline(self.grid.x, np.log(self.values))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        g = self.grid
        lo = r < g.r_min
        hi = r > g.r_max
        mid = ~(lo | hi)
        out[mid] = np.exp(self._spline(np.log(r[mid])))
        f0, c = self.head
        out[lo] = f0 * (1.0 + c * r[lo] ** 2)
        out[hi] = self.tail(r[hi])
        return out if out.ndim else float(out)

    def log_slope(self, r):
        """d ln f / d ln r inside the grid."""
        return self._spline(np.log(np.asarray(r, dtype=float)), 1)

    def with_values(self, values, tail=None):
        return RadialField.from_values(self.grid, values, tail or self.tail)

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "values": [float(x) for x in self.values],
                "head": {"f0": self.head[0], "c": self.head[1]},
                "tail": self.tail.to_dict()}

    @classmethod
    def from_dict(cls, d, grid=None):
        if grid is None:
            g = d["grid"]
            grid = make_grid(float(g["r_min"]), float(g["r_max"]), int(g["N"]))
        values = np.array([float(x) for x in d["values"]])
        head = (float(d["head"]["f0"]), float(d["head"]["c"]))
        return cls(grid, values, head, TailModel.from_dict(d["tail"]))


def weighted_integral(field, gamma, power):
    """``int_0^inf f(s)^power s^gamma ds`` with analytic head and tail closures."""
    g = field.grid
    f0, c = field.head
    head = head_integral(f0, c, gamma, power, g.r_min)
    tail = tail_integral(field.tail, gamma, power, g.r_max)
    body = g.integrate(field.values ** power, gamma)
    return head + body + tail


def truncated_integral(field, gamma, power, R):
    """``int_0^R f(s)^power s^gamma ds`` for ``r_min <= R <= r_max``."""
    g = field.grid
    f0, c = field.head
    head = head_integral(f0, c, gamma, power, g.r_min)
    return head + g.partial_integrals(field.values ** power, gamma, np.atleast_1d(R))
