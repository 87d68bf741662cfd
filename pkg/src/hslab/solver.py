"""Radial integral operators of the system and the renormalised fixed-point solver.

The grid part of ``T f(r_i) = int_0^inf K(r_i, s) f(s)^P s^(n-1-sigma) ds`` is a
product-integration (Nystrom) matrix: the density ``f^P s^(n-1-sigma)`` is
interpolated by the same cubic stencils as :class:`~hslab.radial.RadialGrid`
and each basis polynomial is integrated against the kernel.  On a log grid the
kernel only sees ``s / r_i = exp((k - i + y) h)``, so the matrix is built from
three Toeplitz tables (first, interior and last interval).
"""
from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import math
import threading

import numpy as np
from scipy import special

from . import exponents as ex
from .errors import DivergentIntegral, DomainError, HslabError
from .kernel import get_profile, sphere_area
from .radial import (
    RadialField, TailModel, fit_head, make_grid, matched_tail,
    lagrange_basis, stencil_offsets, stencil_starts, _GL8,
)

logger = logging.getLogger(__name__)

GRADE_RATIO = 0.25
GRADE_LEVELS = 16
HEAD_ORDER = 24
LAGUERRE_ORDER = 40
TAIL_LEVELS = 14
TIE_TOL = 1e-9
CACHE_LIMIT = 32


def _graded_rule(levels=GRADE_LEVELS, ratio=GRADE_RATIO):
    """Gauss-Legendre panels on [0, 1] accumulating geometrically at 0."""
    x, w = _GL8
    edges = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


class Operator:
    """Product-integration matrix for one ``(n, alpha, grid)``.

    ``matrix @ dens`` gives the grid part of the potential, where
    ``dens = f^P s^(n-1-sigma)`` at the nodes.
    """

    def __init__(self, profile, grid):
        self.profile = profile
        self.grid = grid
        self.n = profile.n
        self.alpha = profile.alpha
        self.matrix = self._assemble()
        self._cache = {}
        self._lock = threading.Lock()

    def _table(self, offsets, d):
        """``Q[d, m] = h int_0^1 kappa(e^{(d+y)h}) e^{(d+y)h} phi_m(y) dy``."""
        h = self.grid.h
        x, w = 0.5 * (_GL8[0] + 1.0), 0.5 * _GL8[1]
        gx, gw = _graded_rule()
        Q = np.empty((d.size, 4))
        plain = (d != 0) & (d != -1)
        z = (d[plain, None] + x[None, :]) * h
        vals = self.profile.kappa(np.exp(z)) * np.exp(z) * w[None, :]
        Q[plain] = vals @ lagrange_basis(offsets, x)
        # kink of kappa at s = r: y = 0 when d = 0, y = 1 when d = -1
        for dd, y in ((0, gx), (-1, 1.0 - gx)):
            sel = d == dd
            if np.any(sel):
                z = (dd + y) * h
                Q[sel] = (self.profile.kappa(np.exp(z)) * np.exp(z) * gw) @ lagrange_basis(offsets, y)
        return Q * h

    def _assemble(self):
        N = self.grid.N
        r = self.grid.r
        offs = stencil_offsets(N)
        starts = stencil_starts(N)
        d_all = np.arange(-(N - 1), N)
        Q_int = self._table(offs[1], d_all)
        i = np.arange(N)
        M = np.zeros((N, N))
        # interior intervals k = 1 .. N-3 have distinct starts k - 1
        k = np.arange(1, N - 2)
        D = k[None, :] - i[:, None] + (N - 1)
        for m in range(4):
            M[:, k - 1 + m] += Q_int[D, m]
        for kk, typ in ((0, 0), (N - 2, 2)):
            Q = self._table(offs[typ], kk - i)
            for m in range(4):
                M[:, starts[kk] + m] += Q[:, m]
        return M * (r ** (self.alpha - self.n + 1.0))[:, None]

    def _cached(self, key, build):
        with self._lock:
            val = self._cache.get(key)
        if val is None:
            val = build()
            with self._lock:
                if len(self._cache) >= CACHE_LIMIT:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[key] = val
        return val

    def _head_rule(self, sigma):
        """Gauss-Jacobi nodes, weights and kernel block for ``[0, r_min]``."""
        a = self.n - 1.0 - sigma
        xj, wj = special.roots_jacobi(HEAD_ORDER, 0.0, a)
        half = 0.5 * self.grid.r_min
        s = half * (xj + 1.0)
        r = self.grid.r
        K = r[:, None] ** (self.alpha - self.n) * self.profile.kappa(s[None, :] / r[:, None])
        return s, wj * half ** (a + 1.0), K

    def head_closure(self, head, power, sigma):
        s, w, K = self._cached(("head", float(sigma)), lambda: self._head_rule(sigma))
        f0, c = head
        return K @ ((f0 * (1.0 + c * s * s)) ** power * w)

    def _tail_rule(self, k):
        gx, gw = _graded_rule(TAIL_LEVELS)
        xl, wl = special.roots_laguerre(LAGUERRE_ORDER)
        y = np.concatenate([gx, 1.0 + xl / k])
        w = np.concatenate([gw * np.exp(-k * gx), wl * math.exp(-k) / k])
        rho = self.grid.r / self.grid.r_max
        return y, w, self.profile.kappa(rho[:, None] * np.exp(-y)[None, :])

    def tail_closure(self, tail, power, sigma):
        """``int_{r_max}^inf K(r_i, s) tail(s)^power s^(n-1-sigma) ds`` per node.

        With ``s = r_max e^y`` the integrand is ``e^(-k y)`` times a bounded
        factor; graded panels cover ``y`` in [0, 1] (the kernel kink sits at
        ``y = 0`` for the last node) and Gauss-Laguerre the rest.
        """
        k = power * tail.theta + sigma - self.alpha
        if k <= 0:
            raise DivergentIntegral(
                "tail", f"power*theta + sigma - alpha = {k:.6g} <= 0: the potential is infinite")
        R = self.grid.r_max
        y, w, K = self._cached(("tail", float(k)), lambda: self._tail_rule(k))
        m = power * tail.log_power
        if m:
            w = w * (math.log(R) + y) ** m
        return tail.C ** power * R ** (-k) * (K @ w)

    def apply(self, f, power, sigma):
        g = self.grid
        dens = f.values ** power * g.r ** (self.n - 1.0 - sigma)
        body = self.matrix @ dens
        tail = self.tail_closure(f.tail, power, sigma)
        head = self.head_closure(f.head, power, sigma)
        return body + head + tail


_OPERATORS = {}
_OP_LOCK = threading.Lock()


def get_operator(profile, grid):
    key = (profile.n, profile.alpha, profile.backend, grid.r_min, grid.r_max, grid.N)
    with _OP_LOCK:
        op = _OPERATORS.get(key)
    if op is None:
        op = Operator(profile, grid)
        with _OP_LOCK:
            op = _OPERATORS.setdefault(key, op)
    return op


def output_tail(n, alpha, tail, power, sigma, slow=None):
    """Exponent and log power of ``T f`` at infinity by power counting.

    The near-origin mass gives ``n - alpha``; the far field gives
    ``power*theta - (alpha - sigma)``.  A tie adds one power of ``ln r``.
    ``slow`` is the slow rate of the output; the far exponent is snapped
    to it when they agree to rounding, since that fixed point of the
    exponent map is repelling and would otherwise drift.
    """
    fast = n - alpha
    far = power * tail.theta - (alpha - sigma)
    far_log = power * tail.log_power
    if slow is not None and abs(far - slow) <= TIE_TOL * max(1.0, abs(slow)):
        far = slow
    if abs(far - fast) <= TIE_TOL * max(1.0, fast):
        return fast, far_log + 1.0
    if far < fast:
        return far, far_log
    return fast, 0.0


def _apply(f, power, sigma, slow, params, profile, grid):
    if profile is None:
        profile = get_profile(params.n, params.alpha)
    grid = grid or f.grid
    if not 1.0 < params.alpha < params.n:
        raise DomainError("alpha", "alpha in (1, n) required by the radial operator")
    op = get_operator(profile, grid)
    vals = op.apply(f, power, sigma)
    theta, lp = output_tail(params.n, params.alpha, f.tail, power, sigma, slow)
    tail = matched_tail(grid.r_max, vals[-1], theta, lp)
    return RadialField.from_values(grid, vals, tail)


def apply_T1(v, params, profile=None, grid=None):
    """``u(r) = int_0^inf K(r, s) v(s)^q s^(n-1-sigma1) ds``."""
    return _apply(v, params.q, params.sigma1, ex.slow_rates(params)[1], params, profile, grid)


def apply_T2(u, params, profile=None, grid=None):
    """``v(r) = int_0^inf K(r, s) u(s)^p s^(n-1-sigma2) ds``."""
    return _apply(u, params.p, params.sigma2, ex.slow_rates(params)[0], params, profile, grid)


def _dilate(f, lam, weight):
    """``lam^weight f(lam r)`` resampled on the same grid."""
    if lam == 1.0:
        return f
    g = f.grid
    vals = lam ** weight * np.asarray(f(lam * g.r))
    t = f.tail
    return RadialField.from_values(g, vals, matched_tail(g.r_max, vals[-1], t.theta, t.log_power))


def rescale(u, v, params, lam):
    """The covariance ``(lam^q0 u(lam .), lam^p0 v(lam .))``."""
    if not lam > 0:
        raise DomainError("lambda", "lambda > 0")
    p0, q0 = ex.slow_rates(params)
    return _dilate(u, lam, q0), _dilate(v, lam, p0)


class Status(str, Enum):
    CONVERGED = "Converged"
    COLLAPSE = "NoFixedPointCollapse"
    BLOWUP = "NoFixedPointBlowup"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class SolverOptions:
    omega: float = 0.5
    max_iterations: int = 1000
    tol: float = 1e-8
    pivot: float = 1.0
    blowup: float = 1e8
    collapse: float = 1e-8
    # per-sweep pin the discretisation may leave behind at a fixed shape
    drift_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.omega <= 1.0:
            raise DomainError("omega", "omega in (0, 1]")
        if not self.tol > 0:
            raise DomainError("tol", "tol > 0")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations", "max_iterations >= 1")
        if not self.pivot > 0:
            raise DomainError("pivot", "pivot > 0")
        if not 0 < self.collapse < 1 < self.blowup:
            raise DomainError("blowup", "collapse < 1 < blowup")
        if not self.drift_tol >= 0:
            raise DomainError("drift_tol", "drift_tol >= 0")

    def to_dict(self):
        return {"omega": self.omega, "max_iterations": self.max_iterations, "tol": self.tol,
                "pivot": self.pivot, "blowup": self.blowup, "collapse": self.collapse,
                "drift_tol": self.drift_tol}


SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    params: ex.SystemParams
    u: RadialField
    v: RadialField
    status: Status
    residual_trace: tuple
    operator_residuals: tuple
    iterations: int = 0
    cause: str = ""
    pivot_trace: tuple = ()
    options: SolverOptions = field(default_factory=SolverOptions)

    @property
    def grid(self):
        return self.u.grid

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    def to_dict(self):
        def strip(f):
            d = f.to_dict()
            d.pop("grid")
            return d
        r1, r2 = self.operator_residuals
        return {
            "schema_version": SCHEMA_VERSION,
            "params": self.params.as_dict(),
            "grid": self.grid.to_dict(),
            "status": self.status.value,
            "cause": self.cause,
            "iterations": self.iterations,
            "residual_trace": [float(x) for x in self.residual_trace],
            "pivot_trace": [float(x) for x in self.pivot_trace],
            "operator_residuals": {"u": _json_float(r1), "v": _json_float(r2)},
            "options": self.options.to_dict(),
            "u": strip(self.u),
            "v": strip(self.v),
        }

    @classmethod
    def from_dict(cls, d):
        if int(d.get("schema_version", -1)) != SCHEMA_VERSION:
            raise DomainError("schema_version", f"expected {SCHEMA_VERSION}")
        pd = d["params"]
        params = ex.validate(pd["n"], pd["alpha"], pd["p"], pd["q"], pd["sigma1"], pd["sigma2"])
        g = d["grid"]
        grid = make_grid(float(g["r_min"]), float(g["r_max"]), int(g["N"]))
        u = RadialField.from_dict(d["u"], grid)
        v = RadialField.from_dict(d["v"], grid)
        if not (u.positive and v.positive):
            raise DomainError("values", "fields must be positive")
        res = d.get("operator_residuals", {})
        return cls(params, u, v, Status(d["status"]),
                   tuple(float(x) for x in d.get("residual_trace", [])),
                   (_read_float(res.get("u")), _read_float(res.get("v"))),
                   int(d.get("iterations", 0)), str(d.get("cause", "")),
                   tuple(float(x) for x in d.get("pivot_trace", [])),
                   SolverOptions(**d["options"]) if "options" in d else SolverOptions())


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _read_float(x):
    return math.nan if x is None else float(x)


def ansatz(params, kind, grid):
    """Named initial pair: ``slow``, ``fast`` or ``bubble``.

    ``slow`` is ``(1+r^2)^(-q0/2), (1+r^2)^(-p0/2)``; ``fast`` uses the
    fast exponents; ``bubble`` is the fast profile scaled by the exact
    amplitude of the critical unweighted case (it is the exact solution
    only when ``n=3, alpha=2, p=q=5``).
    """
    d = ex.derive(params)
    fast = params.n - params.alpha
    if kind == "slow":
        return (RadialField.from_function(grid, lambda r: (1 + r * r) ** (-0.5 * d.q0), theta=d.q0),
                RadialField.from_function(grid, lambda r: (1 + r * r) ** (-0.5 * d.p0), theta=d.p0))
    if kind in ("fast", "bubble"):
        amp = (3.0 / (4.0 * math.pi)) ** 0.25 if kind == "bubble" else 1.0
        prof = lambda r: amp * (1 + r * r) ** (-0.5 * fast)
        return (RadialField.from_function(grid, prof, theta=fast),
                RadialField.from_function(grid, prof, theta=fast))
    raise DomainError("init", f"unknown ansatz {kind!r}; expected slow, fast or bubble")


def _scaled(f, a):
    """``a f`` with head and tail scaled consistently."""
    t = f.tail
    return RadialField(f.grid, f.values * a, (f.head[0] * a, f.head[1]),
                       TailModel(t.C * a, t.theta, t.log_power))


def _damped(old, new, omega):
    if omega == 1.0:
        return new
    vals = old.values ** (1.0 - omega) * new.values ** omega
    t = new.tail
    return RadialField.from_values(old.grid, vals,
                                   matched_tail(old.grid.r_max, vals[-1], t.theta, t.log_power))


def _half_radius(f, ratio):
    """Radius where ``f / f(0)`` first drops to ``ratio`` (log-linear on the grid)."""
    g = f.grid
    rel = np.log(f.values / f.head[0]) - math.log(ratio)
    below = np.nonzero(rel <= 0)[0]
    if below.size == 0:
        return math.inf
    j = below[0]
    if j == 0:
        return 0.0
    x = g.x[j - 1] + rel[j - 1] / (rel[j - 1] - rel[j]) * g.h
    return math.exp(x)


def amplitudes(params, a_u, a_v):
    """Undo the per-sweep normalisation.

    If ``T1 v = a_u u`` and ``T2 u = a_v v`` then ``(c_u u, c_v v)`` solves the
    system when ``ln c_u - q ln c_v = ln a_u`` and ``ln c_v - p ln c_u = ln a_v``.
    """
    p, q = params.p, params.q
    lu, lv = math.log(a_u), math.log(a_v)
    det = 1.0 - p * q
    ln_cu = (lu + q * lv) / det
    ln_cv = (lv + p * lu) / det
    return math.exp(ln_cu), math.exp(ln_cv)


def operator_residuals(params, u, v, profile=None):
    """Relative sup-norm residuals ``|u - T1 v| / |u|`` and ``|v - T2 u| / |v|``."""
    tu = apply_T1(v, params, profile)
    tv = apply_T2(u, params, profile)
    r1 = float(np.max(np.abs(u.values - tu.values)) / np.max(u.values))
    r2 = float(np.max(np.abs(v.values - tv.values)) / np.max(v.values))
    return r1, r2


def solve(params, init="fast", opts=None, grid=None, profile=None, cache_dir=None):
    """Renormalised damped fixed-point iteration for the radial system.

    Each sweep applies ``T1`` and ``T2`` to the previous pair (Jacobi order),
    damps geometrically, then removes the two neutral or unstable directions
    of the map: the amplitude (both fields divided by their value at 0) and
    the scaling orbit (a covariance dilation putting the radius where
    ``u / u(0) = 2^(-(n-alpha)/2)`` at the pivot).  The true amplitudes are
    recovered at the end from the normalisation constants.

    A cumulative dilation that drives the implied pivot value past the
    blow-up or collapse threshold ends the run as ``NoFixedPoint*``.
    """
    opts = opts or SolverOptions()
    if not 1.0 < params.alpha < params.n:
        raise DomainError("alpha", "alpha in (1, n) required by the radial solver")
    grid = grid or make_grid()
    profile = profile or get_profile(params.n, params.alpha, cache_dir)
    if isinstance(init, str):
        u, v = ansatz(params, init, grid)
    else:
        u, v = init
        if u.grid is not grid:
            raise DomainError("init", "initial fields must live on the solver grid")
    if not (u.positive and v.positive):
        raise DomainError("init", "initial fields must be positive")
    p0, q0 = ex.slow_rates(params)
    ratio = 2.0 ** (-0.5 * (params.n - params.alpha))
    u = _scaled(u, 1.0 / u.head[0])
    v = _scaled(v, 1.0 / v.head[0])
    log_lam = prev_log_lam = 0.0
    a_u = a_v = 1.0
    trace, pivots = [], []
    status, cause = Status.MAX_ITERATIONS, ""
    it = 0
    for it in range(1, opts.max_iterations + 1):
        try:
            uh = apply_T1(v, params, profile, grid)
            vh = apply_T2(u, params, profile, grid)
        except DivergentIntegral as exc:
            status, cause = Status.BLOWUP, f"divergent potential: {exc}"
            break
        a_u, a_v = uh.head[0], vh.head[0]
        if not (math.isfinite(a_u) and math.isfinite(a_v) and a_u > 0 and a_v > 0):
            status, cause = Status.BLOWUP, "non-finite iterate"
            break
        un = _damped(u, _scaled(uh, 1.0 / a_u), opts.omega)
        vn = _damped(v, _scaled(vh, 1.0 / a_v), opts.omega)
        un = _scaled(un, 1.0 / un.head[0])
        vn = _scaled(vn, 1.0 / vn.head[0])
        rh = _half_radius(un, ratio)
        if rh == 0.0:
            status, cause = Status.BLOWUP, "profile concentrated below r_min"
            break
        if math.isinf(rh):
            status, cause = Status.COLLAPSE, "profile spread beyond r_max"
            break
        lam = rh / opts.pivot
        un, vn = rescale(un, vn, params, lam)
        un = _scaled(un, 1.0 / un.head[0])
        vn = _scaled(vn, 1.0 / vn.head[0])
        # a steady pin is the grid's residual scaling drift, not a shape change
        dlog = math.log(lam) - prev_log_lam
        prev_log_lam = math.log(lam)
        change = max(float(np.max(np.abs(np.log(un.values / u.values)))),
                     float(np.max(np.abs(np.log(vn.values / v.values)))),
                     abs(dlog))
        u, v = un, vn
        log_lam += math.log(lam)
        trace.append(change)
        # pivot value of the iterate before the accumulated dilations
        c_u, _ = amplitudes(params, a_u, a_v)
        lam_tot = math.exp(log_lam)
        pv = c_u * lam_tot ** (-q0) * float(u(opts.pivot / lam_tot))
        pivots.append(math.log10(pv) if pv > 0 else -math.inf)
        if change <= opts.tol and abs(prev_log_lam) <= max(opts.tol, opts.drift_tol):
            status = Status.CONVERGED
            break
        if pv > opts.blowup:
            status, cause = Status.BLOWUP, f"pivot value {pv:.3g} above {opts.blowup:g}"
            break
        if pv < opts.collapse:
            status, cause = Status.COLLAPSE, f"pivot value {pv:.3g} below {opts.collapse:g}"
            break
    if status is Status.MAX_ITERATIONS:
        cause = f"no convergence in {opts.max_iterations} iterations"
    c_u, c_v = amplitudes(params, a_u, a_v)
    U, V = _scaled(u, c_u), _scaled(v, c_v)
    try:
        res = operator_residuals(params, U, V, profile)
    except DivergentIntegral:
        res = (math.nan, math.nan)
    logger.info("solve %s: %s after %d iterations", params.as_tuple(), status.value, it)
    return SolutionBundle(params, U, V, status, tuple(trace), res, it, cause,
                          tuple(pivots), opts)
