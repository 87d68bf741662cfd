"""Decay rates, asymptotic constants, energies and integrability of computed solutions."""
from dataclasses import dataclass
from enum import Enum
import csv
import io
import math

import numpy as np

from . import exponents as ex
from .errors import BoundViolation, DivergentIntegral, DomainError, FitError
from .kernel import get_profile, riesz_moment, sphere_area
from .radial import fit_tail, fit_two_term, truncated_integral, weighted_integral

RATE_TOL = 0.02
WINDOW_DECADES = 1.5
WINDOW_GAP = 10.0
CONSTANT_RTOL = 0.05
STABLE_RTOL = 0.01
SCAN_RADII = (10.0, 1e2, 1e3, 1e4)


class Verdict(str, Enum):
    FAST = "FastDecay"
    SLOW = "SlowDecay"
    INDETERMINATE = "Indeterminate"


def default_window(grid):
    """Last 1.5 decades below ``r_max / 10``."""
    hi = grid.r_max / WINDOW_GAP
    return (hi / 10.0 ** WINDOW_DECADES, hi)


def _require_converged(bundle):
    if not bundle.converged:
        raise DomainError("status", f"a Converged bundle is required, got {bundle.status.value}")


def _window_nodes(grid, window):
    lo, hi = window
    if not 0 < lo < hi:
        raise DomainError("window", "0 < lo < hi required")
    sel = (grid.r >= lo * (1 - 1e-12)) & (grid.r <= hi * (1 + 1e-12))
    return sel


def _v_tail(params, r, f):
    """``(theta, log_flag, residual, amplitude, model)`` of the v tail.

    In the Anomalous case the leading power is trailed by the inner-mass term
    ``r^-(n-alpha)``, weaker only by ``r^-(n-alpha-theta_v)``; a single power
    fit drifts there, so the known two-term form is fitted instead.
    """
    if ex.v_case_of(params) is ex.VCase.ANOMALOUS:
        fit = fit_two_term(r, f, params.n - params.alpha)
        return fit.theta, False, fit.residual, fit.amplitude, "two-term"
    fit = fit_tail(r, f)
    return fit.tail.theta, fit.tail.log_flag, fit.residual, fit.tail.C, "power"


@dataclass(frozen=True)
class RateReport:
    theta_u: float
    log_u: bool
    theta_v: float
    log_v: bool
    residual_u: float
    residual_v: float
    window: tuple
    slow: tuple
    fast: tuple
    fast_v_log: bool
    rate_tol: float
    verdict: Verdict
    v_model: str = "power"

    def to_dict(self):
        return {"theta_u": self.theta_u, "log_u": self.log_u,
                "theta_v": self.theta_v, "log_v": self.log_v, "v_model": self.v_model,
                "residual_u": self.residual_u, "residual_v": self.residual_v,
                "window": list(self.window),
                "predicted_slow": {"theta_u": self.slow[0], "theta_v": self.slow[1]},
                "predicted_fast": {"theta_u": self.fast[0], "theta_v": self.fast[1],
                                   "log_v": self.fast_v_log},
                "rate_tol": self.rate_tol, "verdict": self.verdict.value}


def rate_report(bundle, window=None, rate_tol=RATE_TOL):
    """Fit both tails and compare them with the slow and the fast decay laws.

    FastDecay needs ``theta_u`` within ``rate_tol`` of ``n - alpha`` and ``v``
    on its case law including the log flag.  When both laws fit, or neither,
    the verdict is Indeterminate.
    """
    _require_converged(bundle)
    params = bundle.params
    grid = bundle.grid
    window = tuple(window or default_window(grid))
    sel = _window_nodes(grid, window)
    r = grid.r[sel]
    fu = fit_tail(r, bundle.u.values[sel])
    tv, lv, res_v, _, model = _v_tail(params, r, bundle.v.values[sel])
    d = ex.derive(params)
    tu, lu = fu.tail.theta, fu.tail.log_flag
    fast = (not lu and abs(tu - d.fast_u) <= rate_tol
            and abs(tv - d.fast_v) <= rate_tol and lv == d.fast_v_log)
    slow = (not lu and not lv and abs(tu - d.q0) <= rate_tol
            and abs(tv - d.p0) <= rate_tol)
    if fast and not slow:
        verdict = Verdict.FAST
    elif slow and not fast:
        verdict = Verdict.SLOW
    else:
        verdict = Verdict.INDETERMINATE
    return RateReport(tu, lu, tv, lv, fu.residual, res_v, window,
                      (d.q0, d.p0), (d.fast_u, d.fast_v), d.fast_v_log, rate_tol, verdict, model)


@dataclass(frozen=True)
class ConstantCheck:
    name: str
    measured: float
    expected: float

    @property
    def rel_err(self):
        return abs(self.measured / self.expected - 1.0)

    @property
    def ok(self):
        return self.rel_err <= CONSTANT_RTOL

    def to_dict(self):
        return {"name": self.name, "measured": self.measured, "expected": self.expected,
                "rel_err": self.rel_err, "ok": self.ok}


@dataclass(frozen=True)
class AsymptoticConstants:
    A0: float
    A1: float | None
    A2: float | None
    v_case: ex.VCase
    checks: tuple

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def to_dict(self):
        return {"A0": self.A0, "A1": self.A1, "A2": self.A2,
                "v_case": self.v_case.value, "applies": self.applies,
                "checks": [c.to_dict() for c in self.checks], "ok": self.ok}

    @property
    def applies(self):
        return {ex.VCase.PLAIN: "A1", ex.VCase.ANOMALOUS: "A2",
                ex.VCase.LOG: "A0^p|S^(n-1)|"}[self.v_case]


def constant_A0(bundle):
    """``int v^q |y|^-sigma1 dy``."""
    p = bundle.params
    return sphere_area(p.n) * weighted_integral(bundle.v, p.n - 1.0 - p.sigma1, p.q)


def constant_A1(bundle):
    """``int u^p |y|^-sigma2 dy``; raises DivergentIntegral unless ``p(n-alpha)+sigma2 > n``."""
    p = bundle.params
    return sphere_area(p.n) * weighted_integral(bundle.u, p.n - 1.0 - p.sigma2, p.p)


def constant_A2(bundle, A0=None, profile=None):
    """``A0^p`` times the Riesz moment at ``beta = p(n-alpha)+sigma2``."""
    p = bundle.params
    A0 = constant_A0(bundle) if A0 is None else A0
    profile = profile or get_profile(p.n, p.alpha)
    beta = p.p * (p.n - p.alpha) + p.sigma2
    return A0 ** p.p * riesz_moment(profile, beta)


def _amplitude(field, window, theta):
    """``r^theta f(r)`` at the outer end of the window."""
    g = field.grid
    sel = _window_nodes(g, window)
    i = np.nonzero(sel)[0][-1]
    return float(g.r[i] ** theta * field.values[i])


def _log_amplitude(field, window, theta):
    """Slope of ``r^theta f`` against ``ln r``: the coefficient of ``r^-theta ln r``."""
    g = field.grid
    sel = _window_nodes(g, window)
    y = g.r[sel] ** theta * field.values[sel]
    slope, _ = np.polyfit(g.x[sel], y, 1)
    return float(slope)


def asymptotic_constants(bundle, window=None, profile=None):
    """A0 and, by case, A1 or A2, cross-checked against the tail amplitudes."""
    _require_converged(bundle)
    p = bundle.params
    d = ex.derive(p)
    window = tuple(window or default_window(bundle.grid))
    A0 = constant_A0(bundle)
    checks = [ConstantCheck("u_tail_vs_A0", _amplitude(bundle.u, window, d.fast_u), A0)]
    A1 = A2 = None
    if d.v_case is ex.VCase.PLAIN:
        A1 = constant_A1(bundle)
        checks.append(ConstantCheck("v_tail_vs_A1", _amplitude(bundle.v, window, d.fast_v), A1))
    elif d.v_case is ex.VCase.ANOMALOUS:
        A2 = constant_A2(bundle, A0, profile)
        sel = _window_nodes(bundle.grid, window)
        amp = _v_tail(p, bundle.grid.r[sel], bundle.v.values[sel])[3]
        checks.append(ConstantCheck("v_tail_vs_A2", amp, A2))
    else:
        expected = A0 ** p.p * sphere_area(p.n)
        checks.append(ConstantCheck("v_log_tail_vs_A0p_S",
                                    _log_amplitude(bundle.v, window, d.fast_v), expected))
    return AsymptoticConstants(A0, A1, A2, d.v_case, tuple(checks))


@dataclass(frozen=True)
class PohozaevReport:
    E1: float
    E2: float
    energy_gap: float
    criticality_coefficient: float
    product: float

    def to_dict(self):
        return {"E1": self.E1, "E2": self.E2, "energy_gap": self.energy_gap,
                "criticality_coefficient": self.criticality_coefficient,
                "product": self.product}


def energies(params, u, v):
    S = sphere_area(params.n)
    E1 = S * weighted_integral(v, params.n - 1.0 - params.sigma1, params.q + 1.0)
    E2 = S * weighted_integral(u, params.n - 1.0 - params.sigma2, params.p + 1.0)
    return E1, E2


def pohozaev_report(bundle, require_converged=True):
    """Energies ``E1 = int v^(q+1)|x|^-sigma1``, ``E2 = int u^(p+1)|x|^-sigma2``.

    For a genuine solution with finite energies they agree, and the
    criticality coefficient times the energy vanishes.
    """
    if require_converged:
        _require_converged(bundle)
    p = bundle.params
    E1, E2 = energies(p, bundle.u, bundle.v)
    S = ex.criticality_coefficient(p)
    return PohozaevReport(E1, E2, abs(E1 - E2) / max(E1, E2), S, S * E1)


@dataclass(frozen=True)
class ScanRow:
    field: str
    exponent: float
    radii: tuple
    norms: tuple
    ratios: tuple
    finite: bool

    def to_dict(self):
        return {"field": self.field, "exponent": self.exponent, "radii": list(self.radii),
                "norms": list(self.norms), "ratios": list(self.ratios), "finite": self.finite}


def endpoints(params):
    """Integrability endpoints ``(r_u, r_v)`` of fast-decay solutions."""
    n, a = params.n, params.alpha
    ru = n / (n - a)
    anomalous = params.p * (n - a) - (a - params.sigma2)
    rv = max(ru, n / anomalous) if anomalous > 0 else math.inf
    return ru, rv


def integrability_scan(bundle, exponents=(3.0, 4.0, 6.0), radii=SCAN_RADII, fields=("u", "v")):
    """Truncated ``L^r(B_R)`` norms for growing ``R``.

    A norm counts as finite when its last successive ratio is within 1 % of 1.
    """
    _require_converged(bundle)
    n = bundle.params.n
    S = sphere_area(n)
    rows = []
    for name in fields:
        f = getattr(bundle, name)
        radii_ok = tuple(R for R in radii if R <= f.grid.r_max * (1 + 1e-12))
        for r in exponents:
            vals = truncated_integral(f, n - 1.0, r, np.array(radii_ok))
            norms = tuple(float((S * x) ** (1.0 / r)) for x in vals)
            ratios = tuple(b / a for a, b in zip(norms[:-1], norms[1:]))
            finite = bool(ratios) and abs(ratios[-1] - 1.0) <= STABLE_RTOL
            rows.append(ScanRow(name, float(r), radii_ok, norms, ratios, finite))
    return rows


@dataclass(frozen=True)
class BoundReport:
    C_u: float
    c_u: float
    c_v: float
    theta_u: float
    theta_v: float
    lower_exponent_v: float

    def to_dict(self):
        return {"C_u": self.C_u, "c_u": self.c_u, "c_v": self.c_v,
                "theta_u": self.theta_u, "theta_v": self.theta_v,
                "lower_exponent_v": self.lower_exponent_v}


def bound_checks(bundle, window=None, rate_tol=RATE_TOL):
    """Slow upper bound, fast lower bounds and the no-slower-than-slow exclusion.

    Checked on ``[1, r_max]``; the decay exponents come from tail fits on
    ``window``.  Any failure raises :class:`BoundViolation` naming the law.
    """
    _require_converged(bundle)
    p = bundle.params
    d = ex.derive(p)
    g = bundle.grid
    sel = g.r >= 1.0
    r = g.r[sel]
    u = bundle.u.values[sel]
    v = bundle.v.values[sel]
    lower_v = min(p.n - p.alpha, p.p * (p.n - p.alpha) - (p.alpha - p.sigma2))
    C_u = float(np.max(u * (1 + r) ** d.q0))
    c_u = float(np.min(u * (1 + r) ** (p.n - p.alpha)))
    c_v = float(np.min(v * (1 + r) ** lower_v))
    window = tuple(window or default_window(g))
    wsel = _window_nodes(g, window)
    tu = fit_tail(g.r[wsel], bundle.u.values[wsel]).tail.theta
    tv = _v_tail(p, g.r[wsel], bundle.v.values[wsel])[0]
    if not (math.isfinite(C_u) and C_u > 0):
        raise BoundViolation("slow upper bound u (1+r)^q0 <= C")
    if tu < d.q0 - rate_tol:
        raise BoundViolation(
            "slow upper bound u (1+r)^q0 <= C",
            f"u decays like r^-{tu:.4g}, slower than the slow rate {d.q0:.4g}")
    if tv < d.p0 - rate_tol:
        raise BoundViolation(
            "slow upper bound v (1+r)^p0 <= C",
            f"v decays like r^-{tv:.4g}, slower than the slow rate {d.p0:.4g}")
    if not c_u > 0 or tu > p.n - p.alpha + rate_tol:
        raise BoundViolation(
            "fast lower bound u (1+r)^(n-alpha) >= c",
            f"u decays like r^-{tu:.4g}, faster than r^-{p.n - p.alpha:.4g}")
    if not c_v > 0 or tv > lower_v + rate_tol:
        raise BoundViolation(
            "fast lower bound v (1+r)^min(...) >= c",
            f"v decays like r^-{tv:.4g}, faster than r^-{lower_v:.4g}")
    return BoundReport(C_u, c_u, c_v, tu, tv, lower_v)


def profile_csv(bundle):
    """CSV text with columns r, u, v and the local log-slopes of u and v."""
    g = bundle.grid
    su = bundle.u.log_slope(g.r)
    sv = bundle.v.log_slope(g.r)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "u", "v", "slope_u", "slope_v"])
    for row in zip(g.r, bundle.u.values, bundle.v.values, su, sv):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def full_report(bundle, window=None, rate_tol=RATE_TOL, exponents=None):
    """Every analysis as one JSON-ready dict; failures are recorded, not raised."""
    out = {}
    rates = None
    try:
        rates = rate_report(bundle, window, rate_tol)
        out["rates"] = rates.to_dict()
    except (FitError, DomainError) as exc:
        out["rates"] = {"error": str(exc)}
    for key, fn in (("constants", lambda: asymptotic_constants(bundle, window).to_dict()),
                    ("pohozaev", lambda: pohozaev_report(bundle).to_dict()),
                    ("bounds", lambda: bound_checks(bundle, window, rate_tol).to_dict())):
        try:
            out[key] = fn()
        except (DivergentIntegral, FitError, DomainError, BoundViolation) as exc:
            out[key] = {"error": f"{type(exc).__name__}: {exc}"}
    ru, rv = endpoints(bundle.params)
    if exponents is None:
        exponents = sorted({ru, 1.5 * ru, 2.0 * ru})
    try:
        out["integrability"] = {"endpoint_u": ru, "endpoint_v": rv,
                                "rows": [r.to_dict() for r in integrability_scan(bundle, exponents)]}
    except (DivergentIntegral, DomainError) as exc:
        out["integrability"] = {"error": f"{type(exc).__name__}: {exc}"}
    return out
