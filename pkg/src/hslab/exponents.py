"""Parameter validation, derived exponents, decay laws and regime classification.

Everything here is plain double-precision arithmetic on immutable values.
"""
from dataclasses import dataclass, replace
from enum import Enum
import math
import random

from .errors import DomainError

CRITICAL_RTOL = 1e-12
BOOTSTRAP_OVERFLOW = 1e12


class VCase(str, Enum):
    PLAIN = "Plain"
    LOG = "Log"
    ANOMALOUS = "Anomalous"


class RegimeKind(str, Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


@dataclass(frozen=True)
class SystemParams:
    """The tuple (n, alpha, p, q, sigma1, sigma2).

    ``u = I_alpha(v^q |y|^-sigma1)`` and ``v = I_alpha(u^p |y|^-sigma2)``.
    Construct through :func:`validate` to get the invariants checked.
    """

    n: int
    alpha: float
    p: float
    q: float
    sigma1: float
    sigma2: float

    def as_tuple(self):
        return (self.n, self.alpha, self.p, self.q, self.sigma1, self.sigma2)

    def as_dict(self):
        return {"n": self.n, "alpha": self.alpha, "p": self.p, "q": self.q,
                "sigma1": self.sigma1, "sigma2": self.sigma2}

    def swapped(self):
        """The same system with the roles of u and v exchanged."""
        return replace(self, p=self.q, q=self.p, sigma1=self.sigma2, sigma2=self.sigma1)


def validate(n, alpha, p, q, sigma1, sigma2, *, for_solver=False):
    """Check the parameter constraints and return a :class:`SystemParams`.

    With ``for_solver=True`` additionally require ``alpha > 1`` so that the
    radial kernel stays finite on the diagonal.
    """
    if isinstance(n, float):
        if not n.is_integer():
            raise DomainError("n", "n must be an integer")
        n = int(n)
    if not isinstance(n, int) or isinstance(n, bool):
        raise DomainError("n", "n must be an integer")
    alpha, p, q, sigma1, sigma2 = (float(x) for x in (alpha, p, q, sigma1, sigma2))
    for name, val in (("alpha", alpha), ("p", p), ("q", q),
                      ("sigma1", sigma1), ("sigma2", sigma2)):
        if not math.isfinite(val):
            raise DomainError(name, f"{name} must be finite")
    if n < 3:
        raise DomainError("n", "n >= 3")
    if not 0.0 < alpha < n:
        raise DomainError("alpha", "alpha not in (0, n)")
    if p <= 0:
        raise DomainError("p", "p > 0")
    if q <= 0:
        raise DomainError("q", "q > 0")
    if p * q <= 1:
        raise DomainError(
            "pq", "pq > 1",
            "pq <= 1: nonexistence regime, the system has no positive solution "
            "when pq is in (0, 1]")
    if not 0.0 <= sigma1 < alpha:
        raise DomainError("sigma1", "sigma1 not in [0, alpha)")
    if not 0.0 <= sigma2 < alpha:
        raise DomainError("sigma2", "sigma2 not in [0, alpha)")
    if for_solver and alpha <= 1.0:
        raise DomainError("alpha", "alpha > 1 required by the radial solver")
    return SystemParams(n, alpha, p, q, sigma1, sigma2)


@dataclass(frozen=True)
class DerivedExponents:
    p0: float
    q0: float
    r0: float
    s0: float
    fast_u: float
    fast_v: float
    fast_v_log: bool
    v_case: VCase
    # True when q >= p and sigma1 >= sigma2, the ordering the fast-rate law assumes
    ordering_ok: bool

    def as_dict(self):
        return {"p0": self.p0, "q0": self.q0, "r0": self.r0, "s0": self.s0,
                "fast_u": self.fast_u, "fast_v": self.fast_v,
                "fast_v_log": self.fast_v_log, "v_case": self.v_case.value,
                "ordering_ok": self.ordering_ok}


def slow_rates(params):
    """Return ``(p0, q0)``."""
    n, a, p, q, s1, s2 = params.as_tuple()
    d = p * q - 1.0
    p0 = (a * (1.0 + p) - (s2 + s1 * p)) / d
    q0 = (a * (1.0 + q) - (s1 + s2 * q)) / d
    return p0, q0


def v_case_of(params, rtol=CRITICAL_RTOL):
    n, a, p = params.n, params.alpha, params.p
    lhs = p * (n - a) + params.sigma2
    if abs(lhs - n) <= rtol * max(abs(lhs), n):
        return VCase.LOG
    return VCase.PLAIN if lhs > n else VCase.ANOMALOUS


def _close(x, y, rtol):
    return abs(x - y) <= rtol * max(1.0, abs(x), abs(y))


def derive(params):
    n, a, p, q, s1, s2 = params.as_tuple()
    p0, q0 = slow_rates(params)
    if not (_close(q0, q * p0 - (a - s1), 1e-12) and _close(p0, p * q0 - (a - s2), 1e-12)):
        raise ArithmeticError("scaling relations between p0 and q0 failed")
    case = v_case_of(params)
    if case is VCase.ANOMALOUS:
        fast_v = p * (n - a) - (a - s2)
    else:
        fast_v = n - a
    return DerivedExponents(
        p0=p0, q0=q0,
        r0=n / q0 if q0 > 0 else math.inf,
        s0=n / p0 if p0 > 0 else math.inf,
        fast_u=n - a, fast_v=fast_v, fast_v_log=case is VCase.LOG, v_case=case,
        ordering_ok=(q >= p and s1 >= s2),
    )


def criticality_coefficient(params):
    """(n-sigma1)/(1+q) + (n-sigma2)/(1+p) - (n-alpha)."""
    n, a, p, q, s1, s2 = params.as_tuple()
    return (n - s1) / (1.0 + q) + (n - s2) / (1.0 + p) - (n - a)


def _criticality_scale(params):
    n, a, p, q, s1, s2 = params.as_tuple()
    return max((n - s1) / (1.0 + q), (n - s2) / (1.0 + p), n - a)


def _sign(x, scale, rtol):
    if abs(x) <= rtol * scale:
        return 0
    return 1 if x > 0 else -1


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    theorem_a_nonexistence: bool
    criticality: float
    slow_sum_gap: float
    notes: str

    def as_dict(self):
        return {"kind": self.kind.value,
                "theorem_a_nonexistence": self.theorem_a_nonexistence,
                "criticality": self.criticality,
                "slow_sum_gap": self.slow_sum_gap, "notes": self.notes}


def classify(params, rtol=CRITICAL_RTOL):
    S = criticality_coefficient(params)
    p0, q0 = slow_rates(params)
    gap = q0 + p0 - (params.n - params.alpha)
    sign_s = _sign(S, _criticality_scale(params), rtol)
    sign_gap = _sign(gap, max(abs(q0) + abs(p0), params.n - params.alpha), rtol)
    # both forms vanish together; only check away from the critical surface
    if sign_s != 0 and sign_gap != 0 and sign_s != sign_gap:
        raise ArithmeticError("criticality forms disagree in sign")
    kind = {1: RegimeKind.SUBCRITICAL, 0: RegimeKind.CRITICAL,
            -1: RegimeKind.SUPERCRITICAL}[sign_s]
    nonexist = max(p0, q0) >= params.n - params.alpha
    notes = []
    if kind is RegimeKind.SUBCRITICAL:
        notes.append("no bounded decaying positive solution expected (alpha > 1)")
    elif kind is RegimeKind.CRITICAL:
        notes.append("integrable (fast-decay) solutions possible")
    else:
        notes.append("no integrable solution; bounded decaying solutions decay slowly")
    if nonexist:
        notes.append("max(p0, q0) >= n - alpha: no positive solution")
    if params.alpha <= 1:
        notes.append("alpha <= 1: outside the radial solver's range")
    return Regime(kind, nonexist, S, gap, "; ".join(notes))


def bootstrap_sequence(params, b0, k):
    """Iterate b -> q(p b - alpha + sigma2) - alpha + sigma1 from ``b0``.

    Returns ``[b_0, ..., b_k]``.  The sequence is cut short once
    ``|b_j| > 1e12``; a truncated run is shorter than ``k + 1``.
    Each term is checked against ``(pq)^j (b0 - q0) + q0``.
    """
    if k < 0:
        raise DomainError("k", "k >= 0")
    n, a, p, q, s1, s2 = params.as_tuple()
    _, q0 = slow_rates(params)
    pq = p * q
    out = [float(b0)]
    b = float(b0)
    for j in range(1, k + 1):
        a_j = p * b - a + s2
        b = q * a_j - a + s1
        closed = pq ** j * (b0 - q0) + q0
        # q0 is a repelling fixed point: rounding in b0, q0 grows like (pq)^j
        scale = max(abs(closed), pq ** j * max(1.0, abs(b0), abs(q0)))
        if abs(b - closed) > 1e-10 * scale:
            raise ArithmeticError(f"bootstrap recurrence drifted at step {j}")
        if abs(b) > BOOTSTRAP_OVERFLOW:
            break
        out.append(b)
    return out


def random_params(rng=None, n_range=(3, 8), require_alpha_gt_1=False):
    """Draw a random valid parameter tuple (used by the property checks)."""
    rng = rng or random.Random()
    while True:
        n = rng.randint(*n_range)
        lo = 1.0 if require_alpha_gt_1 else 0.0
        alpha = rng.uniform(lo, n)
        p = rng.uniform(0.05, 10.0)
        q = rng.uniform(0.05, 10.0)
        if p * q <= 1.05 or alpha <= lo:
            continue
        s1 = rng.uniform(0.0, alpha)
        s2 = rng.uniform(0.0, alpha)
        try:
            return validate(n, alpha, p, q, s1, s2)
        except DomainError:
            continue
