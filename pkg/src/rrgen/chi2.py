"""Chi-squared distribution: CDF, survival function, quantile and thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

MAX_DOF = 10**6
_EPS = 1e-14
_MAX_ITER = 100_000
_TINY = 1e-300


@dataclass(frozen=True)
class Chi2Params:
    dof: int
    alpha: float

    def __post_init__(self):
        _check_dof(self.dof)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def _check_dof(dof) -> None:
    if int(dof) != dof or dof < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")
    if dof > MAX_DOF:
        raise ValueError(f"degrees of freedom capped at {MAX_DOF}, got {dof}")


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    # Q(a, x) by the Legendre continued fraction, modified Lentz evaluation
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_pq(a: float, x: float) -> tuple[float, float]:
    """Regularised incomplete gamma pair ``(P(a, x), Q(a, x))``."""
    if x < 0 or a <= 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        p = min(_gamma_series(a, x), 1.0)
        return p, 1.0 - p
    q = min(_gamma_cfrac(a, x), 1.0)
    return 1.0 - q, q


def chi2_cdf(x: float, dof: int) -> float:
    """P(X <= x) for X ~ chi-squared with ``dof`` degrees of freedom."""
    _check_dof(dof)
    if x < 0:
        raise ValueError(f"chi2_cdf needs x >= 0, got {x}")
    return gammainc_pq(dof / 2.0, x / 2.0)[0]


def chi2_sf(x: float, dof: int) -> float:
    """Right-tail probability P(X > x)."""
    _check_dof(dof)
    if x < 0:
        raise ValueError(f"chi2_sf needs x >= 0, got {x}")
    return gammainc_pq(dof / 2.0, x / 2.0)[1]


def chi2_pdf(x: float, dof: int) -> float:
    _check_dof(dof)
    if x < 0:
        return 0.0
    k = dof / 2.0
    if x == 0:
        return 0.5 if dof == 2 else (math.inf if dof == 1 else 0.0)
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - math.lgamma(k))


def _wilson_hilferty(p: float, dof: int) -> float:
    z = NormalDist().inv_cdf(p)
    c = 2.0 / (9.0 * dof)
    return dof * max(1.0 - c + z * math.sqrt(c), 1e-3) ** 3


def chi2_inv(p: float, dof: int) -> float:
    """Quantile: the ``x`` with ``chi2_cdf(x, dof) == p``.

    Newton iteration from the Wilson-Hilferty guess inside a maintained
    bracket; a step that leaves the bracket is replaced by bisection. The
    upper tail is matched through the survival function so thresholds for
    small false-alarm rates keep full relative accuracy.
    """
    _check_dof(dof)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"chi2_inv needs 0 <= p < 1, got {p}")
    if p == 0.0:
        return 0.0
    upper = p > 0.5
    target = 1.0 - p if upper else p

    def f(x):
        pq = gammainc_pq(dof / 2.0, x / 2.0)
        # increasing in x in both branches
        return (target - pq[1]) if upper else (pq[0] - target)

    lo, hi = 0.0, max(2.0 * dof, 1.0)
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
    x = min(max(_wilson_hilferty(p, dof), lo), hi)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        slope = chi2_pdf(x, dof)
        step = fx / slope if slope > 0 else math.inf
        nx = x - step
        if not lo < nx < hi:
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 4e-16 * max(x, 1e-300) or hi - lo <= 4e-16 * hi:
            return nx
        x = nx
    return x


def threshold_for(params: Chi2Params) -> float:
    """Detection threshold: exceeded with probability ``alpha`` under H0."""
    return chi2_inv(1.0 - params.alpha, params.dof)
