"""Numerical kernels specialised to monotone and piecewise integrands."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import (AtOriginError, DivergentIntegralError, EmptyDomainError,
                     NotMonotoneError, OutOfRangeError)
from .intervals import Interval, IntervalSet

CLOSED_FORM_TOL = 1e-9
SAMPLED_TOL = 1e-6
DEFAULT_RADIUS = 1e3


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    converged: bool
    singular_endpoint_handled: bool
    panels: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"value": self.value, "error_estimate": self.error_estimate,
                "converged": self.converged,
                "singular_endpoint_handled": self.singular_endpoint_handled,
                "levels": len(self.panels)}


def _quad(h, a, b, points=(), tol=1e-12):
    inner = sorted(p for p in points if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(h, a, b, points=inner or None, epsabs=tol, epsrel=1e-12,
                                  limit=200)
    return val, err


def integrate_panel(h: Callable[[float], float], a: float, b: float, points: Iterable[float] = (),
                    tol: float = 1e-12) -> tuple[float, float]:
    """Proper integral of h over [a, b] with known discontinuity points."""
    if b <= a:
        return 0.0, 0.0
    return _quad(h, a, b, tuple(points), tol)


def integrate_decreasing(h: Callable[[float], float], t: float, tol: float = CLOSED_FORM_TOL,
                         points: Sequence[float] = (), max_levels: int = 400,
                         check_monotone: bool = True) -> QuadratureResult:
    """Improper integral of a decreasing nonnegative h over (0, t].

    The interval is cut into dyadic panels ``[t/2**(k+1), t/2**k]``. Each
    panel is integrated with Gauss-Kronrod (breaking at ``points``) and checked
    against its Riemann bracket ``[w*h(b), w*h(a)]``. The contribution of the
    remaining stretch ``(0, t/2**K]`` is extrapolated from the ratio of
    consecutive panel integrals.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    total = 0.0
    quad_err = 0.0
    panels = []
    prev = None
    ratios: list[float] = []
    hi = t
    h_hi = h(hi)
    for k in range(max_levels):
        lo = hi / 2.0
        h_lo = h(lo)
        if check_monotone:
            mid = 0.5 * (lo + hi)
            h_mid = h(mid)
            slack = SAMPLED_TOL * (1.0 + abs(h_lo))
            if not (h_lo + slack >= h_mid and h_mid + slack >= h_hi):
                raise NotMonotoneError(f"integrand increases on [{lo}, {hi}]")
        if math.isinf(h_lo):
            raise DivergentIntegralError(f"integrand is infinite at s={lo}")
        val, err = integrate_panel(h, lo, hi, points, tol=tol * 1e-3)
        w = hi - lo
        lower, upper = w * h_hi, w * h_lo
        bracket_slack = 1e-9 * (1.0 + abs(upper))
        if not (lower - bracket_slack <= val <= upper + bracket_slack):
            val = min(max(val, lower), upper)
        panels.append((lo, hi, val, lower, upper))
        total += val
        quad_err += err
        if total > 1.0 / tol:
            raise DivergentIntegralError("partial integrals exceed 1/tol")
        if prev is not None and prev > 0:
            ratios.append(val / prev)
        prev = val
        # tail (0, lo]: bracket from below by lo*h(lo), extrapolate geometrically above
        if val == 0.0 and k >= 1 and h_lo == 0.0:
            return QuadratureResult(total, quad_err, True, False, panels)
        if len(ratios) >= 3:
            r = max(ratios[-3:])
            if r < 1.0:
                tail = val * r / (1.0 - r)
                if tail <= 0.1 * tol:
                    err_est = quad_err + tail
                    return QuadratureResult(total + tail, err_est, err_est <= tol, k > 0, panels)
            elif len(ratios) >= 40 and min(ratios[-40:]) >= 1.0 - 1e-12:
                raise DivergentIntegralError("integrand is not integrable near 0")
        if lo < 1e-300:
            break
        hi, h_hi = lo, h_lo
    # budget exhausted: extrapolate the tail geometrically when the panels shrink
    r = max(ratios[-3:]) if len(ratios) >= 3 else 1.0
    tail = (prev or 0.0) * r / (1.0 - r) if r < 1.0 else math.inf
    err_est = quad_err + tail
    value = total + (tail if math.isfinite(tail) else 0.0)
    return QuadratureResult(value, err_est, err_est <= tol, True, panels)


def invert_monotone(g: Callable[[float], float], y: float, a: float, b: float,
                    tol: float = 0.0, max_iter: int = 400) -> float:
    """Solve g(x) = y for strictly monotone g on [a, b] (Brent's method).

    ``tol`` is an absolute tolerance on x; 0 means float resolution.
    """
    ga, gb = g(a), g(b)
    lo_v, hi_v = min(ga, gb), max(ga, gb)
    if not lo_v <= y <= hi_v:
        raise OutOfRangeError(f"y={y} outside [{lo_v}, {hi_v}]")
    if ga == y:
        return a
    if gb == y:
        return b
    x = optimize.brentq(lambda v: g(v) - y, a, b, xtol=tol if tol > 0 else 1e-300,
                        maxiter=max_iter)
    return float(x)


def _as_interval_set(domain) -> IntervalSet:
    if isinstance(domain, IntervalSet):
        return domain
    if isinstance(domain, Interval):
        return IntervalSet([domain])
    items = []
    for d in domain:
        items.append(d if isinstance(d, Interval) else Interval.closed(*d))
    return IntervalSet(items)


def grid_points(iv: Interval, n: int) -> np.ndarray:
    """Uniform n-point grid on iv, dropping open endpoints; nested under n -> 2n-1."""
    if iv.is_point:
        return np.array([iv.lo])
    xs = np.linspace(iv.lo, iv.hi, n)
    keep = np.ones(n, dtype=bool)
    if not iv.lo_closed:
        keep[0] = False
    if not iv.hi_closed:
        keep[-1] = False
    return xs[keep]


def grid_sup(q: Callable[[float], float], domain, n: int = 1001,
             radius: float = DEFAULT_RADIUS) -> float:
    """Maximum of q over a deterministic grid on each interval of domain.

    Unbounded pieces are truncated to ``[-radius, radius]``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    dom = _as_interval_set(domain)
    if not dom.bounded:
        dom = dom.clip(radius)
    if dom.is_empty:
        raise EmptyDomainError("supremum over the empty set")
    best = -math.inf
    for iv in dom:
        for x in grid_points(iv, n):
            v = q(float(x))
            if v > best:
                best = v
    return best


def left_derivative(phi, t: float, tol: float = SAMPLED_TOL) -> float:
    """Left derivative of a concave function at t > 0.

    Closed-form desingularizers answer exactly; otherwise a backward
    difference quotient is used, which over-estimates by concavity.
    """
    if t <= 0:
        raise AtOriginError("left derivative requested at t <= 0")
    exact = getattr(phi, "left_deriv", None)
    if exact is not None and getattr(phi, "has_exact_derivative", False):
        return exact(t)
    step = min(tol, t / 2.0)
    return (phi(t) - phi(t - step)) / step


@dataclass
class ShapeReport:
    passed: bool
    checked: int
    violation: dict | None = None

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "checked": self.checked, "violation": self.violation}


def concavity_check(phi: Callable[[float], float], grid: Sequence[float], tol: float = 1e-9,
                    strict_increase: bool = True) -> ShapeReport:
    """Midpoint concavity on consecutive pairs, chord-slope decrease on triples,
    and strict increase on consecutive pairs."""
    ts = [float(t) for t in grid]
    vals = [phi(t) for t in ts]
    checked = 0
    for i in range(len(ts) - 1):
        a, b = ts[i], ts[i + 1]
        fa, fb = vals[i], vals[i + 1]
        checked += 1
        if strict_increase and not fb > fa:
            return ShapeReport(False, checked, {"kind": "not-increasing", "t": [a, b], "phi": [fa, fb]})
        m = 0.5 * (a + b)
        fm = phi(m)
        if fm < 0.5 * (fa + fb) - tol:
            return ShapeReport(False, checked, {"kind": "midpoint", "t": [a, m, b], "phi": [fa, fm, fb]})
    for i in range(len(ts) - 2):
        a, b, c = ts[i:i + 3]
        s1 = (vals[i + 1] - vals[i]) / (b - a)
        s2 = (vals[i + 2] - vals[i + 1]) / (c - b)
        checked += 1
        if s2 > s1 + tol * (1.0 + abs(s1)):
            return ShapeReport(False, checked, {"kind": "slope-increase", "t": [a, b, c],
                                                "phi": vals[i:i + 3]})
    return ShapeReport(True, checked)


def convexity_check(fn: Callable[[float], float], grid: Sequence[float], tol: float = 1e-9) -> ShapeReport:
    """Second-difference convexity test on a grid."""
    ts = [float(t) for t in grid]
    vals = [fn(t) for t in ts]
    for i in range(len(ts) - 2):
        a, b, c = ts[i:i + 3]
        s1 = (vals[i + 1] - vals[i]) / (b - a)
        s2 = (vals[i + 2] - vals[i + 1]) / (c - b)
        if s2 < s1 - tol * (1.0 + abs(s1)):
            return ShapeReport(False, i + 1, {"kind": "second-difference", "t": [a, b, c],
                                              "value": vals[i:i + 3]})
    return ShapeReport(True, max(len(ts) - 2, 0))
