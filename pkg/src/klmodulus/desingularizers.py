"""Rival desingularizing functions and pointwise comparison.

* level-set integrand u(r) = 1 / inf{dist(0, df(x)) : f(x) - base = r, |x - xbar| < eps}
  integrated through a continuous decreasing majorant,
* the two-branch convex variant with an affine continuation,
* the growth-modulus construction phi(t) = int_0^t m^{-1}(s)/s ds,
* the linear certificate at a non-stationary point.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (ConfigurationError, DivergentIntegralError, EmptyLevelSetError,
                     NotConvexError, NotMonotoneError, StationaryPointError, UInfiniteError,
                     UNotIntegrableError)
from .function_model import Piecewise1D
from .intervals import INF
from .modulus import (ClosedForm, Desingularizer, IntegralDesingularizer, KlContext, Linear,
                      verify_gkl)
from .numerics import convexity_check, integrate_decreasing, invert_monotone

LEVEL_TOL = 1e-12


# ---------------------------------------------------------------------------
# level-set integrand
# ---------------------------------------------------------------------------

def _level_points(f: Piecewise1D, base: float, r: float, xbar: float, eps: float):
    """Solutions of f(x) = base + r with |x - xbar| < eps, and whether a flat stretch sits on it."""
    pts = []
    flat = False
    level = base + r
    tol = LEVEL_TOL * abs(r) + 4 * math.ulp(level)
    for seg in f.segments:
        va, vb = seg.end_values
        lo_v, hi_v = min(va, vb), max(va, vb)
        if va == vb:
            if abs(va - level) <= tol and seg.hi > xbar - eps and seg.lo < xbar + eps:
                flat = True
            continue
        if lo_v < level < hi_v:
            x = seg.form.inverse(level, seg.lo, seg.hi)
            if seg.lo < x < seg.hi and abs(x - xbar) < eps:
                pts.append(x)
    for b, bi in f.breakpoints.items():
        if abs(bi.value - level) <= tol and abs(b - xbar) < eps:
            pts.append(b)
    return pts, flat


def bdlm_u(f: Piecewise1D, xbar: float, eps: float, r0: float, r: float) -> float:
    """u(r) for 0 < r <= r0, measured from f(xbar)."""
    if not 0 < r <= r0:
        raise ConfigurationError(f"r={r} outside (0, {r0}]")
    base = f.eval(xbar)
    pts, flat = _level_points(f, base, r, xbar, eps)
    if flat:
        raise UInfiniteError(f"f is constant at level {r}: u({r}) = inf")
    if not pts:
        raise EmptyLevelSetError(f"level set [f = {r}] is empty near {xbar}")
    d = min(f.dist_zero_subdiff(x) for x in pts)
    if d == 0:
        raise UInfiniteError(f"stationary point on the level set {r}")
    return 1.0 / d


@dataclass
class BdlmIntegrand:
    u: Callable[[float], float]
    r0: float
    majorant: Callable[[float], float] | None = None
    descriptor: dict = field(default_factory=dict)
    knots: tuple = ()


def _level_knots(f: Piecewise1D, xbar: float, eps: float, r0: float) -> list[float]:
    base = f.eval(xbar)
    levels = set()
    for seg in f.segments:
        if seg.hi <= xbar - eps or seg.lo >= xbar + eps:
            continue
        for x in (seg.lo, seg.hi):
            if math.isfinite(x):
                v = seg.value(x) - base
                if 0 < v < r0:
                    levels.add(v)
        for x in (xbar - eps, xbar + eps):
            if seg.lo < x < seg.hi:
                v = seg.value(x) - base
                if 0 < v < r0:
                    levels.add(v)
    return sorted(levels)


def _safe_u(f, xbar, eps, r0):
    def u(r):
        try:
            return bdlm_u(f, xbar, eps, r0, r)
        except EmptyLevelSetError:
            return 0.0
    return u


def decreasing_envelope(u: Callable[[float], float], knots: Sequence[float], r0: float):
    """s -> sup_{s <= r < r0} u(r), assuming u monotone between consecutive knots.

    Returns the envelope together with its jump list ``[(level, left, right)]``.
    """
    edges = [0.0, *knots, r0]
    n = len(edges) - 1

    def inner(a, b):
        w = b - a
        if math.isinf(w):
            return u(a + 1.0), u(a + 1.0)
        return u(a + 1e-9 * w), u(b - 1e-9 * w)

    ends = [inner(edges[i], edges[i + 1]) for i in range(n)]
    at_knot = [u(k) for k in knots]
    # tail[i] = sup of u over [edges[i+1], r0)
    tail = [0.0] * n
    run = 0.0
    for i in range(n - 1, -1, -1):
        tail[i] = run
        run = max(run, ends[i][0], ends[i][1])
        if i > 0:
            run = max(run, at_knot[i - 1])

    def env(s):
        i = min(max(bisect.bisect_left(edges, s) - 1, 0), n - 1)
        a, b = edges[i], edges[i + 1]
        here = u(s) if s > a else ends[i][0]
        right = ends[i][1] if s < b else 0.0
        return max(here, right, tail[i])

    jumps = []
    for k in knots:
        i = bisect.bisect_left(edges, k)
        left = env(k)
        right = max(ends[i][0], ends[i][1], tail[i])
        if left > right * (1 + 1e-9) + 1e-12:
            jumps.append((k, left, right))
    return env, jumps


def ramp_majorant(env: Callable[[float], float], jumps, knots: Sequence[float], r0: float,
                  width: Callable[[float, float], float]):
    """Replace each downward jump of env by a linear ramp starting at the jump."""
    ramps = []
    for k, left, right in jumps:
        i = bisect.bisect_right(knots, k)
        gap = (knots[i] if i < len(knots) else r0) - k
        if math.isinf(gap):
            gap = 1.0
        ramps.append((k, k + width(k, gap), left, right))

    def ubar(s):
        v = env(s)
        for a, b, left, right in ramps:
            if a < s < b:
                v = max(v, left + (right - left) * (s - a) / (b - a))
        return v

    return ubar, ramps


def bdlm_phi(f: Piecewise1D, xbar: float, eps: float, r0: float,
             majorant_policy: str = "infimal-ramp", n: int = 10,
             tol: float = 1e-9) -> Desingularizer:
    """phi(t) = int_0^t ubar for a continuous decreasing majorant ubar of u.

    Policies: ``infimal-ramp`` (ramps of width min(1/n, gap)) and
    ``step-hold`` (ramps across the whole next gap). When u is already
    continuous and decreasing the policy is irrelevant and ubar = u.
    """
    if majorant_policy not in ("infimal-ramp", "step-hold"):
        raise ConfigurationError(f"unknown majorant policy {majorant_policy!r}")
    u = _safe_u(f, xbar, eps, r0)
    knots = _level_knots(f, xbar, eps, r0)
    env, jumps = decreasing_envelope(u, knots, r0)
    if jumps:
        if majorant_policy == "infimal-ramp":
            ubar, ramps = ramp_majorant(env, jumps, knots, r0, lambda k, gap: min(1.0 / n, gap))
        else:
            ubar, ramps = ramp_majorant(env, jumps, knots, r0, lambda k, gap: gap)
    else:
        ubar, ramps = env, []
    probe = min(r0, 1.0) / 2
    try:
        integrate_decreasing(ubar, probe, tol=tol)
    except DivergentIntegralError as exc:
        raise UNotIntegrableError(str(exc)) from exc
    all_knots = sorted(set(knots) | {a for a, *_ in ramps} | {b for _, b, *_ in ramps})
    phi = IntegralDesingularizer(ubar, r0, all_knots, provenance="bdlm",
                                 name=f"bdlm[{majorant_policy}" + (f",n={n}]" if majorant_policy == "infimal-ramp" else "]"),
                                 tol=tol)
    phi.integrand = BdlmIntegrand(u, r0, ubar, {"policy": majorant_policy, "n": n,
                                                "ramps": [list(r) for r in ramps]}, tuple(knots))
    return phi


def bdlm_phi_convex(f: Piecewise1D, r0: float, rbar: float | None = None, xbar: float = 0.0,
                    limiting: bool = False, tol: float = 1e-9) -> Desingularizer:
    """Two-branch desingularizer for convex f with min value 0 at xbar.

    phi = int_0^t u up to rbar, then the tangent line with slope u(rbar).
    ``rbar`` defaults to 0.9*r0; ``limiting=True`` takes rbar = r0.
    """
    if rbar is None:
        rbar = r0 if limiting else 0.9 * r0
    if not 0 < rbar <= r0:
        raise ConfigurationError("need 0 < rbar <= r0")
    band = f.level_band(f.eval(xbar), 0.0, 3 * r0)
    lo, hi = band.lo, band.hi
    lo = max(lo, xbar - 1e3)
    hi = min(hi, xbar + 1e3)
    rep = convexity_check(f.eval, np.linspace(lo, hi, 2001)[1:-1])
    if not rep.passed:
        raise NotConvexError(f"second-difference test failed: {rep.violation}")
    u = _safe_u(f, xbar, INF, INF)
    knots = [k for k in _level_knots(f, xbar, INF, INF) if k < rbar]
    try:
        integrate_decreasing(u, rbar, tol=tol, points=knots)
    except DivergentIntegralError as exc:
        raise UNotIntegrableError(str(exc)) from exc
    except NotMonotoneError as exc:
        raise NotConvexError(str(exc)) from exc
    inner = IntegralDesingularizer(u, INF, knots, provenance="bdlm-convex", tol=tol)
    slope = u(rbar)
    top = inner(rbar)

    def value(t):
        return inner(t) if t <= rbar else top + slope * (t - rbar)

    def deriv(t):
        return u(t) if t <= rbar else slope

    phi = ClosedForm(value, deriv, INF, provenance="bdlm-convex",
                     name=f"bdlm-convex[rbar={rbar:g}]",
                     formula=f"int_0^t u for t <= {rbar!r}; then {top!r} + {slope!r}*(t - {rbar!r})")
    phi.rbar = rbar
    return phi


# ---------------------------------------------------------------------------
# growth condition
# ---------------------------------------------------------------------------

class GrowthModulus:
    """Strictly increasing continuous m with m(0) = 0."""

    def __init__(self, m: Callable[[float], float], rho: float = INF,
                 inverse: Callable[[float], float] | None = None, knots: Iterable[float] = ()):
        if m(0.0) != 0:
            raise ConfigurationError("growth modulus must vanish at 0")
        grid = np.concatenate([[0.0], np.geomspace(1e-8, 1e3, 400)])
        vals = [m(float(x)) for x in grid]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("growth modulus is not strictly increasing on the probe grid")
        self.m = m
        self.rho = rho
        self._inverse = inverse
        self.knots = tuple(knots)

    def inverse(self, s: float) -> float:
        if self._inverse is not None:
            return self._inverse(s)
        hi = 1.0
        while self.m(hi) < s:
            hi *= 2.0
        return invert_monotone(self.m, s, 0.0, hi)

    def integrand(self, s: float) -> float:
        return self.inverse(s) / s


def growth_desingularizer(gm: GrowthModulus, tol: float = 1e-9) -> Desingularizer:
    return IntegralDesingularizer(gm.integrand, gm.rho, gm.knots, provenance="growth",
                                  name="growth", tol=tol)


def growth_phi(gm: GrowthModulus, t: float, tol: float = 1e-9) -> float:
    if not 0 < t <= gm.rho:
        raise ConfigurationError(f"t={t} outside (0, {gm.rho})")
    res = integrate_decreasing(gm.integrand, t, tol=tol, points=gm.knots)
    return res.value


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class CompareReport:
    n: int
    less: int
    equal: int
    greater: int
    max_gap: float
    min_gap: float
    first_crossing: float | None = None
    first_strict: float | None = None

    @property
    def a_le_b(self) -> bool:
        return self.greater == 0

    @property
    def all_equal(self) -> bool:
        return self.equal == self.n

    def to_json(self):
        return {"n": self.n, "a<b": self.less, "a=b": self.equal, "a>b": self.greater,
                "max_gap": self.max_gap, "min_gap": self.min_gap,
                "first_crossing": self.first_crossing, "first_strict": self.first_strict,
                "dominance": self.a_le_b}


def compare(phi_a, phi_b, grid: Iterable[float], tol: float = 1e-9) -> CompareReport:
    """Pointwise order of two functions on a grid; gaps are b - a."""
    less = equal = greater = 0
    max_gap, min_gap = -INF, INF
    crossing = strict = None
    n = 0
    for t in grid:
        t = float(t)
        a, b = phi_a(t), phi_b(t)
        gap = b - a
        n += 1
        max_gap, min_gap = max(max_gap, gap), min(min_gap, gap)
        if abs(gap) <= tol:
            equal += 1
        elif gap > 0:
            less += 1
            if strict is None:
                strict = t
        else:
            greater += 1
            if crossing is None:
                crossing = t
    return CompareReport(n, less, equal, greater, max_gap, min_gap, crossing, strict)


# ---------------------------------------------------------------------------
# non-stationary points
# ---------------------------------------------------------------------------

@dataclass
class NonstationaryCertificate:
    c: float
    theta: float
    eps: float
    phi: Desingularizer


def nonstationary_certificate(f: Piecewise1D, xbar: float, n: int = 2001,
                              max_halvings: int = 60) -> NonstationaryCertificate:
    """phi(t) = c*t with c = 2/dist(0, df(xbar)), valid on a ball of radius eps."""
    d0 = f.dist_zero_subdiff(xbar)
    if d0 == 0:
        raise StationaryPointError(f"x={xbar} is stationary")
    if math.isinf(d0):
        raise ConfigurationError(f"df({xbar}) is empty")
    eps = min(1.0, d0 / 4)
    for _ in range(max_halvings):
        xs = np.linspace(xbar - eps, xbar + eps, n)[1:-1]
        ok = True
        for x in xs:
            if not math.isfinite(f.eval(x)):
                continue
            d = f.dist_zero_subdiff(float(x))
            if d < d0 / 2:
                ok = False
                break
        if ok:
            phi = Linear(2.0 / d0, INF, provenance="user", name="nonstationary")
            return NonstationaryCertificate(2.0 / d0, 0.0, eps, phi)
        eps /= 2
    raise StationaryPointError(f"no ball around {xbar} keeps dist(0, df) >= {d0 / 2}")


def certificate_context(f: Piecewise1D, cert: NonstationaryCertificate, xbar: float) -> KlContext:
    from .intervals import Interval, IntervalSet
    return KlContext(float(xbar), IntervalSet([Interval.open(xbar - cert.eps, xbar + cert.eps)]),
                     INF, f.eval(xbar))
