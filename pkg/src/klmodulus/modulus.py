"""Exact modulus of the generalized concave KL property.

For a function f, an anchor with value ``base``, a neighbourhood U and a
value window eta, the supremum function

    h(s) = sup { 1 / dist(0, df(x)) : x in U, 0 < f(x) - base < eta, f(x) - base >= s }

is decreasing, and its integral is the smallest concave desingularizer
for that data.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (ConfigurationError, DivergentIntegralError, HInfiniteError, NoCoverError,
                     NonConstantOnSetError, NotConvexError, NotStationaryError, OutOfRangeError)
from .function_model import Piecewise1D
from .intervals import INF, Interval, IntervalSet
from .numerics import (CLOSED_FORM_TOL, concavity_check, convexity_check, integrate_decreasing,
                       integrate_panel, invert_monotone)


# ---------------------------------------------------------------------------
# desingularizers
# ---------------------------------------------------------------------------

class Desingularizer:
    """Concave, increasing phi on [0, eta) with phi(0) = 0.

    Subclasses implement ``_value`` and ``_deriv``.
    """

    has_exact_derivative = True

    def __init__(self, eta: float = INF, provenance: str = "user", name: str = "",
                 concave: bool = True):
        if not eta > 0:
            raise ConfigurationError("eta must be positive")
        self.eta = float(eta)
        self.provenance = provenance
        self.name = name or provenance
        self.concave = concave

    def _check(self, t):
        if t < 0 or t > self.eta:
            raise OutOfRangeError(f"t={t} outside [0, {self.eta})")

    def __call__(self, t: float) -> float:
        t = float(t)
        self._check(t)
        if t == 0.0:
            return 0.0
        return self._value(t)

    def left_deriv(self, t: float) -> float:
        t = float(t)
        if t <= 0:
            from .errors import AtOriginError
            raise AtOriginError("left derivative requested at t <= 0")
        self._check(t)
        return self._deriv(t)

    def values(self, ts: Iterable[float]) -> np.ndarray:
        return np.array([self(t) for t in ts])

    def _value(self, t):
        raise NotImplementedError

    def _deriv(self, t):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name, "provenance": self.provenance, "eta": _jnum(self.eta)}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, eta={self.eta})"


def _jnum(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


class ClosedForm(Desingularizer):
    """phi given by explicit value and left-derivative callables."""

    def __init__(self, value: Callable[[float], float], deriv: Callable[[float], float] | None = None,
                 eta: float = INF, provenance: str = "user", name: str = "", formula: str = ""):
        super().__init__(eta, provenance, name)
        self._fn = value
        self._dfn = deriv
        self.formula = formula
        self.has_exact_derivative = deriv is not None

    def _value(self, t):
        return float(self._fn(t))

    def _deriv(self, t):
        if self._dfn is None:
            step = min(1e-7, t / 2)
            return (self._fn(t) - self._fn(t - step)) / step
        return float(self._dfn(t))

    def describe(self):
        return {**super().describe(), "formula": self.formula}


class Linear(ClosedForm):
    def __init__(self, slope: float, eta: float = INF, provenance: str = "user", name: str = ""):
        self.slope = float(slope)
        super().__init__(lambda t: self.slope * t, lambda t: self.slope, eta, provenance,
                         name or f"{slope:g}*t", formula=f"{slope!r}*t")


class Zero(Desingularizer):
    """The phi == 0 convention for an empty band."""

    def __init__(self, eta: float = INF):
        super().__init__(eta, "exact-modulus", "zero")

    def _value(self, t):
        return 0.0

    def _deriv(self, t):
        return 0.0


class SumDesingularizer(Desingularizer):
    def __init__(self, parts: Sequence[Desingularizer], provenance: str = "user", name: str = ""):
        self.parts = tuple(parts)
        super().__init__(min(p.eta for p in self.parts), provenance, name or "sum")
        self.has_exact_derivative = all(p.has_exact_derivative for p in self.parts)

    def _value(self, t):
        return sum(p(t) for p in self.parts)

    def _deriv(self, t):
        return sum(p.left_deriv(t) for p in self.parts)

    def describe(self):
        return {**super().describe(), "parts": [p.describe() for p in self.parts]}


class IntegralDesingularizer(Desingularizer):
    """phi(t) = integral of a decreasing h over (0, t].

    Values are anchored on a fixed ladder (dyadic points plus the
    discontinuity knots of h) so that every evaluation integrates only over a
    stretch free of jumps, and results do not depend on evaluation order.
    The anchor table is append-only and written under a lock.
    """

    MIN_EXP = -40
    MAX_EXP = 60

    def __init__(self, h: Callable[[float], float], eta: float = INF, knots: Iterable[float] = (),
                 provenance: str = "exact-modulus", name: str = "", tol: float = CLOSED_FORM_TOL):
        super().__init__(eta, provenance, name)
        self.h = h
        self.tol = tol
        self.knots = tuple(sorted({float(k) for k in knots if 0 < k < eta}))
        ladder = {2.0 ** j for j in range(self.MIN_EXP, self.MAX_EXP + 1) if 2.0 ** j < eta}
        ladder.update(self.knots)
        self._floor = min(ladder) if ladder else eta
        self._ladder = sorted(ladder)
        self._table: list[float] = []
        self._lock = threading.Lock()

    def _h0(self, s):
        v = self.h(s)
        return 0.0 if v is None else v

    def _anchor_value(self, i: int) -> float:
        if i < len(self._table):
            return self._table[i]
        with self._lock:
            while len(self._table) <= i:
                j = len(self._table)
                if j == 0:
                    res = integrate_decreasing(self._h0, self._ladder[0], tol=self.tol * 1e-3,
                                               points=self.knots)
                    self._table.append(res.value)
                else:
                    a, b = self._ladder[j - 1], self._ladder[j]
                    val, _ = integrate_panel(self._h0, a, b, tol=self.tol * 1e-3)
                    self._table.append(self._table[-1] + val)
        return self._table[i]

    def _value(self, t):
        if not self._ladder or t < self._ladder[0]:
            return integrate_decreasing(self._h0, t, tol=self.tol * 1e-3, points=self.knots).value
        i = bisect.bisect_right(self._ladder, t) - 1
        base = self._anchor_value(i)
        a = self._ladder[i]
        if t == a:
            return base
        val, _ = integrate_panel(self._h0, a, t, tol=self.tol * 1e-3)
        return base + val

    def _deriv(self, t):
        # at t = eta the left derivative is the left limit of h
        if t >= self.eta:
            t = math.nextafter(self.eta, 0.0)
        return self._h0(t)


class StepIntegral(Desingularizer):
    """Exact integral of the step function h built from sampled (level, weight) pairs.

    ``h(s)`` is the largest weight among samples with level >= s.
    """

    def __init__(self, levels: Sequence[float], weights: Sequence[float], eta: float = INF,
                 provenance: str = "exact-modulus", name: str = ""):
        super().__init__(eta, provenance, name)
        order = np.argsort(levels, kind="stable")
        lv = np.asarray(levels, dtype=float)[order]
        wt = np.asarray(weights, dtype=float)[order]
        self.levels = lv
        self.hvals = np.maximum.accumulate(wt[::-1])[::-1] if len(wt) else wt
        widths = np.diff(np.concatenate([[0.0], lv]))
        self._cum = np.concatenate([[0.0], np.cumsum(widths * self.hvals)])

    def h(self, s):
        i = int(np.searchsorted(self.levels, s, side="left"))
        return float(self.hvals[i]) if i < len(self.levels) else 0.0

    def _value(self, t):
        i = int(np.searchsorted(self.levels, t, side="left"))
        prev = self.levels[i - 1] if i > 0 else 0.0
        extra = (t - prev) * self.hvals[i] if i < len(self.levels) else 0.0
        return float(self._cum[i] + extra)

    def _deriv(self, t):
        return self.h(t)


# ---------------------------------------------------------------------------
# contexts and function oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KlContext:
    """Anchor (point or finite set with common value), neighbourhood U, window eta."""

    anchor: object
    U: IntervalSet
    eta: float
    base_value: float

    @classmethod
    def pointwise(cls, f: Piecewise1D, xbar: float, U=None, eta: float = INF) -> "KlContext":
        U = IntervalSet.real_line() if U is None else _as_set(U)
        if not eta > 0:
            raise ConfigurationError("eta must be positive")
        if xbar not in U:
            raise ConfigurationError("U must contain the anchor")
        base = f.eval(xbar)
        if not math.isfinite(base):
            raise ConfigurationError("anchor outside the effective domain")
        if f.dist_zero_subdiff(xbar) == INF:
            raise ConfigurationError("anchor is not in dom of the subdifferential")
        return cls(float(xbar), U, float(eta), base)

    @property
    def is_setwise(self) -> bool:
        return isinstance(self.anchor, tuple)

    def to_json(self):
        anchor = list(self.anchor) if self.is_setwise else self.anchor
        return {"anchor": anchor, "U": self.U.to_json(), "eta": _jnum(self.eta),
                "base_value": self.base_value}


def _as_set(U) -> IntervalSet:
    if isinstance(U, IntervalSet):
        return U
    if isinstance(U, Interval):
        return IntervalSet([U])
    lo, hi = U
    return IntervalSet([Interval.open(lo, hi)])


class FunctionOracle:
    """Black-box function on R^d given by vectorised value and dist(0, df) callables."""

    def __init__(self, value: Callable[[np.ndarray], np.ndarray],
                 dist: Callable[[np.ndarray], np.ndarray], dim: int, name: str = ""):
        self.value = value
        self.dist = dist
        self.dim = dim
        self.name = name

    def eval(self, x) -> float:
        return float(self.value(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def dist_zero_subdiff(self, x) -> float:
        return float(self.dist(np.atleast_2d(np.asarray(x, dtype=float)))[0])


# ---------------------------------------------------------------------------
# h(s)
# ---------------------------------------------------------------------------

def _inv(d: float) -> float:
    d = abs(d)
    if d == 0:
        return INF
    if math.isinf(d):
        return 0.0
    return 1.0 / d


class HSampler:
    """Exact h(s) for a piecewise function, using its monotone segment structure.

    On each segment |f'| is monotone, so the supremum of 1/|f'| over an
    interval is attained (as a limit) at one of its ends. Breakpoints are
    handled separately through their full limiting subdifferential.
    """

    def __init__(self, f: Piecewise1D, ctx: KlContext):
        self.f = f
        self.ctx = ctx
        base, eta = ctx.base_value, ctx.eta
        self.segments = []
        for seg in f.segments:
            band = seg.preimage(base, base + eta)
            if band is None:
                continue
            static = ctx.U.intersect(band)
            if static:
                self.segments.append((seg, static))
        pts = []
        for b, bi in f.breakpoints.items():
            level = bi.value - base
            if b in ctx.U and 0 < level < eta:
                pts.append((level, _inv(f.dist_zero_subdiff(b)), b))
        pts.sort()
        self._levels = [p[0] for p in pts]
        self._suffix = []
        best = (-INF, None)
        for level, g, x in reversed(pts):
            if g > best[0]:
                best = (g, x)
            self._suffix.append(best)
        self._suffix.reverse()
        self._memo: dict[float, float | None] = {}
        self._lock = threading.Lock()

    @property
    def band_empty(self) -> bool:
        return not self.segments and not self._levels

    def knots(self) -> list[float]:
        """Levels where h may jump: breakpoint levels and values at the ends of each piece of U∩band."""
        base, eta = self.ctx.base_value, self.ctx.eta
        out = set(self._levels)
        for seg, static in self.segments:
            for iv in static:
                for x in (iv.lo, iv.hi):
                    v = seg.value(x) - base
                    if 0 < v < eta:
                        out.add(v)
        return sorted(out)

    def __call__(self, s: float) -> float | None:
        hit = self._memo.get(s)
        if hit is not None or s in self._memo:
            return hit
        val = self._compute(s)
        with self._lock:
            self._memo.setdefault(s, val)
        return val

    def _compute(self, s: float) -> float | None:
        base, eta = self.ctx.base_value, self.ctx.eta
        if not 0 < s < eta:
            raise OutOfRangeError(f"s={s} outside (0, {eta})")
        best = None
        for seg, static in self.segments:
            pre = seg.preimage(base + s, base + eta, lo_closed=True)
            if pre is None:
                continue
            for iv in static.intersect(pre):
                for x in (iv.lo, iv.hi):
                    g = _inv(seg.deriv_inside(x))
                    if math.isinf(g):
                        raise HInfiniteError(
                            f"h({s}) is infinite: dist(0, df) -> 0 as x -> {x} inside the band",
                            s=s, witness=x)
                    if best is None or g > best:
                        best = g
        i = bisect.bisect_left(self._levels, s)
        if i < len(self._levels):
            g, x = self._suffix[i]
            if math.isinf(g):
                raise HInfiniteError(f"h({s}) is infinite: stationary point x={x} inside the band",
                                     s=s, witness=x)
            if best is None or g > best:
                best = g
        return best


def h_of_s(f: Piecewise1D, ctx: KlContext, s: float) -> float | None:
    """h(s); ``None`` signals a supremum over the empty set."""
    return HSampler(f, ctx)(s)


# ---------------------------------------------------------------------------
# the exact modulus
# ---------------------------------------------------------------------------

@dataclass
class ExactModulus:
    context: KlContext
    h: Callable[[float], float | None]
    phi_tilde: Desingularizer
    trivial: bool
    exact: bool = True
    knots: tuple = ()

    def __call__(self, t):
        return self.phi_tilde(t)

    def h_value(self, s) -> float:
        v = self.h(s)
        return 0.0 if v is None else v

    def to_json(self):
        return {"context": self.context.to_json(), "trivial": self.trivial, "exact_path": self.exact,
                "h_knots": list(self.knots), "phi_tilde": self.phi_tilde.describe()}


def _probe_levels(eta):
    if math.isfinite(eta):
        return [eta * 2.0 ** -k for k in (1, 2, 4, 8, 16, 32, 48)]
    return [2.0 ** j for j in range(-48, 41, 4)]


def exact_modulus(f: Piecewise1D, ctx: KlContext, tol: float = CLOSED_FORM_TOL) -> ExactModulus:
    sampler = HSampler(f, ctx)
    if sampler.band_empty:
        return ExactModulus(ctx, lambda s: None, Zero(ctx.eta), trivial=True)
    for s in _probe_levels(ctx.eta):
        sampler(s)  # raises HInfiniteError when the supremum blows up
    knots = tuple(sampler.knots())
    phi = IntegralDesingularizer(sampler, ctx.eta, knots, provenance="exact-modulus",
                                 name="phi_tilde", tol=tol)
    return ExactModulus(ctx, sampler, phi, trivial=False, exact=True, knots=knots)


def probe_eta(f: Piecewise1D, xbar: float, U=None) -> float:
    """Supremum of the windows eta for which h stays finite on the given U.

    Infinite h comes from points (or limits at the ends of U) where
    dist(0, df) vanishes away from the anchor level; the answer is the
    smallest such level.
    """
    U = IntervalSet.real_line() if U is None else _as_set(U)
    base = f.eval(xbar)
    worst = INF
    for seg in f.segments:
        for iv in U.intersect(Interval.open(seg.lo, seg.hi)):
            for x in (iv.lo, iv.hi):
                if _inv(seg.deriv_inside(x)) == INF:
                    level = seg.value(x) - base
                    if level > 0:
                        worst = min(worst, level)
    for b in f.breakpoints:
        if b in U and b != xbar:
            level = f.eval(b) - base
            if level > 0 and f.dist_zero_subdiff(b) == 0:
                worst = min(worst, level)
    return worst


def _branch_top(f: Piecewise1D, end: float, xbar: float) -> float:
    top = f.eval(end)
    return top if math.isfinite(top) else f.eval(math.nextafter(end, xbar))


def _branch_inverse_derivative(f: Piecewise1D, lo: float, hi: float, s_abs: float, xbar: float,
                               left: bool, top: float | None = None) -> float:
    """1/|f'| at the point of the branch where f equals s_abs (0 if unreachable)."""
    if top is None:
        top = _branch_top(f, lo if left else hi, xbar)
    if s_abs >= top:
        return 0.0
    a, b = (lo, xbar) if left else (xbar, hi)
    x = None
    # closed-form inverse on the monotone segment whose value range holds s_abs
    for seg in f.segments:
        sa, sb = max(seg.lo, a), min(seg.hi, b)
        if sa >= sb:
            continue
        va, vb = seg.value(sa), seg.value(sb)
        if min(va, vb) <= s_abs <= max(va, vb):
            x = seg.form.inverse(s_abs, sa, sb)
            break
    if x is None:
        x = invert_monotone(f.eval, s_abs, a, b)
    return _inv(f.limiting_subdiff(x).dist_to_zero())


def exact_modulus_convex_c1(f: Piecewise1D, xbar: float, a: float, b: float,
                            tol: float = CLOSED_FORM_TOL) -> ExactModulus:
    """Closed form for convex f that is C^1 off the stationary point xbar.

    h is the pointwise maximum of the two inverse-branch derivatives; a
    branch that is flat next to xbar contributes 0 and is left out of eta.
    """
    if f.dist_zero_subdiff(xbar) > 1e-12:
        raise NotStationaryError(f"0 is not a subgradient at x={xbar}")
    inner = np.linspace(a, b, 2001)[1:-1]
    rep = convexity_check(f.eval, inner, tol=1e-9)
    if not rep.passed:
        raise NotConvexError(f"second-difference test failed: {rep.violation}")
    base = f.eval(xbar)
    ends = []
    for e in (a, b):
        v = f.eval(e)
        if not math.isfinite(v):
            v = f.eval(math.nextafter(e, xbar))
        ends.append(v - base)
    left_flat = ends[0] <= 0
    right_flat = ends[1] <= 0
    live = [d for d, flat in zip(ends, (left_flat, right_flat)) if not flat]
    eta = min(live) if live else INF
    ctx = KlContext(float(xbar), IntervalSet([Interval.open(a, b)]), eta, base)
    if left_flat and right_flat:
        return ExactModulus(ctx, lambda s: None, Zero(eta), trivial=True)

    tops = (_branch_top(f, a, xbar), _branch_top(f, b, xbar))

    def h(s):
        vals = [0.0]
        if not left_flat:
            vals.append(_branch_inverse_derivative(f, a, b, base + s, xbar, True, tops[0]))
        if not right_flat:
            vals.append(_branch_inverse_derivative(f, a, b, base + s, xbar, False, tops[1]))
        return max(vals)

    knots = sorted({f.eval(p) - base for p in f.breakpoints if a < p < b and 0 < f.eval(p) - base < eta})
    phi = IntegralDesingularizer(h, eta, knots, provenance="exact-modulus", name="phi_tilde_convex",
                                 tol=tol)
    return ExactModulus(ctx, h, phi, trivial=False, exact=True, knots=tuple(knots))


def setwise_modulus(f, omega: Sequence, eps: float, eta: float, mu: float | None = None,
                    n: int = 201, tol: float = 1e-9) -> ExactModulus:
    """Exact modulus on U = union of eps-balls around the points of omega.

    A :class:`Piecewise1D` is handled exactly. A :class:`FunctionOracle` is
    sampled on an n-per-axis grid of each ball and h becomes the step
    function of the samples (``exact=False``).
    """
    if not (eps > 0 and eta > 0):
        raise ConfigurationError("eps and eta must be positive")
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in omega]
    if not pts:
        raise ConfigurationError("omega is empty")
    values = [f.eval(p[0] if isinstance(f, Piecewise1D) else p) for p in pts]
    mu = values[0] if mu is None else mu
    for p, v in zip(pts, values):
        if abs(v - mu) > tol * (1 + abs(mu)):
            raise NonConstantOnSetError(f"f({p.tolist()}) = {v} differs from mu = {mu}")
    if isinstance(f, Piecewise1D):
        U = IntervalSet(Interval.open(p[0] - eps, p[0] + eps) for p in pts)
        anchor = tuple(float(p[0]) for p in pts)
        ctx = KlContext(anchor if len(anchor) > 1 else anchor[0], U, float(eta), float(mu))
        return exact_modulus(f, ctx, tol=tol)

    dim = f.dim
    axis = np.linspace(-eps, eps, n)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    mesh = mesh[np.linalg.norm(mesh, axis=1) < eps]
    samples = np.unique(np.concatenate([p + mesh for p in pts]), axis=0)
    levels = f.value(samples) - mu
    keep = (levels > 0) & (levels < eta)
    levels, samples = levels[keep], samples[keep]
    dists = f.dist(samples)
    with np.errstate(divide="ignore"):
        weights = np.where(dists > 0, 1.0 / np.where(dists > 0, dists, 1.0), INF)
    if np.isinf(weights).any():
        i = int(np.argmax(np.isinf(weights)))
        raise HInfiniteError("stationary sample inside the band", s=float(levels[i]),
                             witness=samples[i].tolist())
    ctx = KlContext(tuple(tuple(p.tolist()) for p in pts), IntervalSet(), float(eta), float(mu))
    if len(levels) == 0:
        return ExactModulus(ctx, lambda s: None, Zero(eta), trivial=True, exact=False)
    phi = StepIntegral(levels, weights, eta, name="phi_tilde_grid")
    return ExactModulus(ctx, phi.h, phi, trivial=False, exact=False)


# ---------------------------------------------------------------------------
# verification and uniformization
# ---------------------------------------------------------------------------

@dataclass
class GklReport:
    passed: bool
    checked: int
    skipped: int
    min_product: float
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "checked": self.checked, "skipped": self.skipped,
                "min_product": _jnum(self.min_product), "violations": self.violations[:20]}


def _in_context(ctx: KlContext, x) -> bool:
    if ctx.U.is_empty:
        return True  # grid contexts carry their neighbourhood implicitly
    return x in ctx.U


def verify_gkl(f, ctx: KlContext, phi: Desingularizer, grid: Iterable, tol: float = 1e-9) -> GklReport:
    """Check phi'_-(f(x) - base) * dist(0, df(x)) >= 1 at every grid point in U and the band."""
    checked = skipped = 0
    worst = INF
    bad = []
    for x in grid:
        level = f.eval(x) - ctx.base_value
        if not (0 < level < ctx.eta) or not _in_context(ctx, x):
            skipped += 1
            continue
        checked += 1
        d = f.dist_zero_subdiff(x)
        slope = phi.left_deriv(level)
        prod = INF if math.isinf(d) else slope * d
        worst = min(worst, prod)
        if prod < 1 - tol:
            xv = x.tolist() if hasattr(x, "tolist") else x
            bad.append({"x": xv, "level": level, "left_deriv": slope, "dist": d, "product": prod})
    return GklReport(not bad, checked, skipped, worst, bad)


@dataclass(frozen=True)
class KlCertificate:
    center: object
    eps: float
    eta: float
    phi: Desingularizer


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(a, float)) - np.atleast_1d(np.asarray(b, float))))


def uniformize(certs: Sequence[KlCertificate], omega: Sequence | None = None):
    """Combine pointwise certificates into one setwise certificate.

    Returns ``(eps, eta, phi)``: eps is a Lebesgue number of the ball cover
    computed on the sample omega (default: the centers), eta the smallest
    window and phi the sum of the local desingularizers.
    """
    certs = list(certs)
    if not certs:
        raise ConfigurationError("no certificates")
    omega = [c.center for c in certs] if omega is None else list(omega)
    eps = INF
    for w in omega:
        reach = max(c.eps - _dist(w, c.center) for c in certs)
        if reach <= 0:
            raise NoCoverError(f"point {w} is not covered by the supplied balls")
        eps = min(eps, reach)
    eta = min(c.eta for c in certs)
    if len(certs) == 1:
        return certs[0].eps, certs[0].eta, certs[0].phi
    phi = SumDesingularizer([c.phi for c in certs], provenance="user", name="uniformized")
    if phi.eta != eta:
        phi.eta = eta
    return eps, eta, phi
