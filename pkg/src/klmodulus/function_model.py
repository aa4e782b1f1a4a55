"""Piecewise-symbolic lower semicontinuous functions on the real line.

A :class:`Piecewise1D` is an ordered list of :class:`Piece` objects with
contiguous domains. Each piece carries a *form* from a small closed
vocabulary (affine, power, quadratic, exponential composite, indicator)
that knows its value, one-sided derivatives, turning points and a
closed-form inverse on monotone stretches. From this the limiting
subdifferential and level bands are assembled exactly.

Breakpoint ownership: a breakpoint belongs to the closed right end of the
piece on its left, unless that piece is an indicator extension (or absent),
in which case the right piece owns it.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import LscViolationError, NotRepresentableError, OutsideDomainError, ConfigurationError
from .intervals import INF, Interval, IntervalSet

LSC_TOL = 1e-12


def _sign(x: float) -> float:
    return float((x > 0) - (x < 0)) if isinstance(x, (int, float)) else _sign(float(x))


def _mul_inf(coef: float, x: float) -> float:
    # coef * x with the convention 0 * inf = 0
    if coef == 0:
        return 0.0
    return coef * x


# ---------------------------------------------------------------------------
# piece forms
# ---------------------------------------------------------------------------

class Form:
    kind = "form"

    def value(self, x: float) -> float:
        raise NotImplementedError

    def deriv(self, x: float, side: int = 0) -> float:
        """Derivative at ``x``; ``side`` selects the one-sided value at kinks."""
        raise NotImplementedError

    def critical_points(self) -> tuple:
        """Points where monotonicity or smoothness of the form may change."""
        return ()

    def inverse(self, y: float, lo: float, hi: float) -> float:
        """Solve ``value(x) == y`` for x in [lo, hi] (form monotone there)."""
        from .numerics import invert_monotone
        return invert_monotone(self.value, y, lo, hi)

    def params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"type": self.kind, **{k: _jnum(v) for k, v in self.params().items()}}

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.kind, tuple(self.params().items())))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Affine(Form):
    kind = "affine"

    def __init__(self, slope: float, intercept: float = 0.0):
        self.slope = float(slope)
        self.intercept = float(intercept)

    def value(self, x):
        if math.isinf(x):
            return self.intercept if self.slope == 0 else self.slope * x
        return self.slope * x + self.intercept

    def deriv(self, x, side=0):
        return self.slope

    def inverse(self, y, lo, hi):
        if self.slope == 0:
            raise NotRepresentableError("constant affine piece is not invertible")
        return min(max((y - self.intercept) / self.slope, lo), hi)

    def params(self):
        return {"slope": self.slope, "intercept": self.intercept}


class Quadratic(Form):
    """a*x**2 + b*x + c."""

    kind = "quadratic"

    def __init__(self, a: float, b: float = 0.0, c: float = 0.0):
        self.a, self.b, self.c = float(a), float(b), float(c)

    def value(self, x):
        if math.isinf(x):
            if self.a != 0:
                return _sign(self.a) * INF
            return self.c if self.b == 0 else self.b * x
        return (self.a * x + self.b) * x + self.c

    def deriv(self, x, side=0):
        if math.isinf(x):
            if self.a != 0:
                return _mul_inf(self.a, x)
            return self.b
        return 2.0 * self.a * x + self.b

    def critical_points(self):
        if self.a != 0:
            return (-self.b / (2.0 * self.a) + 0.0,)
        return ()

    def inverse(self, y, lo, hi):
        a, b, c = self.a, self.b, self.c - y
        if a == 0:
            if b == 0:
                raise NotRepresentableError("constant quadratic piece is not invertible")
            return min(max(-c / b, lo), hi)
        disc = max(b * b - 4 * a * c, 0.0)
        q = -0.5 * (b + math.copysign(math.sqrt(disc), b if b != 0 else 1.0))
        roots = [q / a]
        if q != 0:
            roots.append(c / q)
        else:
            roots.append(-b / (2 * a))
        best = min(roots, key=lambda r: Interval.closed(lo, hi).distance(r))
        return min(max(best, lo), hi)

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}


class Power(Form):
    """coefficient * |x - center| ** exponent."""

    kind = "power"

    def __init__(self, coefficient: float, exponent: float, center: float = 0.0):
        if coefficient <= 0 or exponent <= 0:
            raise ConfigurationError("power form needs coefficient > 0 and exponent > 0")
        self.coefficient = float(coefficient)
        self.exponent = float(exponent)
        self.center = float(center)

    def value(self, x):
        if math.isinf(x):
            return INF
        return self.coefficient * abs(x - self.center) ** self.exponent

    def deriv(self, x, side=0):
        c, p = self.coefficient, self.exponent
        if math.isinf(x):
            if p > 1:
                return x
            if p == 1:
                return _sign(x) * c
            return 0.0
        d = x - self.center
        if d == 0:
            if p > 1:
                return 0.0
            if side == 0:
                return math.nan
            return side * c if p == 1 else side * INF
        return _sign(d) * c * p * abs(d) ** (p - 1)

    def critical_points(self):
        return (self.center,)

    def inverse(self, y, lo, hi):
        r = (max(y, 0.0) / self.coefficient) ** (1.0 / self.exponent)
        x = self.center - r if hi <= self.center else self.center + r
        return min(max(x, lo), hi)

    def params(self):
        return {"coefficient": self.coefficient, "exponent": self.exponent, "center": self.center}


class ExpComposite(Form):
    """offset + scale * exp(rate * (x - center)); strictly monotone unless scale*rate == 0."""

    kind = "exp"

    def __init__(self, offset: float, scale: float, rate: float, center: float = 0.0):
        self.offset, self.scale = float(offset), float(scale)
        self.rate, self.center = float(rate), float(center)

    def _e(self, x):
        arg = self.rate * (x - self.center) if not math.isinf(x) else _mul_inf(self.rate, x)
        if arg > 700:
            return INF
        return math.exp(arg)

    def value(self, x):
        return self.offset + _mul_inf(self.scale, self._e(x))

    def deriv(self, x, side=0):
        return _mul_inf(self.scale * self.rate, self._e(x))

    def inverse(self, y, lo, hi):
        ratio = (y - self.offset) / self.scale
        if ratio <= 0 or self.rate == 0:
            raise NotRepresentableError("exp composite inverse outside its range")
        return min(max(self.center + math.log(ratio) / self.rate, lo), hi)

    def params(self):
        return {"offset": self.offset, "scale": self.scale, "rate": self.rate, "center": self.center}


class Indicator(Form):
    """The +inf extension outside the effective domain."""

    kind = "indicator"

    def value(self, x):
        return INF

    def deriv(self, x, side=0):
        return math.nan

    def params(self):
        return {}


FORMS = {cls.kind: cls for cls in (Affine, Quadratic, Power, ExpComposite, Indicator)}


def _jnum(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unj(v):
    if isinstance(v, str):
        return float(v)
    return v


def form_from_json(d: dict) -> Form:
    d = dict(d)
    kind = d.pop("type")
    try:
        cls = FORMS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown piece form {kind!r}") from None
    return cls(**{k: _unj(v) for k, v in d.items()})


# ---------------------------------------------------------------------------
# pieces and the piecewise function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    form: Form

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"piece domain [{self.lo}, {self.hi}] is degenerate")

    @property
    def is_indicator(self) -> bool:
        return isinstance(self.form, Indicator)


@dataclass(frozen=True)
class Segment:
    """A stretch of a piece on which the form is C^1 and monotone."""

    lo: float
    hi: float
    form: Form

    def value(self, x):
        return self.form.value(x)

    def deriv_inside(self, x):
        """Derivative at ``x``, taken from inside the segment at its ends."""
        if x <= self.lo:
            return self.form.deriv(self.lo, +1)
        if x >= self.hi:
            return self.form.deriv(self.hi, -1)
        return self.form.deriv(x)

    @property
    def end_values(self):
        return self.form.value(self.lo), self.form.value(self.hi)

    def preimage(self, ylo, yhi, lo_closed=False, hi_closed=False) -> Interval | None:
        """{x in (lo, hi) : ylo < f(x) < yhi}, with closedness of the value bounds."""
        va, vb = self.end_values

        def above_lo(v):
            return v > ylo or (lo_closed and v == ylo)

        def below_hi(v):
            return v < yhi or (hi_closed and v == yhi)

        if va == vb:
            if above_lo(va) and below_hi(va):
                return Interval.open(self.lo, self.hi)
            return None
        increasing = vb > va
        lo_v, hi_v = (va, vb) if increasing else (vb, va)
        # value range on the open segment is (lo_v, hi_v)
        if ylo >= hi_v or yhi <= lo_v:
            return None
        if ylo <= lo_v:
            a_val, a_closed = None, False
        else:
            a_val, a_closed = ylo, lo_closed
        if yhi >= hi_v:
            b_val, b_closed = None, False
        else:
            b_val, b_closed = yhi, hi_closed
        inv = lambda y: self.form.inverse(y, self.lo, self.hi)  # noqa: E731
        if increasing:
            x_lo, cl = (self.lo, False) if a_val is None else (inv(a_val), a_closed)
            x_hi, ch = (self.hi, False) if b_val is None else (inv(b_val), b_closed)
        else:
            x_lo, cl = (self.lo, False) if b_val is None else (inv(b_val), b_closed)
            x_hi, ch = (self.hi, False) if a_val is None else (inv(a_val), a_closed)
        iv = Interval(x_lo, x_hi, cl, ch)
        return None if iv.is_empty else iv


class SubdiffSet1D(IntervalSet):
    """Limiting subdifferential in 1D: a finite union of closed intervals."""

    __slots__ = ()

    def dist_to_zero(self) -> float:
        return self.distance(0.0)


@dataclass(frozen=True)
class BreakpointInfo:
    x: float
    value: float
    left: Segment | None
    right: Segment | None


class Piecewise1D:
    """Proper lsc function on the real line given by ordered pieces.

    Parameters
    ----------
    pieces : sequence of Piece
        Contiguous (``pieces[i].hi == pieces[i+1].lo``) and sorted.  The
        function is +inf outside ``[pieces[0].lo, pieces[-1].hi]``.
    name : str, optional
    """

    def __init__(self, pieces: Sequence[Piece], name: str = ""):
        pieces = list(pieces)
        if not pieces:
            raise ConfigurationError("a piecewise function needs at least one piece")
        for p, q in zip(pieces, pieces[1:]):
            if p.hi != q.lo:
                raise ConfigurationError(f"pieces are not contiguous at {p.hi} / {q.lo}")
        self.pieces: tuple[Piece, ...] = tuple(pieces)
        self.name = name
        self._build()
        self.check_lsc()

    # -- construction ------------------------------------------------------
    @classmethod
    def from_generator(cls, piece_at: Callable[[int], Piece], depth: int,
                       extra: Iterable[Piece] = (), name: str = ""):
        """Collect ``piece_at(k)`` for k < depth plus ``extra`` pieces, sorted."""
        pieces = [piece_at(k) for k in range(depth)] + list(extra)
        pieces.sort(key=lambda p: p.lo)
        return cls(pieces, name=name)

    def _build(self):
        segs: list[Segment] = []
        for p in self.pieces:
            if p.is_indicator:
                continue
            cuts = [c for c in p.form.critical_points() if p.lo < c < p.hi]
            edges = [p.lo, *sorted(cuts), p.hi]
            segs.extend(Segment(a, b, p.form) for a, b in zip(edges, edges[1:]))
        self.segments: tuple[Segment, ...] = tuple(segs)
        self._seg_lo = [s.lo for s in segs]

        points = set()
        for s in segs:
            for e in (s.lo, s.hi):
                if math.isfinite(e):
                    points.add(e)
        info = {}
        for b in sorted(points):
            left = next((s for s in segs if s.hi == b), None)
            right = next((s for s in segs if s.lo == b), None)
            if left is not None:
                v = left.value(b)
            elif right is not None:
                v = right.value(b)
            else:  # pragma: no cover - cannot happen for finite boundaries of segments
                v = INF
            info[b] = BreakpointInfo(b, v, left, right)
        self.breakpoints: dict[float, BreakpointInfo] = info
        self._bp_sorted = sorted(info)

        dom = [Interval.open(s.lo, s.hi) for s in segs]
        dom += [Interval.point(b) for b, bi in info.items() if math.isfinite(bi.value)]
        self.effective_domain = IntervalSet(dom)

    def check_lsc(self, tol: float = LSC_TOL):
        for b, bi in self.breakpoints.items():
            for seg in (bi.left, bi.right):
                if seg is None:
                    continue
                lim = seg.value(b)
                if lim < bi.value - tol * (1 + abs(bi.value)):
                    raise LscViolationError(
                        f"{self.name or 'function'} is not lsc at x={b}: value {bi.value} > side limit {lim}")
        return True

    # -- evaluation --------------------------------------------------------
    def _segment_at(self, x) -> Segment | None:
        i = bisect.bisect_right(self._seg_lo, x) - 1
        if i < 0:
            return None
        s = self.segments[i]
        if s.lo < x < s.hi:
            return s
        return None

    def __call__(self, x: float) -> float:
        return self.eval(x)

    def eval(self, x: float) -> float:
        x = float(x)
        bi = self.breakpoints.get(x)
        if bi is not None:
            return bi.value
        s = self._segment_at(x)
        return INF if s is None else s.value(x)

    def _attached(self, seg: Segment | None, b: float, v: float) -> bool:
        if seg is None:
            return False
        lim = seg.value(b)
        return math.isfinite(lim) and abs(lim - v) <= LSC_TOL * (1 + abs(v))

    def limiting_subdiff(self, x: float) -> SubdiffSet1D:
        x = float(x)
        bi = self.breakpoints.get(x)
        if bi is None:
            s = self._segment_at(x)
            if s is None:
                raise OutsideDomainError(f"x={x} is outside the effective domain")
            d = s.form.deriv(x)
            if math.isnan(d):
                raise NotRepresentableError(f"no derivative descriptor at x={x}")
            return SubdiffSet1D([Interval.point(d)]) if math.isfinite(d) else SubdiffSet1D()
        if not math.isfinite(bi.value):
            raise OutsideDomainError(f"x={x} is outside the effective domain")
        left_on = self._attached(bi.left, x, bi.value)
        right_on = self._attached(bi.right, x, bi.value)
        dl = bi.left.form.deriv(x, -1) if left_on else None
        dr = bi.right.form.deriv(x, +1) if right_on else None
        for d in (dl, dr):
            if d is not None and math.isnan(d):
                raise NotRepresentableError(f"no one-sided derivative at x={x}")
        lo = dl if dl is not None else -INF
        hi = dr if dr is not None else INF
        parts = []
        if lo <= hi:
            parts.append(Interval(lo, hi, True, True))
        for d in (dl, dr):
            if d is not None and math.isfinite(d):
                parts.append(Interval.point(d))
        return SubdiffSet1D(parts)

    def dist_zero_subdiff(self, x: float) -> float:
        return self.limiting_subdiff(x).dist_to_zero()

    def level_band(self, base: float, lo: float, hi: float) -> IntervalSet:
        """{x : lo < f(x) - base < hi}; check ``.bounded`` for unboundedness."""
        if not lo < hi:
            raise ConfigurationError("level band needs lo < hi")
        parts = []
        for s in self.segments:
            iv = s.preimage(base + lo, base + hi)
            if iv is not None:
                parts.append(iv)
        for b, bi in self.breakpoints.items():
            if lo < bi.value - base < hi:
                parts.append(Interval.point(b))
        return IntervalSet(parts)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {"name": self.name,
                "pieces": [{"domain": [_jnum(p.lo), _jnum(p.hi)], "form": p.form.to_json()}
                           for p in self.pieces]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data) -> "Piecewise1D":
        if isinstance(data, str):
            data = json.loads(data)
        if isinstance(data, list):
            data = {"pieces": data}
        pieces = [Piece(_unj(p["domain"][0]), _unj(p["domain"][1]), form_from_json(p["form"]))
                  for p in data["pieces"]]
        return cls(pieces, name=data.get("name", ""))

    def __repr__(self):
        return f"Piecewise1D({self.name or len(self.pieces)} pieces)"


# module-level functional aliases
def eval_at(f: Piecewise1D, x: float) -> float:
    return f.eval(x)


def limiting_subdiff(f: Piecewise1D, x: float) -> SubdiffSet1D:
    return f.limiting_subdiff(x)


def dist_zero_subdiff(f: Piecewise1D, x: float) -> float:
    return f.dist_zero_subdiff(x)


def level_band(f: Piecewise1D, base: float, lo: float, hi: float) -> IntervalSet:
    return f.level_band(base, lo, hi)
