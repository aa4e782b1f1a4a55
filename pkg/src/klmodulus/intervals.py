"""Intervals and finite unions of intervals on the extended real line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

INF = math.inf


@dataclass(frozen=True)
class Interval:
    """An interval with independently open or closed ends.

    Infinite endpoints are always treated as open.
    """

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if math.isinf(self.lo) and self.lo_closed:
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi) and self.hi_closed:
            object.__setattr__(self, "hi_closed", False)

    @classmethod
    def closed(cls, lo, hi):
        return cls(lo, hi, True, True)

    @classmethod
    def open(cls, lo, hi):
        return cls(lo, hi, False, False)

    @classmethod
    def point(cls, x):
        return cls(x, x, True, True)

    @property
    def is_empty(self) -> bool:
        if self.lo < self.hi:
            return False
        if self.lo == self.hi:
            return not (self.lo_closed and self.hi_closed)
        return True

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi and not self.is_empty

    @property
    def length(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def __contains__(self, x) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def intersect(self, other: "Interval") -> "Interval":
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed)

    def distance(self, x: float) -> float:
        if x < self.lo:
            return self.lo - x
        if x > self.hi:
            return x - self.hi
        return 0.0

    def to_json(self):
        return {"lo": _enc(self.lo), "hi": _enc(self.hi),
                "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}

    def __str__(self):
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:.12g}, {self.hi:.12g}{right}"


def _enc(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _touch(a: Interval, b: Interval) -> bool:
    # a.lo <= b.lo assumed
    if b.lo < a.hi:
        return True
    if b.lo == a.hi:
        return a.hi_closed or b.lo_closed
    return False


class IntervalSet:
    """A sorted union of pairwise disjoint, non-touching intervals."""

    __slots__ = ("intervals",)

    def __init__(self, intervals: Iterable[Interval] = ()):
        items = sorted((iv for iv in intervals if not iv.is_empty),
                       key=lambda iv: (iv.lo, not iv.lo_closed))
        merged: list[Interval] = []
        for iv in items:
            if merged and _touch(merged[-1], iv):
                last = merged[-1]
                if iv.hi > last.hi:
                    hi, hi_closed = iv.hi, iv.hi_closed
                elif iv.hi < last.hi:
                    hi, hi_closed = last.hi, last.hi_closed
                else:
                    hi, hi_closed = last.hi, last.hi_closed or iv.hi_closed
                merged[-1] = Interval(last.lo, hi, last.lo_closed, hi_closed)
            else:
                merged.append(iv)
        self.intervals: tuple[Interval, ...] = tuple(merged)

    @classmethod
    def real_line(cls):
        return cls([Interval(-INF, INF)])

    @classmethod
    def empty(cls):
        return cls()

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __contains__(self, x) -> bool:
        return any(x in iv for iv in self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def bounded(self) -> bool:
        return all(iv.bounded for iv in self.intervals)

    @property
    def lo(self) -> float:
        return self.intervals[0].lo if self.intervals else INF

    @property
    def hi(self) -> float:
        return self.intervals[-1].hi if self.intervals else -INF

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.intervals + tuple(other))

    def intersect(self, other) -> "IntervalSet":
        others = [other] if isinstance(other, Interval) else list(other)
        return IntervalSet(a.intersect(b) for a in self.intervals for b in others)

    def distance(self, x: float) -> float:
        if not self.intervals:
            return INF
        return min(iv.distance(x) for iv in self.intervals)

    def clip(self, radius: float) -> "IntervalSet":
        return self.intersect(Interval(-radius, radius))

    def to_json(self):
        return [iv.to_json() for iv in self.intervals]

    def __repr__(self):
        if not self.intervals:
            return "IntervalSet(∅)"
        return "IntervalSet(" + " ∪ ".join(str(iv) for iv in self.intervals) + ")"
