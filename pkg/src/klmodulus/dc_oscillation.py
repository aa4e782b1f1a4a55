"""Difference-of-convex splitting of an oscillating flat function.

target(x) = sin(1/x) * exp(-1/x**2) (extended by 0 at 0) is C^2 with infinitely
many sign changes accumulating at 0. Splitting its second derivative into
positive and negative parts and integrating twice gives convex f, g with
g - f = target:

    f(x) = int_0^x (x - s) * max(-target''(s), 0) ds
    g(x) = int_0^x (x - s) * max( target''(s), 0) ds
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigurationError, QuadratureBudgetError

# below this point exp(-1/x**2) underflows to 0 in double precision
UNDERFLOW = 1.0 / math.sqrt(709.0)
START = 0.035


def target(x: float) -> float:
    if x <= 0:
        return 0.0
    return math.sin(1 / x) * math.exp(-1 / x ** 2)


def target_dd(x: float) -> float:
    if x <= START:
        return 0.0
    s, c = math.sin(1 / x), math.cos(1 / x)
    poly = 4 * s - 4 * x * c - 7 * x * x * s + 2 * x ** 3 * c
    return math.exp(-1 / x ** 2) * poly / x ** 6


def _pos(x):
    return max(target_dd(x), 0.0)


def _neg(x):
    return max(-target_dd(x), 0.0)


def _roots(lo: float, hi: float) -> list[float]:
    # sign changes of the bracket polynomial, scanned in u = 1/x where they are evenly spaced
    def poly(x):
        s, c = math.sin(1 / x), math.cos(1 / x)
        return 4 * s - 4 * x * c - 7 * x * x * s + 2 * x ** 3 * c

    us = np.linspace(1 / hi, 1 / lo, 20000)
    xs = 1 / us[::-1]
    vals = [poly(x) for x in xs]
    out = []
    for a, b, va, vb in zip(xs, xs[1:], vals, vals[1:]):
        if va == 0:
            out.append(a)
        elif va * vb < 0:
            out.append(optimize.brentq(poly, a, b, xtol=1e-15))
    return out


def _quad(fn, a, b):
    v, _ = integrate.quad(fn, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
    return v


@dataclass
class DcOscillation:
    """Numeric f, g on [0, x_max]; values below ``delta`` are excluded from checks."""

    depth: int = 6
    x_max: float = 1.5
    delta: float = 0.05

    MAX_DEPTH = int(1 / (UNDERFLOW * math.pi))

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("depth must be positive")
        if self.depth > self.MAX_DEPTH:
            raise QuadratureBudgetError(
                f"zeros beyond n={self.MAX_DEPTH} lie where exp(-1/x^2) underflows (x < {UNDERFLOW:.4f})")
        if not self.x_max > 1 / (0.5 * math.pi) or self.x_max > 50:
            raise ConfigurationError("x_max must exceed 2/pi and stay moderate")
        roots = _roots(START, self.x_max)
        grid = np.linspace(START, self.x_max, 200)
        self.knots = np.unique(np.concatenate([[START], roots, grid, [self.x_max]]))
        n = len(self.knots)
        self._cum = {k: np.zeros(n) for k in ("n0", "n1", "p0", "p1")}
        for i in range(1, n):
            a, b = self.knots[i - 1], self.knots[i]
            self._cum["n0"][i] = self._cum["n0"][i - 1] + _quad(_neg, a, b)
            self._cum["n1"][i] = self._cum["n1"][i - 1] + _quad(lambda s: s * _neg(s), a, b)
            self._cum["p0"][i] = self._cum["p0"][i - 1] + _quad(_pos, a, b)
            self._cum["p1"][i] = self._cum["p1"][i - 1] + _quad(lambda s: s * _pos(s), a, b)
        self.roots = tuple(roots)

    def _moments(self, x: float, part: str) -> tuple[float, float]:
        if x <= START:
            return 0.0, 0.0
        if x > self.x_max:
            raise ConfigurationError(f"x={x} beyond x_max={self.x_max}")
        fn = _neg if part == "n" else _pos
        i = int(np.searchsorted(self.knots, x, side="right") - 1)
        a = self.knots[i]
        m0 = self._cum[part + "0"][i] + (_quad(fn, a, x) if x > a else 0.0)
        m1 = self._cum[part + "1"][i] + (_quad(lambda s: s * fn(s), a, x) if x > a else 0.0)
        return m0, m1

    def f(self, x: float) -> float:
        m0, m1 = self._moments(x, "n")
        return x * m0 - m1

    def g(self, x: float) -> float:
        m0, m1 = self._moments(x, "p")
        return x * m0 - m1

    def f_prime(self, x: float) -> float:
        return self._moments(x, "n")[0]

    def g_prime(self, x: float) -> float:
        return self._moments(x, "p")[0]

    def difference(self, x: float) -> float:
        return self.g(x) - self.f(x)

    def residual(self, xs) -> float:
        """max |g - f - target| over xs."""
        return max(abs(self.difference(float(x)) - target(float(x))) for x in xs)

    def zeros(self) -> list[float]:
        """Zeros of g - f near 1/(n*pi) for n = 1..depth, located by bracketing."""
        out = []
        for n in range(1, self.depth + 1):
            a = 1 / ((n + 0.5) * math.pi)
            b = min(1 / ((n - 0.5) * math.pi), self.x_max)
            out.append(optimize.brentq(self.difference, a, b, xtol=1e-15, maxiter=200))
        return out


def dc_oscillation_build(depth: int = 6, x_max: float = 1.5, delta: float = 0.05):
    """Returns (f, g, residual_check) with residual_check(xs) = max |g - f - target|."""
    dc = DcOscillation(depth, x_max, delta)
    return dc.f, dc.g, dc.residual
