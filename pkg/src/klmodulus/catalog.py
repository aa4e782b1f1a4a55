"""Named worked examples with their known moduli and rival desingularizers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import polygamma

from .dc_oscillation import DcOscillation
from .errors import BadParamsError, UnknownNameError
from .function_model import Affine, ExpComposite, Piece, Piecewise1D, Power, Quadratic
from .intervals import INF, Interval, IntervalSet
from .modulus import ClosedForm, Desingularizer, KlContext, Linear
from .palm import PalmConfig, PalmProblem


@dataclass
class CatalogEntry:
    name: str
    params: dict
    function: object
    context: object
    golden_modulus: Desingularizer | None
    golden_rivals: dict = field(default_factory=dict)
    golden_h: Callable[[float], float] | None = None
    golden_u: Callable[[float], float] | None = None
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        out = {"name": self.name, "params": self.params, "notes": self.notes,
               "golden_modulus": self.golden_modulus.describe() if self.golden_modulus else None,
               "golden_rivals": {k: v.describe() for k, v in self.golden_rivals.items()}}
        if isinstance(self.function, Piecewise1D):
            out["function"] = self.function.to_json()
        if isinstance(self.context, KlContext):
            out["context"] = self.context.to_json()
        elif isinstance(self.context, dict):
            out["context"] = self.context
        return out


# ---------------------------------------------------------------------------
# piecewise builders
# ---------------------------------------------------------------------------

def nonsmooth_function(rho: float = 1.0) -> Piecewise1D:
    """Quadratic core |x|^2/2 on [-rho, rho] with linear arms of slope 2*rho."""
    c = -1.5 * rho * rho
    return Piecewise1D([Piece(-INF, -rho, Affine(-2 * rho, c)),
                        Piece(-rho, rho, Quadratic(0.5)),
                        Piece(rho, INF, Affine(2 * rho, c))], name=f"nonsmooth-modulus(rho={rho:g})")


def nonsmooth_golden(rho: float = 1.0) -> Desingularizer:
    knee = rho * rho / 2

    def value(t):
        return math.sqrt(2 * t) if t <= knee else t / (2 * rho) + 0.75 * rho

    def deriv(t):
        return 1 / math.sqrt(2 * t) if t <= knee else 1 / (2 * rho)

    return ClosedForm(value, deriv, INF, "exact-modulus", "phi_tilde",
                      f"sqrt(2t) for t <= {knee!r}; t/{2 * rho!r} + {0.75 * rho!r} after")


def nonsmooth_bdlm_convex(rho: float = 1.0) -> Desingularizer:
    """Two-branch rival with the limiting split point r0 = rho^2/2."""
    knee = rho * rho / 2

    def value(t):
        return math.sqrt(2 * t) if t <= knee else rho + (t - knee) / rho

    def deriv(t):
        return 1 / math.sqrt(2 * t) if t <= knee else 1 / rho

    return ClosedForm(value, deriv, INF, "bdlm-convex", "phi_1",
                      f"sqrt(2t) for t <= {knee!r}; {rho!r} + (t - {knee!r})/{rho!r} after")


def nonsmooth_growth_m(rho: float = 1.0):
    """Largest growth modulus: f >= m(|x|)."""
    knee = rho * rho / 2

    def m(r):
        return r * r / 2 if r <= rho else 2 * rho * r - 1.5 * rho * rho

    def m_inv(s):
        return math.sqrt(2 * s) if s <= knee else (s + 1.5 * rho * rho) / (2 * rho)

    return m, m_inv


def nonsmooth_growth(rho: float = 1.0) -> Desingularizer:
    knee = rho * rho / 2

    def value(t):
        if t <= knee:
            return 2 * math.sqrt(2 * t)
        return 2 * rho + (t - knee) / (2 * rho) + 0.75 * rho * math.log(2 * t / (rho * rho))

    def deriv(t):
        return math.sqrt(2 / t) if t <= knee else 1 / (2 * rho) + 0.75 * rho / t

    return ClosedForm(value, deriv, INF, "growth", "phi_2",
                      f"2 sqrt(2t) for t <= {knee!r}; {2 * rho!r} + (t - {knee!r})/{2 * rho!r}"
                      f" + {0.75 * rho!r} ln(2t/{rho * rho!r}) after")


def build_nonsmooth(rho: float = 1.0) -> CatalogEntry:
    if not (isinstance(rho, (int, float)) and rho > 0 and math.isfinite(rho)):
        raise BadParamsError("rho must be a positive finite number")
    rho = float(rho)
    f = nonsmooth_function(rho)
    ctx = KlContext.pointwise(f, 0.0)
    knee = rho * rho / 2
    golden = nonsmooth_golden(rho)
    rivals = {"bdlm-convex-limit": nonsmooth_bdlm_convex(rho), "growth": nonsmooth_growth(rho),
              "bdlm": ClosedForm(golden._fn, golden._dfn, INF, "bdlm", "bdlm",
                                 "u is continuous and decreasing, so the majorant is u itself")}
    h = lambda s: 1 / math.sqrt(2 * s) if s <= knee else 1 / (2 * rho)  # noqa: E731
    return CatalogEntry("nonsmooth-modulus", {"rho": rho}, f, ctx, golden, rivals, golden_h=h,
                        golden_u=h, notes="quadratic core with linear arms; also the convex comparison example",
                        extra={"r0": knee})


def build_exp_flat(eta: float = 0.5) -> CatalogEntry:
    if not (isinstance(eta, (int, float)) and eta > 0):
        raise BadParamsError("eta must be positive")
    eta = float(eta)
    f = Piecewise1D([Piece(-INF, 0.0, ExpComposite(1.0, -1.0, 1.0)),
                     Piece(0.0, INF, ExpComposite(1.0, -1.0, -1.0))], name="exp-flat")
    ctx = KlContext.pointwise(f, 0.0, eta=eta)
    if eta < 1:
        slope = 1 / (1 - eta)
        golden = Linear(slope, eta, "exact-modulus", "phi_tilde")
        h = lambda s: slope  # noqa: E731
    else:
        golden, h = None, None
    return CatalogEntry("exp-flat", {"eta": eta}, f, ctx, golden, {}, golden_h=h,
                        notes="1 - exp(-|x|): h is finite exactly when eta < 1")


def three_slope_function() -> Piecewise1D:
    return Piecewise1D([Piece(-INF, 0.0, Affine(0.0, 0.0)),
                        Piece(0.0, 0.25, Affine(0.5, 0.0)),
                        Piece(0.25, 0.5, Affine(1.5, -0.25)),
                        Piece(0.5, INF, Affine(1.0, 0.0))], name="three-slope-step")


def three_slope_ramp(n: int) -> Desingularizer:
    """Closed form of the ramp-majorant rival (valid for 1/n <= 3/8)."""
    base = three_slope_golden()

    def value(t):
        d = t - 0.125
        if d <= 0:
            return base(t)
        return base(t) + (d - n * d * d / 2 if d <= 1 / n else 1 / (2 * n))

    def deriv(t):
        d = t - 0.125
        if d <= 0:
            return 2.0
        return 1.0 + (1 - n * d if d <= 1 / n else 0.0)

    return ClosedForm(value, deriv, INF, "bdlm", f"ramp(n={n})",
                      f"phi_tilde + ramp excess with slope -{n} on (1/8, 1/8 + 1/{n}]")


def three_slope_golden() -> Desingularizer:
    return ClosedForm(lambda t: 2 * t if t <= 0.125 else t + 0.125,
                      lambda t: 2.0 if t <= 0.125 else 1.0,
                      INF, "exact-modulus", "phi_tilde", "2t for t <= 1/8; t + 1/8 after")


def build_three_slope() -> CatalogEntry:
    f = three_slope_function()
    ctx = KlContext.pointwise(f, 0.0)
    h = lambda s: 2.0 if s <= 0.125 else 1.0  # noqa: E731

    def u(s):
        if s <= 0.125:
            return 2.0
        return 2.0 / 3.0 if s < 0.5 else 1.0

    rivals = {f"ramp-{n}": three_slope_ramp(n) for n in (10, 100)}
    return CatalogEntry("three-slope-step", {}, f, ctx, three_slope_golden(), rivals,
                        golden_h=h, golden_u=u,
                        notes="slopes 1/2, 3/2, 1; u has three bands, h has two")


# ---------------------------------------------------------------------------
# harmonic piecewise-linear series
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def harmonic_level(k: int) -> float:
    """r_k = trigamma(k) - 1/k, so r_1 = pi^2/6 - 1 and r_k - r_{k+1} = 1/(k^2 (k+1))."""
    if k < 1:
        raise BadParamsError("k must be >= 1")
    if k == 1:
        return math.pi ** 2 / 6 - 1
    return float(polygamma(1, k)) - 1.0 / k


def _harmonic_cell(t: float) -> int:
    """k with r_{k+1} < t <= r_k."""
    if t > harmonic_level(1):
        raise BadParamsError("t beyond r_1")
    k = max(1, int(1 / math.sqrt(2 * t)) - 2)
    while harmonic_level(k) < t:
        k -= 1
    while harmonic_level(k + 1) >= t:
        k += 1
    return k


def harmonic_phi(t: float) -> float:
    """Exact modulus of the untruncated series: k(t - r_{k+1}) + 1/(k+1) on (r_{k+1}, r_k]."""
    if t <= 0:
        return 0.0
    k = _harmonic_cell(t)
    return k * (t - harmonic_level(k + 1)) + 1.0 / (k + 1)


def harmonic_h(s: float) -> float:
    return float(_harmonic_cell(s))


def _pinned_affine(slope: float, x: float, y: float) -> Affine:
    """Affine with the given slope whose float value at x equals y."""
    c = y - slope * x
    for _ in range(64):
        v = slope * x + c
        if v == y:
            break
        c = math.nextafter(c, -INF if v > y else INF)
    return Affine(slope, c)


def harmonic_function(K: int = 50) -> Piecewise1D:
    """Even piecewise-linear f on [-1, 1], slope 1/k on (1/(k+1), 1/k] for k <= K.

    The remaining core [-1/(K+1), 1/(K+1)] is the chord c|x| through the
    truncation point, c = (K+1) r_{K+1}; this keeps the modulus exact for
    t >= r_{K+1}.
    """
    pieces = []
    for k in range(1, K + 1):
        a, b = 1.0 / (k + 1), 1.0 / k
        # each piece owns its right end; pin its value there to the level exactly
        pieces.append(Piece(a, b, _pinned_affine(1.0 / k, b, harmonic_level(k))))
        pieces.append(Piece(-b, -a, _pinned_affine(-1.0 / k, -a, harmonic_level(k + 1))))
    edge = 1.0 / (K + 1)
    pieces.append(Piece(-edge, edge, Power((K + 1) * harmonic_level(K + 1), 1.0)))
    pieces.sort(key=lambda p: p.lo)
    return Piecewise1D(pieces, name=f"harmonic-piecewise(K={K})")


def harmonic_truncated_golden(K: int) -> Desingularizer:
    rK = harmonic_level(K + 1)
    r1 = harmonic_level(1)

    def value(t):
        return t / ((K + 1) * rK) if t <= rK else harmonic_phi(t)

    def deriv(t):
        return 1 / ((K + 1) * rK) if t <= rK else harmonic_h(t)

    return ClosedForm(value, deriv, r1, "exact-modulus", "phi_tilde_truncated",
                      f"t/((K+1) r_(K+1)) below r_(K+1) = {rK!r}; series modulus above")


def harmonic_chord_rival() -> Desingularizer:
    """Integral of the majorant that falls linearly across each whole cell."""
    r1 = harmonic_level(1)

    def value(t):
        if t <= 0:
            return 0.0
        k = _harmonic_cell(t)
        lo, w = harmonic_level(k + 1), harmonic_level(k) - harmonic_level(k + 1)
        d = t - lo
        return harmonic_phi(t) + lo / 2 + (d - d * d / (2 * w))

    def deriv(t):
        k = _harmonic_cell(t)
        lo, w = harmonic_level(k + 1), harmonic_level(k) - harmonic_level(k + 1)
        return k + 1 - (t - lo) / w

    return ClosedForm(value, deriv, r1, "bdlm", "step-hold",
                      "h plus a linear fall from k+1 to k across each cell (r_(k+1), r_k]")


def harmonic_ramp_rival(n: int) -> Desingularizer:
    """Integral of the majorant with ramps of width min(1/n, cell width) at each jump."""
    r1 = harmonic_level(1)
    cap = 1.0 / n
    # cells whose width exceeds 1/n: w_k = 1/(k^2 (k+1)) > 1/n only for small k
    wide = [k for k in range(1, int(n ** (1 / 3)) + 3) if 1.0 / (k * k * (k + 1)) > cap]

    def excess_below(k):
        # sum over cells i > k of min(cap, w_i)/2
        total = harmonic_level(k + 1) / 2
        for i in wide:
            if i > k:
                total -= (1.0 / (i * i * (i + 1)) - cap) / 2
        return total

    def value(t):
        if t <= 0:
            return 0.0
        k = _harmonic_cell(t)
        lo = harmonic_level(k + 1)
        w = min(cap, harmonic_level(k) - lo)
        d = t - lo
        part = d - d * d / (2 * w) if d <= w else w / 2
        return harmonic_phi(t) + excess_below(k) + part

    def deriv(t):
        k = _harmonic_cell(t)
        lo = harmonic_level(k + 1)
        w = min(cap, harmonic_level(k) - lo)
        d = t - lo
        return k + (1 - d / w if d <= w else 0.0)

    return ClosedForm(value, deriv, r1, "bdlm", f"ramp(n={n})",
                      f"h plus ramps of width min(1/{n}, cell) at every jump")


def build_harmonic(K: int = 50) -> CatalogEntry:
    if not (isinstance(K, int) and K >= 1):
        raise BadParamsError("K must be a positive integer")
    f = harmonic_function(K)
    r1 = harmonic_level(1)
    ctx = KlContext.pointwise(f, 0.0, U=IntervalSet([Interval.closed(-1.0, 1.0)]), eta=r1)
    series = ClosedForm(harmonic_phi, harmonic_h, r1, "exact-modulus", "phi_tilde_series",
                        "k(t - r_(k+1)) + 1/(k+1) on (r_(k+1), r_k]")
    # the represented function has a chord core, so its own modulus is linear below r_(K+1)
    golden = harmonic_truncated_golden(K)
    golden.name = "phi_tilde"
    r_trunc = harmonic_level(K + 1)
    core = 1 / ((K + 1) * r_trunc)
    h_trunc = lambda s: core if s <= r_trunc else harmonic_h(s)  # noqa: E731
    rivals = {"step-hold": harmonic_chord_rival(), "ramp-10": harmonic_ramp_rival(10),
              "ramp-1000": harmonic_ramp_rival(1000)}
    tail = 1.0 / (K + 1)  # sum_{i>K} i (r_i - r_{i+1}) = sum_{i>K} 1/(i(i+1))
    return CatalogEntry("harmonic-piecewise", {"K": K}, f, ctx, golden, rivals,
                        golden_h=h_trunc, golden_u=h_trunc,
                        notes="u = h = k on (r_(k+1), r_k]; every continuous majorant is strictly larger",
                        extra={"r1": r1, "tail": tail, "series_golden": series, "r_trunc": r_trunc})


def build_dc(depth: int = 6, delta: float = 0.05) -> CatalogEntry:
    if not (isinstance(depth, int) and depth >= 1):
        raise BadParamsError("depth must be a positive integer")
    dc = DcOscillation(depth=depth, delta=delta)
    return CatalogEntry("dc-oscillation", {"depth": depth, "delta": delta}, dc, None, None,
                        notes="g - f = sin(1/x) exp(-1/x^2) with f, g convex C^2",
                        extra={"dc": dc})


# ---------------------------------------------------------------------------
# PALM problems
# ---------------------------------------------------------------------------

def soft_threshold(v, t):
    """prox of |.| with modulus t: shrink by 1/t; ties resolve to the unique minimizer."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - 1.0 / t, 0.0)


def _l1(v):
    return float(np.abs(v).sum())


def _zero(v):
    return 0.0


def _identity(v, t):
    return np.asarray(v, dtype=float).copy()


def _sqrt2t(provenance, name, scale=1.0, power_form=False):
    if power_form:
        return ClosedForm(lambda t: scale * math.sqrt(t), lambda t: scale / (2 * math.sqrt(t)),
                          INF, provenance, name, f"{scale!r}*t^(1/2)")
    return ClosedForm(lambda t: scale * math.sqrt(2 * t), lambda t: scale / math.sqrt(2 * t),
                      INF, provenance, name, f"{scale!r}*sqrt(2t)")


def _palm_rivals():
    return {"growth": _sqrt2t("growth", "growth", 2.0),
            "lojasiewicz": _sqrt2t("user", "lojasiewicz", 2.0, power_form=True),
            "bdlm": _sqrt2t("bdlm", "bdlm")}


def palm_quadratic() -> PalmProblem:
    def dist(Z):
        return np.linalg.norm(np.atleast_2d(Z), axis=1)

    def batch(Z):
        Z = np.atleast_2d(Z)
        return 0.5 * (Z ** 2).sum(axis=1)

    return PalmProblem(
        name="palm-quadratic", f_val=_zero, g_val=_zero, f_prox=_identity, g_prox=_identity,
        F_val=lambda x, y: 0.5 * float(x @ x + y @ y),
        F_grad_x=lambda x, y: x.copy(), F_grad_y=lambda x, y: y.copy(),
        L1=lambda y: 1.0, L2=lambda x: 1.0, lam1=(1.0, 1.0), lam2=(1.0, 1.0), M=1.0,
        psi_dist=dist, psi_batch=batch)


def palm_soft_threshold() -> PalmProblem:
    def dist(Z):
        Z = np.atleast_2d(Z)
        x, y = Z[:, 0], Z[:, 1]
        r = x - y - 1
        dx = np.where(x == 0, np.maximum(0.0, np.abs(r) - 1), np.abs(np.sign(x) + r))
        dy = np.where(y == 0, np.maximum(0.0, np.abs(r) - 1), np.abs(np.sign(y) - r))
        return np.hypot(dx, dy)

    def batch(Z):
        Z = np.atleast_2d(Z)
        x, y = Z[:, 0], Z[:, 1]
        return np.abs(x) + np.abs(y) + 0.5 * (x - y - 1) ** 2

    return PalmProblem(
        name="palm-soft-threshold", f_val=_l1, g_val=_l1, f_prox=soft_threshold, g_prox=soft_threshold,
        F_val=lambda x, y: 0.5 * float(((x - y - 1) ** 2).sum()),
        F_grad_x=lambda x, y: x - y - 1, F_grad_y=lambda x, y: -(x - y - 1),
        L1=lambda y: 1.0, L2=lambda x: 1.0, lam1=(1.0, 1.0), lam2=(1.0, 1.0), M=2.0,
        psi_dist=dist, psi_batch=batch)


def build_palm(name: str) -> CatalogEntry:
    if name == "palm-quadratic":
        prob, kl = palm_quadratic(), {"eps": 2.0, "eta": 2.0}
        note = "f = g = 0, F = |z|^2/2; stationary point (0, 0)"
    else:
        prob, kl = palm_soft_threshold(), {"eps": 1.0, "eta": 0.5}
        note = "f = |x|, g = |y|, F = (x - y - 1)^2/2; unique stationary point (0, 0), Psi* = 1/2"
    golden = _sqrt2t("exact-modulus", "phi_tilde")
    golden.eta = kl["eta"]
    cfg = PalmConfig(gamma1=2.0, gamma2=2.0, z0=(1.0, 1.0), max_iters=200, stop_tol=0.0)
    return CatalogEntry(name, {}, prob, {"omega": [[0.0, 0.0]], **kl}, golden, _palm_rivals(),
                        golden_h=lambda s: 1 / math.sqrt(2 * s), notes=note,
                        extra={"config": cfg})


BUILDERS = {
    "nonsmooth-modulus": (build_nonsmooth, {"rho": 1.0}),
    "exp-flat": (build_exp_flat, {"eta": 0.5}),
    "three-slope-step": (build_three_slope, {}),
    "harmonic-piecewise": (build_harmonic, {"K": 50}),
    "dc-oscillation": (build_dc, {"depth": 6, "delta": 0.05}),
    "palm-soft-threshold": (lambda: build_palm("palm-soft-threshold"), {}),
    "palm-quadratic": (lambda: build_palm("palm-quadratic"), {}),
}


def names() -> list[str]:
    return list(BUILDERS)


def build(name: str, **params) -> CatalogEntry:
    try:
        fn, defaults = BUILDERS[name]
    except KeyError:
        raise UnknownNameError(f"unknown catalog entry {name!r}; choose from {', '.join(BUILDERS)}") from None
    extra = set(params) - set(defaults)
    if extra:
        raise BadParamsError(f"{name} does not take {sorted(extra)}")
    merged = {**defaults, **{k: v for k, v in params.items() if v is not None}}
    return fn(**merged)
