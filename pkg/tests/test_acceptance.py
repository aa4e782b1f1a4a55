"""Acceptance criteria 1-9, one pass/fail line each (see the terminal summary)."""

import math
import time

import numpy as np
import pytest

from klmodulus import catalog, cli
from klmodulus.desingularizers import (GrowthModulus, bdlm_phi, bdlm_phi_convex, bdlm_u,
                                       growth_desingularizer)
from klmodulus.errors import HInfiniteError
from klmodulus.function_model import Piece, Piecewise1D, Power, Quadratic
from klmodulus.intervals import INF, Interval, IntervalSet
from klmodulus.modulus import KlContext, exact_modulus, exact_modulus_convex_c1, h_of_s
from klmodulus.numerics import convexity_check
from klmodulus.palm import (PalmConfig, length_bound, residual_check, run,
                            sufficient_decrease_check)


# 1 -------------------------------------------------------------------------

@pytest.mark.parametrize("rho", [1.0, 0.5, 2.0])
def test_c1_quadratic_core_golden(record, rho):
    start = time.perf_counter()
    entry = catalog.build("nonsmooth-modulus", rho=rho)
    mod = exact_modulus(entry.function, entry.context)
    ts = np.linspace(0.0, 4.0, 1000)
    err = max(abs(mod(t) - entry.golden_modulus(t)) for t in ts)
    elapsed = time.perf_counter() - start
    if rho == 1.0:
        closed = max(abs(mod(t) - (math.sqrt(2 * t) if t <= 0.5 else t / 2 + 0.75)) for t in ts)
        err = max(err, closed)
    record(1, err <= 1e-6 and elapsed < 1.0, f"rho={rho:g} max err {err:.1e} in {elapsed:.2f}s")


# 2 -------------------------------------------------------------------------

def test_c2_three_slope(record):
    entry = catalog.build("three-slope-step")
    f, ctx = entry.function, entry.context
    h_ok = all(h_of_s(f, ctx, s) == (2.0 if s <= 0.125 else 1.0)
               for s in [1e-9, 0.01, 0.1, 0.125, 0.125 + 1e-12, 0.2, 0.4, 0.5, 1.0, 3.0])
    u_ok = all(bdlm_u(f, 0.0, INF, 4.0, r) == want
               for r, want in [(0.01, 2.0), (0.125, 2.0), (0.2, 2 / 3), (0.4, 2 / 3), (0.5, 1.0), (2.0, 1.0)])
    mod = exact_modulus(f, ctx)
    ts = np.linspace(0.0, 4.0, 1000)
    err = max(abs(mod(t) - (2 * t if t <= 0.125 else t + 0.125)) for t in ts)
    gaps = []
    dominated = True
    for n in (10, 100, 1000):
        rival = bdlm_phi(f, 0.0, INF, 4.0, "infimal-ramp", n=n)
        dominated &= all(mod(t) <= rival(t) + 1e-12 for t in ts[1:])
        gaps.append(rival(0.25) - mod(0.25))
    ok = h_ok and u_ok and err <= 1e-9 and dominated and min(gaps) > 0
    record(2, ok, f"h exact {h_ok}, u exact {u_ok}, phi err {err:.1e}, gaps at 1/4 {[f'{g:.1e}' for g in gaps]}")


# 3 -------------------------------------------------------------------------

def test_c3_convex_comparison(record, tmp_path):
    entry = catalog.build("nonsmooth-modulus", rho=1.0)
    f = entry.function
    phi1 = bdlm_phi_convex(f, r0=0.5, limiting=True)
    m, m_inv = catalog.nonsmooth_growth_m(1.0)
    phi2 = growth_desingularizer(GrowthModulus(m, inverse=m_inv, knots=[0.5]))
    v1, v2 = phi1(1.0), phi2(0.5)
    mod = exact_modulus(f, entry.context)
    ts = np.linspace(0.0, 2.0, 1001)[1:]
    dom = all(mod(t) <= phi1(t) + 1e-12 and mod(t) <= phi2(t) + 1e-12 for t in ts)
    code = cli.main(["compare", "--catalog", "nonsmooth-modulus", "--rho", "1", "--out", str(tmp_path)])
    left = np.loadtxt(tmp_path / "figure1_left.csv", delimiter=",", skiprows=1)
    right = np.loadtxt(tmp_path / "figure1_right.csv", delimiter=",", skiprows=1)
    lowest = bool(np.all(left[:, 1] <= left[:, 2] + 1e-12) and np.all(right[:, 1] <= right[:, 2] + 1e-12))
    ok = (abs(v1 - 1.5) <= 1e-6 and abs(v2 - 2.0) <= 1e-6 and dom and code == 0 and lowest
          and len(left) == 1000 and len(right) == 1000)
    record(3, ok, f"phi1(1)={v1:.9f} phi2(1/2)={v2:.9f} dominance {dom}, figure data lowest curve {lowest}")


# 4 -------------------------------------------------------------------------

def test_c4_harmonic_series(record):
    K = 50
    entry = catalog.build("harmonic-piecewise", K=K)
    r1 = entry.extra["r1"]
    r1_err = abs(r1 - (math.pi ** 2 / 6 - 1))
    mod = exact_modulus(entry.function, entry.context)
    corrected = mod(r1)
    raw = corrected - mod(entry.extra["r_trunc"])
    ok_values = abs(raw - 1) <= 1 / (K + 1) + 1e-9 and abs(corrected - 1) <= 1e-9 and r1_err <= 1e-12
    ts = np.concatenate([np.geomspace(1e-6, r1, 300), [r1]])
    golden = entry.extra["series_golden"]
    series_gap = min(min(phi(t) - golden(t) for t in ts) for phi in entry.golden_rivals.values())
    # majorants computed from the truncated data: strict above the truncation level, equal below
    r_trunc = entry.extra["r_trunc"]
    above = ts[ts > r_trunc]
    below = ts[ts <= r_trunc]
    lib_gap, lib_below = INF, INF
    for policy in ("infimal-ramp", "step-hold"):
        phi = bdlm_phi(entry.function, 0.0, INF, r1, policy, n=10)
        lib_gap = min(lib_gap, min(phi(t) - mod(t) for t in above))
        lib_below = min(lib_below, min(phi(t) - mod(t) for t in below))
    ok = ok_values and series_gap > 0 and lib_gap > 0 and lib_below >= -1e-12
    record(4, ok, f"r1 err {r1_err:.1e}, raw {raw:.6f}, tail-corrected {corrected:.12f}, "
                  f"min series-rival gap {series_gap:.1e}, min truncated-rival gap {lib_gap:.1e}")


# 5 -------------------------------------------------------------------------

def test_c5_exp_flat(record):
    try:
        entry = catalog.build("exp-flat", eta=1.0)
        exact_modulus(entry.function, entry.context)
        infinite = False
    except HInfiniteError:
        infinite = True
    entry = catalog.build("exp-flat", eta=0.5)
    mod = exact_modulus(entry.function, entry.context)
    ss = np.linspace(0.0, 0.5, 101)[1:-1]
    h_err = max(abs(mod.h_value(s) - 2.0) for s in ss)
    phi_err = max(abs(mod(t) - 2 * t) for t in np.linspace(0, 0.5, 101))
    record(5, infinite and h_err <= 1e-9 and phi_err <= 1e-9,
           f"eta=1 h-infinite {infinite}; eta=0.5 h err {h_err:.1e}, phi err {phi_err:.1e}")


# 6 -------------------------------------------------------------------------

def test_c6_dc_oscillation(record):
    dc = catalog.build("dc-oscillation").extra["dc"]
    xs = np.linspace(0.05, 1.0, 400)
    res = dc.residual(xs)
    conv_f = convexity_check(dc.f, xs, tol=1e-12).passed
    conv_g = convexity_check(dc.g, xs, tol=1e-12).passed
    zeros = dc.zeros()
    zerr = max(abs(z - 1 / (n * math.pi)) for n, z in enumerate(zeros, start=1))
    record(6, res <= 1e-5 and conv_f and conv_g and zerr <= 1e-6 and len(zeros) == 6,
           f"residual {res:.1e}, f convex {conv_f}, g convex {conv_g}, zero err {zerr:.1e}")


# 7 -------------------------------------------------------------------------

CONVEX_INSTANCES = {
    "quadratic": (Piecewise1D([Piece(-INF, INF, Quadratic(0.5))]), -1.0, 1.5),
    "quartic": (Piecewise1D([Piece(-INF, INF, Power(1.0, 4.0))]), -1.0, 1.0),
    "asymmetric-power": (Piecewise1D([Piece(-INF, 0.0, Power(1.0, 2.0)),
                                      Piece(0.0, INF, Power(3.0, 1.5))]), -2.0, 1.0),
}


def test_c7_convex_closed_form_vs_general(record):
    start = time.perf_counter()
    errs = {}
    for name, (f, a, b) in CONVEX_INSTANCES.items():
        closed = exact_modulus_convex_c1(f, 0.0, a, b)
        ctx = KlContext.pointwise(f, 0.0, IntervalSet([Interval.open(a, b)]), closed.context.eta)
        brute = exact_modulus(f, ctx)
        ts = np.linspace(0.0, closed.context.eta, 1000, endpoint=False)
        errs[name] = max(abs(closed(t) - brute(t)) for t in ts)
    elapsed = time.perf_counter() - start
    record(7, max(errs.values()) <= 1e-6 and elapsed < 10,
           f"max errs { {k: f'{v:.1e}' for k, v in errs.items()} } in {elapsed:.2f}s")


# 8 -------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["palm-quadratic", "palm-soft-threshold"])
def test_c8_palm_suite(record, name):
    entry = catalog.build(name)
    base = entry.extra["config"]
    trace = run(entry.function, PalmConfig(base.gamma1, base.gamma2, base.z0, max_iters=200))
    dec = sufficient_decrease_check(trace, trace.rho1, tol=1e-9)
    res = residual_check(trace)
    moduli = {"exact": entry.golden_modulus, **entry.golden_rivals}
    ledger = length_bound(trace, moduli, entry.context["eps"], entry.context["eta"],
                          primary="exact", problem=entry.function)
    exceeds = ledger.bound_value >= ledger.empirical_length
    dominates = all(ledger.kl_bounds["exact"] <= v + 1e-12 for v in ledger.kl_bounds.values())
    ok = dec.passed and res.passed and exceeds and dominates and ledger.kl_bounds
    record(8, ok, f"{name}: min slack {dec.minimum:.1e}, residual ok {res.passed}, case {ledger.case}, "
                  f"bound {ledger.bound_value:.4f} >= length {ledger.empirical_length:.4f}, "
                  f"exact-bound dominance {dominates}")


# 9 -------------------------------------------------------------------------

CLI_COMMANDS = [
    ["modulus", "--catalog", "nonsmooth-modulus", "--rho", "1"],
    ["modulus", "--catalog", "exp-flat", "--eta", "0.5"],
    ["compare", "--catalog", "nonsmooth-modulus", "--rho", "1", "--svg"],
    ["compare", "--catalog", "three-slope-step"],
    ["compare", "--catalog", "harmonic-piecewise"],
    ["verify", "--catalog", "three-slope-step"],
    ["palm", "--problem", "palm-quadratic"],
    ["palm", "--problem", "palm-soft-threshold"],
]


def test_c9_determinism(record, tmp_path):
    diffs = []
    for i, cmd in enumerate(CLI_COMMANDS):
        outs = []
        for rep in range(2):
            d = tmp_path / f"{i}-{rep}"
            assert cli.main([*cmd, "--out", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        if outs[0] != outs[1] or not outs[0]:
            diffs.append(" ".join(cmd))
    record(9, not diffs, f"{len(CLI_COMMANDS)} commands byte-identical" if not diffs else f"differ: {diffs}")
