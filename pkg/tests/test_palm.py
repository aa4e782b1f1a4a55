import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klmodulus import catalog
from klmodulus.errors import (BandNotEnteredError, ConfigurationError, DescentViolationError,
                              NotSettledError, ProxFailureError)
from klmodulus.function_model import Piece, Piecewise1D, Quadratic
from klmodulus.intervals import INF
from klmodulus.palm import (PalmConfig, length_bound, limit_set_estimate, palm_step, residual,
                            residual_check, rho_constants, run, sufficient_decrease_check)

QUAD = catalog.palm_quadratic()
SOFT = catalog.palm_soft_threshold()


def _moduli(name):
    e = catalog.build(name)
    return e, {"exact": e.golden_modulus, **e.golden_rivals}


def test_quadratic_step():
    z, c, d = palm_step(QUAD, PalmConfig(), np.array([1.0, 1.0]))
    assert z.tolist() == [0.5, 0.5] and c == 2.0 and d == 2.0


def test_soft_threshold_step_at_origin():
    z, _, _ = palm_step(SOFT, PalmConfig(), np.array([0.0, 0.0]))
    assert z.tolist() == [0.0, 0.0]


def test_soft_threshold_prox_matches_grid_argmin():
    grid = np.linspace(-3, 3, 600_001)
    for v in (-1.3, -0.2, 0.0, 0.4, 2.1):
        for t in (1.0, 2.0, 5.0):
            argmin = grid[np.argmin(np.abs(grid) + 0.5 * t * (grid - v) ** 2)]
            assert catalog.soft_threshold(np.array([v]), t)[0] == pytest.approx(argmin, abs=1e-5)


def test_rho_constants():
    assert rho_constants(SOFT, PalmConfig(2.0, 2.0)) == (1.0, 2.0)


@pytest.mark.parametrize("g1,g2", [(1.0, 2.0), (2.0, 0.5)])
def test_config_rejects_small_gamma(g1, g2):
    with pytest.raises(ConfigurationError):
        PalmConfig(g1, g2)


def test_quadratic_run_contracts_geometrically():
    trace = run(QUAD, PalmConfig(max_iters=30))
    assert np.all(np.diff(trace.psi) < 0)
    ratios = trace.step_norm[1:] / trace.step_norm[:-1]
    assert np.allclose(ratios, 0.5)


def test_stationary_start_gives_single_iterate():
    trace = run(SOFT, PalmConfig(z0=(0.0, 0.0)))
    assert len(trace) == 1 and trace.fixed_point and trace.step_norm.size == 0


def test_soft_threshold_reaches_stationary_point():
    trace = run(SOFT, PalmConfig())
    assert SOFT.psi_dist(trace.z[-1])[0] == 0.0
    # brute-force stationary set on a grid over [-2, 2]^2
    ax = np.linspace(-2, 2, 401)
    Z = np.stack(np.meshgrid(ax, ax), axis=-1).reshape(-1, 2)
    stationary = Z[SOFT.psi_dist(Z) == 0.0]
    assert any(np.allclose(trace.z[-1], p) for p in stationary)


def test_residual_examples():
    trace = run(QUAD, PalmConfig(max_iters=5))
    r = residual(QUAD, trace, 1)
    assert r.ok and r.norm <= r.bound
    trace = run(SOFT, PalmConfig(max_iters=3))
    r = residual(SOFT, trace, 1)
    x1, y1 = SOFT.split(trace.z[1])
    a = float(y1[0]) + 1.0
    # x-partial of |x| + (x - a)^2/2 as a piecewise quadratic
    fx = Piecewise1D([Piece(-INF, 0.0, Quadratic(0.5, -1.0 - a, a * a / 2)),
                      Piece(0.0, INF, Quadratic(0.5, 1.0 - a, a * a / 2))])
    assert float(r.ax[0]) in fx.limiting_subdiff(float(x1[0]))


def test_residual_zero_at_fixed_point():
    trace = run(QUAD, PalmConfig(z0=(0.0, 0.0), max_iters=3))
    assert len(trace) == 1
    with pytest.raises(ConfigurationError):
        residual(QUAD, trace, 1)


def test_decrease_check_constant_trace():
    trace = run(SOFT, PalmConfig(z0=(0.0, 0.0)))
    rep = sufficient_decrease_check(trace, trace.rho1)
    assert rep.passed and rep.minimum == 0.0


def test_descent_violation_with_wrong_lipschitz():
    bad = catalog.palm_quadratic()
    bad.L1 = lambda y: 0.1
    with pytest.raises(DescentViolationError):
        run(bad, PalmConfig())


def test_prox_failure():
    bad = catalog.palm_quadratic()
    bad.f_prox = lambda v, t: None
    with pytest.raises(ProxFailureError):
        run(bad, PalmConfig())


def test_estimated_M_covers_true_constant():
    prob = catalog.palm_soft_threshold()
    prob.M = None
    trace = run(prob, PalmConfig())
    assert trace.M >= 2.0
    assert residual_check(trace).passed


def test_limit_set_estimates():
    trace = run(QUAD, PalmConfig(max_iters=200))
    pts, mu = limit_set_estimate(trace)
    assert len(pts) == 1 and np.allclose(pts[0], 0.0) and mu == pytest.approx(0.0, abs=1e-12)
    short = run(QUAD, PalmConfig(max_iters=3))
    with pytest.raises(NotSettledError):
        limit_set_estimate(short, tail=3, tol=1e-6)


def test_case_one_finite_termination_has_zero_tail():
    e, moduli = _moduli("palm-soft-threshold")
    trace = run(SOFT, PalmConfig(z0=(-1.0, 0.5)))
    ledger = length_bound(trace, moduli, 1.0, 0.5, primary="exact", problem=SOFT)
    assert ledger.case == 1 and trace.fixed_point
    assert float(np.sum(trace.step_norm[ledger.l_case1:])) == 0.0
    assert ledger.certified


def test_case_one_by_tolerance_leaves_rounding_level_tail():
    # levels below the resolution of Psi* count as reached; the leftover tail is tiny
    e, moduli = _moduli("palm-soft-threshold")
    trace = run(SOFT, PalmConfig())
    ledger = length_bound(trace, moduli, 1.0, 0.5, primary="exact", problem=SOFT)
    assert ledger.case == 1
    assert float(np.sum(trace.step_norm[ledger.l_case1:])) <= 1e-6
    assert ledger.certified


def test_quadratic_bounds_and_partial_sums():
    e, moduli = _moduli("palm-quadratic")
    trace = run(QUAD, PalmConfig())
    ledger = length_bound(trace, moduli, 2.0, 2.0, primary="exact", problem=QUAD)
    assert ledger.case == 2 and ledger.C == 16.0
    assert ledger.certified and ledger.partial_sum_min_slack >= -1e-12
    assert all(ledger.kl_bounds["exact"] <= v for v in ledger.kl_bounds.values())


def test_exact_bound_not_above_bdlm_bound():
    for name, prob in (("palm-quadratic", QUAD), ("palm-soft-threshold", SOFT)):
        e, moduli = _moduli(name)
        trace = run(prob, PalmConfig())
        ex = length_bound(trace, moduli, e.context["eps"], e.context["eta"], "exact", prob)
        bd = length_bound(trace, moduli, e.context["eps"], e.context["eta"], "bdlm", prob)
        assert ex.kl_bounds["exact"] <= bd.kl_bounds["bdlm"]


def test_band_not_entered():
    e, moduli = _moduli("palm-quadratic")
    trace = run(QUAD, PalmConfig(z0=(5.0, 5.0), max_iters=3))
    with pytest.raises(BandNotEnteredError):
        length_bound(trace, moduli, 0.1, 0.01, primary="exact", problem=QUAD)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1.1, 4.0), st.floats(1.1, 4.0),
       st.sampled_from(["palm-quadratic", "palm-soft-threshold"]))
def test_invariants_random_starts(x0, y0, g1, g2, name):
    e, moduli = _moduli(name)
    prob = e.function
    trace = run(prob, PalmConfig(g1, g2, (x0, y0), max_iters=200))
    assert sufficient_decrease_check(trace, trace.rho1).passed
    assert residual_check(trace).passed
    assert np.all(np.diff(trace.psi) <= 1e-12)
    if len(trace) < 2:
        return
    eps, eta = (4.0, 2.0) if name == "palm-quadratic" else (e.context["eps"], e.context["eta"])
    try:
        ledger = length_bound(trace, moduli, eps, eta, primary="exact", problem=prob)
    except BandNotEnteredError:
        return
    assert ledger.empirical_length <= ledger.bound_value + 1e-6
    if ledger.kl_bounds:
        assert all(ledger.kl_bounds["exact"] <= v + 1e-12 for v in ledger.kl_bounds.values())
