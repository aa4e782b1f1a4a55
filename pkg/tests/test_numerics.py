import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klmodulus import catalog
from klmodulus.errors import (AtOriginError, DivergentIntegralError, EmptyDomainError,
                              NotMonotoneError, OutOfRangeError)
from klmodulus.intervals import Interval, IntervalSet
from klmodulus.modulus import ClosedForm, exact_modulus
from klmodulus.numerics import (concavity_check, convexity_check, grid_sup, integrate_decreasing,
                                invert_monotone, left_derivative)


def test_singular_integrand():
    res = integrate_decreasing(lambda s: 1 / math.sqrt(2 * s), 0.5)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert res.converged and res.error_estimate >= 0


def test_zero_integrand():
    assert integrate_decreasing(lambda s: 0.0, 1.0).value == 0.0


def test_step_integrand_with_knot():
    h = lambda s: 2.0 if s <= 0.125 else 1.0  # noqa: E731
    assert integrate_decreasing(h, 0.25, points=[0.125]).value == pytest.approx(0.375, abs=1e-12)


def test_divergent_integrand():
    with pytest.raises(DivergentIntegralError):
        integrate_decreasing(lambda s: 1 / s, 1.0)


def test_increasing_integrand_rejected():
    with pytest.raises(NotMonotoneError):
        integrate_decreasing(lambda s: s, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.01, 10.0))
def test_power_integrand_matches_closed_form(a, t):
    # integral of s^(-a) over (0, t] is t^(1-a)/(1-a)
    res = integrate_decreasing(lambda s: s ** (-a), t, tol=1e-9)
    exact = t ** (1 - a) / (1 - a)
    assert res.value == pytest.approx(exact, rel=1e-7)
    assert res.converged == (res.error_estimate <= 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 4.0))
def test_panels_respect_riemann_bracket(t):
    res = integrate_decreasing(lambda s: 1 / math.sqrt(s), t)
    for lo, hi, val, lower, upper in res.panels:
        assert lower - 1e-9 * (1 + upper) <= val <= upper + 1e-9 * (1 + upper)


def test_invert_monotone_example():
    assert invert_monotone(lambda x: x * x / 2, 0.125, 0.0, 2.0) == pytest.approx(0.5, abs=1e-15)


def test_invert_monotone_out_of_range():
    with pytest.raises(OutOfRangeError):
        invert_monotone(lambda x: x, 5.0, 0.0, 1.0)


@pytest.mark.parametrize("name", ["nonsmooth-modulus", "three-slope-step", "exp-flat"])
def test_invert_monotone_round_trip_on_catalog(name):
    f = catalog.build(name).function
    rng = np.random.default_rng(0)
    for x in rng.uniform(0.01, 2.0, 100):
        y = f(x)
        assert invert_monotone(f.eval, y, 0.0, 3.0) == pytest.approx(x, abs=1e-9)


def test_grid_sup_nested_refinement_monotone():
    q = lambda x: math.sin(7 * x) + 0.3 * x  # noqa: E731
    dom = IntervalSet([Interval.closed(0.0, 2.0)])
    prev = -math.inf
    for n in (11, 21, 41, 81, 161):  # each grid contains the previous one
        v = grid_sup(q, dom, n=n)
        assert v >= prev
        prev = v


def test_grid_sup_drops_open_endpoints():
    assert grid_sup(lambda x: x, IntervalSet([Interval.open(0.0, 1.0)]), n=5) < 1.0


def test_grid_sup_empty_domain():
    with pytest.raises(EmptyDomainError):
        grid_sup(lambda x: x, IntervalSet([]))


def test_left_derivative_exact_and_numeric():
    phi = ClosedForm(lambda t: math.sqrt(t), lambda t: 0.5 / math.sqrt(t))
    assert left_derivative(phi, 4.0) == 0.25
    plain = lambda t: math.sqrt(t)  # noqa: E731
    assert left_derivative(plain, 4.0) == pytest.approx(0.25, abs=1e-6)
    with pytest.raises(AtOriginError):
        left_derivative(phi, 0.0)


@pytest.mark.parametrize("name", ["nonsmooth-modulus", "three-slope-step", "harmonic-piecewise"])
def test_left_derivative_nonincreasing_for_exact_modulus(name):
    e = catalog.build(name)
    mod = exact_modulus(e.function, e.context)
    top = min(e.context.eta, 4.0)
    ds = [left_derivative(mod.phi_tilde, t) for t in np.linspace(0, top, 200)[1:]]
    assert all(b <= a + 1e-12 for a, b in zip(ds, ds[1:]))


def test_shape_checks():
    grid = np.linspace(0.01, 2, 100)
    assert concavity_check(math.sqrt, grid).passed
    assert not concavity_check(lambda t: t * t, grid).passed
    assert convexity_check(lambda t: t * t, grid).passed
    assert not convexity_check(math.sqrt, grid).passed
