import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klmodulus import catalog
from klmodulus.desingularizers import (GrowthModulus, bdlm_phi, bdlm_phi_convex, bdlm_u,
                                       certificate_context, compare, growth_desingularizer,
                                       growth_phi, nonstationary_certificate)
from klmodulus.errors import (ConfigurationError, EmptyLevelSetError, NotConvexError,
                              StationaryPointError, UInfiniteError)
from klmodulus.function_model import Affine, Piece, Piecewise1D
from klmodulus.intervals import INF
from klmodulus.modulus import KlContext, exact_modulus, verify_gkl
from klmodulus.numerics import concavity_check

THREE = catalog.three_slope_function()
NONSMOOTH = catalog.nonsmooth_function(1.0)
ABS = Piecewise1D([Piece(-INF, 0.0, Affine(-1.0)), Piece(0.0, INF, Affine(1.0))])


# u ---------------------------------------------------------------------------

def test_u_examples():
    assert bdlm_u(THREE, 0.0, INF, 4.0, 0.2) == pytest.approx(2 / 3)
    assert bdlm_u(NONSMOOTH, 0.0, INF, 0.5, 0.125) == pytest.approx(2.0)
    f = catalog.harmonic_function(50)
    r2, r3 = catalog.harmonic_level(2), catalog.harmonic_level(3)
    for r in np.linspace(r3, r2, 7)[1:]:
        assert bdlm_u(f, 0.0, INF, 1.0, r) == pytest.approx(2.0)


def test_u_errors():
    with pytest.raises(EmptyLevelSetError):
        bdlm_u(NONSMOOTH, 0.0, 0.1, 1.0, 0.5)
    flat = Piecewise1D([Piece(-INF, 0.0, Affine(0.0, 0.0)), Piece(0.0, 1.0, Affine(1.0, 0.0)),
                        Piece(1.0, 2.0, Affine(0.0, 1.0)), Piece(2.0, INF, Affine(1.0, -1.0))])
    with pytest.raises(UInfiniteError):
        bdlm_u(flat, 0.0, INF, 2.0, 1.0)
    with pytest.raises(ConfigurationError):
        bdlm_u(NONSMOOTH, 0.0, INF, 0.5, 0.0)


# bdlm_phi --------------------------------------------------------------------

def test_ramp_majorant_equals_modulus_then_strictly_above():
    e = catalog.build("three-slope-step")
    mod = exact_modulus(e.function, e.context)
    rival = bdlm_phi(THREE, 0.0, INF, 4.0, "infimal-ramp", n=10)
    low = compare(mod, rival, np.linspace(0, 0.125, 50)[1:])
    high = compare(mod, rival, np.linspace(0.13, 4.0, 200))
    assert low.all_equal
    assert high.a_le_b and high.less == high.n


def test_ramp_majorant_matches_closed_form():
    rival = bdlm_phi(THREE, 0.0, INF, 4.0, "infimal-ramp", n=10)
    ref = catalog.three_slope_ramp(10)
    for t in np.linspace(0.0, 4.0, 101)[1:]:
        assert rival(t) == pytest.approx(ref(t), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 3.9))
def test_ramp_nonincreasing_in_n(t):
    vals = [bdlm_phi(THREE, 0.0, INF, 4.0, "infimal-ramp", n=n)(t) for n in (5, 10, 40, 200)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_continuous_u_gives_modulus():
    phi = bdlm_phi(NONSMOOTH, 0.0, INF, 0.5, "infimal-ramp", n=10)
    for t in np.linspace(0, 0.5, 40)[1:]:
        assert phi(t) == pytest.approx(math.sqrt(2 * t), abs=1e-9)


@pytest.mark.parametrize("policy", ["infimal-ramp", "step-hold"])
def test_bdlm_rivals_are_desingularizing(policy):
    phi = bdlm_phi(THREE, 0.0, INF, 4.0, policy, n=10)
    ctx = KlContext.pointwise(THREE, 0.0, eta=4.0)
    assert verify_gkl(THREE, ctx, phi, np.linspace(-1, 5, 3001)).passed


def test_unknown_policy():
    with pytest.raises(ConfigurationError):
        bdlm_phi(THREE, 0.0, INF, 4.0, "bogus")


# convex bdlm -----------------------------------------------------------------

def test_convex_limiting_value():
    phi = bdlm_phi_convex(NONSMOOTH, r0=0.5, limiting=True)
    assert phi(1.0) == pytest.approx(1.5, abs=1e-9)
    assert phi(0.0) == 0.0
    assert exact_modulus(NONSMOOTH, KlContext.pointwise(NONSMOOTH, 0.0))(1.0) == pytest.approx(1.25)


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_convex_default_is_concave_and_valid(rho):
    f = catalog.nonsmooth_function(rho)
    r0 = rho * rho / 2
    phi = bdlm_phi_convex(f, r0=r0)
    assert phi.rbar == pytest.approx(0.9 * r0)
    assert concavity_check(phi, np.linspace(0, 3 * r0, 200)).passed
    assert verify_gkl(f, KlContext.pointwise(f, 0.0), phi, np.linspace(-3, 3, 2001)).passed


def test_convex_rejects_nonconvex():
    with pytest.raises(NotConvexError):
        bdlm_phi_convex(THREE, r0=0.5)


# growth ----------------------------------------------------------------------

def test_growth_values():
    m, m_inv = catalog.nonsmooth_growth_m(1.0)
    gm = GrowthModulus(m, inverse=m_inv, knots=[0.5])
    assert growth_phi(gm, 0.5) == pytest.approx(2.0, abs=1e-9)
    assert growth_phi(gm, 1.0) == pytest.approx(2.25 + 0.75 * math.log(2), abs=1e-9)
    identity = GrowthModulus(lambda r: r)
    assert growth_phi(identity, 0.7) == pytest.approx(0.7, abs=1e-9)


def test_growth_without_inverse_matches_closed_form():
    m, _ = catalog.nonsmooth_growth_m(1.0)
    phi = growth_desingularizer(GrowthModulus(m, knots=[0.5]))
    ref = catalog.nonsmooth_growth(1.0)
    for t in (0.1, 0.5, 1.3, 2.0):
        assert phi(t) == pytest.approx(ref(t), abs=1e-8)


def test_growth_rejects_bad_modulus():
    with pytest.raises(ConfigurationError):
        GrowthModulus(lambda r: r + 1)
    with pytest.raises(ConfigurationError):
        GrowthModulus(lambda r: min(r, 1.0))


# compare ---------------------------------------------------------------------

def test_compare_self_all_equal():
    phi = catalog.nonsmooth_golden(1.0)
    rep = compare(phi, phi, np.linspace(0, 2, 100))
    assert rep.all_equal and rep.first_crossing is None


def test_compare_growth_strict():
    e = catalog.build("nonsmooth-modulus")
    mod = exact_modulus(e.function, e.context)
    rep = compare(mod, e.golden_rivals["growth"], np.linspace(0, 2, 1001)[1:])
    assert rep.a_le_b and rep.less == rep.n


def test_compare_reports_crossing():
    rep = compare(lambda t: 2 * t, lambda t: t, [0.5, 1.0])
    assert not rep.a_le_b and rep.first_crossing == 0.5


@pytest.mark.parametrize("name", ["nonsmooth-modulus", "three-slope-step", "harmonic-piecewise"])
def test_catalog_rivals_dominate(name):
    e = catalog.build(name)
    mod = exact_modulus(e.function, e.context)
    grid = np.linspace(0, min(e.context.eta, 4.0), 400, endpoint=False)[1:]
    for phi in e.golden_rivals.values():
        assert compare(mod, phi, grid).a_le_b


# nonstationary certificate ---------------------------------------------------

def test_nonstationary_examples():
    cert = nonstationary_certificate(ABS, 1.0)
    assert cert.c == 2.0 and cert.theta == 0.0 and cert.eps < 1
    slope2 = Piecewise1D([Piece(-INF, INF, Affine(2.0))])
    assert nonstationary_certificate(slope2, 0.3).c == 1.0
    cert = nonstationary_certificate(NONSMOOTH, 2.0)
    assert (cert.c, cert.theta, cert.eps) == (1.0, 0.0, 0.5)


@pytest.mark.parametrize("f,x", [(ABS, 1.0), (NONSMOOTH, 2.0), (NONSMOOTH, 0.3), (THREE, 0.3)])
def test_nonstationary_certificate_verifies(f, x):
    cert = nonstationary_certificate(f, x)
    ctx = certificate_context(f, cert, x)
    grid = np.linspace(x - cert.eps, x + cert.eps, 1001)[1:-1]
    assert verify_gkl(f, ctx, cert.phi, grid).passed


def test_stationary_point_rejected():
    with pytest.raises(StationaryPointError):
        nonstationary_certificate(ABS, 0.0)
