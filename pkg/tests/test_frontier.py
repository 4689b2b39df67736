import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pclindex.engine import distribution_metrics, horizon_for_tolerance, randomized_threshold_metrics
from pclindex.exceptions import DomainError, ModelSpecError, UncertifiedInputError
from pclindex.frontier import (
    FrontierPoint,
    shadow_price_check,
    sweep_frontier,
    upper_hull,
    value_at_resource,
)
from pclindex.model import LEFT, RIGHT, InitialDistribution, ThresholdSpec
from pclindex.models import WebCrawlParams, webcrawl_breakpoints, webcrawl_metrics

WEB = WebCrawlParams()


@pytest.fixture(scope="module")
def uniform_nu():
    return InitialDistribution.uniform(0.5, 1.0, 201)


@pytest.fixture(scope="module")
def curve(webcrawl, uniform_nu):
    return sweep_frontier(webcrawl, uniform_nu, certified=True)


def test_refuses_uncertified(webcrawl, uniform_nu):
    with pytest.raises(UncertifiedInputError):
        sweep_frontier(webcrawl, uniform_nu)


def test_curve_shape(curve):
    g = [p.gamma for p in curve.points]
    assert all(b > a for a, b in zip(g, g[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(curve.slopes, curve.slopes[1:]))
    assert upper_hull(curve.points) == curve.points


def test_gamma_range_endpoints(webcrawl, uniform_nu, curve):
    k = curve.horizon
    never = distribution_metrics(webcrawl, uniform_nu, ThresholdSpec(math.inf), k).G
    always = distribution_metrics(webcrawl, uniform_nu, ThresholdSpec(-math.inf), k).G
    lo, hi = curve.gamma_range
    assert abs(lo - never) <= curve.err and abs(hi - always) <= curve.err


def test_points_reproduce_through_engine(webcrawl, uniform_nu, curve):
    for p in curve.points[:: max(1, len(curve.points) // 25)]:
        b = distribution_metrics(webcrawl, uniform_nu, ThresholdSpec(p.z, p.side), curve.horizon)
        assert abs(b.G - p.gamma) <= curve.err and abs(b.F - p.phi) <= curve.err


def test_alpha_endpoints(webcrawl, uniform_nu):
    k = 200
    for z in (0.6, 0.8):
        r = distribution_metrics(webcrawl, uniform_nu, ThresholdSpec(z, RIGHT), k)
        assert randomized_threshold_metrics(webcrawl, uniform_nu, z, 1.0, k).F == r.F


def test_point_mass_at_ell_breakpoints(webcrawl):
    nu = InitialDistribution.point(WEB.ell)
    c = sweep_frontier(webcrawl, nu, certified=True)
    assert c.grid_kind == "ladder"
    exact = {0.0} | {webcrawl_metrics(WEB, WEB.ell, z).G for z in webcrawl_breakpoints(WEB, 400)}
    exact |= {webcrawl_metrics(WEB, WEB.ell, -math.inf).G}
    for p in c.points:
        assert min(abs(p.gamma - e) for e in exact) <= c.err + 1e-12
    beta, C = WEB.beta, WEB.C
    for t in range(1, 6):
        assert min(abs(p.gamma - beta**t * C / (1 - beta ** (t + 1))) for p in c.points) <= c.err + 1e-12


def test_value_at_resource(curve):
    p = curve.points[10]
    sol = value_at_resource(curve, p.gamma)
    assert sol.phi == p.phi and sol.alpha in (0.0, 1.0)
    a, b = curve.points[20], curve.points[21]
    mid = value_at_resource(curve, (a.gamma + b.gamma) / 2)
    assert mid.phi == pytest.approx((a.phi + b.phi) / 2, rel=1e-12)
    assert mid.alpha == pytest.approx(0.5, abs=1e-9)
    phi, z, alpha = value_at_resource(curve, curve.gamma_range[1])
    assert phi == curve.points[-1].phi
    with pytest.raises(DomainError):
        value_at_resource(curve, curve.gamma_range[1] + 1.0)


def test_randomized_segment_at_ell(webcrawl):
    c = sweep_frontier(webcrawl, InitialDistribution.point(WEB.ell), certified=True)
    a, b = c.points[3], c.points[4]
    gamma = 0.25 * a.gamma + 0.75 * b.gamma
    sol = value_at_resource(c, gamma)
    assert sol.mix_with is None and sol.z == a.z and sol.alpha == pytest.approx(0.25, abs=1e-9)
    achieved = randomized_threshold_metrics(webcrawl, InitialDistribution.point(WEB.ell), sol.z, sol.alpha, c.horizon)
    assert abs(achieved.G - gamma) <= c.err + 1e-12 and abs(achieved.F - sol.phi) <= c.err + 1e-12


def test_shadow_price_probes(webcrawl, uniform_nu):
    for z in uniform_nu.nodes[[20, 100, 180]]:
        chk = shadow_price_check(webcrawl, uniform_nu, float(z))
        assert chk.status == "pass" and chk.diff <= chk.allowance
        errs = [r["error"] for r in chk.limit_ratios if r["delta"] < 0 and r["error"] is not None]
        # nonincreasing until round-off takes over
        assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(errs, errs[1:]))
        assert errs and errs[-1] <= 1e-6


def test_shadow_price_refuses_point_mass(webcrawl):
    with pytest.raises(ModelSpecError):
        shadow_price_check(webcrawl, InitialDistribution.point(0.7), 0.7)


def test_shadow_price_degenerate_between_nodes(webcrawl):
    nu = InitialDistribution.uniform(0.5, 1.0, 3)
    chk = shadow_price_check(webcrawl, nu, 0.55)
    assert chk.status == "degenerate"


def test_upper_hull_drops_collinear_and_dominated():
    pts = [FrontierPoint(0, 0, 1, RIGHT), FrontierPoint(1, 1, 0.5, RIGHT), FrontierPoint(2, 2, 0.2, RIGHT),
           FrontierPoint(1, 0.2, 0.4, LEFT), FrontierPoint(2, 1.5, 0.1, LEFT)]
    hull = upper_hull(pts)
    assert [(p.gamma, p.phi) for p in hull] == [(0, 0), (2, 2)]


_pts = st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=40)


@given(_pts)
def test_upper_hull_properties(raw):
    pts = [FrontierPoint(g, f, 0.0, RIGHT) for g, f in raw]
    hull = upper_hull(pts)
    assert upper_hull(hull) == hull
    assert all(b.gamma > a.gamma for a, b in zip(hull, hull[1:]))
    slopes = [(b.phi - a.phi) / (b.gamma - a.gamma) for a, b in zip(hull, hull[1:])]
    assert all(s2 <= s1 + 1e-9 * (1 + abs(s1)) for s1, s2 in zip(slopes, slopes[1:]))
    # every input point lies on or below the hull
    gs = np.array([p.gamma for p in hull])
    fs = np.array([p.phi for p in hull])
    for p in pts:
        assert p.phi <= np.interp(p.gamma, gs, fs) + 1e-7 * (1 + abs(p.phi))
