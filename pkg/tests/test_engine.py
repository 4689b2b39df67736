import math

import numpy as np
import pytest

from pclindex.engine import (
    certify_index,
    distribution_metrics,
    horizon_for_tolerance,
    index_diagonal,
    k_horizon_metrics,
    metrics_grid,
    metrics_to_tolerance,
    mp_index_at,
    mp_index_table,
    randomized_threshold_metrics,
    reachable_set,
)
from pclindex.exceptions import CertificationError, DomainError, ResourceCapError
from pclindex.model import (
    LEFT,
    RIGHT,
    BanditModel,
    Branch,
    FiniteMixtureKernel,
    InitialDistribution,
    StateInterval,
    ThresholdSpec,
    WeightBound,
    constant,
)
from pclindex.models import ChannelParams, WebCrawlParams, build_model, webcrawl_metrics

WEB = WebCrawlParams()


def _trajectory_F(x, z, k, side=RIGHT, beta=0.9, alpha=0.5, ell=0.5):
    """Direct discounted sum of ``k + 1`` rewards along the deterministic web-crawling path."""
    total = 0.0
    for t in range(k + 1):
        active = x > z if side == RIGHT else x >= z
        total += beta**t * (x if active else 0.0)
        x = ell if active else ell + alpha * x
    return total


@pytest.mark.parametrize("side", [RIGHT, LEFT])
def test_recursion_matches_trajectory_sum(webcrawl, side):
    xs = np.linspace(0.5, 1.0, 11)
    zs = np.linspace(0.45, 1.05, 13)
    for k in (0, 1, 7, 60):
        grid = metrics_grid(webcrawl, xs, zs, k, side)
        for i, x in enumerate(xs):
            for j, z in enumerate(zs):
                assert abs(grid.F[i, j] - _trajectory_F(x, z, k, side)) <= 1e-12


def test_webcrawl_F_at_ell(webcrawl):
    b = k_horizon_metrics(webcrawl, 0.5, ThresholdSpec(0.7), 300)
    assert b.F == pytest.approx(0.675 / 0.19, abs=1e-9)
    assert round(b.F, 6) == 3.552632


def test_channel_case_iv_G_is_indicator(channel):
    for z in (0.7, 0.8):
        for x in (z + 0.05, 0.99):
            assert k_horizon_metrics(channel, x, ThresholdSpec(z), 5).G == 1.0


def test_zero_discount_is_one_step():
    m = build_model("webcrawl", {"beta": 0.0})
    b = k_horizon_metrics(m, 0.8, ThresholdSpec(0.6), 10)
    assert (b.F, b.G) == (0.8, 1.0)
    v = mp_index_at(m, 0.8, k=0)
    assert v.m == pytest.approx((0.8 - 0.0) / (1.0 - 0.0))


def test_horizon_for_tolerance(webcrawl, channel):
    k = horizon_for_tolerance(webcrawl, 1e-6)
    wb = webcrawl.weight_bound
    assert wb.tail(k) <= 1e-6 < wb.tail(k - 1)
    assert k == 153
    half = build_model("channel", {"beta": 0.5})
    assert horizon_for_tolerance(half, 1e-9) == 31
    assert horizon_for_tolerance(webcrawl, webcrawl.weight_bound.M_gamma) == 0


def test_metrics_to_tolerance_error_field(webcrawl):
    b = metrics_to_tolerance(webcrawl, 0.6, ThresholdSpec(0.8), 1e-6)
    assert b.F_err <= 1e-6 and b.fg_err == 2 * b.F_err


def test_truncation_bound_holds(webcrawl, channel):
    for model in (webcrawl, channel):
        xs = np.linspace(model.states.lower, model.states.upper, 9)
        zs = np.linspace(model.states.lower, model.states.upper, 9)
        for k in (0, 5, 20, 60):
            a = metrics_grid(model, xs, zs, k)
            b = metrics_grid(model, xs, zs, k + 50)
            bound = model.weight_bound.tail(k)
            assert np.max(np.abs(a.F - b.F)) <= bound
            assert np.max(np.abs(a.G - b.G)) <= bound


def test_G_nonnegative(channel):
    xs = np.linspace(0, 1, 21)
    grid = metrics_grid(channel, xs, xs, 40)
    assert np.all(grid.G >= -grid.err[:, None])


def test_marginal_metrics_match_forced_first_action(channel):
    """f_k from an independent one-step look-ahead over (k-1)-horizon values."""
    k = 30
    xs = np.linspace(0, 1, 7)
    zs = np.array([0.1, 0.35, 0.55, 0.8])
    grid = metrics_grid(channel, xs, zs, k)
    assert np.allclose(grid.f, grid.F_first[1] - grid.F_first[0], atol=1e-12, rtol=0)
    for i, x in enumerate(xs):
        look = []
        for a in (0, 1):
            val_F = channel.r(x, a) * np.ones(zs.size)
            val_G = channel.c(x, a) * np.ones(zs.size)
            for br in channel.kernel.branches(a):
                p = float(br.prob(np.array([x]))[0])
                if p == 0:
                    continue
                y = float(np.asarray(br.map(np.array([x])), float).ravel()[0])
                nxt = metrics_grid(channel, [y], zs, k - 1)
                val_F = val_F + channel.beta * p * nxt.F[0]
                val_G = val_G + channel.beta * p * nxt.G[0]
            look.append((val_F, val_G))
        assert np.allclose(grid.f[i], look[1][0] - look[0][0], atol=1e-12, rtol=0)
        assert np.allclose(grid.g[i], look[1][1] - look[0][1], atol=1e-12, rtol=0)


def test_distribution_metrics(channel, webcrawl):
    pol = ThresholdSpec(0.6)
    pt = distribution_metrics(webcrawl, InitialDistribution.point(0.7), pol, 80)
    assert pt.F == k_horizon_metrics(webcrawl, 0.7, pol, 80).F
    two = distribution_metrics(webcrawl, InitialDistribution.weighted([0.6, 0.9], [0.5, 0.5]), pol, 80)
    a, b = (k_horizon_metrics(webcrawl, x, pol, 80) for x in (0.6, 0.9))
    assert two.F == pytest.approx((a.F + b.F) / 2, abs=1e-15)
    nu = InitialDistribution.uniform(0.0, 1.0, 1000)
    for z in (0.7005, 0.8005):
        assert distribution_metrics(channel, nu, ThresholdSpec(z), 200).G == pytest.approx(1 - z, abs=1e-3)


def test_randomized_threshold_endpoints(webcrawl):
    nu = InitialDistribution.point(0.5)
    right = distribution_metrics(webcrawl, nu, ThresholdSpec(0.5, RIGHT), 300)
    left = distribution_metrics(webcrawl, nu, ThresholdSpec(0.5, LEFT), 300)
    assert randomized_threshold_metrics(webcrawl, nu, 0.5, 1.0, 300).G == right.G
    assert randomized_threshold_metrics(webcrawl, nu, 0.5, 0.0, 300).G == left.G
    half = randomized_threshold_metrics(webcrawl, nu, 0.5, 0.5, 300)
    exact = (webcrawl_metrics(WEB, 0.5, 0.5, RIGHT).G + webcrawl_metrics(WEB, 0.5, 0.5, LEFT).G) / 2
    assert half.G == pytest.approx(exact, abs=half.G_err + 1e-12)


def test_mp_index_examples(webcrawl, channel):
    assert mp_index_at(webcrawl, 1.0, tol=1e-10).m == pytest.approx(1.0, abs=1e-12)
    for x in (0.0, 0.05, 0.15):
        v = mp_index_at(channel, x, tol=1e-10)
        assert abs(v.m - x) <= v.err + 1e-12
        assert v.g_floor > 0
    with pytest.raises(ValueError):
        mp_index_at(channel, 0.1)


def test_index_error_formula(channel):
    v = mp_index_at(channel, 0.5, k=40)
    fg_err = 2 * channel.weight_bound.tail(40)
    assert v.err == pytest.approx(fg_err * (1 + abs(v.m)) / v.g_floor, rel=1e-12)


def test_certify_index_refuses_small_g():
    with pytest.raises(CertificationError, match="PCLI1 not certifiable at x"):
        certify_index(0.3, 1.0, 1e-9, 1e-8, 10)


def test_index_table(webcrawl, channel):
    assert mp_index_table(webcrawl, [], 1e-8) == []
    (u,) = mp_index_table(webcrawl, [1.0], 1e-10)
    assert u.m == pytest.approx(1.0, abs=1e-12)
    xs = np.linspace(0, 1, 101)
    table = mp_index_table(channel, xs, 1e-10)
    for e in table:
        if e.x < 0.2:
            assert abs(e.m - e.x) <= e.err + 1e-12
    with pytest.raises(DomainError):
        mp_index_table(channel, [0.5, 0.2], 1e-8)
    assert mp_index_table(channel, xs, 1e-10, jobs=3) == table


def test_resource_cap(channel):
    with pytest.raises(ResourceCapError) as exc:
        metrics_grid(channel, np.linspace(0, 1, 50), [0.5], 200, cap=100)
    assert exc.value.cap == 100
    with pytest.raises(ResourceCapError):
        reachable_set(channel, np.linspace(0, 1, 50), 200, cap=100)


def test_reachable_set_growth_is_linear(webcrawl, channel):
    for model, root in ((webcrawl, 0.7), (channel, 0.3)):
        sizes = [len(reachable_set(model, [root], d)) for d in (10, 20, 40)]
        assert sizes[2] - sizes[1] <= 2 * (sizes[1] - sizes[0]) + 4


def test_corollary_jump_ratio(webcrawl):
    k = horizon_for_tolerance(webcrawl, 1e-12)
    xs = np.linspace(0.55, 0.95, 9)
    for x in xs:
        r = metrics_grid(webcrawl, [x], [x], k, RIGHT)
        l = metrics_grid(webcrawl, [x], [x], k, LEFT)
        ratio = (r.F[0, 0] - l.F[0, 0]) / (r.G[0, 0] - l.G[0, 0])
        v = mp_index_at(webcrawl, x, k=k)
        assert abs(ratio - v.m) <= 1e-9


# 20-state lattice model for the decomposition identity

N = 20
LATTICE = np.arange(N) / (N - 1)


def _snap(v):
    return np.round(np.clip(np.asarray(v, float), 0, 1) * (N - 1)) / (N - 1)


def _lattice_model(beta=0.8):
    kernel = FiniteMixtureKernel(
        passive=(Branch(lambda x: 0.3 + 0.4 * np.asarray(x, float), lambda x: _snap(np.asarray(x) + 1 / (N - 1))),
                 Branch(lambda x: 0.7 - 0.4 * np.asarray(x, float), lambda x: _snap(x))),
        active=(Branch(constant(0.5), constant(0.0)), Branch(constant(0.5), lambda x: _snap(np.asarray(x) / 2))),
    )
    return BanditModel(
        StateInterval(0.0, 1.0),
        lambda x, a: np.asarray(x, float) + 0.5 * a * (1 - np.asarray(x, float)),
        lambda x, a: a * (1 + np.asarray(x, float)),
        kernel,
        beta,
        weight_bound=WeightBound(M=2.0, gamma=beta),
    )


def _matrices(model):
    P = []
    for a in (0, 1):
        Pa = np.zeros((N, N))
        for br in model.kernel.branches(a):
            p = np.broadcast_to(np.asarray(br.prob(LATTICE), float), (N,))
            j = np.rint(np.broadcast_to(np.asarray(br.map(LATTICE), float), (N,)) * (N - 1)).astype(int)
            np.add.at(Pa, (np.arange(N), j), p)
        P.append(Pa)
    return P


def _policy_value(model, P, act, prim):
    Pp = np.where(act[:, None] == 1, P[1], P[0])
    rp = np.where(act == 1, prim(LATTICE, 1), prim(LATTICE, 0))
    return np.linalg.solve(np.eye(N) - model.beta * Pp, rp), Pp


@pytest.mark.parametrize("side", [RIGHT, LEFT])
def test_decomposition_identity_on_lattice(side):
    model = _lattice_model()
    P = _matrices(model)
    rng = np.random.default_rng(7)
    nu = np.full(N, 1.0 / N)
    k = horizon_for_tolerance(model, 1e-12)
    e = model.weight_bound.tail(k)
    bound = e * (1 + 2 / (1 - model.beta)) + 1e-11
    for z in (LATTICE[5], LATTICE[12]):
        B = (LATTICE > z) if side == RIGHT else (LATTICE >= z)
        grid = metrics_grid(model, LATTICE, [z], k, side)
        for _ in range(10):
            act = rng.integers(0, 2, N)
            for prim, FB_num, fB_num in ((model.r, grid.F[:, 0], grid.f[:, 0]), (model.c, grid.G[:, 0], grid.g[:, 0])):
                V_pi, P_pi = _policy_value(model, P, act, prim)
                V_B, _ = _policy_value(model, P, B.astype(int), prim)
                f_B = (prim(LATTICE, 1) + model.beta * P[1] @ V_B) - (prim(LATTICE, 0) + model.beta * P[0] @ V_B)
                occupation = np.linalg.solve((np.eye(N) - model.beta * P_pi).T, nu)
                exact_rhs = nu @ V_B + occupation @ ((act - B) * f_B)
                assert abs(nu @ V_pi - exact_rhs) <= 1e-10
                engine_rhs = nu @ FB_num + occupation @ ((act - B) * fB_num)
                assert abs(nu @ V_pi - engine_rhs) <= bound


@pytest.mark.parametrize("name", ["webcrawl", "channel"])
def test_sign_identity_on_grid(name):
    model = build_model(name)
    xs = model.states.grid(101)
    k = horizon_for_tolerance(model, 1e-12)
    grid = metrics_grid(model, xs, xs, k)
    m_xz = grid.f / grid.g
    diag = np.diag(m_xz)
    assert np.array_equal(np.sign(m_xz - diag[None, :]), np.sign(diag[:, None] - diag[None, :]))


def test_index_diagonal_matches_table(channel):
    xs = np.linspace(0, 1, 5)
    f, g, err = index_diagonal(channel, xs, 50)
    table = mp_index_table(channel, xs, channel.weight_bound.tail(50))
    assert np.allclose(f / g, [e.m for e in table], atol=0, rtol=1e-15)
    assert math.isfinite(err.max())
