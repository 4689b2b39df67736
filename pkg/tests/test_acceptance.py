"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``;
the criterion lines appear in the terminal summary.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from pclindex import cli
from pclindex.engine import horizon_for_tolerance, k_horizon_metrics, metrics_grid, mp_index_at
from pclindex.frontier import shadow_price_check, sweep_frontier
from pclindex.model import LEFT, RIGHT, InitialDistribution, ThresholdSpec
from pclindex.models import (
    ChannelParams,
    WebCrawlParams,
    build_model,
    channel_index,
    webcrawl_avg_index,
    webcrawl_index,
    webcrawl_jump_points,
    webcrawl_metrics,
)
from pclindex.models.channel import case_of
from pclindex.rmabp import RMABPInstance, lagrangian_value, lambda_upper, simulate_index_policy, solve_dual
from pclindex.verify import FAIL, PASS, check_pcli1, full_report
from test_engine import LATTICE, _lattice_model, _matrices, _policy_value

WEB = WebCrawlParams()
CH = ChannelParams()


def _record(n, ok, detail):
    record_criterion(f"Criterion {n}", bool(ok), detail)
    assert ok, detail


def test_criterion_1_webcrawl_index():
    model = build_model("webcrawl")
    t0 = time.perf_counter()
    xs = model.states.grid(101)
    cert_gap, worst, loose_gap = 0.0, -math.inf, 0.0
    for x in xs:
        exact = webcrawl_index(WEB, float(x))
        v = mp_index_at(model, float(x), tol=1e-10)
        cert_gap = max(cert_gap, abs(v.m - exact))
        worst = max(worst, abs(v.m - exact) - v.err)
        loose_gap = max(loose_gap, abs(mp_index_at(model, float(x), tol=1e-6).m - exact))
    m_u = mp_index_at(model, WEB.u, tol=1e-10).m
    elapsed = time.perf_counter() - t0
    ok = worst <= 0 and loose_gap <= 1e-6 and m_u == 1.0 == WEB.u / WEB.C and elapsed < 5
    _record(1, ok, f"max gap {cert_gap:.2e} (gap - certificate <= {worst:.2e}), tol-1e-6 gap {loose_gap:.2e}, "
                   f"m(u)={m_u!r}, {elapsed:.2f}s")


def test_criterion_2_channel_index():
    model = build_model("channel")
    t0 = time.perf_counter()
    gaps = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
    for x in model.states.grid(101):
        v = mp_index_at(model, float(x), tol=1e-10)
        c = case_of(CH, float(x))
        gaps[c] = max(gaps[c], abs(v.m - channel_index(CH, float(x))))
    examples = (channel_index(CH, 0.1), channel_index(CH, 0.5), channel_index(CH, 0.9))
    elapsed = time.perf_counter() - t0
    ok = (max(gaps[1], gaps[3], gaps[4]) <= 1e-8 and gaps[2] <= 1e-6 and elapsed < 20
          and examples[0] == 0.1 and abs(examples[1] - 0.5 / 0.82) <= 1e-15 and examples[2] == 0.9)
    _record(2, ok, "gaps by case " + ", ".join(f"{c}:{g:.1e}" for c, g in gaps.items()) + f", {elapsed:.2f}s")


def test_criterion_3_channel_g_margin():
    model = build_model("channel")
    grid = model.states.grid(201)
    v = check_pcli1(model, grid, grid, tol=1e-10)
    bound = 1 - model.beta - 1e-9
    _record(3, v.status == PASS and v.min_certified_g >= bound,
            f"min certified g {v.min_certified_g:.12f} >= {bound:.12f}")


def test_criterion_4_full_reports():
    verdicts = {name: full_report(build_model(name)) for name in ("webcrawl", "channel", "reset")}
    reset = build_model("reset")
    g = k_horizon_metrics(reset, 0.6, ThresholdSpec(0.5), horizon_for_tolerance(reset, 1e-10)).g
    r = verdicts["reset"]
    wx, wz = r.pcli1.witness[:2] if r.pcli1.witness else (None, None)
    wg = k_horizon_metrics(reset, wx, ThresholdSpec(wz), r.pcli1.horizon).g if wx is not None else math.nan
    ok = (verdicts["webcrawl"].verdict == PASS and verdicts["channel"].verdict == PASS
          and r.verdict == FAIL and r.pcli1.status == FAIL and wg < 0 and g <= -0.5)
    _record(4, ok, f"webcrawl {verdicts['webcrawl'].verdict}, channel {verdicts['channel'].verdict}, "
                   f"reset {r.verdict} witness ({wx}, {wz}) g={wg:.3f}, g(0.6, 0.5)={g:.3f}")


def test_criterion_5_stieltjes_sum():
    rng = np.random.default_rng(20240605)
    worst = 0.0
    for _ in range(50):
        x = float(rng.uniform(WEB.ell, WEB.u))
        z1, z2 = sorted(rng.uniform(WEB.ell, WEB.u, 2).tolist())
        dF = webcrawl_metrics(WEB, x, z2).F - webcrawl_metrics(WEB, x, z1).F
        total = 0.0
        for y in webcrawl_jump_points(WEB, x, z1, z2):
            dG = webcrawl_metrics(WEB, x, y, RIGHT).G - webcrawl_metrics(WEB, x, y, LEFT).G
            total += webcrawl_index(WEB, y) * dG
        worst = max(worst, abs(dF - total))
    _record(5, worst <= 1e-8, f"max residual {worst:.2e} over 50 triples")


def test_criterion_6_average_reward_limit():
    p = WebCrawlParams(beta=0.999)
    xs = np.linspace(p.ell, p.u, 51)
    rel = max(abs(webcrawl_index(p, float(x)) - webcrawl_avg_index(p, float(x))) / abs(webcrawl_avg_index(p, float(x)))
              for x in xs)
    _record(6, rel <= 1e-2, f"max relative error {rel:.2e}")


def test_criterion_7_shadow_price():
    model = build_model("webcrawl")
    nu0 = InitialDistribution.uniform(model.states.lower, model.states.upper, 201)
    curve = sweep_frontier(model, nu0, tol=1e-10, certified=True)
    probes = nu0.nodes[np.unique(np.linspace(10, 190, 20).round().astype(int))]
    checks = [shadow_price_check(model, nu0, float(z)) for z in probes]
    passed = sum(c.status == "pass" for c in checks)
    worst = max(c.diff - c.allowance for c in checks)
    d2 = max(np.diff(curve.slopes)) if len(curve.slopes) > 1 else -math.inf
    k = curve.horizon
    never = metrics_grid(model, nu0.nodes, [math.inf], k).G[:, 0] @ nu0.weights
    always = metrics_grid(model, nu0.nodes, [-math.inf], k).G[:, 0] @ nu0.weights
    lo, hi = curve.gamma_range
    ends = max(abs(lo - never), abs(hi - always))
    ok = passed == len(checks) == 20 and d2 <= 1e-9 and ends <= curve.err
    _record(7, ok, f"{passed}/{len(checks)} probes (slope - m - allowance <= {worst:.1e}), "
                   f"max slope increase {d2:.1e}, endpoint gap {ends:.1e}")


def test_criterion_8_weak_duality():
    t0 = time.perf_counter()
    model = build_model("channel")
    report = full_report(model)
    inst = RMABPInstance([model, model], 1.0, [0.3, 0.6], [report.index_table] * 2, tol=1e-10)
    dual = solve_dual(inst)
    sim = simulate_index_policy(inst, episodes=10_000, seed=42, tol=1e-4)
    lams = np.linspace(0.0, lambda_upper(inst), 50)
    L = np.array([lagrangian_value(inst, float(lam)).bound for lam in lams])
    d2 = float(np.diff(L, 2).min())
    elapsed = time.perf_counter() - t0
    horizon_ok = model.beta**sim.horizon * 2 * model.weight_bound.M_gamma <= 1e-4
    ok = (sim.mean_value <= dual.bound + 3 * sim.half_width + 1e-4 and d2 >= -1e-8 and horizon_ok
          and elapsed < 60)
    _record(8, ok, f"simulated {sim.mean_value:.5f} +- {sim.half_width:.5f} (T={sim.horizon}) vs bound "
                   f"{dual.bound:.5f} at lambda {dual.lambda_opt:.4f}; min second difference {d2:.1e}; {elapsed:.1f}s")


def test_criterion_9_engine_self_consistency():
    model = _lattice_model()
    P = _matrices(model)
    n = LATTICE.size
    rng = np.random.default_rng(7)
    nu = np.full(n, 1.0 / n)
    k = horizon_for_tolerance(model, 1e-12)
    bound = model.weight_bound.tail(k) * (1 + 2 / (1 - model.beta)) + 1e-11
    worst = 0.0
    for side in (RIGHT, LEFT):
        for z in (LATTICE[5], LATTICE[12]):
            B = ((LATTICE > z) if side == RIGHT else (LATTICE >= z)).astype(int)
            grid = metrics_grid(model, LATTICE, [z], k, side)
            for _ in range(10):
                act = rng.integers(0, 2, n)
                for prim, FB, fB in ((model.r, grid.F[:, 0], grid.f[:, 0]), (model.c, grid.G[:, 0], grid.g[:, 0])):
                    V_pi, P_pi = _policy_value(model, P, act, prim)
                    occupation = np.linalg.solve((np.eye(n) - model.beta * P_pi).T, nu)
                    worst = max(worst, abs(nu @ V_pi - (nu @ FB + occupation @ ((act - B) * fB))))
    signs = True
    for name in ("webcrawl", "channel"):
        m = build_model(name)
        xs = m.states.grid(101)
        g = metrics_grid(m, xs, xs, horizon_for_tolerance(m, 1e-12))
        mxz = g.f / g.g
        diag = np.diag(mxz)
        signs &= bool(np.array_equal(np.sign(mxz - diag[None, :]), np.sign(diag[:, None] - diag[None, :])))
    _record(9, worst <= bound and signs,
            f"decomposition residual {worst:.1e} <= {bound:.1e}; sign identity on 101x101: {signs}")


def test_criterion_10_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.CACHE_ENV, raising=False)
    runs = {
        "index.csv": ["index", "--model", "channel"],
        "verify.json": ["verify", "--model", "webcrawl", "--grid", "41"],
        "frontier.csv": ["frontier", "--model", "webcrawl", "--grid", "41"],
        "frontier.json": ["frontier", "--model", "webcrawl", "--grid", "41", "--format", "json"],
        "rmabp.json": ["rmabp", "--model", "channel", "--grid", "41", "--episodes", "500", "--seed", "42"],
        "metrics.json": ["metrics", "--model", "webcrawl", "--x", "0.7", "--z", "0.6"],
    }
    same = []
    for name, argv in runs.items():
        blobs = []
        for rep in range(2):
            out = tmp_path / f"{rep}-{name}"
            assert cli.main(argv + ["--output", str(out)]) == 0
            blobs.append(out.read_bytes())
        same.append(blobs[0] == blobs[1] and len(blobs[0]) > 0)
    _record(10, all(same), f"{sum(same)}/{len(same)} outputs byte-identical across reruns")


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q"]))
