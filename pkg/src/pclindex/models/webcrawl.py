"""Web-crawling project: freshness decays towards ``u`` while idle, resets to ``ell`` when crawled.

Passive: ``x -> ell + alpha x``; active: ``x -> ell``. Reward ``x a``, cost
``C a``. The state space is ``[ell, u]`` with ``ell = (1 - alpha) b`` and
``u = b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..engine import MetricBundle
from ..exceptions import DomainError, ModelSpecError
from ..model import RIGHT, BanditModel, Branch, FiniteMixtureKernel, StateInterval, WeightBound, constant
from .ladder import IterateLadder


@dataclass(frozen=True)
class WebCrawlParams:
    alpha: float = 0.5
    b: float = 1.0
    C: float = 1.0
    beta: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ModelSpecError("alpha must lie in (0, 1)")
        if not self.b > 0 or not self.C > 0:
            raise ModelSpecError("b and C must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ModelSpecError("beta must lie in [0, 1)")

    @property
    def ell(self) -> float:
        return (1.0 - self.alpha) * self.b

    @property
    def u(self) -> float:
        return self.b

    @property
    def ladder(self) -> IterateLadder:
        return IterateLadder(self.ell, self.alpha)

    def h(self, x: float) -> float:
        return self.ell + self.alpha * x


def webcrawl_model(params: WebCrawlParams) -> BanditModel:
    ell, a = params.ell, params.alpha
    kernel = FiniteMixtureKernel(
        passive=(Branch(constant(1.0), lambda x: ell + a * np.asarray(x, float)),),
        active=(Branch(constant(1.0), constant(ell)),),
    )
    return BanditModel(
        states=StateInterval(ell, params.u),
        reward=lambda x, act: np.asarray(x, float) * act,
        cost=lambda x, act: np.full(np.shape(x), params.C * act),
        kernel=kernel,
        discount=params.beta,
        weight_bound=WeightBound(M=max(params.u, params.C), gamma=params.beta),
        name="webcrawl",
        params=dict(alpha=params.alpha, b=params.b, C=params.C, beta=params.beta),
    )


def _check(params, x):
    if not params.ell <= x <= params.u:
        raise DomainError(f"state {x} outside [{params.ell}, {params.u}]")


def _from_ell(params, z, strict, unit):
    """``F(ell, z)`` (``unit=None``) or ``G(ell, z)`` (``unit=C``)."""
    tau = params.ladder.hitting(params.ell, z, strict)
    if tau is None:
        return 0.0
    beta = params.beta
    value = params.ladder.h(params.ell, tau) if unit is None else unit
    return beta**tau * value / (1.0 - beta ** (tau + 1))


def _metric(params, x, z, strict, unit):
    beta = params.beta
    tail = _from_ell(params, z, strict, unit)
    now = (lambda y: y) if unit is None else (lambda y: unit)
    tau = params.ladder.hitting(x, z, strict)
    if tau is None:
        return 0.0
    return beta**tau * (now(params.ladder.h(x, tau)) + beta * tail)


def webcrawl_metrics(params: WebCrawlParams, x: float, z: float, side: str = RIGHT) -> MetricBundle:
    """Exact ``F, G, f, g`` (infinite horizon, zero error).

    ``side`` selects the z-policy (``right``) or the z^- policy (``left``).
    """
    _check(params, x)
    strict = side == RIGHT
    beta, C = params.beta, params.C
    F = _metric(params, x, z, strict, None)
    G = _metric(params, x, z, strict, C)
    hx = params.h(x)
    f = x + beta * _from_ell(params, z, strict, None) - beta * _metric(params, hx, z, strict, None)
    g = C + beta * _from_ell(params, z, strict, C) - beta * _metric(params, hx, z, strict, C)
    return MetricBundle(F, G, f, g, math.inf, 0.0, 0.0, 0.0)


def webcrawl_index(params: WebCrawlParams, x: float) -> float:
    """Closed-form MP index, piecewise in ``h_{t-1}(ell) <= x < h_t(ell)``."""
    _check(params, x)
    beta, C = params.beta, params.C
    if x >= params.u:
        return params.u / C
    t = params.ladder.hitting(params.ell, x)
    if t is None:
        Ft = Gt = 0.0
    else:
        Ft = beta**t * params.ladder.h(params.ell, t) / (1.0 - beta ** (t + 1))
        Gt = beta**t * C / (1.0 - beta ** (t + 1))
    return (x - beta * params.h(x) + beta * (1.0 - beta) * Ft) / ((1.0 - beta) * (C + beta * Gt))


def webcrawl_avg_index(params: WebCrawlParams, x: float) -> float:
    """Limit of the index as ``beta -> 1``; ``x = u`` gets the limiting value ``u / C``."""
    _check(params, x)
    if x >= params.u:
        return params.u / params.C
    t = params.ladder.hitting(params.ell, x)
    if t is None:
        return params.u / params.C
    return ((t + 1) * (x - params.h(x)) + params.ladder.h(params.ell, t)) / params.C


def webcrawl_breakpoints(params: WebCrawlParams, n: int) -> list[float]:
    """``h_t(ell)`` for ``t = 0..n``: the pieces of the index and of ``G(ell, .)``."""
    return params.ladder.iterates(params.ell, n)


def webcrawl_jump_points(params: WebCrawlParams, x: float, z1: float, z2: float) -> list[float]:
    """Thresholds in ``(z1, z2]`` where ``G(x, .)`` can jump: iterates of ``x`` and ``ell``, and ``u``."""
    pts = {params.u}
    for root in (x, params.ell):
        for v in params.ladder.orbit(root):
            if v > z2:
                break
            pts.add(v)
    return sorted(p for p in pts if z1 < p <= z2)
