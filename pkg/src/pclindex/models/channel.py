"""Transmission over a Gilbert-Elliott channel observed through a belief state.

The channel flips good->bad w.p. ``p`` and bad->good w.p. ``q``; the state is
the belief ``x`` that it is good. Idle: ``x -> q + rho x``. Transmitting: the
outcome reveals the channel, so ``x -> q + rho`` w.p. ``x`` and ``x -> q``
otherwise. Reward ``a x``, cost ``a``.

Closed forms come in four regimes of the threshold ``z`` relative to ``q``,
the belief fixed point ``h_inf`` and ``q + rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..engine import MetricBundle
from ..exceptions import DomainError, ModelSpecError
from ..model import BanditModel, Branch, FiniteMixtureKernel, StateInterval, WeightBound, constant
from .ladder import IterateLadder


@dataclass(frozen=True)
class ChannelParams:
    p: float = 0.3
    q: float = 0.2
    beta: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.p < 1.0 and 0.0 < self.q < 1.0):
            raise ModelSpecError("p and q must lie in (0, 1)")
        if not self.rho > 0:
            raise ModelSpecError("need rho = 1 - p - q > 0")
        if not 0.0 <= self.beta < 1.0:
            raise ModelSpecError("beta must lie in [0, 1)")

    @property
    def rho(self) -> float:
        return 1.0 - self.p - self.q

    @property
    def h_inf(self) -> float:
        return self.q / (1.0 - self.rho)

    @property
    def top(self) -> float:
        """``q + rho``, the belief after a successful transmission."""
        return self.q + self.rho

    @property
    def ladder(self) -> IterateLadder:
        return IterateLadder(self.q, self.rho)

    def h(self, x: float) -> float:
        return self.q + self.rho * x


def channel_model(params: ChannelParams) -> BanditModel:
    q, rho = params.q, params.rho
    kernel = FiniteMixtureKernel(
        passive=(Branch(constant(1.0), lambda x: q + rho * np.asarray(x, float)),),
        active=(
            Branch(lambda x: np.asarray(x, float), constant(q + rho)),
            Branch(lambda x: 1.0 - np.asarray(x, float), constant(q)),
        ),
    )
    return BanditModel(
        states=StateInterval(0.0, 1.0),
        reward=lambda x, a: a * np.asarray(x, float),
        cost=lambda x, a: np.full(np.shape(x), float(a)),
        kernel=kernel,
        discount=params.beta,
        weight_bound=WeightBound(M=1.0, gamma=params.beta),
        name="channel",
        params=dict(p=params.p, q=params.q, beta=params.beta),
    )


def case_of(params: ChannelParams, z: float) -> int:
    if z < params.q:
        return 1
    if z < params.h_inf:
        return 2
    if z < params.top:
        return 3
    return 4


def case2_anchors(params: ChannelParams, z: float):
    """Piece index ``t`` and the metrics at ``q + rho`` and ``q`` for ``q <= z < h_inf``.

    From ``q + rho`` (above ``z``) the policy transmits at once; from ``q`` it
    idles ``t`` periods up to ``y = h_t(q)`` and then transmits. Both metrics
    solve a 2x2 linear system, once with rewards ``x`` and once with unit costs.
    Returns ``(t, F_top, F_q, G_top, G_q)``.
    """
    beta, A = params.beta, params.top
    if not params.q <= z < params.h_inf:
        raise DomainError(f"threshold {z} is not in the second regime")
    t = params.ladder.hitting(params.q, z)
    if t is None:
        # float iterates of q saturate below z: the limit piece, q never transmits
        t, y, bt = math.inf, 0.0, 0.0
    else:
        y, bt = params.ladder.h(params.q, t), beta**t
    lhs = np.array([[1.0 - beta * A, -beta * (1.0 - A)], [-beta * bt * y, 1.0 - beta * bt * (1.0 - y)]])
    Fa, Fq = np.linalg.solve(lhs, np.array([A, bt * y]))
    Ga, Gq = np.linalg.solve(lhs, np.array([1.0, bt]))
    return t, float(Fa), float(Fq), float(Ga), float(Gq)


def channel_metrics(params: ChannelParams, x: float, z: float) -> MetricBundle:
    """Exact ``F, G, f, g`` of the z-policy (infinite horizon, zero error)."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"state {x} outside [0, 1]")
    beta, q, rho, A = params.beta, params.q, params.rho, params.top
    on = 1.0 if x > z else 0.0
    case = case_of(params, z)
    if case == 1:
        F = (beta * (q + (1 - beta) * rho * x) + (1 - beta) * (1 - beta * rho) * x * on) / (
            (1 - beta) * (1 - beta * rho)
        )
        G = (beta + (1 - beta) * on) / (1 - beta)
        f, g = x, 1.0
    elif case == 2:
        _, Fa, Fq, Ga, Gq = case2_anchors(params, z)
        hx = params.h(x)
        if x > z:
            F = x + beta * (x * Fa + (1 - x) * Fq)
            G = 1 + beta * (x * Ga + (1 - x) * Gq)
            f = x - beta * (hx + beta * hx * Fa + beta * (1 - hx) * Fq - x * Fa - (1 - x) * Fq)
            g = 1 - beta * (1 + beta * hx * Ga + beta * (1 - hx) * Gq - x * Ga - (1 - x) * Gq)
        else:
            s = params.ladder.hitting(x, z)
            if s is None:
                F_act = G_act = 0.0  # never transmits from x
                s = math.inf
            else:
                hs = params.ladder.h(x, s)
                F_act = hs + beta * hs * Fa + beta * (1 - hs) * Fq
                G_act = 1 + beta * hs * Ga + beta * (1 - hs) * Gq
            F = beta**s * F_act
            G = beta**s * G_act
            f = x - beta * (beta ** (s - 1) * F_act - x * Fa - (1 - x) * Fq)
            g = 1 - beta * (beta ** (s - 1) * G_act - x * Ga - (1 - x) * Gq)
    elif case == 3:
        d = 1 - beta * A
        F = x / d * on
        G = (1 - beta * (A - x)) / d * on
        if params.h(x) <= z:
            f = x / d
            g = (1 - beta * (A - x)) / d
        else:
            f = ((1 - beta * rho) * x - beta * q) / d
            g = 1 - beta + beta * f
    else:
        F, G, f, g = x * on, on, x, 1.0
    return MetricBundle(float(F), float(G), float(f), float(g), math.inf, 0.0, 0.0, 0.0)


def channel_index(params: ChannelParams, x: float) -> float:
    """Closed-form MP index."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"state {x} outside [0, 1]")
    beta = params.beta
    case = case_of(params, x)
    if case == 1 or case == 4:
        return float(x)
    if case == 3:
        return x / (1 - beta * (params.top - x))
    _, Fa, Fq, Ga, Gq = case2_anchors(params, x)
    hx = params.h(x)
    num = x - beta * (hx + beta * hx * Fa + beta * (1 - hx) * Fq - x * Fa - (1 - x) * Fq)
    den = 1 - beta * (1 + beta * hx * Ga + beta * (1 - hx) * Gq - x * Ga - (1 - x) * Gq)
    return num / den


def channel_jump_points(params: ChannelParams, x: float, z1: float, z2: float) -> list[float]:
    """Thresholds in ``(z1, z2]`` where ``G(x, .)`` can jump.

    The candidate set is the iterates of ``x`` and of ``q`` together with
    ``h_inf``, ``q`` and ``q + rho``.
    """
    pts = {params.h_inf, params.q, params.top}
    for root in (x, params.q):
        for v in params.ladder.orbit(root):
            if z1 < v <= z2:
                pts.add(v)
    return sorted(p for p in pts if z1 < p <= z2)
