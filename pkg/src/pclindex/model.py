"""Single-project restless bandit model.

A project lives on a closed real interval, earns ``reward(x, a)`` and consumes
``cost(x, a)`` per period, and moves according to a finite mixture of
deterministic maps: under action ``a`` the next state is ``h_i^a(x)`` with
probability ``p_i^a(x)``. All primitives are vectorised callables taking a
float array of states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, ModelSpecError

ArrayFn = Callable[[np.ndarray], np.ndarray]
ActionFn = Callable[[np.ndarray, int], np.ndarray]

PROB_SUM_TOL = 1e-12

RIGHT = "right"  # z-policy: active iff x > z
LEFT = "left"  # z^- policy: active iff x >= z


def constant(value: float) -> ArrayFn:
    """Vectorised constant function."""

    def fn(x):
        return np.full(np.shape(x), float(value))

    return fn


def identity(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class StateInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ModelSpecError(f"empty state interval [{self.lower}, {self.upper}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        return bool(inside) if inside.ndim == 0 else inside

    def grid(self, n: int) -> np.ndarray:
        if not self.bounded:
            raise DomainError("a uniform grid needs a bounded state interval")
        return np.linspace(self.lower, self.upper, n)


@dataclass(frozen=True)
class Branch:
    """One component of a mixture kernel: go to ``map(x)`` w.p. ``prob(x)``."""

    prob: ArrayFn
    map: ArrayFn


@dataclass(frozen=True)
class FiniteMixtureKernel:
    passive: tuple[Branch, ...]
    active: tuple[Branch, ...]

    def __post_init__(self):
        object.__setattr__(self, "passive", tuple(self.passive))
        object.__setattr__(self, "active", tuple(self.active))
        if not self.passive or not self.active:
            raise ModelSpecError("each action needs at least one kernel branch")

    def branches(self, action: int) -> tuple[Branch, ...]:
        return self.active if action else self.passive

    def max_branch_count(self) -> int:
        return max(len(self.passive), len(self.active))

    def probability_defect(self, xs) -> float:
        """Largest ``|sum_i p_i^a(x) - 1|`` over the given states and both actions."""
        xs = np.asarray(xs, dtype=float)
        worst = 0.0
        for a in (0, 1):
            total = sum(np.asarray(b.prob(xs), dtype=float) for b in self.branches(a))
            worst = max(worst, float(np.max(np.abs(total - 1.0))))
        return worst


@dataclass(frozen=True)
class WeightBound:
    """Weighted sup-norm constants: ``max(|r|, c) <= M w`` and ``beta E[w] <= gamma w``."""

    M: float
    gamma: float
    w: ArrayFn = field(default=constant(1.0))
    unit_weight: bool = True

    @property
    def M_gamma(self) -> float:
        return self.M / (1.0 - self.gamma)

    def weight(self, x) -> np.ndarray:
        return np.asarray(self.w(np.asarray(x, dtype=float)), dtype=float)

    def tail(self, k: int) -> float:
        """``M_gamma * gamma**k``, the horizon-``k`` truncation bound per unit weight."""
        if self.gamma == 0.0:
            return 0.0  # gamma = 0 forces beta = 0: every horizon is exact
        return self.M_gamma * self.gamma**k


@dataclass(frozen=True)
class BanditModel:
    states: StateInterval
    reward: ActionFn
    cost: ActionFn
    kernel: FiniteMixtureKernel
    discount: float
    weight_bound: WeightBound | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ModelSpecError(f"discount must lie in [0, 1), got {self.discount}")
        if self.weight_bound is None:
            object.__setattr__(self, "weight_bound", default_weight_bound(self))
        wb = self.weight_bound
        if not (self.discount <= wb.gamma < 1.0):
            raise ModelSpecError(
                f"weight bound needs beta <= gamma < 1 (beta={self.discount}, gamma={wb.gamma})"
            )
        if wb.M <= 0:
            raise ModelSpecError("weight bound constant M must be positive")

    @property
    def beta(self) -> float:
        return self.discount

    def r(self, x, a: int) -> np.ndarray:
        return np.asarray(self.reward(np.asarray(x, dtype=float), a), dtype=float)

    def c(self, x, a: int) -> np.ndarray:
        return np.asarray(self.cost(np.asarray(x, dtype=float), a), dtype=float)

    def check_state(self, x) -> None:
        if not np.all(self.states.contains(x)):
            raise DomainError(f"state {x!r} outside [{self.states.lower}, {self.states.upper}]")


def default_weight_bound(model: BanditModel, n_grid: int = 1001) -> WeightBound:
    """``w = 1``, ``M`` = grid sup of ``|r|`` and ``c``, ``gamma = beta``."""
    lo, hi = model.states.lower, model.states.upper
    if not model.states.bounded:
        lo, hi = (max(lo, -1e6), min(hi, 1e6))
    xs = np.linspace(lo, hi, n_grid)
    M = 0.0
    for a in (0, 1):
        M = max(M, float(np.max(np.abs(model.r(xs, a)))), float(np.max(model.c(xs, a))))
    return WeightBound(M=M if M > 0 else 1.0, gamma=model.discount)


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold policy; ``z`` may be ``-inf`` (always active) or ``+inf`` (never)."""

    z: float
    side: str = RIGHT
    alpha: float | None = None

    def __post_init__(self):
        if self.side not in (RIGHT, LEFT):
            raise ModelSpecError(f"side must be {RIGHT!r} or {LEFT!r}")
        if self.alpha is not None:
            if not math.isfinite(self.z):
                raise ModelSpecError("randomisation weight needs a finite threshold")
            if not 0.0 <= self.alpha <= 1.0:
                raise ModelSpecError("alpha must lie in [0, 1]")

    def active(self, x) -> np.ndarray:
        """Deterministic active-region indicator (ignores ``alpha``)."""
        x = np.asarray(x, dtype=float)
        return x > self.z if self.side == RIGHT else x >= self.z


def action_of(policy: ThresholdSpec, x: float, coin: float | None = None, states: StateInterval | None = None) -> int:
    """Action the policy takes in state ``x``.

    At ``x == z`` a randomised policy needs a uniform draw ``coin`` and goes
    passive with probability ``alpha``.
    """
    if states is not None and not states.contains(x):
        raise DomainError(f"state {x} outside [{states.lower}, {states.upper}]")
    if policy.alpha is not None and x == policy.z:
        if coin is None:
            raise ModelSpecError("a uniform coin is required at the randomised threshold")
        return 0 if coin < policy.alpha else 1
    return int(policy.active(x))


@dataclass(frozen=True)
class InitialDistribution:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "nodes"

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.shape != weights.shape or nodes.size == 0:
            raise ModelSpecError("nodes and weights must be nonempty and aligned")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > PROB_SUM_TOL:
            raise ModelSpecError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point(cls, x: float) -> "InitialDistribution":
        return cls(np.array([x]), np.array([1.0]), kind="point")

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "InitialDistribution":
        """Midpoint rule with ``n`` equal-weight nodes."""
        if n < 1 or not a < b:
            raise ModelSpecError("uniform distribution needs a < b and n >= 1")
        nodes = a + (np.arange(n) + 0.5) * (b - a) / n
        return cls(nodes, np.full(n, 1.0 / n), kind="uniform")

    @classmethod
    def weighted(cls, nodes: Sequence[float], weights: Sequence[float]) -> "InitialDistribution":
        return cls(np.asarray(nodes, float), np.asarray(weights, float), kind="nodes")

    @property
    def full_support_proxy(self) -> bool:
        return self.kind != "point" and self.nodes.size > 1

    def w_norm(self, model: BanditModel) -> float:
        return float(np.dot(self.weights, model.weight_bound.weight(self.nodes)))


@dataclass
class ClauseResult:
    passed: bool
    margin: float
    witness: float | None = None
    note: str = ""


@dataclass
class ValidationReport:
    clauses: dict[str, ClauseResult]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.clauses.items() if not c.passed]


def _worst(margins: np.ndarray, xs: np.ndarray, strict: bool) -> ClauseResult:
    i = int(np.argmin(margins))
    m = float(margins[i])
    ok = m > 0 if strict else m >= -1e-12
    return ClauseResult(ok, m, None if ok else float(xs[i]))


def validate_model(model: BanditModel, sample_grid: Sequence[float]) -> ValidationReport:
    """Check the standing assumptions of the model on a grid of states.

    Clauses: ``i`` (``0 <= c(x,0) < c(x,1)``), ``ii.a`` (``max(|r|, c) <= M w``),
    ``ii.b`` (``beta E_a[w] <= gamma w``), ``kernel`` (branch probabilities sum to
    one, maps stay in the state interval) and ``gamma`` (``beta <= gamma < 1``).
    Each clause records its worst margin and, on failure, a witness state.
    """
    xs = np.asarray(sample_grid, dtype=float)
    if xs.size == 0 or not np.all(model.states.contains(xs)):
        raise DomainError("sample grid must be nonempty and inside the state interval")
    wb = model.weight_bound
    w = wb.weight(xs)
    c0, c1 = model.c(xs, 0), model.c(xs, 1)
    clauses = {}

    nonneg = _worst(c0, xs, strict=False)
    order = _worst(c1 - c0, xs, strict=True)
    clauses["i"] = nonneg if not nonneg.passed else order

    bound_margin = np.full(xs.shape, np.inf)
    for a in (0, 1):
        lhs = np.maximum(np.abs(model.r(xs, a)), model.c(xs, a))
        bound_margin = np.minimum(bound_margin, wb.M * w - lhs)
    clauses["ii.a"] = _worst(bound_margin, xs, strict=False)

    drift_margin = np.full(xs.shape, np.inf)
    for a in (0, 1):
        expected_w = sum(
            np.asarray(b.prob(xs), float) * wb.weight(b.map(xs)) for b in model.kernel.branches(a)
        )
        drift_margin = np.minimum(drift_margin, wb.gamma * w - model.beta * expected_w)
    clauses["ii.b"] = _worst(drift_margin, xs, strict=False)

    defect = model.kernel.probability_defect(xs)
    inside = True
    witness = None
    for a in (0, 1):
        for b in model.kernel.branches(a):
            img = np.asarray(b.map(xs), float)
            p = np.asarray(b.prob(xs), float)
            bad = (p > 0) & ~np.asarray(model.states.contains(img))
            if np.any(bad):
                inside = False
                witness = float(xs[np.argmax(bad)])
    kernel_ok = defect <= PROB_SUM_TOL and inside
    clauses["kernel"] = ClauseResult(
        kernel_ok,
        -defect,
        witness,
        "" if inside else "a kernel map leaves the state interval",
    )
    clauses["gamma"] = ClauseResult(
        model.beta <= wb.gamma < 1.0, wb.gamma - model.beta, None
    )

    warnings = []
    if not model.states.bounded and not wb.unit_weight:
        warnings.append(
            "unbounded state space with non-unit weight: certificates rely on the "
            "supplied weight bound and have not been exercised numerically"
        )
    elif not model.states.bounded:
        warnings.append("unbounded state space: validation covers only the sampled grid")
    return ValidationReport(clauses, warnings)
