"""Multi-project scheduling under a per-period resource budget.

Relaxing the budget with a price ``lambda`` decouples the projects; each
then follows its optimal threshold policy ``zeta_i(lambda)``, and

    L(lambda) = b lambda / (1 - beta) + sum_i V_i(lambda)

bounds the optimal value from above for every ``lambda >= 0``. The index
policy activates projects greedily in order of their current MP index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import (
    MPIndexValue,
    horizon_for_tolerance,
    index_diagonal,
    match_states,
    metrics_grid,
    reachable_set,
)
from .exceptions import (
    BudgetViolationError,
    InfeasibleBudgetError,
    ModelSpecError,
    NumericError,
    UncertifiedInputError,
)
from .model import BanditModel

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BUDGET_SLACK = 1e-12


def generalized_inverse(index_table: Sequence[MPIndexValue], lam: float) -> float:
    """A threshold in the level set of the index at ``lam``.

    Returns the leftmost root of ``m(z) = lam`` on the table, interpolating
    linearly between bracketing grid points; ``lower - 1`` when ``lam`` is
    below every index value and ``upper + 1`` when above.
    """
    table = list(index_table)
    if not table:
        raise ValueError("empty index table")
    if any(not e.certified for e in table):
        raise UncertifiedInputError("generalized inverse needs a certified index table")
    xs = np.array([e.x for e in table])
    m = np.array([e.m for e in table])
    if lam < m[0]:
        return float(xs[0] - 1.0)
    if lam > m[-1]:
        return float(xs[-1] + 1.0)
    i = int(np.argmax(m >= lam))
    if m[i] == lam or i == 0:
        return float(xs[i])
    x0, x1, m0, m1 = xs[i - 1], xs[i], m[i - 1], m[i]
    return float(x0 + (lam - m0) * (x1 - x0) / (m1 - m0))


@dataclass
class _Project:
    model: BanditModel
    x0: float
    table: list
    states: np.ndarray  # reachable from x0, sorted
    index: np.ndarray  # MP index on ``states``


@dataclass
class RMABPInstance:
    """Projects with their certified index tables, a shared discount and a budget.

    ``index_tables`` come from passing verification reports, one per project.
    """

    projects: Sequence[BanditModel]
    budget: float
    initial_states: Sequence[float]
    index_tables: Sequence[Sequence[MPIndexValue]]
    tol: float = 1e-10
    _prepared: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        n = len(self.projects)
        if n == 0 or len(self.initial_states) != n or len(self.index_tables) != n:
            raise ModelSpecError("projects, initial states and index tables must align")
        betas = {p.beta for p in self.projects}
        if len(betas) != 1:
            raise ModelSpecError("all projects must share the discount factor")
        for table in self.index_tables:
            if not table or any(not e.certified for e in table):
                raise UncertifiedInputError("every project needs a certified index table")
        for p, x in zip(self.projects, self.initial_states):
            p.check_state(x)
        passive = sum(float(np.min(p.c(p.states.grid(1001), 0))) for p in self.projects if p.states.bounded)
        if self.budget < passive - BUDGET_SLACK:
            raise InfeasibleBudgetError(f"budget {self.budget} cannot cover passive costs {passive}")

    @property
    def beta(self) -> float:
        return self.projects[0].beta

    @property
    def n(self) -> int:
        return len(self.projects)

    def horizon(self) -> int:
        return max(horizon_for_tolerance(p, self.tol) for p in self.projects)

    def prepared(self, depth: int | None = None) -> list[_Project]:
        """Per project: reachable states from the initial state and their index values."""
        if self._prepared and (depth is None or self._prepared[0][0] >= depth):
            return self._prepared[0][1]
        k = self.horizon()
        depth = k if depth is None else max(depth, k)
        cache: dict = {}
        out = []
        for p, x0, table in zip(self.projects, self.initial_states, self.index_tables):
            states = reachable_set(p, [x0], depth).states
            key = (id(p), states.tobytes())
            if key not in cache:
                f, g, _ = index_diagonal(p, states, k)
                cache[key] = f / g
            out.append(_Project(p, float(x0), list(table), states, cache[key]))
        self._prepared[:] = [(depth, out)]
        return out


@dataclass
class DualSolution:
    lambda_opt: float
    bound: float
    per_project: list  # (threshold from the table, evaluated threshold, V)
    horizon: int
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda_opt": self.lambda_opt,
            "bound": self.bound,
            "horizon": self.horizon,
            "per_project": [{"threshold": z, "evaluated_threshold": ze, "value": v} for z, ze, v in self.per_project],
        }


def _evaluated_threshold(proj: _Project, lam: float) -> float:
    """A threshold separating reachable states with index ``<= lam`` from the rest.

    Thresholds sit halfway between states, or at the top of the state space,
    so that orbit points merged by the reachable-set dedup fall on the same side.
    """
    states, low = proj.states, proj.index <= lam
    if not low.any():
        return float(proj.model.states.lower - 1.0)
    if low.all():
        top = proj.model.states.upper
        return float(top if math.isfinite(top) else states[-1])
    first_high = int(np.argmin(low))
    below = states[:first_high][low[:first_high]]
    if below.size == 0:
        return float(proj.model.states.lower - 1.0)
    return float(0.5 * (below[-1] + states[first_high]))


def lagrangian_value(instance: RMABPInstance, lam: float) -> DualSolution:
    """``L(lambda)`` with the per-project optimal values.

    Each project is evaluated under the threshold policy that is active
    exactly at the reachable states whose MP index exceeds ``lam``; this
    agrees with the generalized inverse of the table up to states that are
    never visited.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    k = instance.horizon()
    total = instance.budget * lam / (1.0 - instance.beta)
    rows = []
    for proj in instance.prepared():
        z_eval = _evaluated_threshold(proj, lam)
        grid = metrics_grid(proj.model, [proj.x0], [z_eval], k)
        v = float(grid.F[0, 0] - lam * grid.G[0, 0])
        rows.append((generalized_inverse(proj.table, lam), z_eval, v))
        total += v
    return DualSolution(float(lam), float(total), rows, k)


def lambda_upper(instance: RMABPInstance) -> float:
    return 1.0 + max(max(e.m for e in t) for t in instance.index_tables)


def solve_dual(instance: RMABPInstance, tol: float = 1e-7) -> DualSolution:
    """Minimise the convex map ``lambda -> L(lambda)`` on ``[0, lambda_max]`` by golden section.

    Raises ``NumericError`` with the evaluation trace when a probed value
    undercuts the returned minimum, which cannot happen for a convex map.
    """
    lo, hi = 0.0, lambda_upper(instance)
    trace = []
    memo = {}

    def L(lam):
        if lam not in memo:
            memo[lam] = lagrangian_value(instance, lam)
            trace.append((lam, memo[lam].bound))
        return memo[lam].bound

    L(lo)
    L(hi)
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    while b - a > tol:
        if L(c) <= L(d):
            b, d = d, c
            c = b - GOLDEN * (b - a)
        else:
            a, c = c, d
            d = a + GOLDEN * (b - a)
    inside = [v for v in memo if a - tol <= v <= b + tol] or [(a + b) / 2.0]
    for v in inside:
        L(v)
    best_lam = min(inside, key=lambda v: (memo[v].bound, v))
    noise = 1e-9 * max(1.0, abs(memo[best_lam].bound))
    # slack constraint: the minimum sits at the boundary lambda = 0
    if memo[lo].bound <= memo[best_lam].bound + noise:
        best_lam = lo
    best = memo[best_lam]
    worst = min(v for _, v in trace)
    if worst < best.bound - noise:
        raise NumericError("golden-section search missed a lower dual value; L is not convex here", trace)
    pts = sorted(trace)
    scale = 1e-9 * max(1.0, max(abs(v) for _, v in pts))
    for (l0, v0), (l1, v1), (l2, v2) in zip(pts, pts[1:], pts[2:]):
        chord = v0 + (v2 - v0) * (l1 - l0) / (l2 - l0)
        if v1 > chord + scale:
            raise NumericError(f"dual function not convex near lambda={l1!r}", trace)
    best.trace = sorted(trace)
    return best


def index_policy_step(indices, costs_active, costs_passive, budget: float) -> np.ndarray:
    """Greedy activation by nonincreasing index, ties to the lower project id.

    A project is skipped when its extra cost would exceed what remains of the
    budget after all passive costs.
    """
    idx = np.asarray(indices, dtype=float)
    c1 = np.asarray(costs_active, dtype=float)
    c0 = np.asarray(costs_passive, dtype=float)
    remaining = budget - c0.sum()
    if remaining < -BUDGET_SLACK:
        raise InfeasibleBudgetError(f"budget {budget} cannot cover passive costs {c0.sum()}")
    actions = np.zeros(idx.size, dtype=int)
    for j in np.argsort(-idx, kind="stable"):
        extra = c1[j] - c0[j]
        if extra <= remaining + BUDGET_SLACK:
            actions[j] = 1
            remaining -= extra
    return actions


@dataclass
class SimResult:
    mean_value: float
    half_width: float
    episodes: int
    horizon: int
    seed: int
    truncation_bias: float
    violations: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def simulation_horizon(instance: RMABPInstance, tol: float) -> int:
    """Smallest ``T`` with ``beta**T * n * M_gamma <= tol``."""
    beta = instance.beta
    mg = max(p.weight_bound.M_gamma for p in instance.projects)
    if beta == 0.0:
        return 1
    T = max(0, math.ceil(math.log(tol / (instance.n * mg)) / math.log(beta)))
    while T > 0 and beta ** (T - 1) * instance.n * mg <= tol:
        T -= 1
    while beta**T * instance.n * mg > tol:
        T += 1
    return T


def episode_uniforms(seed: int, episodes: int, horizon: int, n: int) -> np.ndarray:
    """``(episodes, horizon, n)`` uniforms; episode ``e`` uses its own Philox stream.

    Streams are spawned from ``SeedSequence(seed)`` in episode order, so an
    episode's draws do not depend on how many others are run or in what order.
    """
    children = np.random.SeedSequence(seed).spawn(episodes)
    out = np.empty((episodes, horizon, n))
    for e, child in enumerate(children):
        out[e] = np.random.Generator(np.random.Philox(child)).random((horizon, n))
    return out


def simulate_index_policy(
    instance: RMABPInstance,
    episodes: int = 10_000,
    horizon: int | None = None,
    seed: int = 0,
    tol: float = 1e-4,
) -> SimResult:
    """Monte Carlo value of the index policy from the initial joint state.

    Reports the mean discounted reward over ``horizon`` periods with a 95%
    normal half-width; ``truncation_bias`` bounds the ignored tail.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    T = simulation_horizon(instance, tol) if horizon is None else int(horizon)
    projs = instance.prepared(T)
    n, beta = instance.n, instance.beta
    U = episode_uniforms(seed, episodes, T, n)
    X = np.tile(np.asarray(instance.initial_states, dtype=float), (episodes, 1))
    value = np.zeros(episodes)
    rank_noise = np.arange(n)  # stable tie-break by project id
    for t in range(T):
        I = np.empty((episodes, n))
        c0 = np.empty((episodes, n))
        c1 = np.empty((episodes, n))
        for j, pj in enumerate(projs):
            slot = match_states(pj.states, X[:, j])
            if np.any(slot < 0):
                raise NumericError("simulated state left the precomputed reachable set")
            I[:, j] = pj.index[slot]
            c0[:, j] = pj.model.c(X[:, j], 0)
            c1[:, j] = pj.model.c(X[:, j], 1)
        order = np.lexsort((np.broadcast_to(rank_noise, I.shape), -I), axis=1)
        remaining = instance.budget - c0.sum(axis=1)
        if np.any(remaining < -BUDGET_SLACK):
            raise InfeasibleBudgetError("budget cannot cover passive costs in a visited state")
        A = np.zeros((episodes, n), dtype=int)
        rows = np.arange(episodes)
        for r in range(n):
            j = order[:, r]
            extra = c1[rows, j] - c0[rows, j]
            take = extra <= remaining + BUDGET_SLACK
            A[rows[take], j[take]] = 1
            remaining = remaining - np.where(take, extra, 0.0)
        used = np.where(A == 1, c1, c0).sum(axis=1)
        if np.any(used > instance.budget + BUDGET_SLACK):
            raise BudgetViolationError(f"budget exceeded at period {t}")
        step = np.zeros(episodes)
        for j, pj in enumerate(projs):
            x, a = X[:, j], A[:, j]
            r = np.where(a == 1, pj.model.r(x, 1), pj.model.r(x, 0))
            step += r
            X[:, j] = _transition(pj.model, x, a, U[:, t, j])
        value += beta**t * step
    # identical episodes: report an exact zero rather than round-off
    sd = float(np.std(value, ddof=1)) if episodes > 1 and np.ptp(value) > 0 else 0.0
    mg = max(p.weight_bound.M_gamma for p in instance.projects)
    return SimResult(
        float(np.mean(value)),
        1.96 * sd / math.sqrt(episodes),
        int(episodes),
        int(T),
        int(seed),
        float(beta**T * n * mg),
    )


def _transition(model: BanditModel, x: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
    nxt = np.empty_like(x)
    for act in (0, 1):
        sel = a == act
        if not np.any(sel):
            continue
        xs, us = x[sel], u[sel]
        out = np.empty_like(xs)
        cum = np.zeros_like(xs)
        done = np.zeros(xs.shape, dtype=bool)
        branches = model.kernel.branches(act)
        for i, br in enumerate(branches):
            p = np.broadcast_to(np.asarray(br.prob(xs), dtype=float), xs.shape)
            cum = cum + p
            # the last branch absorbs float round-off in the cumulative sum
            pick = ~done & ((us < cum) | (i == len(branches) - 1))
            out[pick] = np.broadcast_to(np.asarray(br.map(xs), dtype=float), xs.shape)[pick]
            done |= pick
        nxt[sel] = out
    return nxt
