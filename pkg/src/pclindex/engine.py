"""Threshold-policy metrics and the marginal-productivity index.

Metrics are computed by k-horizon value iteration on the states reachable
from the query states. Kernels are finite mixtures of deterministic maps, so
the states reachable in exactly ``d`` steps form a finite layer, and a state
in layer ``d`` is only ever needed with ``k - d`` periods to go. The backward
pass over layers is therefore the memoised recursion keyed on
``(state, remaining depth)``; it is exact up to round-off, and the only
approximation is truncation, bounded by ``M_gamma * gamma**k * w(x)``.

Columns of the value arrays are thresholds, so one pass serves a whole
threshold grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import CertificationError, DomainError, ResourceCapError
from .model import LEFT, RIGHT, BanditModel, InitialDistribution, ThresholdSpec

DEDUP_RTOL = 1e-14
DEFAULT_CAP = 10_000_000
# Upper bound on (layer states x threshold columns) held in one block.
INDEX_BLOCK = 128
_BLOCK_CELLS = 4_000_000


def _scale(v: np.ndarray) -> np.ndarray:
    return DEDUP_RTOL * np.maximum(1.0, np.abs(v))


def dedup_with_inverse(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted distinct values (relative tolerance ``DEDUP_RTOL``) and the inverse map.

    Values within tolerance of their sorted predecessor join its group; each
    group is represented by its smallest member.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return v, np.empty(0, dtype=np.int64)
    order = np.argsort(v, kind="stable")
    s = v[order]
    new_group = np.empty(s.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(s) > _scale(s[1:])
    gid = np.cumsum(new_group) - 1
    inverse = np.empty(v.size, dtype=np.int64)
    inverse[order] = gid
    return s[new_group], inverse


def match_states(known: np.ndarray, values) -> np.ndarray:
    """Index of the nearest known state within the dedup tolerance, or -1."""
    values = np.asarray(values, dtype=float)
    if known.size == 0:
        return np.full(values.shape, -1, dtype=np.int64)
    pos = np.searchsorted(known, values)
    lo = np.clip(pos - 1, 0, known.size - 1)
    hi = np.clip(pos, 0, known.size - 1)
    d_lo = np.abs(known[lo] - values)
    d_hi = np.abs(known[hi] - values)
    best = np.where(d_hi < d_lo, hi, lo)
    ok = np.minimum(d_lo, d_hi) <= _scale(values)
    return np.where(ok, best, -1).astype(np.int64)


@dataclass(frozen=True)
class _Layer:
    states: np.ndarray
    r: np.ndarray  # (2, n)
    c: np.ndarray  # (2, n)
    # per action: branch probabilities (B, n) and successor slots in the next layer (B, n)
    probs: tuple = ()
    succ: tuple = ()


def _branch_eval(model, a, xs):
    out = []
    for br in model.kernel.branches(a):
        p = np.broadcast_to(np.asarray(br.prob(xs), dtype=float), xs.shape)
        h = np.broadcast_to(np.asarray(br.map(xs), dtype=float), xs.shape)
        out.append((p, h))
    return out


def _step(model, states):
    """Next layer plus per-action probability and successor-slot arrays."""
    evals = [_branch_eval(model, a, states) for a in (0, 1)]
    flat_p = np.concatenate([p for ev in evals for p, _ in ev])
    flat_h = np.concatenate([h for ev in evals for _, h in ev])
    live = flat_p > 0
    nxt, inv = dedup_with_inverse(flat_h[live])
    slots = np.zeros(flat_h.size, dtype=np.int64)  # dead branches point at slot 0 with weight 0
    slots[live] = inv
    probs, succ, pos, n = [], [], 0, states.size
    for ev in evals:
        b = len(ev)
        probs.append(np.array([p for p, _ in ev]))
        succ.append(slots[pos:pos + b * n].reshape(b, n))
        pos += b * n
    return nxt, tuple(probs), tuple(succ)


def build_layers(model: BanditModel, roots, depth: int, cap: int = DEFAULT_CAP):
    """Layers of states reachable in exactly ``d = 0..depth`` steps.

    Returns ``(layers, root_slots)`` with ``root_slots`` mapping each root to
    its slot in layer 0. The total number of (state, depth) entries is capped.
    """
    states, root_slots = dedup_with_inverse(roots)
    layers = []
    total = states.size
    for d in range(depth + 1):
        r = np.array([model.r(states, 0), model.r(states, 1)]).reshape(2, -1)
        c = np.array([model.c(states, 0), model.c(states, 1)]).reshape(2, -1)
        if d == depth:
            layers.append(_Layer(states, r, c))
            break
        nxt, probs, succ = _step(model, states)
        layers.append(_Layer(states, r, c, probs, succ))
        total += nxt.size
        if total > cap:
            raise ResourceCapError(
                f"memo table would exceed the cap of {cap} (state, depth) entries", cap
            )
        states = nxt
    return layers, root_slots


@dataclass(frozen=True)
class ReachableSet:
    """Distinct states reachable from the roots within ``depth`` steps.

    ``closed`` is true when no new state appeared at the last step, i.e. the
    set is invariant under every branch map.
    """

    states: np.ndarray
    depth: int
    closed: bool

    def __len__(self):
        return int(self.states.size)


def reachable_set(model: BanditModel, roots, depth: int, cap: int = DEFAULT_CAP) -> ReachableSet:
    known, _ = dedup_with_inverse(roots)
    frontier = known
    for _ in range(depth):
        cand, _, _ = _step(model, frontier)
        new = cand[match_states(known, cand) < 0]
        if new.size == 0:
            return ReachableSet(known, depth, True)
        known = np.sort(np.concatenate([known, new]))
        if known.size > cap:
            raise ResourceCapError(f"reachable set exceeds the cap of {cap} states", cap)
        frontier = new
    return ReachableSet(known, depth, False)


def _expect(layer: _Layer, a: int, V: np.ndarray) -> np.ndarray:
    probs, succ = layer.probs[a], layer.succ[a]
    out = probs[0][:, None] * V[succ[0]]
    for i in range(1, probs.shape[0]):
        out += probs[i][:, None] * V[succ[i]]
    return out


def _active(states, zs, side):
    if side == RIGHT:
        return states[:, None] > zs[None, :]
    return states[:, None] >= zs[None, :]


@dataclass(frozen=True)
class MetricsGrid:
    """k-horizon metrics on a (state x threshold) grid.

    ``F_first[a]`` and ``G_first[a]`` belong to the policy that takes action
    ``a`` in period 0 and then follows the threshold policy, so
    ``f = F_first[1] - F_first[0]`` and likewise for ``g``.
    """

    xs: np.ndarray
    zs: np.ndarray
    side: str
    horizon: int
    F: np.ndarray
    G: np.ndarray
    F_first: tuple
    G_first: tuple
    err: np.ndarray  # M_gamma gamma^k w(x), one per row

    @property
    def f(self) -> np.ndarray:
        return self.F_first[1] - self.F_first[0]

    @property
    def g(self) -> np.ndarray:
        return self.G_first[1] - self.G_first[0]

    @property
    def fg_err(self) -> np.ndarray:
        return 2.0 * self.err


def metrics_grid(
    model: BanditModel,
    xs: Sequence[float],
    zs: Sequence[float],
    k: int,
    side: str = RIGHT,
    cap: int = DEFAULT_CAP,
) -> MetricsGrid:
    """``F_k, G_k`` and their first-action variants for every (state, threshold) pair."""
    if k < 0:
        raise ValueError("horizon must be nonnegative")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    model.check_state(xs)
    layers, root = build_layers(model, xs, k, cap)
    beta = model.beta
    widest = max(layer.states.size for layer in layers)
    block = max(1, _BLOCK_CELLS // max(1, 2 * widest))
    shape = (xs.size, zs.size)
    F, G = np.empty(shape), np.empty(shape)
    F_first = (np.empty(shape), np.empty(shape))
    G_first = (np.empty(shape), np.empty(shape))
    for start in range(0, zs.size, block):
        cols = slice(start, min(zs.size, start + block))
        zc = zs[cols]
        m = zc.size
        V_next = None
        for d in range(k, -1, -1):
            layer = layers[d]
            act = np.tile(_active(layer.states, zc, side), (1, 2))
            Q0 = np.concatenate([np.repeat(layer.r[0][:, None], m, 1), np.repeat(layer.c[0][:, None], m, 1)], 1)
            Q1 = np.concatenate([np.repeat(layer.r[1][:, None], m, 1), np.repeat(layer.c[1][:, None], m, 1)], 1)
            if V_next is not None:
                Q0 += beta * _expect(layer, 0, V_next)
                Q1 += beta * _expect(layer, 1, V_next)
            V = np.where(act, Q1, Q0)
            if d == 0:
                F[:, cols] = V[root, :m]
                G[:, cols] = V[root, m:]
                F_first[0][:, cols] = Q0[root, :m]
                F_first[1][:, cols] = Q1[root, :m]
                G_first[0][:, cols] = Q0[root, m:]
                G_first[1][:, cols] = Q1[root, m:]
            V_next = V
    err = np.atleast_1d(model.weight_bound.tail(k) * model.weight_bound.weight(xs))
    err = np.broadcast_to(err, xs.shape).astype(float)
    return MetricsGrid(xs, zs, side, k, F, G, F_first, G_first, err)


@dataclass(frozen=True)
class MetricBundle:
    F: float
    G: float
    f: float
    g: float
    horizon: int
    F_err: float
    G_err: float
    fg_err: float

    def combine(self, other: "MetricBundle", weight: float) -> "MetricBundle":
        """``weight * self + (1 - weight) * other`` field by field."""
        if self.horizon != other.horizon:
            raise ValueError("cannot combine bundles of different horizons")

        def mix(u, v):
            return weight * u + (1.0 - weight) * v

        return MetricBundle(
            mix(self.F, other.F), mix(self.G, other.G), mix(self.f, other.f), mix(self.g, other.g),
            self.horizon, mix(self.F_err, other.F_err), mix(self.G_err, other.G_err),
            mix(self.fg_err, other.fg_err),
        )


def horizon_for_tolerance(model: BanditModel, tol: float) -> int:
    """Smallest ``k`` with ``M_gamma * gamma**k <= tol``."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    wb = model.weight_bound
    if tol >= wb.M_gamma:
        return 0
    if wb.gamma == 0.0:
        return 0
    k = max(0, math.ceil(math.log(tol * (1.0 - wb.gamma) / wb.M) / math.log(wb.gamma)))
    # the log formula can be off by one either way in floating point
    while k > 0 and wb.tail(k - 1) <= tol:
        k -= 1
    while wb.tail(k) > tol:
        k += 1
    return k


def k_horizon_metrics(
    model: BanditModel,
    x: float,
    policy: ThresholdSpec,
    k: int,
    first_action: int | None = None,
    cap: int = DEFAULT_CAP,
) -> MetricBundle:
    """Metrics of a threshold policy from ``x`` at horizon ``k``.

    A randomised policy (``alpha`` set) gives the ``alpha``-mixture of the
    z-policy and z^- policy bundles. ``first_action`` forces the period-0
    action; it changes ``F`` and ``G`` but not the marginal metrics.
    """
    if policy.alpha is not None:
        right = k_horizon_metrics(model, x, ThresholdSpec(policy.z, RIGHT), k, first_action, cap)
        left = k_horizon_metrics(model, x, ThresholdSpec(policy.z, LEFT), k, first_action, cap)
        return right.combine(left, policy.alpha)
    grid = metrics_grid(model, [x], [policy.z], k, policy.side, cap)
    if first_action is None:
        F, G = grid.F[0, 0], grid.G[0, 0]
    else:
        a = int(bool(first_action))
        F, G = grid.F_first[a][0, 0], grid.G_first[a][0, 0]
    e = float(grid.err[0])
    return MetricBundle(float(F), float(G), float(grid.f[0, 0]), float(grid.g[0, 0]), k, e, e, 2 * e)


def metrics_to_tolerance(model: BanditModel, x: float, policy: ThresholdSpec, tol: float) -> MetricBundle:
    return k_horizon_metrics(model, x, policy, horizon_for_tolerance(model, tol))


def distribution_metrics(
    model: BanditModel, nu0: InitialDistribution, policy: ThresholdSpec, k: int
) -> MetricBundle:
    """Quadrature-weighted metrics; errors are scaled by the weighted norm of ``nu0``."""
    if policy.alpha is not None:
        return randomized_threshold_metrics(model, nu0, policy.z, policy.alpha, k)
    grid = metrics_grid(model, nu0.nodes, [policy.z], k, policy.side)
    w = nu0.weights
    e = model.weight_bound.tail(k) * nu0.w_norm(model)
    return MetricBundle(
        float(w @ grid.F[:, 0]), float(w @ grid.G[:, 0]), float(w @ grid.f[:, 0]),
        float(w @ grid.g[:, 0]), k, e, e, 2 * e,
    )


def randomized_threshold_metrics(
    model: BanditModel, nu0: InitialDistribution, z: float, alpha: float, k: int
) -> MetricBundle:
    """Metrics of ``z^alpha``: ``alpha`` times the z-policy plus ``1 - alpha`` times z^-."""
    ThresholdSpec(z, RIGHT, alpha)  # validates z and alpha
    right = distribution_metrics(model, nu0, ThresholdSpec(z, RIGHT), k)
    left = distribution_metrics(model, nu0, ThresholdSpec(z, LEFT), k)
    return right.combine(left, alpha)


@dataclass(frozen=True)
class MPIndexValue:
    x: float
    m: float
    err: float
    g_floor: float
    k: int
    certified: bool = True
    message: str = ""


def certify_index(x, f, g, err_unit, k) -> MPIndexValue:
    """Index value with its certificate; raises if ``g - fg_err <= 0``."""
    fg_err = 2.0 * float(err_unit)
    g_floor = float(g) - fg_err
    if not g_floor > 0:
        raise CertificationError(
            f"PCLI1 not certifiable at x={float(x)!r}: g_k={float(g)!r}, error bound {fg_err!r}",
            float(x), float(g), fg_err,
        )
    m = float(f) / float(g)
    return MPIndexValue(float(x), m, fg_err * (1.0 + abs(m)) / g_floor, g_floor, int(k))


def _table_entry(x, f, g, err_unit, k) -> MPIndexValue:
    try:
        return certify_index(x, f, g, err_unit, k)
    except CertificationError as exc:
        m = float(f) / float(g) if g != 0 else math.nan
        return MPIndexValue(float(x), m, math.inf, float(g) - 2 * float(err_unit), int(k), False, str(exc))


def mp_index_at(
    model: BanditModel, x: float, k: int | None = None, tol: float | None = None
) -> MPIndexValue:
    """k-horizon MP index ``f_k(x, x) / g_k(x, x)`` with its certified error."""
    if (k is None) == (tol is None):
        raise ValueError("give exactly one of k and tol")
    if k is None:
        k = horizon_for_tolerance(model, tol)
    grid = metrics_grid(model, [x], [x], k)
    return certify_index(x, grid.f[0, 0], grid.g[0, 0], grid.err[0], k)


def index_diagonal(model: BanditModel, xs, k: int, block: int = INDEX_BLOCK):
    """``f_k(x, x)``, ``g_k(x, x)`` and the unit error for each state in ``xs``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    f = np.empty(xs.size)
    g = np.empty(xs.size)
    err = np.empty(xs.size)
    for s in range(0, xs.size, block):
        chunk = xs[s:s + block]
        grid = metrics_grid(model, chunk, chunk, k)
        idx = np.arange(chunk.size)
        f[s:s + block] = grid.f[idx, idx]
        g[s:s + block] = grid.g[idx, idx]
        err[s:s + block] = grid.err
    return f, g, err


def mp_index_table(
    model: BanditModel, grid: Sequence[float], tol: float, jobs: int = 1
) -> list[MPIndexValue]:
    """Index at every grid point; failures are kept and marked ``certified=False``."""
    xs = np.asarray(grid, dtype=float).ravel()
    if xs.size == 0:
        return []
    if np.any(np.diff(xs) < 0):
        raise DomainError("grid must be sorted ascending")
    model.check_state(xs)
    k = horizon_for_tolerance(model, tol)
    # fixed blocks: dedup inside a block depends on its roots, so the split must not depend on jobs
    blocks = [xs[s:s + INDEX_BLOCK] for s in range(0, xs.size, INDEX_BLOCK)]
    if jobs and jobs > 1 and len(blocks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(min(jobs, len(blocks))) as ex:
            results = list(ex.map(lambda b: index_diagonal(model, b, k, INDEX_BLOCK), blocks))
    else:
        results = [index_diagonal(model, b, k, INDEX_BLOCK) for b in blocks]
    f, g, err = (np.concatenate([r[i] for r in results]) for i in range(3))
    return [_table_entry(x, fi, gi, ei, k) for x, fi, gi, ei in zip(xs, f, g, err)]
