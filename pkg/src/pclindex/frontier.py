"""Achievable resource-reward region of a single project and its efficient frontier.

Each threshold policy gives a point ``(G(nu0, z), F(nu0, z))``; randomising at
the threshold joins the z-policy and z^- policy points by a segment. The
efficient frontier is the upper concave hull of these points, and its slope
across the segment at ``z`` is the MP index ``m(z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import horizon_for_tolerance, index_diagonal, metrics_grid, reachable_set
from .exceptions import DomainError, ModelSpecError, ResourceCapError, UncertifiedInputError
from .model import LEFT, RIGHT, BanditModel, InitialDistribution

COLLINEAR_TOL = 1e-12
# Largest jump-point ladder used as the default sweep grid.
MAX_LADDER = 1000
UNIFORM_POINTS = 401


@dataclass(frozen=True)
class FrontierPoint:
    gamma: float
    phi: float
    z: float
    side: str
    alpha: float | None = None


@dataclass
class FrontierCurve:
    points: list
    slopes: list
    horizon: int
    err: float
    candidates: list = field(default_factory=list)
    grid_kind: str = "uniform"

    @property
    def gamma_range(self) -> tuple[float, float]:
        return self.points[0].gamma, self.points[-1].gamma

    def rows(self) -> list[dict]:
        """One record per point; ``slope`` is that of the segment to the right."""
        out = []
        for i, p in enumerate(self.points):
            out.append({
                "gamma": p.gamma,
                "phi": p.phi,
                "z": p.z,
                "side": p.side,
                "alpha": p.alpha,
                "slope": self.slopes[i] if i < len(self.slopes) else None,
            })
        return out


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_hull(points: Sequence[FrontierPoint], tol: float = COLLINEAR_TOL) -> list[FrontierPoint]:
    """Upper concave hull by the monotone chain, dropping collinear points.

    Points sharing a resource level keep only the largest reward.
    """
    pts = sorted(points, key=lambda p: (p.gamma, -p.phi))
    best = []
    for p in pts:
        if best and p.gamma == best[-1].gamma:
            continue
        best.append(p)
    if len(best) <= 2:
        return best
    g_span = best[-1].gamma - best[0].gamma
    f_span = max(p.phi for p in best) - min(p.phi for p in best)
    scale = max(g_span, 1e-300) * max(f_span, 1e-300)
    hull: list[FrontierPoint] = []
    for p in best:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            turn = _cross((o.gamma, o.phi), (a.gamma, a.phi), (p.gamma, p.phi))
            if turn >= -tol * scale:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _slopes(hull):
    return [(b.phi - a.phi) / (b.gamma - a.gamma) for a, b in zip(hull, hull[1:])]


def default_threshold_grid(model: BanditModel, nu0: InitialDistribution, k: int) -> tuple[np.ndarray, str]:
    """Jump-point ladder reachable from the nodes when small, else a uniform grid plus the nodes."""
    try:
        reach = reachable_set(model, nu0.nodes, k, cap=MAX_LADDER)
        if len(reach) <= MAX_LADDER:
            return reach.states, "ladder"
    except ResourceCapError:
        pass
    lo, hi = model.states.lower, model.states.upper
    return np.unique(np.concatenate([np.linspace(lo, hi, UNIFORM_POINTS), nu0.nodes])), "uniform"


def _weighted(model, nu0, zs, k, side):
    grid = metrics_grid(model, nu0.nodes, zs, k, side)
    return nu0.weights @ grid.G, nu0.weights @ grid.F


def sweep_frontier(
    model: BanditModel,
    nu0: InitialDistribution,
    threshold_grid: Sequence[float] | None = None,
    tol: float = 1e-10,
    certified: bool = False,
) -> FrontierCurve:
    """Efficient frontier from the z-policy and z^- policy points at every grid threshold.

    ``certified`` must be true: frontier optimality of threshold policies
    rests on the project being PCL-indexable.
    """
    if not certified:
        raise UncertifiedInputError("frontier needs a PCL-certified model (pass certified=True after verification)")
    k = horizon_for_tolerance(model, tol)
    if threshold_grid is None:
        zs, kind = default_threshold_grid(model, nu0, k)
    else:
        zs, kind = np.asarray(threshold_grid, dtype=float), "given"
    zs = np.unique(np.concatenate([[-np.inf], zs[np.isfinite(zs)], [np.inf]]))
    cands = []
    for side in (RIGHT, LEFT):
        G, F = _weighted(model, nu0, zs, k, side)
        cands.extend(FrontierPoint(float(g), float(f), float(z), side) for g, f, z in zip(G, F, zs))
    hull = upper_hull(cands)
    err = model.weight_bound.tail(k) * nu0.w_norm(model)
    return FrontierCurve(hull, _slopes(hull), k, err, cands, kind)


@dataclass(frozen=True)
class ResourceSolution:
    """Frontier value at a resource level and a policy achieving it.

    With ``mix_with`` unset the policy is the randomised threshold ``z^alpha``
    (passive at ``z`` w.p. ``alpha``). Otherwise it mixes, with weight
    ``alpha``, the threshold policy at ``(z, side)`` and the one at
    ``mix_with``.
    """

    phi: float
    z: float
    alpha: float
    side: str = RIGHT
    mix_with: tuple | None = None

    def __iter__(self):
        return iter((self.phi, self.z, self.alpha))


def value_at_resource(curve: FrontierCurve, gamma: float) -> ResourceSolution:
    lo, hi = curve.gamma_range
    span = max(1.0, abs(hi))
    if not lo - 1e-12 * span <= gamma <= hi + 1e-12 * span:
        raise DomainError(f"resource level {gamma} outside the achievable range [{lo}, {hi}]")
    pts = curve.points
    for p in pts:
        if p.gamma == gamma:
            return ResourceSolution(p.phi, p.z, 1.0 if p.side == RIGHT else 0.0, p.side)
    gammas = np.array([p.gamma for p in pts])
    i = int(np.clip(np.searchsorted(gammas, gamma) - 1, 0, len(pts) - 2))
    a, b = pts[i], pts[i + 1]
    w = (b.gamma - gamma) / (b.gamma - a.gamma)  # weight on the lower-resource endpoint
    phi = w * a.phi + (1.0 - w) * b.phi
    if a.side == RIGHT and _same_point(b, _left_partner(curve, a.z)):
        return ResourceSolution(phi, a.z, w, RIGHT)
    return ResourceSolution(phi, a.z, w, a.side, (b.z, b.side))


def _left_partner(curve: FrontierCurve, z: float) -> FrontierPoint | None:
    for c in curve.candidates:
        if c.side == LEFT and c.z == z:
            return c
    return None


def _same_point(a: FrontierPoint, b: FrontierPoint | None) -> bool:
    # the hull keeps one representative per resource level
    return b is not None and a.gamma == b.gamma and a.phi == b.phi


@dataclass
class ShadowPriceCheck:
    z: float
    status: str  # pass, fail or degenerate
    slope: float
    m: float
    diff: float
    allowance: float
    jump: float
    limit_ratios: list
    note: str


def shadow_price_check(
    model: BanditModel,
    nu0_full_support: InitialDistribution,
    z_probe: float,
    tol: float = 1e-6,
    trunc_tol: float = 1e-10,
    deltas: Sequence[float] = (1e-3, 1e-4, 1e-5),
) -> ShadowPriceCheck:
    """Compare the frontier slope across the segment at ``z_probe`` with ``m(z_probe)``.

    Also records the difference quotients against ``z_probe -+ delta`` for each
    ``delta``; entries whose resource difference vanishes are ``None``.
    """
    nu0 = nu0_full_support
    if not nu0.full_support_proxy:
        raise ModelSpecError("shadow-price check needs a full-support initial distribution, not a point mass")
    k = horizon_for_tolerance(model, trunc_tol)
    zs = np.array([z_probe] + [z_probe + s * d for d in deltas for s in (-1.0, 1.0)])
    Gr, Fr = _weighted(model, nu0, zs, k, RIGHT)
    Gl, Fl = _weighted(model, nu0, zs[:1], k, LEFT)
    f, g, err = index_diagonal(model, [z_probe], k)
    m = float(f[0] / g[0])
    e = model.weight_bound.tail(k) * nu0.w_norm(model)
    jump = float(Gl[0] - Gr[0])
    limits = []
    for i, d in enumerate(deltas):
        for j, s in enumerate((-1.0, 1.0)):
            c = 1 + 2 * i + j
            dG = float(Gr[c] - Gr[0])
            ratio = float((Fr[c] - Fr[0]) / dG) if abs(dG) > 10 * e else None
            limits.append({"delta": s * d, "ratio": ratio, "error": None if ratio is None else abs(ratio - m)})
    note = f"full support approximated by a {nu0.nodes.size}-node quadrature"
    if abs(jump) < 10 * 2 * e:
        return ShadowPriceCheck(float(z_probe), "degenerate", math.nan, m, math.nan, math.nan, jump, limits,
                                note + "; resource jump below noise")
    slope = float((Fl[0] - Fr[0]) / jump)
    g_floor = float(g[0]) - 2 * float(err[0])
    m_err = 2 * float(err[0]) * (1 + abs(m)) / g_floor if g_floor > 0 else math.inf
    allowance = tol + m_err + 2 * e * (1 + abs(slope)) / abs(jump)
    diff = abs(slope - m)
    return ShadowPriceCheck(float(z_probe), "pass" if diff <= allowance else "fail", slope, m, diff, allowance,
                            jump, limits, note)
