"""Bundled projects and the name registry used by the command line."""

from __future__ import annotations

from ..exceptions import ModelSpecError
from ..expr import Expression
from ..model import BanditModel, Branch, FiniteMixtureKernel, StateInterval, WeightBound
from .channel import (
    ChannelParams,
    case2_anchors,
    channel_index,
    channel_jump_points,
    channel_metrics,
    channel_model,
)
from .ladder import IterateLadder
from .reset import reset_model
from .webcrawl import (
    WebCrawlParams,
    webcrawl_avg_index,
    webcrawl_breakpoints,
    webcrawl_index,
    webcrawl_jump_points,
    webcrawl_metrics,
    webcrawl_model,
)

DEFAULTS = {
    "webcrawl": {"alpha": 0.5, "b": 1.0, "C": 1.0, "beta": 0.9},
    "channel": {"p": 0.3, "q": 0.2, "beta": 0.9},
    "reset": {"beta": 0.9, "cost": 0.1},
}


def custom_model(spec: dict) -> BanditModel:
    """Project from primitive expressions in ``x``.

    ``spec`` keys: ``lower``, ``upper``, ``beta``; ``reward`` and ``cost`` as
    ``{"passive": expr, "active": expr}``; ``kernel`` as
    ``{"passive": [{"p": expr, "h": expr}, ...], "active": [...]}``; optional
    ``M`` and ``gamma`` for the weight bound (unit weight).
    """
    try:
        reward = [Expression(spec["reward"][k]) for k in ("passive", "active")]
        cost = [Expression(spec["cost"][k]) for k in ("passive", "active")]
        branches = {
            k: tuple(Branch(Expression(b["p"]), Expression(b["h"])) for b in spec["kernel"][k])
            for k in ("passive", "active")
        }
        states = StateInterval(float(spec["lower"]), float(spec["upper"]))
        beta = float(spec["beta"])
    except KeyError as exc:
        raise ModelSpecError(f"custom model is missing key {exc.args[0]!r}") from None
    wb = None
    if "M" in spec:
        wb = WeightBound(M=float(spec["M"]), gamma=float(spec.get("gamma", beta)))
    return BanditModel(
        states=states,
        reward=lambda x, a: reward[int(a)](x),
        cost=lambda x, a: cost[int(a)](x),
        kernel=FiniteMixtureKernel(branches["passive"], branches["active"]),
        discount=beta,
        weight_bound=wb,
        name="custom",
        params=dict(spec),
    )


def build_model(name: str, params: dict | None = None) -> BanditModel:
    """Instantiate a registered model; missing parameters take the defaults."""
    params = dict(params or {})
    if name == "custom":
        return custom_model(params)
    if name not in DEFAULTS:
        raise ModelSpecError(f"unknown model {name!r}; choose from {sorted(DEFAULTS) + ['custom']}")
    unknown = set(params) - set(DEFAULTS[name])
    if unknown:
        raise ModelSpecError(f"unknown parameters for {name}: {sorted(unknown)}")
    merged = {**DEFAULTS[name], **params}
    if name == "webcrawl":
        return webcrawl_model(WebCrawlParams(**merged))
    if name == "channel":
        return channel_model(ChannelParams(**merged))
    return reset_model(**merged)


__all__ = [
    "ChannelParams",
    "DEFAULTS",
    "IterateLadder",
    "WebCrawlParams",
    "build_model",
    "case2_anchors",
    "channel_index",
    "channel_jump_points",
    "channel_metrics",
    "channel_model",
    "custom_model",
    "reset_model",
    "webcrawl_avg_index",
    "webcrawl_breakpoints",
    "webcrawl_index",
    "webcrawl_jump_points",
    "webcrawl_metrics",
    "webcrawl_model",
]
