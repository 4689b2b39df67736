"""Command-line front end.

Exit codes (exhaustive):

====  ==========================================================
0     success; every check passed
2     analytic failure with witnesses, or an uncertified input
3     inconclusive (margins inside numeric noise, resource cap)
64    usage error: bad flags, invalid config, empty grid
====  ==========================================================

Settings come from defaults, then the ``--config`` JSON file, then flags.
``PCLINDEX_CACHE_DIR``, when set, caches verification reports on disk.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np

from . import io as pio
from .engine import MPIndexValue, horizon_for_tolerance, k_horizon_metrics, mp_index_table
from .exceptions import (
    DomainError,
    InfeasibleBudgetError,
    ModelSpecError,
    NumericError,
    ResourceCapError,
    UncertifiedInputError,
)
from .frontier import shadow_price_check, sweep_frontier
from .model import RIGHT, InitialDistribution, ThresholdSpec
from .models import DEFAULTS, build_model
from .rmabp import RMABPInstance, simulate_index_policy, solve_dual
from .verify import FAIL, INCONCLUSIVE, PASS, SCHEMA_VERSION, full_report

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 2, 3, 64
CACHE_ENV = "PCLINDEX_CACHE_DIR"
MODEL_FLAGS = ("alpha", "b", "C", "beta", "p", "q", "cost")
DEFAULT_GRID = {"index": 101, "verify": 201, "frontier": 201, "rmabp": 201, "metrics": 0}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a subcommand needs; validated against the config schema first."""

    model: dict = field(default_factory=lambda: {"name": "webcrawl"})
    grid: int | list | None = None
    tol: float = 1e-10
    tol_mono: float = 1e-9
    tol_pcli3: float = 1e-8
    refinement_factor: int = 4
    output: str | None = None
    seed: int = 0
    jobs: int | None = None
    nodes: int = 201
    probes: int = 20
    x: float | None = None
    z: float | str | None = None
    side: str = RIGHT
    mix: float | None = None
    k: int | None = None
    budget: float = 1.0
    episodes: int = 10_000
    horizon: int | None = None
    sim_tol: float = 1e-4
    projects: list | None = None

    def to_doc(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


def _parse_grid(text: str):
    text = text.strip()
    if not text:
        return []
    if "," not in text:
        try:
            return int(text)
        except ValueError:
            pass
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--grid takes a point count or comma-separated states, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def load_config(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
    model = dict(doc.get("model", {}))
    params = dict(model.get("params", {}))
    if args.model:
        if args.model != model.get("name"):
            params = {}
        model["name"] = args.model
    for name in MODEL_FLAGS:
        v = getattr(args, f"m_{name}")
        if v is not None:
            params[name] = v
    if model or params:
        model.setdefault("name", "webcrawl")
        if params:
            model["params"] = params
        doc["model"] = model
    for name in ("grid", "tol", "output", "seed", "jobs", "nodes", "probes", "x", "z", "side", "mix", "k",
                 "budget", "episodes", "horizon", "sim_tol"):
        v = getattr(args, name, None)
        if v is not None:
            doc[name] = v
    if getattr(args, "initial_states", None) is not None:
        m = doc.get("model", {"name": "webcrawl"})
        doc["projects"] = [{"model": m, "initial_state": x} for x in _floats(args.initial_states)]
    try:
        pio.validate(doc, "config")
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc.message}") from None
    doc.pop("schema_version", None)
    return RunConfig(**doc)


def _model(spec: dict):
    return build_model(spec["name"], spec.get("params"))


def _state_grid(model, grid, default_n: int) -> np.ndarray:
    if grid is None:
        grid = default_n
    if isinstance(grid, int):
        if not model.states.bounded:
            raise UsageError("a point-count grid needs a bounded state interval; pass explicit states")
        pts = model.states.grid(grid) if grid > 0 else np.empty(0)
    else:
        pts = np.asarray(grid, dtype=float)
    if pts.size == 0:
        raise UsageError("empty grid")
    return pts


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cache_key(spec: dict, grid: np.ndarray, cfg: RunConfig) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": spec,
        "grid": [repr(float(v)) for v in grid],
        "tol": [cfg.tol, cfg.tol_mono, cfg.tol_pcli3, cfg.refinement_factor],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _table_from_doc(rows) -> list[MPIndexValue]:
    return [
        MPIndexValue(pio.number(r["x"]), pio.number(r["m"]), pio.number(r["err"]), pio.number(r["g_floor"]),
                     int(r["k"]), bool(r["certified"]))
        for r in rows
    ]


def certification(spec: dict, cfg: RunConfig, grid=None) -> dict:
    """Verification report as a plain document, read from or written to the cache when enabled."""
    model = _model(spec)
    states = _state_grid(model, cfg.grid if grid is None else grid, DEFAULT_GRID["verify"])
    cache_dir = os.environ.get(CACHE_ENV)
    path = None
    if cache_dir:
        path = Path(cache_dir) / f"report-{_cache_key(spec, states, cfg)}.json"
        if path.is_file():
            return json.loads(path.read_text())
    report = full_report(model, states, tol=cfg.tol, tol_mono=cfg.tol_mono, tol_pcli3=cfg.tol_pcli3,
                         refinement_factor=cfg.refinement_factor)
    doc = json.loads(pio.dumps(report.to_dict()))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(pio.dumps(doc))
        tmp.replace(path)
    return doc


_VERDICT_EXIT = {PASS: EXIT_OK, FAIL: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}


def cmd_index(cfg: RunConfig) -> int:
    model = _model(cfg.model)
    xs = _state_grid(model, cfg.grid, DEFAULT_GRID["index"])
    if np.any(np.diff(xs) < 0):
        raise UsageError("grid states must be sorted ascending")
    table = mp_index_table(model, xs, cfg.tol, jobs=cfg.jobs or os.cpu_count() or 1)
    _emit(pio.index_csv(table), cfg.output)
    bad = [e for e in table if not e.certified]
    for e in bad[:5]:
        print(f"uncertified: {e.message}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    doc = certification(cfg.model, cfg)
    _emit(pio.dumps(doc), cfg.output)
    print(f"{doc['model']}: {doc['verdict']}", file=sys.stderr)
    return _VERDICT_EXIT[doc["verdict"]]


def _require_pass(spec: dict, cfg: RunConfig) -> dict:
    doc = certification(spec, cfg)
    if doc["verdict"] != PASS:
        raise UncertifiedInputError(f"model {spec['name']} is not certified ({doc['verdict']}); refusing")
    return doc


def _probe_nodes(nu0: InitialDistribution, n: int) -> np.ndarray:
    if n <= 0:
        return np.empty(0)
    lo, hi = min(10, nu0.nodes.size // 4), max(nu0.nodes.size - 11, 0)
    return nu0.nodes[np.unique(np.linspace(lo, hi, n).round().astype(int))]


def cmd_frontier(cfg: RunConfig, fmt: str = "csv") -> int:
    _require_pass(cfg.model, cfg)
    model = _model(cfg.model)
    if not model.states.bounded:
        raise UsageError("frontier needs a bounded state interval for the uniform initial distribution")
    nu0 = InitialDistribution.uniform(model.states.lower, model.states.upper, cfg.nodes)
    curve = sweep_frontier(model, nu0, tol=cfg.tol, certified=True)
    checks = [shadow_price_check(model, nu0, float(z)) for z in _probe_nodes(nu0, cfg.probes)]
    failed = [c for c in checks if c.status == "fail"]
    if fmt == "json":
        doc = {
            "model": model.name,
            "gamma_range": list(curve.gamma_range),
            "horizon": curve.horizon,
            "err": curve.err,
            "grid_kind": curve.grid_kind,
            "nodes": cfg.nodes,
            "points": curve.rows(),
            "shadow_price": [c.__dict__ for c in checks],
        }
        _emit(pio.dumps(doc), cfg.output)
    else:
        _emit(pio.frontier_csv(curve), cfg.output)
    print(f"frontier: {len(curve.points)} points, {len(checks) - len(failed)}/{len(checks)} shadow-price probes pass",
          file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_rmabp(cfg: RunConfig) -> int:
    projects = cfg.projects or [{"model": cfg.model, "initial_state": x} for x in (0.3, 0.6)]
    tables, models, memo = [], [], {}
    for p in projects:
        key = json.dumps(p["model"], sort_keys=True)
        if key not in memo:
            doc = _require_pass(p["model"], cfg)
            memo[key] = (_model(p["model"]), _table_from_doc(doc["index_table"]))
        models.append(memo[key][0])
        tables.append(memo[key][1])
    inst = RMABPInstance(models, cfg.budget, [p["initial_state"] for p in projects], tables, tol=cfg.tol)
    dual = solve_dual(inst)
    sim = simulate_index_policy(inst, cfg.episodes, cfg.horizon, cfg.seed, cfg.sim_tol)
    allowance = 3.0 * sim.half_width + sim.truncation_bias
    holds = sim.mean_value <= dual.bound + allowance
    doc = {
        "dual": dual.to_dict(),
        "simulation": sim.to_dict(),
        "weak_duality": {"holds": bool(holds), "allowance": allowance, "gap": dual.bound - sim.mean_value},
        "budget": cfg.budget,
        "initial_states": [p["initial_state"] for p in projects],
    }
    _emit(pio.dumps(doc), cfg.output)
    return EXIT_OK if holds else EXIT_FAIL


def cmd_metrics(cfg: RunConfig) -> int:
    model = _model(cfg.model)
    if cfg.x is None or cfg.z is None:
        raise UsageError("metrics needs --x and --z")
    z = pio.number(cfg.z)
    model.check_state(cfg.x)
    k = cfg.k if cfg.k is not None else horizon_for_tolerance(model, cfg.tol)
    policy = ThresholdSpec(z, cfg.side, cfg.mix)
    b = k_horizon_metrics(model, cfg.x, policy, k)
    doc = {
        "model": model.name,
        "x": cfg.x,
        "z": z,
        "side": cfg.side,
        "alpha": cfg.mix,
        "horizon": k,
        "F": b.F, "G": b.G, "f": b.f, "g": b.g,
        "F_err": b.F_err, "G_err": b.G_err, "fg_err": b.fg_err,
    }
    _emit(pio.dumps(doc), cfg.output)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--model", choices=sorted(DEFAULTS) + ["custom"])
    mp = common.add_argument_group("model parameters")
    for name in MODEL_FLAGS:
        mp.add_argument(f"--{name}", dest=f"m_{name}", type=float)
    common.add_argument("--grid", type=_parse_grid, help="point count, or comma-separated states")
    common.add_argument("--tol", type=float, help="truncation tolerance for F and G")
    common.add_argument("--output", "-o", help="output path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker threads (default: available cores)")

    parser = _Parser(prog="pclindex", description="Certified marginal-productivity indices for restless bandits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("index", parents=[common], help="index table as CSV")
    sub.add_parser("verify", parents=[common], help="PCL-indexability report as JSON")
    fr = sub.add_parser("frontier", parents=[common], help="efficient frontier and shadow-price probes")
    fr.add_argument("--nodes", type=int, help="quadrature nodes of the uniform initial distribution")
    fr.add_argument("--probes", type=int, help="interior shadow-price probes")
    fr.add_argument("--format", choices=("csv", "json"), default="csv")
    rm = sub.add_parser("rmabp", parents=[common], help="dual bound and index-policy simulation")
    rm.add_argument("--budget", type=float)
    rm.add_argument("--initial-states", help="comma-separated; one project of --model per state")
    rm.add_argument("--episodes", type=int)
    rm.add_argument("--horizon", type=int)
    rm.add_argument("--sim-tol", dest="sim_tol", type=float, help="truncation tolerance for the horizon")
    me = sub.add_parser("metrics", parents=[common], help="F, G, f, g of one threshold policy")
    me.add_argument("--x", type=float)
    me.add_argument("--z", help="threshold; inf allowed, write --z=-inf for minus infinity")
    me.add_argument("--side", choices=("right", "left"))
    me.add_argument("--mix", type=float, help="probability of the passive action at the threshold")
    me.add_argument("--k", type=int, help="horizon (overrides --tol)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "z", None) is not None:
        try:
            args.z = float(args.z) if math.isfinite(float(args.z)) else args.z.strip().lower()
        except ValueError:
            parser.error(f"--z must be a number, inf or -inf, got {args.z!r}")
    try:
        cfg = load_config(args)
        if args.command == "index":
            return cmd_index(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "frontier":
            return cmd_frontier(cfg, args.format)
        if args.command == "rmabp":
            return cmd_rmabp(cfg)
        return cmd_metrics(cfg)
    except (UsageError, ModelSpecError, DomainError, InfeasibleBudgetError) as exc:
        print(f"pclindex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UncertifiedInputError as exc:
        print(f"pclindex: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ResourceCapError, NumericError) as exc:
        print(f"pclindex: inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
