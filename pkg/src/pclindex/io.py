"""JSON and CSV serialization with published schemas.

Floats are written with ``repr`` so every value round-trips exactly.
JSON has no spelling for non-finite numbers, so ``inf``, ``-inf`` and
``nan`` are written as those strings. Output is byte-deterministic: keys are
sorted, and nothing time- or host-dependent is emitted.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from .verify import SCHEMA_VERSION

INDEX_COLUMNS = ("x", "m", "err", "k_used", "certified")
FRONTIER_COLUMNS = ("gamma", "phi", "z", "side", "alpha", "slope")

_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def to_plain(obj: Any) -> Any:
    """Recursively convert to JSON-safe builtins; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(doc: dict) -> str:
    """Canonical JSON text; ``schema_version`` is added when absent."""
    doc = to_plain(doc)
    doc.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def number(v) -> float:
    """Inverse of the non-finite string encoding."""
    if isinstance(v, str):
        return _NONFINITE[v]
    return float(v)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def index_csv(table) -> str:
    return write_csv(INDEX_COLUMNS, (
        {"x": e.x, "m": e.m, "err": e.err, "k_used": e.k, "certified": e.certified} for e in table
    ))


def frontier_csv(curve) -> str:
    return write_csv(FRONTIER_COLUMNS, curve.rows())


_NUM = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_NUM_OR_NULL = {"anyOf": [_NUM, {"type": "null"}]}
_EXPR = {"anyOf": [{"type": "number"}, {"type": "string", "minLength": 1}]}
_PAIR = {
    "type": "object",
    "properties": {"passive": _EXPR, "active": _EXPR},
    "required": ["passive", "active"],
    "additionalProperties": False,
}
_BRANCHES = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "properties": {"p": _EXPR, "h": _EXPR},
        "required": ["p", "h"],
        "additionalProperties": False,
    },
}

CUSTOM_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "lower": {"type": "number"},
        "upper": {"type": "number"},
        "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "reward": _PAIR,
        "cost": _PAIR,
        "kernel": {
            "type": "object",
            "properties": {"passive": _BRANCHES, "active": _BRANCHES},
            "required": ["passive", "active"],
            "additionalProperties": False,
        },
        "M": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
    "required": ["lower", "upper", "beta", "reward", "cost", "kernel"],
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"enum": ["webcrawl", "channel", "reset", "custom"]},
        "params": {"type": "object"},
    },
    "required": ["name"],
    "additionalProperties": False,
    "allOf": [{
        "if": {"properties": {"name": {"const": "custom"}}},
        "then": {"properties": {"params": CUSTOM_MODEL_SCHEMA}, "required": ["name", "params"]},
        "else": {"properties": {"params": {"additionalProperties": {"type": "number"}}}},
    }],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pclindex run configuration",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": MODEL_SCHEMA,
        "grid": {
            "anyOf": [
                {"type": "integer", "minimum": 0},
                {"type": "array", "items": {"type": "number"}},
            ]
        },
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "tol_mono": {"type": "number", "exclusiveMinimum": 0},
        "tol_pcli3": {"type": "number", "exclusiveMinimum": 0},
        "refinement_factor": {"type": "integer", "minimum": 2},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "jobs": {"type": "integer", "minimum": 1},
        "nodes": {"type": "integer", "minimum": 2},
        "probes": {"type": "integer", "minimum": 0},
        "x": {"type": "number"},
        "z": _NUM,
        "side": {"enum": ["right", "left"]},
        "mix": {"type": "number", "minimum": 0, "maximum": 1},
        "k": {"type": "integer", "minimum": 0},
        "budget": {"type": "number"},
        "episodes": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "sim_tol": {"type": "number", "exclusiveMinimum": 0},
        "projects": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"model": MODEL_SCHEMA, "initial_state": {"type": "number"}},
                "required": ["model", "initial_state"],
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_VERDICT = {"enum": ["PASS", "FAIL", "INCONCLUSIVE", "SKIPPED"]}

REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {"type": "string"},
        "verdict": {"enum": ["PASS", "FAIL", "INCONCLUSIVE"]},
        "conclusion": {"type": "string"},
        "pcli1": {
            "type": "object",
            "properties": {"status": _VERDICT, "min_certified_g": _NUM, "witness": {"type": ["array", "null"]}},
            "required": ["status", "min_certified_g", "witness"],
        },
        "pcli2": {
            "type": "object",
            "properties": {"status": _VERDICT, "monotonicity_margin": _NUM, "max_gap": _NUM},
            "required": ["status", "monotonicity_margin", "max_gap"],
        },
        "pcli3": {
            "type": "object",
            "properties": {
                "status": _VERDICT,
                "max_residual": _NUM,
                "method": {"enum": ["piecewise-constant-exact", "quadrature", "none"]},
            },
            "required": ["status", "max_residual", "method"],
        },
        "grid": {"type": "object"},
        "tol": {"type": "object"},
        "index_table": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"x": _NUM, "m": _NUM, "err": _NUM, "g_floor": _NUM, "k": {"type": "integer"},
                               "certified": {"type": "boolean"}},
                "required": ["x", "m", "err", "k", "certified"],
            },
        },
    },
    "required": ["schema_version", "model", "verdict", "pcli1", "pcli2", "pcli3", "grid", "tol"],
}

METRICS_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {"type": "string"},
        "x": _NUM,
        "z": _NUM,
        "side": {"enum": ["right", "left"]},
        "alpha": _NUM_OR_NULL,
        "horizon": {"type": "integer"},
        **{k: _NUM for k in ("F", "G", "f", "g", "F_err", "G_err", "fg_err")},
    },
    "required": ["schema_version", "F", "G", "f", "g", "horizon", "fg_err"],
}

FRONTIER_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {"type": "string"},
        "gamma_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "horizon": {"type": "integer"},
        "err": _NUM,
        "grid_kind": {"type": "string"},
        "points": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"gamma": _NUM, "phi": _NUM, "z": _NUM, "side": {"enum": ["right", "left"]},
                               "alpha": _NUM_OR_NULL, "slope": _NUM_OR_NULL},
                "required": list(FRONTIER_COLUMNS),
            },
        },
        "shadow_price": {"type": "array"},
    },
    "required": ["schema_version", "gamma_range", "points", "shadow_price"],
}

RMABP_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "dual": {
            "type": "object",
            "properties": {"lambda_opt": {"type": "number", "minimum": 0}, "bound": _NUM,
                           "horizon": {"type": "integer"}, "per_project": {"type": "array"}},
            "required": ["lambda_opt", "bound", "per_project"],
        },
        "simulation": {
            "type": "object",
            "properties": {"mean_value": _NUM, "half_width": {"type": "number", "minimum": 0},
                           "episodes": {"type": "integer"}, "horizon": {"type": "integer"},
                           "seed": {"type": "integer"}, "truncation_bias": _NUM,
                           "violations": {"const": 0}},
            "required": ["mean_value", "half_width", "episodes", "horizon", "seed", "violations"],
        },
        "weak_duality": {"type": "object"},
    },
    "required": ["schema_version", "dual", "simulation", "weak_duality"],
}

_CSV_NUM = r"^(-?[0-9.eE+-]+|inf|-inf|nan)$"
INDEX_ROW_SCHEMA = {
    "type": "object",
    "properties": {
        "x": {"type": "string", "pattern": _CSV_NUM},
        "m": {"type": "string", "pattern": _CSV_NUM},
        "err": {"type": "string", "pattern": _CSV_NUM},
        "k_used": {"type": "string", "pattern": r"^[0-9]+$"},
        "certified": {"enum": ["true", "false"]},
    },
    "required": list(INDEX_COLUMNS),
    "additionalProperties": False,
}
FRONTIER_ROW_SCHEMA = {
    "type": "object",
    "properties": {
        "gamma": {"type": "string", "pattern": _CSV_NUM},
        "phi": {"type": "string", "pattern": _CSV_NUM},
        "z": {"type": "string", "pattern": _CSV_NUM},
        "side": {"enum": ["right", "left"]},
        "alpha": {"type": "string", "pattern": r"^$|" + _CSV_NUM},
        "slope": {"type": "string", "pattern": r"^$|" + _CSV_NUM},
    },
    "required": list(FRONTIER_COLUMNS),
    "additionalProperties": False,
}

SCHEMAS = {
    "config": CONFIG_SCHEMA,
    "report": REPORT_SCHEMA,
    "metrics": METRICS_SCHEMA,
    "frontier": FRONTIER_SCHEMA,
    "rmabp": RMABP_SCHEMA,
    "index_row": INDEX_ROW_SCHEMA,
    "frontier_row": FRONTIER_ROW_SCHEMA,
}


def validate(doc: Any, kind: str) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``doc`` matches the named schema."""
    jsonschema.validate(doc, SCHEMAS[kind])


def validate_csv(text: str, kind: str) -> list[dict]:
    rows = read_csv(text)
    for row in rows:
        validate(row, kind)
    return rows
