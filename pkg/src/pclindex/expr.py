"""Restricted arithmetic expressions in one variable ``x`` for user-defined models.

Grammar: numeric literals, the name ``x``, ``+ - * / **``, unary minus,
parentheses and the functions ``min``, ``max``, ``clip``, ``sqrt``, ``abs``,
``exp`` and ``log``. Everything else is rejected at parse time. Compiled
expressions evaluate elementwise on numpy arrays.
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from .exceptions import ModelSpecError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "min": (np.minimum, 2),
    "max": (np.maximum, 2),
    "clip": (np.clip, 3),
    "sqrt": (np.sqrt, 1),
    "abs": (np.abs, 1),
    "exp": (np.exp, 1),
    "log": (np.log, 1),
}


def _check(node):
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ModelSpecError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id != "x":
            raise ModelSpecError(f"unknown name {node.id!r}; only 'x' is allowed")
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left)
        _check(node.right)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        _, arity = _FUNCS[node.func.id]
        if node.keywords or len(node.args) != arity:
            raise ModelSpecError(f"{node.func.id} takes exactly {arity} positional arguments")
        for arg in node.args:
            _check(arg)
        return
    raise ModelSpecError(f"unsupported syntax: {ast.dump(node)}")


def _eval(node, x):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return x
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, x))
    fn, _ = _FUNCS[node.func.id]
    return fn(*(_eval(a, x) for a in node.args))


class Expression:
    """A parsed expression; calling it evaluates on an array of states."""

    def __init__(self, source: str | float | int):
        self.source = str(source)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ModelSpecError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        _check(tree)
        self._body = tree.body

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(self._body, x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"
