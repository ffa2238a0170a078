"""Arithmetic expressions over named parameters, used by config coefficients.

Only numbers, names, ``material.field`` lookups, the four operations, powers,
unary signs and a handful of math functions are accepted.  Names resolve
lazily through a :class:`Namespace`, so parameters may refer to each other in
any order as long as there is no cycle.
"""

from __future__ import annotations

import ast
import math
import operator
from typing import Callable, Mapping

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
FUNCTIONS: dict[str, Callable] = {
    "sqrt": math.sqrt, "exp": math.exp, "log": math.log, "log10": math.log10,
    "sin": math.sin, "cos": math.cos, "abs": abs, "min": min, "max": max,
}


class ExpressionError(ValueError):
    """Malformed expression, unknown name or cyclic definition."""


def _compile(text: str) -> ast.AST:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return tree.body


class Namespace:
    """Lazy resolver for scalar names and ``group.field`` lookups.

    ``scalars`` maps names to numbers or expression strings; ``groups`` maps a
    group name (a material) to its own field mapping.
    """

    def __init__(self, scalars: Mapping[str, object], groups: Mapping[str, Mapping[str, object]] | None = None):
        self.scalars = dict(scalars)
        self.groups = {k: dict(v) for k, v in (groups or {}).items()}
        self._cache: dict[str, float] = {}
        self._active: list[str] = []

    def _resolve(self, key: str, raw) -> float:
        if key in self._cache:
            return self._cache[key]
        if key in self._active:
            chain = " -> ".join(self._active[self._active.index(key):] + [key])
            raise ExpressionError(f"cyclic definition: {chain}")
        self._active.append(key)
        try:
            val = self.evaluate(raw)
        finally:
            self._active.pop()
        self._cache[key] = val
        return val

    def lookup(self, name: str) -> float:
        if name not in self.scalars:
            raise ExpressionError(f"unknown name {name!r}")
        return self._resolve(name, self.scalars[name])

    def field(self, group: str, name: str) -> float:
        if group not in self.groups or name not in self.groups[group]:
            raise ExpressionError(f"unknown field {group}.{name}")
        raw = self.groups[group][name]
        if raw is None:
            raise ExpressionError(f"field {group}.{name} is not set")
        return self._resolve(f"{group}.{name}", raw)

    def evaluate(self, value) -> float:
        """Number passes through; strings are parsed and evaluated."""
        if isinstance(value, bool):
            raise ExpressionError("booleans are not numeric coefficients")
        if isinstance(value, (int, float)):
            return float(value)
        if not isinstance(value, str):
            raise ExpressionError(f"expected a number or expression, got {type(value).__name__}")
        return float(self._eval(_compile(value)))

    def _eval(self, node: ast.AST):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name):
            return self.lookup(node.id)
        if isinstance(node, ast.Attribute) and isinstance(node.value, ast.Name):
            return self.field(node.value.id, node.attr)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            try:
                return _BINOPS[type(node.op)](self._eval(node.left), self._eval(node.right))
            except ZeroDivisionError:
                raise ExpressionError("division by zero") from None
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](self._eval(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fn = FUNCTIONS.get(node.func.id)
            if fn is None:
                raise ExpressionError(f"unknown function {node.func.id!r}")
            try:
                return fn(*(self._eval(a) for a in node.args))
            except (ValueError, TypeError) as exc:
                raise ExpressionError(f"{node.func.id}: {exc}") from None
        raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")
