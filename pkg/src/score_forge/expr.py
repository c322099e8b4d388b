"""Tiny, side-effect free expression language used by the knowledge base.

Relation definitions, region predicates, slot constraints and rule guards are
all written as Python-looking boolean expressions, e.g.::

    a.tier == b.tier and a.col + 1 == b.col
    kind == 'person'
    W - V == 4

Only a whitelisted subset of the Python grammar is accepted; anything else is
rejected when the expression is compiled.
"""

from __future__ import annotations

import ast
from typing import Any, Mapping

_ALLOWED = (
    ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not, ast.USub,
    ast.BinOp, ast.Add, ast.Sub, ast.Mult, ast.Mod, ast.FloorDiv,
    ast.Compare, ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.In, ast.NotIn,
    ast.Name, ast.Load, ast.Attribute, ast.Constant, ast.Tuple, ast.List, ast.Call,
)
_FUNCS = {"abs": abs, "min": min, "max": max}


class ExprError(ValueError):
    pass


class Namespace:
    """Attribute view over a dict; unknown attributes read as ``None``."""

    __slots__ = ("_d",)

    def __init__(self, d: Mapping[str, Any]):
        self._d = d

    def __getattr__(self, name: str) -> Any:
        return self._d.get(name)


class Expr:
    def __init__(self, source: str):
        self.source = source.strip()
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ExprError(f"cannot parse expression {source!r}: {exc.msg}") from None
        names: set[str] = set()
        attrs: dict[str, set[str]] = {}
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ExprError(f"disallowed syntax {type(node).__name__} in {source!r}")
            if isinstance(node, ast.Call):
                if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords:
                    raise ExprError(f"only abs/min/max calls are allowed in {source!r}")
            elif isinstance(node, ast.Attribute):
                if not isinstance(node.value, ast.Name):
                    raise ExprError(f"nested attribute access in {source!r}")
                attrs.setdefault(node.value.id, set()).add(node.attr)
            elif isinstance(node, ast.Name) and node.id not in _FUNCS:
                names.add(node.id)
        self.names = frozenset(names)
        self.attrs = {k: frozenset(v) for k, v in attrs.items()}
        self._code = compile(tree, "<kb-expr>", "eval")

    def __call__(self, env: Mapping[str, Any]) -> bool:
        scope = dict(_FUNCS)
        for key, value in env.items():
            scope[key] = Namespace(value) if isinstance(value, dict) else value
        try:
            return bool(eval(self._code, {"__builtins__": {}}, scope))  # noqa: S307 - whitelisted AST
        except (TypeError, NameError, ZeroDivisionError):
            return False

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expr) and other.source == self.source

    def __hash__(self) -> int:
        return hash(self.source)
