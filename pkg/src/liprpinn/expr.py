"""Closed-form expressions for exact solutions, evaluated on jets.

Grammar: numbers, the constants ``pi`` and ``e``, coordinate names, ``+ - * /``,
``**`` and the functions ``sin cos exp tanh``.  Parsing goes through Python's
``ast`` module; anything outside the grammar is rejected.
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

from . import jets
from .errors import ExpressionError
from .jets import Jet3

FUNCTIONS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "tanh": jets.tanh}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


class Expression:
    """A parsed expression in the coordinates ``variables`` (e.g. ``("x", "t")``)."""

    def __init__(self, source: str, variables=("x",)):
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError("only unary + and - are allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError("functions take exactly one argument")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} (variables: {self.variables})")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"bad literal {node.value!r}")
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def jet(self, X) -> Jet3:
        """Jets of the expression at the rows of ``X`` (shape ``(N, D)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dim = X.shape[1]
        if dim != len(self.variables):
            raise ExpressionError(f"expected {len(self.variables)} coordinates, got {dim}")
        env = {name: Jet3.variable(X, i, dim) for i, name in enumerate(self.variables)}
        out = self._eval(self._tree, env, dim, X.shape[0])
        if not isinstance(out, Jet3):
            out = Jet3.constant(out, dim, (X.shape[0],))
        return out

    def __call__(self, X) -> np.ndarray:
        return self.jet(X).value

    def _eval(self, node, env, dim, n):
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left, env, dim, n)
            b = self._eval(node.right, env, dim, n)
            if isinstance(node.op, ast.Pow) and isinstance(a, Jet3) and not isinstance(b, Jet3):
                return a ** b
            if not isinstance(a, Jet3) and isinstance(b, Jet3) and isinstance(node.op, ast.Pow):
                return b.__rpow__(a)
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env, dim, n)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            arg = self._eval(node.args[0], env, dim, n)
            if not isinstance(arg, Jet3):
                arg = Jet3.constant(arg, dim, (n,))
            return FUNCTIONS[node.func.id](arg)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        return float(node.value)

    def __repr__(self):
        return f"Expression({self.source!r}, variables={self.variables})"
