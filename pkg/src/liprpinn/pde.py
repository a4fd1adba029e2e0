"""Linear constant-coefficient operators, Dirichlet data and manufactured problems.

Coordinates are ordered ``(x,)`` for elliptic problems and ``(x, t)`` for
parabolic ones.  Every operator is a linear functional of a jet,

    L[u] = sum_ij A_ij u_ij + sum_i B_i u_i + c u,

so the residual and its input-gradient are both read straight off a
:class:`~liprpinn.jets.Jet3`.  The Poisson problem ``-u_xx = f`` is the elliptic
operator with ``a = -1``; the heat problem ``-u_t + nu u_xx = f`` is the
parabolic operator with spatial coefficient ``nu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .expr import Expression
from .jets import Jet3

BUILTIN_EXACT = {
    "tanh": ("tanh(x)", ("x",)),
    "sin6pi": ("(1 - x**2) * sin(6*pi*x)", ("x",)),
    "heat_sin": ("sin(pi*x) * exp(-t)", ("x", "t")),
}


@dataclass(frozen=True)
class OperatorSpec:
    kind: str                       # "elliptic" | "parabolic"
    a: tuple = ((-1.0,),)           # spatial second-order coefficients
    b: tuple = (0.0,)               # spatial first-order coefficients
    c: float = 0.0
    nu: float | None = None         # parabolic shorthand: a = [[nu]]

    def __post_init__(self):
        if self.kind not in ("elliptic", "parabolic"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        a = np.atleast_2d(np.asarray(self.a if self.nu is None else [[self.nu]], dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("second-order coefficient matrix must be square")
        if not np.array_equal(a, a.T):
            raise DimensionError("second-order coefficients must be symmetric")
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != a.shape[0]:
            raise DimensionError("first-order coefficients do not match the spatial dimension")
        if self.kind == "elliptic":
            eig = np.linalg.eigvalsh(a)
            # definite of either sign: -u_xx = f is written with a = -1
            if not (np.all(eig > 0) or np.all(eig < 0)):
                raise DimensionError("elliptic operator needs a definite coefficient matrix")
        object.__setattr__(self, "a", tuple(map(tuple, a.tolist())))
        object.__setattr__(self, "b", tuple(b.tolist()))

    @classmethod
    def poisson(cls) -> "OperatorSpec":
        return cls("elliptic", ((-1.0,),), (0.0,), 0.0)

    @classmethod
    def heat(cls, nu: float = 1.0) -> "OperatorSpec":
        return cls("parabolic", ((float(nu),),), (0.0,), 0.0, float(nu))

    @property
    def space_dim(self) -> int:
        return len(self.a)

    @property
    def dim(self) -> int:
        return self.space_dim + (1 if self.kind == "parabolic" else 0)

    def coefficients(self):
        """``(A, B, c)`` over all coordinates, time last for parabolic operators."""
        d, D = self.space_dim, self.dim
        A = np.zeros((D, D))
        A[:d, :d] = self.a
        B = np.zeros(D)
        B[:d] = self.b
        if self.kind == "parabolic":
            B[d] = -1.0
        return A, B, float(self.c)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": [list(r) for r in self.a], "b": list(self.b),
                "c": self.c, "nu": self.nu}


def _check_dim(op: OperatorSpec, jet: Jet3):
    if jet.dim != op.dim:
        raise DimensionError(f"{op.kind} operator needs {op.dim} coordinates, jet has {jet.dim}")


def residual(op: OperatorSpec, jet: Jet3) -> np.ndarray:
    """``L[h]`` at the jet's point(s)."""
    _check_dim(op, jet)
    A, B, c = op.coefficients()
    return (np.einsum("...ij,ij->...", jet.d2, A) + np.einsum("...i,i->...", jet.d1, B)
            + c * jet.value)


def residual_gradient(op: OperatorSpec, jet: Jet3) -> np.ndarray:
    """Input-gradient of ``L[h]``; needs third derivatives in the jet."""
    _check_dim(op, jet)
    A, B, c = op.coefficients()
    return (np.einsum("...ijk,ij->...k", jet.d3, A) + np.einsum("...ik,i->...k", jet.d2, B)
            + c * jet.d1)


# -- geometry ----------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box; an axis with ``lo == hi`` is held fixed."""

    bounds: tuple

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))
        for lo, hi in self.bounds:
            if hi < lo:
                raise ValueError("box bounds must satisfy lo <= hi")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def free_axes(self) -> tuple[int, ...]:
        return tuple(i for i, (lo, hi) in enumerate(self.bounds) if hi > lo)

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds if hi > lo])) if self.free_axes else 1.0

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        ok = np.ones(len(X), dtype=bool)
        for i, (lo, hi) in enumerate(self.bounds):
            ok &= (X[:, i] >= lo - tol) & (X[:, i] <= hi + tol)
        return ok


@dataclass(frozen=True)
class PointSet:
    """A finite boundary (e.g. the two endpoints of an interval)."""

    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(tuple(float(v) for v in p) for p in self.points))

    @property
    def dim(self) -> int:
        return len(self.points[0])

    @property
    def free_axes(self) -> tuple[int, ...]:
        return ()

    def array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        P = self.array()
        return (np.abs(X[:, None, :] - P[None, :, :]).max(axis=2) <= tol).any(axis=1)


@dataclass(frozen=True)
class BoundaryGroup:
    name: str
    region: Box | PointSet

    @property
    def tangential_axes(self) -> tuple[int, ...]:
        return self.region.free_axes


# -- problems ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PdeProblem:
    op: OperatorSpec
    x_bounds: tuple = (-1.0, 1.0)
    T: float | None = None
    exact: Expression = None
    boundary_groups: tuple = field(default=())

    def __post_init__(self):
        if (self.T is not None) != (self.op.kind == "parabolic"):
            raise DimensionError("a final time T is required exactly for parabolic problems")
        if self.exact.variables != self.variables:
            raise DimensionError(f"exact solution must use variables {self.variables}")

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def variables(self) -> tuple[str, ...]:
        return ("x", "t") if self.op.kind == "parabolic" else ("x",)

    @property
    def domain(self) -> Box:
        b = [tuple(self.x_bounds)]
        if self.T is not None:
            b.append((0.0, float(self.T)))
        return Box(tuple(b))

    def f(self, X) -> np.ndarray:
        """Manufactured forcing ``L[u*]``."""
        return residual(self.op, self.exact.jet(X))

    def g(self, j: int, X) -> np.ndarray:
        """Dirichlet data on boundary group ``j`` (the exact solution there)."""
        if not 0 <= j < len(self.boundary_groups):
            raise IndexError(f"no boundary group {j}")
        return self.exact(X)


def manufacture(exact, op: OperatorSpec, x_bounds=(-1.0, 1.0), T=None) -> PdeProblem:
    """Build a problem whose solution is ``exact``; ``f`` and ``g_j`` are derived from it.

    ``exact`` is an expression string (or a key of :data:`BUILTIN_EXACT`) in the
    coordinates ``x`` (and ``t`` for parabolic operators).
    """
    variables = ("x", "t") if op.kind == "parabolic" else ("x",)
    if isinstance(exact, str):
        exact = Expression(BUILTIN_EXACT[exact][0] if exact in BUILTIN_EXACT else exact, variables)
    lo, hi = map(float, x_bounds)
    if op.kind == "parabolic":
        T = float(T if T is not None else 1.0)
        groups = (BoundaryGroup("left", Box(((lo, lo), (0.0, T)))),
                  BoundaryGroup("right", Box(((hi, hi), (0.0, T)))),
                  BoundaryGroup("initial", Box(((lo, hi), (0.0, 0.0)))))
    else:
        T = None
        groups = (BoundaryGroup("endpoints", PointSet(((lo,), (hi,)))),)
    return PdeProblem(op, (lo, hi), T, exact, groups)


def poisson1d(exact="tanh") -> PdeProblem:
    return manufacture(exact, OperatorSpec.poisson(), (-1.0, 1.0))


def heat1d(exact="heat_sin", nu: float = 1.0, T: float = 1.0) -> PdeProblem:
    return manufacture(exact, OperatorSpec.heat(nu), (-1.0, 1.0), T)
