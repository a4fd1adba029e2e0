"""Empirical PINN loss, Lipschitz-regularized (LIPR) loss and weight schedules.

For weights ``lam_r, lam_b[j]`` and regularization weights ``reg_r, reg_b[j]``:

    pinn = lam_r/m_r sum_i |L[h](x_i) - f(x_i)|^2
           + sum_j lam_b[j]/m_bj sum_i |h(x_ji) - g_j(x_ji)|^2
    lipr = pinn + reg_r max_i |grad L[h](x_i)|_inf^2
                + sum_j reg_b[j] max_i |grad_tan h(x_ji)|_inf^2

The boundary gradient is taken along the free (tangential) coordinates of each
boundary group, so finite boundaries such as the endpoints of an interval carry
no regularization term.  The max term is differentiated through its arg-max
sample only (lowest index on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError
from .jets import forward_jets, forward_jets_taped, param_gradient
from .network import Architecture, Network
from .pde import PdeProblem, residual, residual_gradient
from .sampling import DistributionConstants, TrainingSet

SCHEDULES = ("constant", "poisson_lipr", "heat_lipr", "theory")


@dataclass(frozen=True)
class LossWeights:
    lam_r: float = 1.0
    lam_b: tuple = (1.0,)
    reg_r: float = 0.0
    reg_b: tuple = (0.0,)
    C_m: float | None = None   # set by the "theory" schedule

    def __post_init__(self):
        lam_b = tuple(float(v) for v in np.atleast_1d(self.lam_b))
        reg_b = tuple(float(v) for v in np.atleast_1d(self.reg_b))
        if len(reg_b) == 1 and len(lam_b) > 1:
            reg_b = reg_b * len(lam_b)
        if len(reg_b) != len(lam_b):
            raise DimensionError("lam_b and reg_b need one entry per boundary group")
        object.__setattr__(self, "lam_b", lam_b)
        object.__setattr__(self, "reg_b", reg_b)
        vals = (self.lam_r, self.reg_r) + lam_b + reg_b
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError("loss weights must be finite and nonnegative")

    @property
    def regularized(self) -> bool:
        return self.reg_r > 0 or any(v > 0 for v in self.reg_b)

    def unregularized(self) -> "LossWeights":
        return replace(self, reg_r=0.0, reg_b=(0.0,) * len(self.lam_b))

    def to_dict(self) -> dict:
        return {"lam_r": self.lam_r, "lam_b": list(self.lam_b), "reg_r": self.reg_r,
                "reg_b": list(self.reg_b), "C_m": self.C_m}


@dataclass
class LossTerms:
    """Value of each additive piece of the loss."""

    residual: float = 0.0
    boundary: list = field(default_factory=list)
    reg_r: float = 0.0
    reg_b: list = field(default_factory=list)

    @property
    def total(self) -> float:
        # fixed summation order
        s = self.residual
        for v in self.boundary:
            s += v
        s += self.reg_r
        for v in self.reg_b:
            s += v
        return s


class Objective:
    """Loss of a fixed problem and training set as a function of the flat parameters.

    ``f`` and ``g_j`` are evaluated once at construction.  ``batch`` arguments
    are tuples of index arrays, one for the residual points followed by one per
    boundary group; ``None`` means the full set.
    """

    def __init__(self, arch: Architecture, problem: PdeProblem, training_set: TrainingSet,
                 weights: LossWeights):
        if training_set.dim != problem.dim or arch.input_dim != problem.dim:
            raise DimensionError("problem, training set and network dimensions disagree")
        ng = len(problem.boundary_groups)
        if len(training_set.boundary_points) != ng or len(weights.lam_b) != ng:
            raise DimensionError(f"expected {ng} boundary groups")
        if weights.lam_r > 0 and training_set.m_r == 0:
            raise DimensionError("residual weight is positive but there are no residual points")
        for j, P in enumerate(training_set.boundary_points):
            if weights.lam_b[j] > 0 and len(P) == 0:
                raise DimensionError(f"boundary group {j} has weight but no points")
        self.arch = arch
        self.problem = problem
        self.ts = training_set
        self.weights = weights
        self.A, self.B, self.c = problem.op.coefficients()
        self.R = training_set.residual_points
        self.f = problem.f(self.R) if len(self.R) else np.zeros(0)
        self.Bpts = training_set.boundary_points
        self.g = [problem.g(j, P) if len(P) else np.zeros(0) for j, P in enumerate(self.Bpts)]
        self.tangential = [grp.tangential_axes for grp in problem.boundary_groups]

    def full_batch(self):
        return (None,) * (1 + len(self.Bpts))

    def __call__(self, params, batch=None) -> float:
        return self.evaluate(params, batch, grad=False)[0].total

    def value_and_grad(self, params, batch=None):
        terms, g = self.evaluate(params, batch, grad=True)
        return terms.total, g

    def evaluate(self, params, batch=None, grad: bool = True):
        net = Network(self.arch, params)
        w = self.weights
        batch = batch or self.full_batch()
        terms = LossTerms()
        total_grad = np.zeros(net.params.size) if grad else None
        dim = self.problem.dim

        # residual points
        idx = batch[0]
        X = self.R if idx is None else self.R[idx]
        fX = self.f if idx is None else self.f[idx]
        use_reg = w.reg_r > 0
        if len(X) and (w.lam_r > 0 or use_reg):
            order = 3 if use_reg else 2
            if grad:
                jet, tape = forward_jets_taped(net, X, order)
            else:
                jet = forward_jets(net, X, order)
            m = len(X)
            r = residual(self.problem.op, jet) - fX
            terms.residual = w.lam_r / m * float(np.dot(r, r))
            if grad:
                s = 2.0 * w.lam_r / m * r
                cv = s * self.c
                c1 = s[:, None] * self.B
                c2 = s[:, None, None] * self.A
                c3 = np.zeros((m, dim, dim, dim)) if use_reg else None
            if use_reg:
                q = residual_gradient(self.problem.op, jet)
                i, k = _argmax_inf(q)
                terms.reg_r = w.reg_r * q[i, k] ** 2
                if grad:
                    t = 2.0 * w.reg_r * q[i, k]
                    c3[i, :, :, k] += t * self.A
                    c2[i, :, k] += t * self.B
                    c1[i, k] += t * self.c
            if grad:
                total_grad += param_gradient(tape, (cv, c1, c2, c3))

        # boundary groups
        for j, P_all in enumerate(self.Bpts):
            idx = batch[1 + j]
            P = P_all if idx is None else P_all[idx]
            gP = self.g[j] if idx is None else self.g[j][idx]
            tang = self.tangential[j]
            use_reg = w.reg_b[j] > 0 and len(tang) > 0
            terms.boundary.append(0.0)
            terms.reg_b.append(0.0)
            if not len(P) or (w.lam_b[j] == 0 and not use_reg):
                continue
            order = 1 if use_reg else 0
            if grad:
                jet, tape = forward_jets_taped(net, P, order)
            else:
                jet = forward_jets(net, P, order)
            m = len(P)
            e = jet.value - gP
            terms.boundary[j] = w.lam_b[j] / m * float(np.dot(e, e))
            if grad:
                cv = 2.0 * w.lam_b[j] / m * e
                c1 = np.zeros((m, dim)) if use_reg else None
            if use_reg:
                q = jet.d1[:, list(tang)]
                i, kk = _argmax_inf(q)
                terms.reg_b[j] = w.reg_b[j] * q[i, kk] ** 2
                if grad:
                    c1[i, tang[kk]] += 2.0 * w.reg_b[j] * q[i, kk]
            if grad:
                total_grad += param_gradient(tape, (cv, c1, None, None))
        return terms, total_grad


def _argmax_inf(q):
    """(point, component) of the largest |q|; first occurrence wins ties."""
    a = np.abs(q)
    i = int(np.argmax(a.max(axis=1)))
    return i, int(np.argmax(a[i]))


def pinn_loss(network: Network, problem: PdeProblem, training_set: TrainingSet,
              weights: LossWeights, grad: bool = False):
    """Empirical PINN loss (regularization weights ignored); ``(value, grad)`` if ``grad``."""
    obj = Objective(network.arch, problem, training_set, weights.unregularized())
    if grad:
        return obj.value_and_grad(network.params)
    return obj(network.params)


def lipr_loss(network: Network, problem: PdeProblem, training_set: TrainingSet,
              weights: LossWeights, grad: bool = False):
    """PINN loss plus the weighted squared max-norm gradient penalties."""
    obj = Objective(network.arch, problem, training_set, weights)
    if grad:
        return obj.value_and_grad(network.params)
    return obj(network.params)


def theory_weights(m_r: int, m_b: int | None, constants: DistributionConstants,
                   lam_r: float = 1.0, lam_b: float = 1.0):
    """``(C_m, reg_r, reg_b)`` of the generalization bound for sample counts ``m_r, m_b``."""
    d, a = constants.d, constants.alpha
    if d == 1:
        C_m = 3.0 * constants.kappa_r * math.sqrt(m_r)
        reg_r = lam_r * constants.c_r ** (-2 * a) / constants.kappa_r * m_r ** (-a - 0.5)
        return C_m, reg_r, 0.0
    if constants.c_b is None or m_b is None:
        raise ValueError("boundary constants and m_b are required for d >= 2")
    sd = math.sqrt(d)
    C_m = 3.0 * max(constants.kappa_r * sd**d * math.sqrt(m_r),
                    constants.kappa_b * sd ** (d - 1) * math.sqrt(m_b))
    reg_r = 3.0 * lam_r * sd ** (2 * a) * constants.c_r ** (-2 * a / d) / C_m * m_r ** (-a / d)
    reg_b = (3.0 * lam_b * sd ** (2 * a) * constants.c_b ** (-2 * a / (d - 1)) / C_m
             * m_b ** (-a / (d - 1)))
    return C_m, reg_r, reg_b


def holder_schedule(kind: str, m_r: int, m_b=(), constants: DistributionConstants | None = None,
                    base: LossWeights | None = None) -> LossWeights:
    """Regularization weights for sample counts ``m_r`` and ``m_b`` (one per group).

    ``poisson_lipr``: reg_r = m_r^-1.5.  ``heat_lipr``: reg_r = 2/m_r and
    reg_b[j] = 1/(m_bj sqrt(m_r)).  ``theory``: the bound's weights from the
    distribution constants, with ``C_m`` attached.  ``constant``: ``base``.
    """
    if m_r < 1:
        raise ValueError("m_r must be >= 1")
    m_b = tuple(int(v) for v in m_b)
    if base is None:
        base = LossWeights(1.0, (1.0,) * max(1, len(m_b)), 0.0, (0.0,))
    nb = len(base.lam_b)
    if kind == "constant":
        return base
    if kind == "poisson_lipr":
        return replace(base, reg_r=m_r ** -1.5, reg_b=(0.0,) * nb)
    if kind == "heat_lipr":
        if len(m_b) != nb:
            raise DimensionError("heat_lipr needs one boundary count per group")
        return replace(base, reg_r=2.0 / m_r,
                       reg_b=tuple(1.0 / (mb * math.sqrt(m_r)) for mb in m_b))
    if kind == "theory":
        if constants is None:
            raise ValueError("the theory schedule needs distribution constants")
        total_b = sum(m_b) if m_b else None
        C_m, reg_r, reg_b = theory_weights(m_r, total_b, constants, base.lam_r,
                                           max(base.lam_b))
        return replace(base, reg_r=reg_r, reg_b=(reg_b,) * nb, C_m=C_m)
    raise ValueError(f"unknown schedule {kind!r}; choose from {SCHEDULES}")
