"""Finite-difference oracles for input jets and loss parameter-gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import forward_jets
from .loss import LossWeights, Objective, holder_schedule
from .network import Architecture, Network, layer_slices, param_count, xavier_init
from .pde import heat1d, poisson1d
from .sampling import make_training_set

JET_STEP = 1e-4
GRAD_STEP = 1e-5
GRAD_DIRECTIONS = 8
# roundoff floor of a central difference of an O(1) loss: eps / GRAD_STEP
GRAD_ATOL = 1e-10

# architectures cycled through by the jet suite
JET_ARCHS = (
    Architecture((1, 50, 50, 1), residual=True),
    Architecture((1, 50, 50, 1), residual=True, wrapper="poisson1d_dirichlet_zero"),
    Architecture((2, 20, 20, 1)),
    Architecture((3, 10, 10, 1)),
)


def rel_error(a, b, atol: float = 0.0) -> float:
    """``max|a - b| / max|b|``.  Differences up to ``atol`` count as agreement;
    a nonzero difference against an all-zero ``b`` is infinite."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    num = float(np.max(np.abs(a - b), initial=0.0))
    den = float(np.max(np.abs(b), initial=0.0))
    if num <= atol:
        return 0.0
    return num / den if den > 0 else float("inf")


@dataclass(frozen=True)
class FdResult:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def random_network(arch: Architecture, seed: int, zero: bool = False) -> Network:
    """Xavier weights plus small random biases (so the tests are not odd-symmetric)."""
    if zero:
        return Network(arch, np.zeros(param_count(arch)))
    net = xavier_init(arch, seed)
    rng = np.random.default_rng([seed, 1])
    params = net.params.copy()
    for _, b, _ in layer_slices(arch):
        params[b] = rng.normal(0.0, 0.1, size=b.stop - b.start)
    return Network(arch, params, seed)


def jet_channel_errors(network: Network, x, h: float = JET_STEP) -> dict:
    """Relative error of d1, d2, d3 against central differences of the next-lower channel."""
    x = np.asarray(x, dtype=float)
    D = x.size
    E = np.eye(D) * h
    X = np.concatenate([x[None], x[None] + E, x[None] - E])
    jet = forward_jets(network, X, 3)
    c, p, m = 0, slice(1, 1 + D), slice(1 + D, 1 + 2 * D)
    fd1 = (jet.value[p] - jet.value[m]) / (2 * h)                     # (k,)
    fd2 = np.moveaxis((jet.d1[p] - jet.d1[m]) / (2 * h), 0, -1)       # (i, k)
    fd3 = np.moveaxis((jet.d2[p] - jet.d2[m]) / (2 * h), 0, -1)       # (i, j, k)
    return {"d1": rel_error(jet.d1[c], fd1), "d2": rel_error(jet.d2[c], fd2),
            "d3": rel_error(jet.d3[c], fd3)}


def jet_suite(cases: int = 20, seed: int = 0, tol: float = 1e-4, zero: bool = False):
    worst = {"d1": 0.0, "d2": 0.0, "d3": 0.0}
    for k in range(cases):
        arch = JET_ARCHS[k % len(JET_ARCHS)]
        net = random_network(arch, seed + k, zero)
        rng = np.random.default_rng([seed + k, 2])
        x = rng.uniform(-0.9, 0.9, size=arch.input_dim)
        for name, err in jet_channel_errors(net, x).items():
            worst[name] = max(worst[name], err)
    return [FdResult(f"jet.{name}", err, tol) for name, err in worst.items()]


def _objectives(seed: int):
    """Small Poisson (PINN and LIPR) and heat (LIPR) objectives."""
    p = poisson1d("tanh")
    ts = make_training_set(p, 30)
    a1 = Architecture((1, 20, 20, 1), residual=True)
    h = heat1d()
    tsh = make_training_set(h, 32, (4, 4, 8), "iid", seed)
    a2 = Architecture((2, 12, 12, 1))
    heat_w = holder_schedule("heat_lipr", 32, (4, 4, 8), base=LossWeights(1.0, (1.0,) * 3))
    return [
        ("pinn", a1, Objective(a1, p, ts, LossWeights())),
        ("lipr", a1, Objective(a1, p, ts, LossWeights(reg_r=0.05))),
        ("lipr_heat", a2, Objective(a2, h, tsh, heat_w)),
    ]


def loss_gradient_error(objective: Objective, params, seed: int, h: float = GRAD_STEP) -> float:
    """Directional derivatives along random unit directions versus central differences."""
    _, g = objective.value_and_grad(params)
    rng = np.random.default_rng([seed, 3])
    a, b = [], []
    for _ in range(GRAD_DIRECTIONS):
        d = rng.standard_normal(params.size)
        d /= np.linalg.norm(d)
        a.append(float(g @ d))
        b.append((objective(params + h * d) - objective(params - h * d)) / (2 * h))
    return rel_error(a, b, GRAD_ATOL)


def loss_suite(cases: int = 5, seed: int = 0, tol: float = 1e-5, zero: bool = False):
    out = []
    for name, arch, obj in _objectives(seed):
        worst = 0.0
        for k in range(cases):
            net = random_network(arch, seed + k, zero)
            worst = max(worst, loss_gradient_error(obj, net.params, seed + k))
        out.append(FdResult(f"grad.{name}", worst, tol))
    return out
