"""Error metrics, rate fitting, Hölder estimates and the bound-verification harnesses.

All integrals are composite-trapezoid rules on equidistant tensor grids.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DimensionError
from .jets import forward_jets
from .loss import LossWeights
from .pde import Box, PdeProblem, PointSet, residual, residual_gradient
from .sampling import (DistributionConstants, TrainingSet, covering_radius, iid_uniform,
                       nearest_distance, probe_grid)

DEFAULT_GRID = {1: (10_000,), 2: (400, 200)}


def _jets(model, X, order):
    """Jets of a network, or of anything with a ``.jet(X)`` method such as an Expression."""
    if hasattr(model, "jet"):
        return model.jet(X)
    return forward_jets(model, X, order)


def _tensor_grid(box: Box, counts):
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box.bounds, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def _integrate(values, axes) -> float:
    """Trapezoid integral of values laid out on the ``ij`` tensor grid of ``axes``."""
    v = np.asarray(values).reshape([len(a) for a in axes])
    for a in reversed(axes):
        v = trapezoid(v, a, axis=-1)
    return float(v)


# -- error norms -------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    l2: float
    h1: float
    grid: tuple
    l2_l2: float | None = None
    l2_h1: float | None = None
    relative: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


def _norms(value, grad, axes, n_space):
    """Squared (L2, full-gradient, spatial-gradient) integrals."""
    return (_integrate(value * value, axes),
            _integrate(np.sum(grad * grad, axis=1), axes),
            _integrate(np.sum(grad[:, :n_space] ** 2, axis=1), axes))


def discrete_error(model, problem: PdeProblem, grid=None, relative: bool = False) -> ErrorReport:
    """Trapezoid L2 and H1 errors of ``model`` against the exact solution.

    ``grid`` gives the number of equidistant points per coordinate (default
    10^4 in 1-D, 400 x 200 in space-time).  For parabolic problems ``l2`` and
    ``h1`` are space-time norms (``h1`` with the full gradient), ``l2_l2`` is
    the L2(0,T;L2) error and ``l2_h1`` the L2(0,T;H1) error, which uses the
    spatial gradient only.  With ``relative`` each value is divided by the
    matching norm of the exact solution.
    """
    dim = problem.dim
    grid = tuple(int(n) for n in (grid or DEFAULT_GRID[dim]))
    if len(grid) != dim or min(grid) < 2:
        raise DimensionError(f"grid needs {dim} axis counts, each >= 2")
    axes, X = _tensor_grid(problem.domain, grid)
    h = _jets(model, X, 1)
    if h.dim != dim:
        raise DimensionError("model and problem dimensions disagree")
    u = problem.exact.jet(X)
    ns = problem.op.space_dim
    e2, g2, s2 = _norms(h.value - u.value, h.d1 - u.d1, axes, ns)
    l2, h1, l2_h1 = math.sqrt(e2), math.sqrt(e2 + g2), math.sqrt(e2 + s2)
    if relative:
        u2, ug2, us2 = _norms(u.value, u.d1, axes, ns)
        l2, h1, l2_h1 = l2 / math.sqrt(u2), h1 / math.sqrt(u2 + ug2), l2_h1 / math.sqrt(u2 + us2)
    if problem.op.kind == "parabolic":
        return ErrorReport(l2, h1, grid, l2, l2_h1, relative)
    return ErrorReport(l2, h1, grid, None, None, relative)


# -- rates -------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float      # root-mean-square residual in log space


def fit_rate(m, e) -> RateFit:
    """Least-squares line through ``(log m, log e)``."""
    m = np.asarray(m, dtype=float)
    e = np.asarray(e, dtype=float)
    if m.shape != e.shape or m.size < 2:
        raise ValueError("need at least two (m, error) pairs")
    if np.any(m <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("sample counts and errors must be positive and finite")
    x, y = np.log(m), np.log(e)
    if np.ptp(x) == 0:
        raise ValueError("need at least two distinct sample counts")
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    res = y - (intercept + slope * x)
    return RateFit(slope, intercept, float(np.sqrt(np.mean(res * res))))


# -- Hölder constants --------------------------------------------------------

def _pairwise_holder(v, P, alpha, chunk=2048):
    best = 0.0
    n = len(v)
    for i in range(0, n, chunk):
        j = slice(i, min(i + chunk, n))
        dist = np.sqrt(((P[j, None, :] - P[None, :, :]) ** 2).sum(axis=2))
        dv = np.abs(v[j, None] - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, dv / dist**alpha, 0.0)
        best = max(best, float(q.max()))
    return best


def estimate_holder(values, points, alpha: float = 1.0, gradients=None) -> float:
    """Grid estimate of the Hölder seminorm ``[u]_alpha``.

    With ``alpha == 1`` and ``gradients`` given, returns the largest gradient
    norm on the grid.  With ``alpha == 1`` on a 1-D grid, returns the largest
    quotient between neighbouring points.  Otherwise returns the largest
    quotient over all pairs of grid points (quadratic cost).  Each estimate is
    a lower bound of the true constant up to grid resolution.
    """
    v = np.asarray(values, dtype=float).ravel()
    P = np.asarray(points, dtype=float)
    P = P.reshape(len(v), -1)
    if len(v) == 0:
        raise ValueError("empty grid")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if len(v) < 2:
        return 0.0
    if alpha == 1 and gradients is not None:
        G = np.asarray(gradients, dtype=float).reshape(len(v), -1)
        return float(np.sqrt((G * G).sum(axis=1)).max())
    if alpha == 1 and P.shape[1] == 1:
        order = np.argsort(P[:, 0], kind="stable")
        x, y = P[order, 0], v[order]
        dx = np.diff(x)
        keep = dx > 0
        return float((np.abs(np.diff(y))[keep] / dx[keep]).max(initial=0.0))
    return _pairwise_holder(v, P, alpha)


# -- covering lemma ----------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    C_m: float
    lam_r_hat: float
    lam_b_hat: float
    eps_r: float
    eps_b: float
    holder_Lh: float
    holder_Bh: float
    holder_f: float
    holder_g: float
    loss_empirical: float
    lhs: float
    rhs: float
    C_prime: float
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)

    def passed(self, tol: float = 1e-9) -> bool:
        return self.slack >= -tol


@dataclass(frozen=True)
class MassBounds:
    """Upper mass constants ``C_r, C_b`` of the covering inequality.

    Kept apart from :class:`DistributionConstants` so the harness can be run
    with deliberately wrong values (which may break ``c <= C``).
    """

    C_r: float
    C_b: float
    d: int

    def __post_init__(self):
        if not (self.C_r > 0 and self.C_b > 0):
            raise ValueError("mass constants must be positive")

    @classmethod
    def of(cls, constants: DistributionConstants) -> "MassBounds":
        return cls(constants.C_r, constants.C_b, constants.d)


def _holder_on(values, points, alpha, gradients):
    if alpha == 1:
        return estimate_holder(values, points, 1.0, gradients)
    return estimate_holder(values, points, alpha)


def check_lemma_bound(model, problem: PdeProblem, training_set: TrainingSet,
                      weights: LossWeights, constants: DistributionConstants | MassBounds,
                      alpha: float = 1.0, resolution: int | None = None) -> BoundReport:
    """Evaluate both sides of the deterministic covering inequality.

    The expected loss (lhs) is a trapezoid mean over the probe grid with the
    given ``resolution`` per free axis; the covering radii are measured on the
    same grid, so the hypothesis of the inequality holds by construction.  The
    boundary is treated as a single set carrying the uniform law, with the
    weight ``max(weights.lam_b)``.  Hölder constants are grid estimates: with
    ``alpha == 1`` they are maxima of exact gradient norms.
    """
    d = problem.dim
    if constants.d != d:
        raise DimensionError("distribution constants are for a different dimension")
    if resolution is None:
        resolution = 10_000 if d == 1 else 200
    lam_r = weights.lam_r
    lam_b = max(weights.lam_b)
    op = problem.op

    # interior
    dom = problem.domain
    axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in dom.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    G = np.stack([m.ravel() for m in mesh], axis=1)
    hj = _jets(model, G, 3)
    uj = problem.exact.jet(G)
    r = residual(op, hj) - residual(op, uj)
    lhs_r = _integrate(r * r, axes) / dom.measure
    eps_r = covering_radius(training_set.residual_points, dom, resolution)
    h_Lh = _holder_on(residual(op, hj), G, alpha, residual_gradient(op, hj))
    h_f = _holder_on(residual(op, uj), G, alpha, residual_gradient(op, uj))

    # boundary, pooled over the groups
    B_all = np.concatenate([np.asarray(P).reshape(-1, d) for P in training_set.boundary_points])
    num, den = 0.0, 0.0
    finite_err = []
    BhP, BhV, BhG, gV, gG = [], [], [], [], []
    eps_b = 0.0
    for grp in problem.boundary_groups:
        reg = grp.region
        P = probe_grid(reg, resolution)
        hb = _jets(model, P, 1)
        ub = problem.exact.jet(P)
        e2 = (hb.value - ub.value) ** 2
        if isinstance(reg, PointSet):
            finite_err.append(e2)
        else:
            free = reg.free_axes
            ax = [np.linspace(*reg.bounds[k], resolution + 1) for k in free]
            num += _integrate(e2, ax)
            den += reg.measure
        BhP.append(P)
        BhV.append(hb.value)
        BhG.append(hb.d1)
        gV.append(ub.value)
        gG.append(ub.d1)
        eps_b = max(eps_b, float(nearest_distance(B_all, P).max()))
    if finite_err:
        if den:
            raise DimensionError("mixed finite and continuous boundaries are not supported")
        lhs_b = float(np.mean(np.concatenate(finite_err)))
    else:
        lhs_b = num / den
    lhs = lam_r * lhs_r + lam_b * lhs_b

    if d == 1:
        # every boundary point is a training point: eps_b = 0 and the Hölder
        # terms carry a zero factor
        h_Bh = h_g = 0.0
    else:
        P = np.concatenate(BhP)
        h_Bh = _holder_on(np.concatenate(BhV), P, alpha, np.concatenate(BhG))
        h_g = _holder_on(np.concatenate(gV), P, alpha, np.concatenate(gG))

    # empirical PINN loss with the same pooled weights
    R = training_set.residual_points
    rr = residual(op, _jets(model, R, 2)) - problem.f(R)
    eb = _jets(model, B_all, 0).value - problem.exact(B_all)
    m_r, m_b = len(R), len(B_all)
    loss_m = lam_r * float(np.mean(rr * rr)) + lam_b * float(np.mean(eb * eb))

    C_m = 3.0 * max(constants.C_r * m_r * eps_r**d, constants.C_b * m_b * eps_b ** (d - 1))
    a2 = 2 * alpha
    reg_r = 3.0 * lam_r * eps_r**a2 / C_m
    reg_b = 3.0 * lam_b * eps_b**a2 / C_m
    C_prime = 3.0 * lam_r * eps_r**a2 * h_f**2 + 3.0 * lam_b * eps_b**a2 * h_g**2
    rhs = C_m * (loss_m + reg_r * h_Lh**2 + reg_b * h_Bh**2) + C_prime
    return BoundReport(C_m, reg_r, reg_b, eps_r, eps_b, h_Lh, h_Bh, h_f, h_g, loss_m,
                       lhs, rhs, C_prime, rhs - lhs)


# -- sampling lemma ----------------------------------------------------------

@dataclass(frozen=True)
class SamplingReport:
    n: int
    trials: int
    threshold: float
    bound: float
    empirical: float | None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.empirical is None:
            del d["empirical"]
        return d

    def passed(self, tol: float = 0.01) -> bool:
        return self.empirical is None or self.empirical >= self.bound - tol


def sampling_bound(n: int) -> float:
    """``1 - sqrt(n) (1 - 1/sqrt(n))^n``."""
    s = math.sqrt(n)
    return 1.0 - s * (1.0 - 1.0 / s) ** n


def sampling_probability_experiment(n: int, trials: int, region: Box | None = None,
                                    c: float = 1.0, seed: int = 0,
                                    resolution: int | None = None) -> SamplingReport:
    """Fraction of ``trials`` iid ``n``-point samples whose covering radius is at
    most ``sqrt(d) c^(-1/s) n^(-1/(2s))``, where ``s`` is the number of free axes."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    region = region or Box(((0.0, 1.0),))
    s = len(region.free_axes)
    threshold = math.sqrt(region.dim) * c ** (-1.0 / s) * n ** (-1.0 / (2 * s))
    bound = sampling_bound(n)
    if trials == 0:
        return SamplingReport(n, 0, threshold, bound, None)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    probes = probe_grid(region, resolution)
    hits = 0
    for ss in seeds:
        P = iid_uniform(region, n, ss)
        hits += int(nearest_distance(P, probes).max() <= threshold)
    return SamplingReport(n, trials, threshold, bound, hits / trials)
