"""Training points, covering radii and Voronoi masses for uniform laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError
from .pde import Box, PdeProblem, PointSet

# probe intervals per free axis used by covering_radius when none is given
DEFAULT_RESOLUTION = {1: 10_000, 2: 500}


@dataclass(frozen=True)
class DistributionConstants:
    """Lower/upper mass constants of the sampling laws (interior r, boundary b)."""

    c_r: float
    C_r: float
    c_b: float | None = None
    C_b: float | None = None
    d: int = 1
    alpha: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("Hölder exponent must lie in (0, 1]")
        if not (0 < self.c_r <= self.C_r):
            raise ValueError("need 0 < c_r <= C_r")
        if self.c_b is not None and not (0 < self.c_b <= self.C_b):
            raise ValueError("need 0 < c_b <= C_b")

    @property
    def kappa_r(self) -> float:
        return self.C_r / self.c_r

    @property
    def kappa_b(self) -> float | None:
        return None if self.c_b is None else self.C_b / self.c_b

    def with_alpha(self, alpha: float) -> "DistributionConstants":
        return DistributionConstants(self.c_r, self.C_r, self.c_b, self.C_b, self.d, alpha)


# Uniform laws.  Interior: cells of side eps carry mass eps^d/|U|, and a ball of
# radius eps carries at most |B_eps|/|U|.  Boundary: same with arc length.
PRESETS = {
    # U = (-1, 1), Gamma = {-1, 1} with mass 1/2 each
    "interval": DistributionConstants(c_r=0.5, C_r=1.0, c_b=0.5, C_b=0.5, d=1),
    # U = (0, 1)
    "unit_interval": DistributionConstants(c_r=1.0, C_r=2.0, c_b=0.5, C_b=0.5, d=1),
    # U = (-1, 1)^2, Gamma = its perimeter (length 8)
    "square": DistributionConstants(c_r=0.25, C_r=math.pi / 4, c_b=0.125, C_b=0.25, d=2),
    # U = (-1, 1) x (0, 1), Gamma = two sides plus the initial slab (length 4)
    "heat_slab": DistributionConstants(c_r=0.5, C_r=math.pi / 2, c_b=0.25, C_b=0.5, d=2),
}


@dataclass(frozen=True, eq=False)
class TrainingSet:
    residual_points: np.ndarray
    boundary_points: tuple
    seed: int | None = None
    generator: str = "equidistant"

    @property
    def m_r(self) -> int:
        return len(self.residual_points)

    @property
    def m_b(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.boundary_points)

    @property
    def dim(self) -> int:
        return self.residual_points.shape[1]

    def to_dict(self) -> dict:
        return {"generator": self.generator, "seed": self.seed, "m_r": self.m_r,
                "m_b": list(self.m_b)}


def equidistant(interval, m: int) -> np.ndarray:
    """``m`` equally spaced points on a closed interval (midpoint when ``m == 1``)."""
    if m < 1:
        raise ValueError("need at least one point")
    lo, hi = map(float, interval)
    if m == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, m)


def iid_uniform(region, m: int, seed) -> np.ndarray:
    """``m`` iid uniform points on a box (fixed axes held exactly) or a finite set."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    if isinstance(region, PointSet):
        P = region.array()
        return P[rng.integers(0, len(P), size=m)]
    X = np.empty((m, region.dim))
    for i, (lo, hi) in enumerate(region.bounds):
        X[:, i] = rng.uniform(lo, hi, size=m) if hi > lo else lo
    return X


def make_training_set(problem: PdeProblem, m_r: int, m_b=None, generator: str = "equidistant",
                      seed: int | None = 0) -> TrainingSet:
    """Residual and boundary points for ``problem``.

    Finite boundaries (the endpoints of a 1-D interval) are always returned in
    full; ``m_b`` gives the counts of the remaining groups.
    """
    groups = problem.boundary_groups
    if generator == "equidistant":
        if problem.dim != 1:
            raise DimensionError("equidistant points are only defined for 1-D problems")
        R = equidistant(problem.x_bounds, m_r)[:, None]
    elif generator == "iid":
        R = iid_uniform(problem.domain, m_r, seed)
    else:
        raise ValueError(f"unknown generator {generator!r}")
    if m_b is None:
        m_b = [None] * len(groups)
    if len(m_b) != len(groups):
        raise DimensionError(f"need {len(groups)} boundary counts, got {len(m_b)}")
    seq = np.random.SeedSequence(seed if seed is not None else 0)
    child = seq.spawn(len(groups))
    B = []
    for grp, m, ss in zip(groups, m_b, child):
        if isinstance(grp.region, PointSet):
            B.append(grp.region.array())
        else:
            if m is None:
                raise DimensionError(f"boundary group {grp.name!r} needs a point count")
            B.append(iid_uniform(grp.region, int(m), ss))
    return TrainingSet(R, tuple(B), seed, generator)


def probe_grid(region, resolution: int | None = None) -> np.ndarray:
    """Tensor grid over the free axes of ``region`` (or the finite set itself)."""
    if isinstance(region, PointSet):
        return region.array()
    free = region.free_axes
    if resolution is None:
        resolution = DEFAULT_RESOLUTION.get(len(free), 100)
    axes = []
    for lo, hi in region.bounds:
        axes.append(np.linspace(lo, hi, resolution + 1) if hi > lo else np.array([lo]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _as_points(points, dim):
    P = np.asarray(points, dtype=float)
    return P.reshape(-1, dim) if P.ndim < 2 else P


def nearest_distance(points, probes) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if points.shape[1] == 1:
        s = np.sort(points[:, 0])
        q = probes[:, 0]
        i = np.clip(np.searchsorted(s, q), 1, len(s) - 1) if len(s) > 1 else np.zeros(len(q), int)
        d = np.abs(q - s[i])
        if len(s) > 1:
            d = np.minimum(d, np.abs(q - s[i - 1]))
        return d
    return cKDTree(points).query(probes)[0]


def covering_radius(points, region, resolution: int | None = None) -> float:
    """Largest distance from a probe-grid point of ``region`` to its nearest sample.

    The grid has ``resolution`` intervals along each free axis (default 10^4 in
    1-D, 500 in 2-D); the result is the fill distance restricted to that grid.
    """
    points = _as_points(points, region.dim)
    if points.size == 0:
        raise ValueError("covering radius of an empty point set")
    return float(nearest_distance(points, probe_grid(region, resolution)).max())


def voronoi_masses(points, region, n_samples: int = 200_000, seed: int = 0) -> np.ndarray:
    """Uniform-measure mass of each sample's Voronoi cell inside ``region``.

    Exact on intervals (cells split at midpoints); Monte Carlo with ``n_samples``
    seeded draws on 2-D boxes; counted exactly on finite sets.
    """
    points = _as_points(points, region.dim)
    if points.size == 0:
        raise ValueError("Voronoi masses of an empty point set")
    n = len(points)
    if isinstance(region, PointSet):
        P = region.array()
        owner = cKDTree(points).query(P)[1]
        return np.bincount(owner, minlength=n) / len(P)
    free = region.free_axes
    if len(free) == 1:
        ax = free[0]
        lo, hi = region.bounds[ax]
        x = points[:, ax]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        mids = 0.5 * (xs[1:] + xs[:-1])
        left = np.clip(np.concatenate([[lo], mids]), lo, hi)
        right = np.clip(np.concatenate([mids, [hi]]), lo, hi)
        out = np.empty(n)
        out[order] = (right - left) / (hi - lo)
        return out
    S = iid_uniform(region, n_samples, seed)
    owner = cKDTree(points).query(S)[1]
    return np.bincount(owner, minlength=n) / n_samples
