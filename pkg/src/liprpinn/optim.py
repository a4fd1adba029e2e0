"""Adam, L-BFGS with a strong-Wolfe line search, and the Adam -> L-BFGS pipeline."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteError, TrainingDiverged

log = logging.getLogger(__name__)


# -- Adam --------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, **hyper) -> "AdamState":
        return cls(0, np.zeros(n), np.zeros(n), **hyper)


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.m.shape or np.shape(params) != g.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient passed to Adam")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=t, m=m, v=v), new


# -- L-BFGS ------------------------------------------------------------------

@dataclass(frozen=True)
class LbfgsConfig:
    history: int = 10
    max_iter: int = 2000
    tol: float = 1e-9            # stop when |grad|_inf <= tol
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25             # line-search trials per iteration
    curvature_eps: float = 1e-12


@dataclass
class LbfgsReport:
    iterations: int = 0
    evaluations: int = 0
    converged: bool = False
    line_search_failed: bool = False
    message: str = ""
    losses: list = field(default_factory=list)
    history: list = field(default_factory=list)   # stored (s, y) pairs at exit


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimizer of the cubic interpolating two points with slopes, clamped to [lo, hi]."""
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    disc = d1 * d1 - g1 * g2
    if disc >= 0:
        d2 = math.sqrt(disc)
        if x1 > x2:
            d2 = -d2
        denom = g2 - g1 + 2.0 * d2
        if denom != 0:
            x = x2 - (x2 - x1) * (g2 + d2 - d1) / denom
            if math.isfinite(x):
                return min(max(x, lo), hi)
    return 0.5 * (lo + hi)


def strong_wolfe(fg, x, f0, g0, d, step, c1=1e-4, c2=0.9, max_ls=25):
    """Bracketing/zoom line search along ``d`` with cubic interpolation.

    Returns ``(alpha, f, g, n_evals, ok)``; when no step satisfying both Wolfe
    conditions is found, the best sufficient-decrease point seen is returned
    with ``ok=False`` (alpha 0 if there was none).
    """
    dg0 = float(g0 @ d)
    evals = 0
    best = (0.0, f0, g0)

    def phi(a):
        nonlocal evals, best
        evals += 1
        f, g = fg(x + a * d)
        if math.isfinite(f) and f <= f0 + c1 * a * dg0 and f < best[1]:
            best = (a, f, g)
        return f, g, float(g @ d) if math.isfinite(f) else math.nan

    a_prev, f_prev, dg_prev = 0.0, f0, dg0
    a = step
    bracket = None
    while evals < max_ls:
        f, g, dg = phi(a)
        if not math.isfinite(f):
            bracket = (a_prev, f_prev, dg_prev, a, math.inf, math.nan)
            break
        if f > f0 + c1 * a * dg0 or (evals > 1 and f >= f_prev):
            bracket = (a_prev, f_prev, dg_prev, a, f, dg)
            break
        if abs(dg) <= -c2 * dg0:
            return a, f, g, evals, True
        if dg >= 0:
            bracket = (a, f, dg, a_prev, f_prev, dg_prev)
            break
        a_next = min(2.0 * a + (a - a_prev), 10.0 * a) if a_prev else 2.0 * a
        a_prev, f_prev, dg_prev = a, f, dg
        a = a_next
    if bracket is None:
        a_b, f_b, g_b = best
        return a_b, f_b, g_b, evals, False

    lo_a, lo_f, lo_dg, hi_a, hi_f, hi_dg = bracket
    while evals < max_ls:
        lo, hi = sorted((lo_a, hi_a))
        width = hi - lo
        if width <= 1e-14 * max(1.0, hi):
            break
        if math.isfinite(hi_f) and math.isfinite(hi_dg):
            a = _cubic_min(lo_a, lo_f, lo_dg, hi_a, hi_f, hi_dg, lo, hi)
        else:
            a = 0.5 * (lo + hi)
        # keep trial points away from the bracket ends
        margin = 0.1 * width
        a = min(max(a, lo + margin), hi - margin)
        f, g, dg = phi(a)
        if not math.isfinite(f) or f > f0 + c1 * a * dg0 or f >= lo_f:
            hi_a, hi_f, hi_dg = a, f, dg
        else:
            if abs(dg) <= -c2 * dg0:
                return a, f, g, evals, True
            if dg * (hi_a - lo_a) >= 0:
                hi_a, hi_f, hi_dg = lo_a, lo_f, lo_dg
            lo_a, lo_f, lo_dg = a, f, dg
    a_b, f_b, g_b = best
    return a_b, f_b, g_b, evals, False


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(fg, params, config: LbfgsConfig = LbfgsConfig(), callback=None):
    """Minimize ``fg(params) -> (value, gradient)``; returns ``(params, LbfgsReport)``.

    Accepted steps always satisfy sufficient decrease, so the recorded loss
    sequence is strictly decreasing.  A failed line search first retries along
    the steepest-descent direction with a cleared history, then stops and
    returns the best point with ``line_search_failed`` set.
    """
    x = np.array(params, dtype=float, copy=True)
    f, g = fg(x)
    rep = LbfgsReport(evaluations=1, losses=[float(f)])
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        rep.message = "non-finite loss at the starting point"
        rep.line_search_failed = True
        return x, rep
    pairs: deque = deque(maxlen=config.history)
    retried = False
    while True:
        if np.max(np.abs(g), initial=0.0) <= config.tol:
            rep.converged = True
            rep.message = "gradient tolerance reached"
            break
        if rep.iterations >= config.max_iter:
            rep.message = "iteration limit"
            break
        if pairs:
            d = _two_loop(g, list(pairs))
            step = 1.0
        else:
            d = -g
            step = min(1.0, 1.0 / np.max(np.abs(g)))
        if float(g @ d) >= 0:
            pairs.clear()
            d = -g
            step = min(1.0, 1.0 / np.max(np.abs(g)))
        a, f_new, g_new, n, ok = strong_wolfe(fg, x, f, g, d, step, config.c1, config.c2,
                                              config.max_ls)
        rep.evaluations += n
        if a == 0.0 or not f_new < f:
            if pairs and not retried:
                pairs.clear()
                retried = True
                continue
            rep.line_search_failed = True
            rep.message = "line search failed"
            break
        retried = False
        s = a * d
        y = g_new - g
        sy = float(s @ y)
        if sy > config.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        f, g = f_new, g_new
        rep.iterations += 1
        rep.losses.append(float(f))
        if callback is not None:
            callback(rep.iterations, f)
        if not ok:
            log.debug("accepted a step without the curvature condition at iter %d", rep.iterations)
    rep.history = [(s.copy(), y.copy()) for s, y, _ in pairs]
    return x, rep


# -- training pipeline -------------------------------------------------------

@dataclass(frozen=True)
class TrainPlan:
    adam_epochs: int = 0
    batch_size: int = 0          # 0 = full batch
    lbfgs_iters: int = 0
    tol: float = 1e-9
    seed: int = 0
    lr: float = 1e-3
    max_adam_steps: int = 0      # cap on mini-batch steps over all epochs; 0 = none

    def __post_init__(self):
        if min(self.adam_epochs, self.batch_size, self.lbfgs_iters, self.max_adam_steps) < 0:
            raise ValueError("training plan counts must be nonnegative")


def _batches(n_r, n_groups, batch_size, rng):
    """Index tuples for one epoch: residual points in shuffled chunks of
    ``batch_size`` (last short chunk kept); each boundary group is shuffled and
    split into the same number of chunks."""
    perm_r = rng.permutation(n_r)
    if batch_size <= 0 or batch_size >= n_r:
        chunks_r = [perm_r]
    else:
        chunks_r = [perm_r[i:i + batch_size] for i in range(0, n_r, batch_size)]
    nb = len(chunks_r)
    group_chunks = [np.array_split(rng.permutation(n), nb) for n in n_groups]
    for k in range(nb):
        yield (chunks_r[k],) + tuple(gc[k] for gc in group_chunks)


def train(objective, params, plan: TrainPlan, lbfgs_config: LbfgsConfig | None = None):
    """Adam for ``plan.adam_epochs`` epochs, then full-batch L-BFGS.

    With ``plan.max_adam_steps`` set, the Adam phase ends after that many
    mini-batch steps even inside an epoch.

    ``objective`` is a :class:`~liprpinn.loss.Objective`.  Returns
    ``(params, history, report)`` where history rows are ``(phase, step, loss)``;
    Adam rows record the mean mini-batch loss of each epoch.
    """
    x = np.array(params, dtype=float, copy=True)
    history = []
    n_r = len(objective.R)
    n_groups = [len(P) for P in objective.Bpts]
    full = plan.batch_size <= 0 or plan.batch_size >= n_r
    rng = np.random.default_rng(plan.seed)
    state = AdamState.fresh(x.size, lr=plan.lr)
    cap = plan.max_adam_steps or math.inf
    for epoch in range(plan.adam_epochs):
        if state.step >= cap:
            break
        if full:
            batches = [None]
        else:
            batches = list(_batches(n_r, n_groups, plan.batch_size, rng))
        acc, n = 0.0, 0
        for b in batches:
            if state.step >= cap:
                break
            f, g = objective.value_and_grad(x, b)
            if not math.isfinite(f) or not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite loss in Adam epoch {epoch}", history, x)
            acc += f
            n += 1
            state, x = adam_step(state, x, g)
        history.append(("adam", epoch + 1, acc / n))
    report = None
    if plan.lbfgs_iters > 0:
        cfg = replace(lbfgs_config or LbfgsConfig(), max_iter=plan.lbfgs_iters, tol=plan.tol)
        x, report = lbfgs_minimize(objective.value_and_grad, x, cfg)
        if not math.isfinite(report.losses[-1]):
            raise TrainingDiverged("non-finite loss in L-BFGS", history, x)
        history.extend(("lbfgs", i, v) for i, v in enumerate(report.losses))
    return x, history, report
