"""Single runs and sweeps built from a :class:`~liprpinn.config.RunConfig`."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import discrete_error, fit_rate
from .config import RunConfig
from .errors import ConfigError, LiprError, TrainingDiverged
from .loss import LossWeights, Objective, holder_schedule
from .network import Architecture, Network, xavier_init
from .optim import TrainPlan, train
from .pde import OperatorSpec, PdeProblem, manufacture
from .sampling import PRESETS, TrainingSet, make_training_set

log = logging.getLogger(__name__)

CSV_COLUMNS = ("m_r", "m_b1", "m_b2", "m_b3", "seed", "loss_final", "l2", "h1", "l2_l2",
               "l2_h1", "wall_ms", "status")
METRICS = ("l2", "h1", "l2_l2", "l2_h1")


# -- builders ----------------------------------------------------------------

def build_problem(cfg: RunConfig) -> PdeProblem:
    p = cfg.problem
    try:
        if p.kind == "poisson":
            op = OperatorSpec.poisson()
        elif p.kind == "heat":
            op = OperatorSpec.heat(p.nu)
        elif p.kind == "elliptic":
            op = OperatorSpec("elliptic", p.a, p.b, p.c)
        else:
            op = OperatorSpec("parabolic", ((p.nu,),), p.b, p.c, p.nu)
    except LiprError as exc:
        raise ConfigError("problem.a", str(exc)) from None
    if len(p.x_bounds) != 2 or not p.x_bounds[0] < p.x_bounds[1]:
        raise ConfigError("problem.x_bounds", "must be [lo, hi] with lo < hi")
    try:
        return manufacture(p.exact, op, p.x_bounds, p.T if op.kind == "parabolic" else None)
    except LiprError as exc:
        raise ConfigError("problem.exact", str(exc)) from None


def build_architecture(cfg: RunConfig) -> Architecture:
    n = cfg.network
    try:
        return Architecture(tuple(int(w) for w in n.widths), n.residual,
                            None if n.wrapper == "none" else n.wrapper)
    except (LiprError, TypeError, ValueError) as exc:
        raise ConfigError("network.widths", str(exc)) from None


def sample_counts(problem: PdeProblem, m: int):
    """``(m_r, m_b)`` for a ladder value: ``m_r`` itself for elliptic problems,
    ``m_b1`` for parabolic ones with m_b = (m_b1, m_b1, 2 m_b1), m_r = 2 m_b1^2."""
    if problem.op.kind == "parabolic":
        return 2 * m * m, (m, m, 2 * m)
    return m, (2,)


def build_training_set(cfg: RunConfig, problem: PdeProblem, m: int, seed: int) -> TrainingSet:
    m_r, m_b = sample_counts(problem, m)
    gen = cfg.train.generator or ("equidistant" if problem.dim == 1 else "iid")
    if gen == "equidistant" and problem.dim != 1:
        raise ConfigError("train.generator", "equidistant points need a 1-D problem")
    if problem.op.kind == "parabolic":
        return make_training_set(problem, m_r, m_b, gen, seed)
    return make_training_set(problem, m_r, None, gen, seed)


def build_weights(cfg: RunConfig, problem: PdeProblem, ts: TrainingSet) -> LossWeights:
    lc = cfg.loss
    ng = len(problem.boundary_groups)
    lam_b = lc.lam_b * ng if len(lc.lam_b) == 1 else lc.lam_b
    reg_b = lc.reg_b * ng if len(lc.reg_b) == 1 else lc.reg_b
    if len(lam_b) != ng:
        raise ConfigError("loss.lam_b", f"needs 1 or {ng} entries")
    if len(reg_b) != ng:
        raise ConfigError("loss.reg_b", f"needs 1 or {ng} entries")
    try:
        base = LossWeights(lc.lam_r, lam_b, lc.reg_r, reg_b)
    except (LiprError, ValueError) as exc:
        raise ConfigError("loss.lam_r", str(exc)) from None
    constants = None
    if lc.schedule == "theory":
        if lc.preset not in PRESETS:
            raise ConfigError("loss.preset", f"unknown preset; choose from {sorted(PRESETS)}")
        constants = PRESETS[lc.preset].with_alpha(lc.alpha)
        if constants.d != problem.dim:
            raise ConfigError("loss.preset", "preset dimension does not match the problem")
    return holder_schedule(lc.schedule, ts.m_r, ts.m_b, constants, base)


def build_plan(cfg: RunConfig, seed: int) -> TrainPlan:
    t = cfg.train
    return TrainPlan(t.adam_epochs, t.batch_size, t.lbfgs_iters, t.tol, seed, t.lr,
                     t.max_adam_steps)


# -- single run --------------------------------------------------------------

@dataclass
class RunResult:
    row: dict
    network: Network
    weights: LossWeights
    training_set: TrainingSet
    history: list = field(default_factory=list)
    lbfgs: dict | None = None
    error: str | None = None


def run_single(cfg: RunConfig, m: int | None = None, seed: int | None = None) -> RunResult:
    """Train one network and evaluate it.  ``m`` defaults to ``train.m_r``
    (elliptic) or ``train.m_b1`` (parabolic); ``seed`` to ``cfg.seed``.

    A diverged run is returned with status ``diverged`` and the last finite
    parameters rather than raised.
    """
    seed = cfg.seed if seed is None else seed
    problem = build_problem(cfg)
    arch = build_architecture(cfg)
    if arch.input_dim != problem.dim:
        raise ConfigError("network.widths", f"input width must be {problem.dim} for this problem")
    if m is None:
        m = cfg.train.m_b1 if problem.op.kind == "parabolic" else cfg.train.m_r
    ts = build_training_set(cfg, problem, m, seed)
    weights = build_weights(cfg, problem, ts)
    plan = build_plan(cfg, seed)
    objective = Objective(arch, problem, ts, weights)
    net0 = xavier_init(arch, seed)
    t0 = time.perf_counter()
    status, err, report = "ok", None, None
    try:
        params, history, report = train(objective, net0.params, plan)
    except TrainingDiverged as exc:
        status, err = "diverged", str(exc)
        params, history = exc.params, exc.history
    wall_ms = (time.perf_counter() - t0) * 1e3
    net = net0.with_params(params)
    row = {"m_r": ts.m_r, "seed": seed, "wall_ms": wall_ms, "status": status}
    for j in range(3):
        row[f"m_b{j + 1}"] = ts.m_b[j] if j < len(ts.m_b) else None
    for k in METRICS:
        row[k] = None
    row["loss_final"] = None
    if status == "ok":
        row["loss_final"] = objective(params)
        rep = discrete_error(net, problem, cfg.train.grid or None, cfg.train.relative)
        for k in METRICS:
            row[k] = getattr(rep, k)
    lb = None
    if report is not None:
        lb = {"iterations": report.iterations, "evaluations": report.evaluations,
              "converged": report.converged, "line_search_failed": report.line_search_failed,
              "message": report.message}
    return RunResult(row, net, weights, ts, history, lb, err)


def sweep_entry(cfg: RunConfig, m: int, seed: int) -> dict:
    """Row of one sweep entry; failures become rows with status ``failed``."""
    try:
        return run_single(cfg, m, seed).row
    except ConfigError:
        raise
    except Exception as exc:  # a failed entry must not stop the sweep
        log.warning("sweep entry m=%s seed=%s failed: %s", m, seed, exc)
        return failed_row(cfg, m, seed)


def failed_row(cfg: RunConfig, m: int, seed: int) -> dict:
    problem = build_problem(cfg)
    m_r, m_b = sample_counts(problem, m)
    row = {k: None for k in CSV_COLUMNS}
    row.update(m_r=m_r, seed=seed, status="failed")
    for j, v in enumerate(m_b[:3]):
        row[f"m_b{j + 1}"] = v
    return row


# -- sweeps ------------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list
    means: list          # per ladder value: {"m_r": ..., metric: mean over ok rows}
    slopes: dict         # metric -> slope of the per-m means against m_r


def sweep_entries(cfg: RunConfig):
    return [(m, cfg.seed + k) for m in cfg.sweep.ladder for k in range(cfg.sweep.repeats)]


def run_sweep(cfg: RunConfig, runner=sweep_entry) -> SweepResult:
    """One run per (ladder value, repeat) with seeds ``seed, seed+1, ...``.

    Entries run in a process pool when ``sweep.workers > 1``; rows always come
    back in ladder order.  ``runner(cfg, m, seed) -> row`` can be replaced.
    """
    entries = sweep_entries(cfg)
    if cfg.sweep.workers > 1 and len(entries) > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            futures = [pool.submit(runner, cfg, m, s) for m, s in entries]
            rows = [f.result() for f in futures]
    else:
        rows = [runner(cfg, m, s) for m, s in entries]
    means, slopes = summarize(rows)
    return SweepResult(rows, means, slopes)


def summarize(rows):
    """Per-m arithmetic means of the metrics over ok rows, and the fitted slopes."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r["m_r"], []).append(r)
    means = []
    for m_r, rs in groups.items():
        ok = [r for r in rs if r["status"] == "ok"]
        entry = {"m_r": m_r, "runs": len(rs), "ok": len(ok)}
        for k in METRICS:
            vals = [r[k] for r in ok if r[k] is not None]
            entry[k] = float(np.mean(vals)) if vals else None
        means.append(entry)
    slopes = {}
    for k in METRICS:
        pts = [(e["m_r"], e[k]) for e in means if e[k] is not None and e[k] > 0]
        if len({m for m, _ in pts}) >= 2:
            fit = fit_rate([m for m, _ in pts], [v for _, v in pts])
            slopes[k] = fit.slope
    return means, slopes


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in CSV_COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list:
    out = []
    ints = {"m_r", "m_b1", "m_b2", "m_b3", "seed"}
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k in CSV_COLUMNS:
            v = rec[k]
            if k == "status":
                row[k] = v
            elif v == "":
                row[k] = None
            else:
                row[k] = int(v) if k in ints else float(v)
        out.append(row)
    return out
