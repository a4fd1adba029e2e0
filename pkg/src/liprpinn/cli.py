"""Command line: ``liprpinn {train,sweep,verify,gradcheck} [--config F] [--seed S] [--out D] [--workers N]``.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration, 3 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .analysis import MassBounds, check_lemma_bound, sampling_probability_experiment
from .config import RunConfig, load_config
from .errors import ConfigError
from .experiments import (build_architecture, build_problem, build_training_set, build_weights,
                          rows_to_csv, run_single, run_sweep)
from .gradcheck import jet_suite, loss_suite
from .network import save_checkpoint, xavier_init
from .pde import Box
from .sampling import PRESETS

log = logging.getLogger("liprpinn")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(cfg: RunConfig) -> int:
    """Train one network and write metrics, checkpoint and history."""
    out = _outdir(cfg)
    res = run_single(cfg)
    row = res.row
    metrics = {k: row[k] for k in ("m_r", "m_b1", "m_b2", "m_b3", "seed", "loss_final", "l2",
                                   "h1", "l2_l2", "l2_h1", "status")}
    _write_json(out / "metrics.json", metrics)
    save_checkpoint(res.network, out / "checkpoint.json")
    with open(out / "history.csv", "w", encoding="utf-8") as fh:
        fh.write("phase,step,loss\n")
        for phase, step, loss in res.history:
            fh.write(f"{phase},{step},{float(loss)!r}\n")
    manifest = {
        "command": "train",
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "architecture": res.network.arch.to_dict(),
        "training_set": res.training_set.to_dict(),
        "weights": res.weights.to_dict(),
        "lbfgs": res.lbfgs,
        "metrics": metrics,
        "status": row["status"],
        "error": res.error,
        "wall_ms": row["wall_ms"],
        "files": ["metrics.json", "checkpoint.json", "history.csv"],
    }
    _write_json(out / "manifest.json", manifest)
    print(f"train {row['status']}: m_r={row['m_r']} loss={row['loss_final']} "
          f"l2={row['l2']} h1={row['h1']}")
    if row["status"] != "ok":
        print(f"training diverged: {res.error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    """Train over the sample-count ladder and fit convergence slopes."""
    out = _outdir(cfg)
    t0 = time.perf_counter()
    res = run_sweep(cfg)
    (out / "sweep.csv").write_text(rows_to_csv(res.rows), encoding="utf-8")
    _write_json(out / "manifest.json", {
        "command": "sweep",
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "ladder": list(cfg.sweep.ladder),
        "repeats": cfg.sweep.repeats,
        "means": res.means,
        "slopes": res.slopes,
        "failed": sum(r["status"] != "ok" for r in res.rows),
        "wall_ms": (time.perf_counter() - t0) * 1e3,
        "files": ["sweep.csv"],
    })
    for e in res.means:
        print("m_r={m_r} ok={ok}/{runs} l2={l2} h1={h1}".format(**e))
    for k, s in res.slopes.items():
        print(f"slope {k}: {s:.4f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    """Check the covering inequality and the sampling probability."""
    out = _outdir(cfg)
    v = cfg.verify
    if v.preset not in PRESETS:
        raise ConfigError("verify.preset", f"unknown preset; choose from {sorted(PRESETS)}")
    problem = build_problem(cfg)
    arch = build_architecture(cfg)
    if arch.input_dim != problem.dim:
        raise ConfigError("network.widths", f"input width must be {problem.dim} for this problem")
    preset = PRESETS[v.preset]
    if preset.d != problem.dim:
        raise ConfigError("verify.preset", "preset dimension does not match the problem")
    bounds = MassBounds(v.C_r if v.C_r is not None else preset.C_r,
                        v.C_b if v.C_b is not None else preset.C_b, preset.d)
    ts = build_training_set(cfg, problem, v.m_r, cfg.seed)
    weights = build_weights(cfg, problem, ts).unregularized()
    reports, failures = [], []
    for k in range(v.networks):
        net = xavier_init(arch, cfg.seed + k)
        rep = check_lemma_bound(net, problem, ts, weights, bounds, v.alpha, v.resolution)
        entry = dict(rep.to_dict(), network_seed=cfg.seed + k, passed=rep.passed(v.slack_tol))
        reports.append(entry)
        if not entry["passed"]:
            failures.append(entry)
    samp = sampling_probability_experiment(v.sampling_n, v.trials, Box(((0.0, 1.0),)),
                                           c=PRESETS["unit_interval"].c_r, seed=cfg.seed)
    samp_ok = samp.passed(v.prob_tol)
    passed = not failures and samp_ok
    _write_json(out / "verify_report.json", {
        "command": "verify", "config": cfg.to_dict(), "seed": cfg.seed,
        "mass_bounds": {"C_r": bounds.C_r, "C_b": bounds.C_b, "d": bounds.d},
        "bound": reports, "sampling": samp.to_dict(), "sampling_passed": samp_ok,
        "passed": passed,
    })
    worst = min(reports, key=lambda r: r["slack"]) if reports else None
    if worst is not None:
        print(f"lemma bound: {len(reports) - len(failures)}/{len(reports)} passed, "
              f"min slack {worst['slack']:.6g}")
    emp = "absent" if samp.empirical is None else f"{samp.empirical:.6f}"
    print(f"sampling: n={samp.n} trials={samp.trials} empirical={emp} bound={samp.bound:.6f}")
    for f in failures:
        print(f"bound violated (network seed {f['network_seed']}): C_m={f['C_m']:.6g} "
              f"lhs={f['lhs']:.6g} rhs={f['rhs']:.6g} slack={f['slack']:.6g} "
              f"eps_r={f['eps_r']:.6g} eps_b={f['eps_b']:.6g}", file=sys.stderr)
    if not samp_ok:
        print(f"sampling probability {samp.empirical:.6f} below bound {samp.bound:.6f} "
              f"- {v.prob_tol}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_CHECK


def cmd_gradcheck(cfg: RunConfig) -> int:
    """Compare jets and loss gradients against finite differences."""
    out = _outdir(cfg)
    v = cfg.verify
    results = (jet_suite(v.fd_cases, cfg.seed, v.fd_jet_tol, v.fd_zero)
               + loss_suite(max(1, v.fd_cases // 4), cfg.seed, v.fd_grad_tol, v.fd_zero))
    for r in results:
        print(f"{r.name:16s} max rel err {r.max_error:.3e}  tol {r.tol:.1e}  "
              f"{'pass' if r.passed else 'FAIL'}")
    passed = all(r.passed for r in results)
    _write_json(out / "gradcheck_report.json", {
        "command": "gradcheck", "seed": cfg.seed, "zero_network": v.fd_zero, "passed": passed,
        "channels": [{"name": r.name, "max_error": r.max_error, "tol": r.tol,
                      "passed": r.passed} for r in results],
    })
    return EXIT_OK if passed else EXIT_CHECK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "verify": cmd_verify,
            "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liprpinn", description="PINN training and verification toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__ or name)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--workers", type=int, help="parallel sweep entries")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed", "must be nonnegative")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers", "must be positive")
        cfg = cfg.with_overrides(args.seed, args.out, args.workers)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
