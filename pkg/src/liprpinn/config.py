"""Run configuration: a TOML document with sections [problem], [network], [train],
[loss], [sweep] and [verify].  Every key is optional; unknown keys are errors.

    seed = 0                       # top level; --seed overrides
    out = "runs/example"           # top level; --out overrides

    [problem]
    kind = "poisson"               # poisson | heat | elliptic | parabolic
    exact = "tanh"                 # built-in name or expression in x (and t)
    x_bounds = [-1.0, 1.0]
    T = 1.0                        # parabolic only
    nu = 1.0                       # heat diffusion
    a = [[-1.0]]                   # elliptic kind: second-order coefficients
    b = [0.0]
    c = 0.0

    [network]
    widths = [1, 50, 50, 1]
    residual = false
    wrapper = "none"               # none | poisson1d_dirichlet_zero

    [train]
    m_r = 100                      # residual points (elliptic)
    m_b1 = 10                      # heat: m_b = (m_b1, m_b1, 2 m_b1), m_r = 2 m_b1^2
    generator = "equidistant"      # equidistant | iid
    adam_epochs = 1000
    max_adam_steps = 0             # cap on Adam mini-batch steps; 0 = no cap
    batch_size = 0                 # 0 = full batch
    lbfgs_iters = 500
    tol = 1e-9
    lr = 1e-3
    grid = [10000]                 # evaluation points per coordinate
    relative = false

    [loss]
    schedule = "constant"          # constant | poisson_lipr | heat_lipr | theory
    lam_r = 1.0
    lam_b = [1.0]
    reg_r = 0.0                    # constant schedule only
    reg_b = [0.0]
    preset = "interval"            # distribution constants for the theory schedule
    alpha = 1.0

    [sweep]
    ladder = [50, 160, 500]        # values of m_r (elliptic) or m_b1 (heat)
    repeats = 3
    workers = 1

    [verify]
    networks = 20
    m_r = 100
    preset = "interval"
    C_r = 1.0                      # optional overrides of the upper mass constants
    C_b = 0.5
    alpha = 1.0
    resolution = 10000
    slack_tol = 1e-9
    sampling_n = 100
    trials = 2000
    prob_tol = 0.01
    fd_cases = 20
    fd_jet_tol = 1e-4
    fd_grad_tol = 1e-5
    fd_zero = false                # gradcheck the all-zero network instead
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "poisson"
    exact: str = "tanh"
    x_bounds: tuple = (-1.0, 1.0)
    T: float = 1.0
    nu: float = 1.0
    a: tuple = ((-1.0,),)
    b: tuple = (0.0,)
    c: float = 0.0


@dataclass(frozen=True)
class NetworkConfig:
    widths: tuple = (1, 50, 50, 1)
    residual: bool = False
    wrapper: str = "none"


@dataclass(frozen=True)
class TrainConfig:
    m_r: int = 100
    m_b1: int = 10
    generator: str = ""            # empty: equidistant in 1-D, iid otherwise
    adam_epochs: int = 1000
    max_adam_steps: int = 0
    batch_size: int = 0
    lbfgs_iters: int = 500
    tol: float = 1e-9
    lr: float = 1e-3
    grid: tuple = ()               # empty: 10^4 in 1-D, 400 x 200 in space-time
    relative: bool = False


@dataclass(frozen=True)
class LossConfig:
    schedule: str = "constant"
    lam_r: float = 1.0
    lam_b: tuple = (1.0,)
    reg_r: float = 0.0
    reg_b: tuple = (0.0,)
    preset: str = "interval"
    alpha: float = 1.0


@dataclass(frozen=True)
class SweepConfig:
    ladder: tuple = (10, 100)
    repeats: int = 1
    workers: int = 1


@dataclass(frozen=True)
class VerifyConfig:
    networks: int = 20
    m_r: int = 100
    preset: str = "interval"
    C_r: float | None = None
    C_b: float | None = None
    alpha: float = 1.0
    resolution: int = 10_000
    slack_tol: float = 1e-9
    sampling_n: int = 100
    trials: int = 2000
    prob_tol: float = 0.01
    fd_cases: int = 20
    fd_jet_tol: float = 1e-4
    fd_grad_tol: float = 1e-5
    fd_zero: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def with_overrides(self, seed=None, out=None, workers=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=int(seed))
        if out is not None:
            cfg = dataclasses.replace(cfg, out=str(out))
        if workers is not None:
            cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, workers=int(workers)))
        return cfg


SECTIONS = {"problem": ProblemConfig, "network": NetworkConfig, "train": TrainConfig,
            "loss": LossConfig, "sweep": SweepConfig, "verify": VerifyConfig}
CHOICES = {
    "problem.kind": ("poisson", "heat", "elliptic", "parabolic"),
    "network.wrapper": ("none", "poisson1d_dirichlet_zero"),
    "train.generator": ("", "equidistant", "iid"),
    "loss.schedule": ("constant", "poisson_lipr", "heat_lipr", "theory"),
}
NONNEGATIVE = {"train.m_r", "train.m_b1", "train.adam_epochs", "train.max_adam_steps",
               "train.batch_size", "train.lbfgs_iters", "train.tol", "loss.lam_r",
               "loss.reg_r", "sweep.repeats", "verify.networks", "verify.trials",
               "verify.fd_cases", "verify.fd_jet_tol", "verify.fd_grad_tol",
               "verify.slack_tol", "verify.prob_tol"}
POSITIVE = {"train.lr", "sweep.workers", "verify.m_r", "verify.resolution", "problem.T",
            "verify.sampling_n"}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def _coerce(name, default, value):
    """Check ``value`` against the type of the field's default."""
    if default is None and value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(name, "must be true or false")
        return value
    if isinstance(default, int) and default is not None:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, "must be an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, "must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(name, "must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(name, "must be an array")
        return _freeze(value)
    return value


def _section(cls, prefix, data):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "must be a table")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = f"{prefix}.{key}"
        if key not in known:
            raise ConfigError(name, "unknown key")
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        v = _coerce(name, default, value)
        if name in CHOICES and v not in CHOICES[name]:
            raise ConfigError(name, f"must be one of {', '.join(repr(c) for c in CHOICES[name])}")
        if name in NONNEGATIVE and v < 0:
            raise ConfigError(name, "must be nonnegative")
        if name in POSITIVE and v <= 0:
            raise ConfigError(name, "must be positive")
        kwargs[key] = v
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for key, value in data.items():
        if key in SECTIONS:
            kwargs[key] = _section(SECTIONS[key], key, value)
        elif key == "seed":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError("seed", "must be a nonnegative integer")
            kwargs[key] = value
        elif key == "out":
            if not isinstance(value, str):
                raise ConfigError("out", "must be a string")
            kwargs[key] = value
        else:
            raise ConfigError(key, "unknown key")
    cfg = RunConfig(**kwargs)
    if not cfg.sweep.ladder or any(not isinstance(m, int) or m < 1 for m in cfg.sweep.ladder):
        raise ConfigError("sweep.ladder", "must be a nonempty array of positive integers")
    return cfg


def loads_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads_config(fh.read())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
