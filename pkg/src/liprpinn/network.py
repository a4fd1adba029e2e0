"""Dense tanh networks, residual variant, and the (1 - x^2) boundary wrapper.

Parameters are kept as one flat vector ordered ``W1, b1, W2, b2, ..., WL, bL``
with each ``W`` (shape ``n_l x n_{l-1}``) flattened row-major.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError

WRAPPERS = (None, "poisson1d_dirichlet_zero")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...]
    residual: bool = False
    wrapper: str | None = None

    def __post_init__(self):
        w = tuple(int(n) for n in self.widths)
        object.__setattr__(self, "widths", w)
        if len(w) < 3:
            raise DimensionError("need at least one hidden layer (L >= 2)")
        if w[0] not in (1, 2, 3):
            raise DimensionError(f"input width must be 1, 2 or 3, got {w[0]}")
        if w[-1] != 1:
            raise DimensionError("output width must be 1")
        if min(w) < 1:
            raise DimensionError("all widths must be >= 1")
        if self.residual and w[0] != 1:
            raise DimensionError("residual skip needs a scalar input (n_0 = 1)")
        if self.wrapper not in WRAPPERS:
            raise DimensionError(f"unknown wrapper {self.wrapper!r}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "residual": self.residual, "wrapper": self.wrapper}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(tuple(d["widths"]), bool(d.get("residual", False)), d.get("wrapper"))


def param_count(arch: Architecture) -> int:
    w = arch.widths
    return sum(w[l] * w[l - 1] + w[l] for l in range(1, len(w)))


def layer_slices(arch: Architecture):
    """(weight slice, bias slice, weight shape) for every layer, in storage order."""
    out = []
    pos = 0
    w = arch.widths
    for l in range(1, len(w)):
        nW = w[l] * w[l - 1]
        out.append((slice(pos, pos + nW), slice(pos + nW, pos + nW + w[l]), (w[l], w[l - 1])))
        pos += nW + w[l]
    return out


@dataclass(frozen=True, eq=False)
class Network:
    arch: Architecture
    params: np.ndarray
    seed: int | None = None
    _layers: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=float, copy=True).ravel()
        if p.size != param_count(self.arch):
            raise DimensionError(f"expected {param_count(self.arch)} parameters, got {p.size}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer ``(W, b)`` views into the flat parameter vector."""
        if self._layers is None:
            object.__setattr__(self, "_layers", unflatten(self.arch, self.params))
        return self._layers

    def with_params(self, params) -> "Network":
        return Network(self.arch, params, self.seed)


def unflatten(arch: Architecture, params) -> list[tuple[np.ndarray, np.ndarray]]:
    params = np.asarray(params, dtype=float)
    return [(params[ws].reshape(shape), params[bs]) for ws, bs, shape in layer_slices(arch)]


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])


def xavier_init(arch: Architecture, seed: int) -> Network:
    """Uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    w = arch.widths
    for l in range(1, len(w)):
        limit = np.sqrt(6.0 / (w[l - 1] + w[l]))
        layers.append((rng.uniform(-limit, limit, size=(w[l], w[l - 1])), np.zeros(w[l])))
    return Network(arch, flatten(layers), seed)


def zero_network(arch: Architecture) -> Network:
    return Network(arch, np.zeros(param_count(arch)))


def evaluate(network: Network, x):
    """Jet of the network (skip connection and wrapper included) at ``x``.

    ``x`` may be a single point or an ``(N, n_0)`` array of points.
    """
    from .jets import forward_jet

    return forward_jet(network, x)


def evaluate_values(network: Network, X) -> np.ndarray:
    """Plain forward pass (no derivatives) at the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != network.arch.input_dim:
        raise DimensionError("point dimension does not match the network input width")
    layers = network.layers()
    a = X
    for li, (W, b) in enumerate(layers):
        z = a @ W.T + b
        if li == len(layers) - 1:
            a = z
            break
        a = np.tanh(z)
        if li == 0 and network.arch.residual:
            a = a + X
    out = a[:, 0]
    if network.arch.wrapper:
        out = (1.0 - X[:, 0] ** 2) * out
    return out


# -- checkpoints ------------------------------------------------------------

def dumps_checkpoint(network: Network) -> str:
    head = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": network.arch.to_dict(),
        "seed": network.seed,
        "param_count": int(network.params.size),
    }
    body = json.dumps(head, indent=2)[:-2]
    nums = ",\n    ".join(format(float(v), ".17e") for v in network.params)
    return body + ',\n  "params": [\n    ' + nums + "\n  ]\n}\n"


def loads_checkpoint(text: str) -> Network:
    d = json.loads(text)
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
    arch = Architecture.from_dict(d["architecture"])
    return Network(arch, np.array(d["params"], dtype=float), d.get("seed"))


def save_checkpoint(network: Network, path) -> None:
    Path(path).write_text(dumps_checkpoint(network))


def load_checkpoint(path) -> Network:
    return loads_checkpoint(Path(path).read_text())
