"""Third-order jets: values plus exact input-derivatives up to order 3.

Two layers live here:

* :class:`Jet3`, a small truncated-Taylor number type with leading batch axes
  and trailing derivative axes.  It is used to differentiate closed-form
  expressions (exact solutions, wrapper factors).
* A batched network engine that pushes jets through dense tanh layers and can
  pull cotangents on ``(value, d1, d2, d3)`` back to the flat parameter vector.

The engine stores a hidden layer of width ``n`` for ``N`` points as one array of
shape ``(N, K, n)`` where ``K = 1 + D + D**2 + D**3`` (truncated at the
requested order).  Channel blocks are ``[value | d1 | d2 | d3]``, with the
derivative tensors stored dense and row-major.  Keeping the width axis last lets
a dense layer act on every channel with a single matmul.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionError

if TYPE_CHECKING:
    from .network import Network

MAX_DIM = 3
MAX_ORDER = 3


def n_channels(dim: int, order: int) -> int:
    return sum(dim**k for k in range(order + 1))


def _sym3(M, v, ax):
    """``M_ij v_k + M_ik v_j + M_jk v_i``; derivative axes of both start at ``ax``.

    Trailing axes after the derivative axes (e.g. the layer width) broadcast.
    """
    return (np.expand_dims(M, ax + 2) * np.expand_dims(v, (ax, ax + 1))
            + np.expand_dims(M, ax + 1) * np.expand_dims(v, (ax, ax + 2))
            + np.expand_dims(M, ax) * np.expand_dims(v, (ax + 1, ax + 2)))


@dataclass(frozen=True)
class Jet3:
    """Value and input-derivatives of orders 1..3 at one or more points.

    Shapes: ``value (...)``, ``d1 (..., D)``, ``d2 (..., D, D)``,
    ``d3 (..., D, D, D)``.  ``d2`` and ``d3`` are fully symmetric.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @property
    def dim(self) -> int:
        return self.d1.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return np.shape(self.value)

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c, dim: int, batch_shape=()) -> "Jet3":
        c = np.broadcast_to(np.asarray(c, dtype=float), batch_shape).copy()
        z = np.zeros(batch_shape)
        return cls(c, _zeros_like_deriv(z, dim, 1), _zeros_like_deriv(z, dim, 2),
                   _zeros_like_deriv(z, dim, 3))

    @classmethod
    def variable(cls, x, axis: int, dim: int) -> "Jet3":
        """Jet of the coordinate function ``x -> x[axis]`` at points ``x``."""
        x = np.asarray(x, dtype=float)
        val = x[..., axis].copy()
        d1 = np.zeros(val.shape + (dim,))
        d1[..., axis] = 1.0
        return cls(val, d1, _zeros_like_deriv(val, dim, 2), _zeros_like_deriv(val, dim, 3))

    @classmethod
    def zeros(cls, dim: int, batch_shape=()) -> "Jet3":
        return cls.constant(0.0, dim, batch_shape)

    # -- helpers ----------------------------------------------------------
    def _coerce(self, other) -> "Jet3":
        if isinstance(other, Jet3):
            return other
        return Jet3.constant(other, self.dim, np.broadcast_shapes(np.shape(other), self.batch_shape))

    def channels(self):
        return self.value, self.d1, self.d2, self.d3

    def scale(self, a) -> "Jet3":
        a = np.asarray(a, dtype=float)
        return Jet3(a * self.value, a[..., None] * self.d1, a[..., None, None] * self.d2,
                    a[..., None, None, None] * self.d3)

    def __getitem__(self, idx) -> "Jet3":
        return Jet3(self.value[idx], self.d1[idx], self.d2[idx], self.d3[idx])

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        o = self._coerce(other)
        return Jet3(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2, self.d3 + o.d3)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.value, -self.d1, -self.d2, -self.d3)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            return self.scale(other)
        a, b = self, other
        a0, a1, a2, a3 = a.channels()
        b0, b1, b2, b3 = b.channels()
        e0 = np.asarray(a0)[..., None]
        f0 = np.asarray(b0)[..., None]
        v = a0 * b0
        d1 = a1 * f0 + e0 * b1
        d2 = (a2 * f0[..., None] + a1[..., :, None] * b1[..., None, :]
              + b1[..., :, None] * a1[..., None, :] + e0[..., None] * b2)
        ax = a1.ndim - 1
        d3 = (a3 * f0[..., None, None] + _sym3(a2, b1, ax) + _sym3(b2, a1, ax)
              + e0[..., None, None] * b3)
        return Jet3(v, d1, d2, d3)

    __rmul__ = __mul__

    def compose(self, f0, f1, f2, f3) -> "Jet3":
        """Chain rule for ``phi(self)`` given ``phi`` and its first three derivatives
        evaluated at ``self.value``."""
        g1, g2, g3 = self.d1, self.d2, self.d3
        f1 = np.asarray(f1)
        f2 = np.asarray(f2)
        f3 = np.asarray(f3)
        ax = g1.ndim - 1
        gg = g1[..., :, None] * g1[..., None, :]
        d1 = f1[..., None] * g1
        d2 = f2[..., None, None] * gg + f1[..., None, None] * g2
        d3 = (f3[..., None, None, None] * gg[..., None] * g1[..., None, None, :]
              + f2[..., None, None, None] * _sym3(g2, g1, ax)
              + f1[..., None, None, None] * g3)
        return Jet3(np.asarray(f0, dtype=float), d1, d2, d3)

    def reciprocal(self) -> "Jet3":
        a = np.asarray(self.value, dtype=float)
        if np.any(a == 0):
            raise ZeroDivisionError("jet division by a zero value")
        r = 1.0 / a
        return self.compose(r, -r**2, 2 * r**3, -6 * r**4)

    def __truediv__(self, other):
        if not isinstance(other, Jet3):
            return self.scale(1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, Jet3):
            return exp(p * log(self))
        p = float(p)
        a = np.asarray(self.value, dtype=float)
        if p == int(p) and p >= 0:
            n = int(p)
            coef = [a**n]
            for k in (1, 2, 3):
                if n >= k:
                    falling = float(np.prod([n - i for i in range(k)]))
                    coef.append(falling * a ** (n - k))
                else:
                    coef.append(np.zeros_like(a))
            return self.compose(*coef)
        return self.compose(a**p, p * a ** (p - 1), p * (p - 1) * a ** (p - 2),
                            p * (p - 1) * (p - 2) * a ** (p - 3))

    def __rpow__(self, base):
        return exp(self * float(np.log(base)))


def _zeros_like_deriv(val, dim, k):
    return np.zeros(np.shape(val) + (dim,) * k)


def sin(j: Jet3) -> Jet3:
    s, c = np.sin(j.value), np.cos(j.value)
    return j.compose(s, c, -s, -c)


def cos(j: Jet3) -> Jet3:
    s, c = np.sin(j.value), np.cos(j.value)
    return j.compose(c, -s, -c, s)


def exp(j: Jet3) -> Jet3:
    e = np.exp(j.value)
    return j.compose(e, e, e, e)


def log(j: Jet3) -> Jet3:
    a = np.asarray(j.value, dtype=float)
    return j.compose(np.log(a), 1 / a, -1 / a**2, 2 / a**3)


def sqrt(j: Jet3) -> Jet3:
    return j ** 0.5


def tanh(j: Jet3) -> Jet3:
    t, s1, s2, s3, _ = _tanh_derivs(j.value)
    return j.compose(t, s1, s2, s3)


def _tanh_derivs(u):
    """tanh and its first four derivatives, written in terms of t = tanh(u)."""
    t = np.tanh(u)
    s1 = 1.0 - t * t
    s2 = -2.0 * t * s1
    s3 = s1 * (6.0 * t * t - 2.0)
    s4 = 8.0 * t * s1 * (2.0 - 3.0 * t * t)
    return t, s1, s2, s3, s4


# ---------------------------------------------------------------------------
# batched network engine
# ---------------------------------------------------------------------------

class _Blocks:
    """Index bookkeeping for the ``(N, K, n)`` channel layout."""

    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        self.offsets = [0]
        for k in range(order + 1):
            self.offsets.append(self.offsets[-1] + dim**k)
        self.K = self.offsets[-1]

    def split(self, J):
        N, _, n = J.shape
        D = self.dim
        out = []
        for k in range(self.order + 1):
            blk = J[:, self.offsets[k]:self.offsets[k + 1], :]
            out.append(blk.reshape((N,) + (D,) * k + (n,)))
        out[0] = J[:, 0, :]
        return out

    def join(self, blocks):
        N, n = blocks[0].shape
        parts = [blocks[0][:, None, :]]
        for k in range(1, self.order + 1):
            parts.append(blocks[k].reshape(N, self.dim**k, n))
        return np.concatenate(parts, axis=1)


def _tanh_forward(U, blk: _Blocks):
    if blk.dim == 1:
        return _tanh_forward_1d(U, blk.order)
    u = blk.split(U)
    t, s1, s2, s3, s4 = _tanh_derivs(u[0])
    out = [t]
    order = blk.order
    if order >= 1:
        g = u[1]
        out.append(s1[:, None, :] * g)
    if order >= 2:
        H = u[2]
        gg = g[:, :, None, :] * g[:, None, :, :]
        out.append(s2[:, None, None, :] * gg + s1[:, None, None, :] * H)
    if order >= 3:
        T = u[3]
        ggg = gg[:, :, :, None, :] * g[:, None, None, :, :]
        out.append(s3[:, None, None, None, :] * ggg
                   + s2[:, None, None, None, :] * _sym3(H, g, 1)
                   + s1[:, None, None, None, :] * T)
    cache = (u, (s1, s2, s3, s4))
    return blk.join(out), cache


def _tanh_backward(Y, cache, blk: _Blocks):
    """Cotangent of the pre-activation jet, given a symmetric cotangent ``Y``."""
    if blk.dim == 1:
        return _tanh_backward_1d(Y, cache, blk.order)
    u, (s1, s2, s3, s4) = cache
    y = blk.split(Y)
    order = blk.order
    Uv = s1 * y[0]
    out = [None] * (order + 1)
    if order >= 1:
        g = u[1]
        Yg = y[1]
        Uv = Uv + s2 * np.einsum("nia,nia->na", Yg, g)
        Ug = s1[:, None, :] * Yg
    if order >= 2:
        H = u[2]
        YH = y[2]
        YHg = np.einsum("nija,nja->nia", YH, g)
        Uv = Uv + s3 * np.einsum("nia,nia->na", YHg, g) + s2 * np.einsum("nija,nija->na", YH, H)
        Ug = Ug + 2.0 * s2[:, None, :] * YHg
        UH = s1[:, None, None, :] * YH
    if order >= 3:
        T = u[3]
        YT = y[3]
        YTg = np.einsum("nijka,nka->nija", YT, g)
        YTgg = np.einsum("nija,nja->nia", YTg, g)
        YTH = np.einsum("nijka,njka->nia", YT, H)
        Uv = (Uv + s4 * np.einsum("nia,nia->na", YTgg, g)
              + 3.0 * s3 * np.einsum("nia,nia->na", YTH, g)
              + s2 * np.einsum("nijka,nijka->na", YT, T))
        Ug = Ug + 3.0 * s3[:, None, :] * YTgg + 3.0 * s2[:, None, :] * YTH
        UH = UH + 3.0 * s2[:, None, None, :] * YTg
        out[3] = s1[:, None, None, None, :] * YT
    out[0] = Uv
    if order >= 1:
        out[1] = Ug
    if order >= 2:
        out[2] = UH
    return blk.join(out)


# Scalar-input specialisation: every block is an (N, n) slab, so the tensor
# contractions above collapse to plain products.

def _tanh_forward_1d(U, order):
    u = [U[:, k, :] for k in range(order + 1)]
    t, s1, s2, s3, s4 = _tanh_derivs(u[0])
    out = np.empty_like(U)
    out[:, 0, :] = t
    if order >= 1:
        g = u[1]
        out[:, 1, :] = s1 * g
    if order >= 2:
        H = u[2]
        g2 = g * g
        out[:, 2, :] = s2 * g2 + s1 * H
    if order >= 3:
        out[:, 3, :] = s3 * g2 * g + 3.0 * s2 * H * g + s1 * u[3]
    return out, (u, (s1, s2, s3, s4))


def _tanh_backward_1d(Y, cache, order):
    u, (s1, s2, s3, s4) = cache
    out = np.empty_like(Y)
    Yv = Y[:, 0, :]
    if order == 0:
        out[:, 0, :] = s1 * Yv
        return out
    g = u[1]
    Yg = Y[:, 1, :]
    acc2 = Yg * g          # multiplies s2 in the value cotangent
    acc3 = None            # multiplies s3
    Ug = s1 * Yg
    if order >= 2:
        H = u[2]
        YH = Y[:, 2, :]
        YHg = YH * g
        acc2 += YH * H
        acc3 = YHg * g
        Ug += 2.0 * s2 * YHg
        UH = s1 * YH
    if order >= 3:
        YT = Y[:, 3, :]
        YTg = YT * g
        YTgg = YTg * g
        YTH = YT * H
        acc2 += YT * u[3]
        acc3 += 3.0 * YTH * g
        Ug += 3.0 * s3 * YTgg + 3.0 * s2 * YTH
        UH += 3.0 * s2 * YTg
        out[:, 3, :] = s1 * YT
    Uv = s1 * Yv + s2 * acc2
    if acc3 is not None:
        Uv += s3 * acc3
    if order >= 3:
        Uv += s4 * YTgg * g
    out[:, 0, :] = Uv
    out[:, 1, :] = Ug
    if order >= 2:
        out[:, 2, :] = UH
    return out


def _input_jet(X, blk: _Blocks):
    N, D = X.shape
    J = np.zeros((N, blk.K, D))
    J[:, 0, :] = X
    if blk.order >= 1:
        J[:, 1:1 + D, :] = np.eye(D)
    return J


def _wrapper_jet(X, blk: _Blocks):
    """Jet of ``1 - x0**2`` in the ``(N, K, 1)`` layout (coordinate 0 is space)."""
    N, D = X.shape
    x0 = X[:, 0]
    W = np.zeros((N, blk.K, 1))
    W[:, 0, 0] = 1.0 - x0 * x0
    if blk.order >= 1:
        W[:, 1, 0] = -2.0 * x0
    if blk.order >= 2:
        W[:, blk.offsets[2], 0] = -2.0
    return W


def _product_forward(Wj, Hj, blk: _Blocks):
    """Leibniz product of a fixed jet ``Wj`` and a jet ``Hj`` (both width 1)."""
    w = blk.split(Wj)
    h = blk.split(Hj)
    out = [w[0] * h[0]]
    o = blk.order
    if o >= 1:
        out.append(w[1] * h[0][:, None, :] + w[0][:, None, :] * h[1])
    if o >= 2:
        out.append(w[2] * h[0][:, None, None, :]
                   + w[1][:, :, None, :] * h[1][:, None, :, :]
                   + h[1][:, :, None, :] * w[1][:, None, :, :]
                   + w[0][:, None, None, :] * h[2])
    if o >= 3:
        out.append(w[3] * h[0][:, None, None, None, :]
                   + _sym3(w[2], h[1], 1) + _sym3(h[2], w[1], 1)
                   + w[0][:, None, None, None, :] * h[3])
    return blk.join(out)


def _product_backward(Wj, P, blk: _Blocks):
    """Cotangent of ``Hj`` in ``Wj * Hj`` given a symmetric cotangent ``P``."""
    w = blk.split(Wj)
    p = blk.split(P)
    o = blk.order
    hv = w[0] * p[0]
    out = [None] * (o + 1)
    if o >= 1:
        hv = hv + np.einsum("nia,nia->na", w[1], p[1])
        out[1] = w[0][:, None, :] * p[1]
    if o >= 2:
        hv = hv + np.einsum("nija,nija->na", w[2], p[2])
        out[1] = out[1] + 2.0 * np.einsum("nja,nija->nia", w[1], p[2])
        out[2] = w[0][:, None, None, :] * p[2]
    if o >= 3:
        hv = hv + np.einsum("nijka,nijka->na", w[3], p[3])
        out[1] = out[1] + 3.0 * np.einsum("njka,nijka->nia", w[2], p[3])
        out[2] = out[2] + 3.0 * np.einsum("nka,nijka->nija", w[1], p[3])
        out[3] = w[0][:, None, None, None, :] * p[3]
    out[0] = hv
    return blk.join(out)


def _symmetrize(Y, blk: _Blocks):
    """Average each derivative block over index permutations.

    Only the symmetric part of a cotangent reaches the parameters (the forward
    channels are symmetric), and the backward formulas rely on it.
    """
    y = blk.split(Y)
    if blk.order >= 2:
        y[2] = 0.5 * (y[2] + y[2].transpose(0, 2, 1, 3))
    if blk.order >= 3:
        T = y[3]
        y[3] = (T + T.transpose(0, 1, 3, 2, 4) + T.transpose(0, 2, 1, 3, 4)
                + T.transpose(0, 2, 3, 1, 4) + T.transpose(0, 3, 1, 2, 4)
                + T.transpose(0, 3, 2, 1, 4)) / 6.0
    return blk.join(y)


@dataclass(frozen=True)
class ParamTape:
    """Record of one batched forward pass; feed it to :func:`param_gradient`."""

    network: "Network"
    points: np.ndarray
    order: int
    inputs: tuple      # layer inputs J_0 .. J_{L-1}
    caches: tuple      # tanh caches for hidden layers 1 .. L-1
    wrapper: np.ndarray | None
    output: np.ndarray  # (N, K, 1)

    @property
    def jet(self) -> Jet3:
        return _to_jet3(self.output, self.points.shape[1], self.order)


def _as_points(network, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = np.atleast_2d(X.reshape(1, -1) if single else X)
    n0 = network.arch.widths[0]
    if X.shape[1] != n0:
        raise DimensionError(f"point dimension {X.shape[1]} != network input width {n0}")
    if n0 > MAX_DIM:
        raise DimensionError(f"input dimension {n0} exceeds {MAX_DIM}")
    return X, single


def _run(network, X, order, keep):
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must be in 0..{MAX_ORDER}")
    arch = network.arch
    layers = network.layers()
    blk = _Blocks(X.shape[1], order)
    Jx = _input_jet(X, blk)
    J = Jx
    inputs, caches = [], []
    L = len(layers)
    for li, (W, b) in enumerate(layers):
        if keep:
            inputs.append(J)
        U = J @ W.T
        U[:, 0, :] += b
        if li == L - 1:
            J = U
            break
        J, cache = _tanh_forward(U, blk)
        if keep:
            caches.append(cache)
        if li == 0 and arch.residual:
            J = J + Jx
    wj = None
    if arch.wrapper:
        wj = _wrapper_jet(X, blk)
        J = _product_forward(wj, J, blk)
    return J, blk, tuple(inputs), tuple(caches), wj


@lru_cache(maxsize=None)
def _canonical_index(dim, k):
    """Index arrays mapping every entry of a k-tensor to its sorted-index entry."""
    grids = np.meshgrid(*([np.arange(dim)] * k), indexing="ij")
    return tuple(np.sort(np.stack(grids), axis=0))


def _to_jet3(J, dim, order):
    N = J.shape[0]
    blk = _Blocks(dim, order)
    parts = blk.split(J)
    full = [parts[0][:, 0]]
    for k in range(1, MAX_ORDER + 1):
        if k <= order:
            c = parts[k][..., 0]
            if k >= 2:
                # copy the canonical entry so symmetry holds bit-for-bit
                c = c[(slice(None),) + _canonical_index(dim, k)]
            full.append(c)
        else:
            full.append(np.zeros((N,) + (dim,) * k))
    return Jet3(*full)


def forward_jets(network: "Network", X, order: int = 3) -> Jet3:
    """Batched jets of the network output at the rows of ``X``.

    Derivative blocks above ``order`` are returned as zeros without being
    computed.
    """
    X, _ = _as_points(network, X)
    J, *_ = _run(network, X, order, keep=False)
    return _to_jet3(J, X.shape[1], order)


def forward_jet(network: "Network", x) -> Jet3:
    """Value and exact input-derivatives up to order 3 at a single point."""
    X, single = _as_points(network, x)
    jet = forward_jets(network, X, 3)
    return jet[0] if single else jet


def forward_jets_taped(network: "Network", X, order: int = 3):
    X, _ = _as_points(network, X)
    J, blk, inputs, caches, wj = _run(network, X, order, keep=True)
    tape = ParamTape(network, X, order, inputs, caches, wj, J)
    return _to_jet3(J, X.shape[1], order), tape


def forward_jet_taped(network: "Network", x):
    X, single = _as_points(network, x)
    jet, tape = forward_jets_taped(network, X, 3)
    return (jet[0] if single else jet), tape


def replay(tape: ParamTape) -> Jet3:
    """Recompute the taped forward pass from scratch."""
    jet = forward_jets(tape.network, tape.points, tape.order)
    return jet


def _cotangent_array(cot, N, dim, order):
    """Pack cotangent seeds (a :class:`Jet3` or a 4-tuple) into ``(N, K, 1)``."""
    if isinstance(cot, Jet3):
        chans = list(cot.channels())
    else:
        chans = list(cot)
        if len(chans) != 4:
            raise DimensionError("cotangents need (value, d1, d2, d3)")
    blk = _Blocks(dim, order)
    parts = []
    for k, c in enumerate(chans):
        want = (N,) + (dim,) * k
        if c is None:
            c = np.zeros(want)
        c = np.asarray(c, dtype=float)
        if c.shape != want:
            if c.size == int(np.prod(want)):
                c = c.reshape(want)
            else:
                raise DimensionError(f"cotangent channel d{k} has shape {c.shape}, expected {want}")
        if k > order:
            if np.any(c != 0):
                raise DimensionError(f"nonzero cotangent on d{k} but tape has order {order}")
            continue
        parts.append(c[..., None])
    return blk.join(parts)


def param_gradient(tape: ParamTape, cotangents) -> np.ndarray:
    """Gradient of ``S = sum(channel * cotangent)`` with respect to the flat parameters."""
    net = tape.network
    N, dim = tape.points.shape
    blk = _Blocks(dim, tape.order)
    Y = _cotangent_array(cotangents, N, dim, tape.order)
    if not np.all(np.isfinite(Y)):
        raise DimensionError("cotangents must be finite")
    return _backward(net, tape, _symmetrize(Y, blk), blk)


def _backward(net, tape, Y, blk):
    layers = net.layers()
    L = len(layers)
    if tape.wrapper is not None:
        Y = _product_backward(tape.wrapper, Y, blk)
    grads = [None] * L
    U_bar = Y
    for li in range(L - 1, -1, -1):
        W, _ = layers[li]
        Jin = tape.inputs[li]
        n_out, n_in = W.shape
        dW = U_bar.reshape(-1, n_out).T @ Jin.reshape(-1, n_in)
        db = U_bar[:, 0, :].sum(axis=0)
        grads[li] = (dW, db)
        if li == 0:
            break
        J_bar = U_bar @ W
        U_bar = _tanh_backward(J_bar, tape.caches[li - 1], blk)
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])
