"""Differentiable primitives and the gradient tape.

Every primitive has a forward pass that optionally records onto a ``Tape``
and an analytic backward pass reachable through :func:`backward_of`.  The
networks assembled from these primitives are straight chains, so the tape
is a plain list walked in reverse; the first gradient returned by each
backward rule is the one that keeps flowing down the chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ConfigError, DimensionError, TapeStateError
from .tensor import Tensor

KERNEL_SIZE = 3
PADDING = 1


@dataclass(frozen=True)
class GradPair:
    """A parameter tensor together with its accumulated gradient."""

    value: Tensor
    grad: Tensor

    def __post_init__(self):
        if self.value.shape != self.grad.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} does not match value shape {self.value.shape}"
            )


@dataclass(frozen=True)
class TapeEntry:
    op: str
    saved: tuple


class Tape:
    """Execution-order record of primitive applications for one chain."""

    __slots__ = ("entries",)

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def record(self, op: str, saved: tuple) -> None:
        self.entries.append(TapeEntry(op, saved))

    def backward(self, upstream) -> list[tuple[Tensor, ...]]:
        """Reverse sweep; returns per-entry gradient tuples in forward order.

        Element 0 of each tuple is the gradient w.r.t. the entry's chained
        input and is what propagates to the preceding entry.
        """
        if not self.entries:
            raise TapeStateError("backward requested on an empty tape")
        g = _as_array(upstream)
        out: list[tuple[Tensor, ...]] = []
        for entry in reversed(self.entries):
            grads = _vjp(entry.op, g, entry.saved)
            out.append(tuple(Tensor._wrap(a) for a in grads))
            g = grads[0]
        out.reverse()
        return out


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.array
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# forwards


def affine(x, weights, bias, tape: Tape | None = None) -> Tensor:
    """out = x @ weights.T + bias; accepts a single vector or a batch."""
    xa, wa, ba = _as_array(x), _as_array(weights), _as_array(bias)
    ok = (
        xa.ndim in (1, 2)
        and wa.ndim == 2
        and ba.ndim == 1
        and xa.shape[-1] == wa.shape[1]
        and wa.shape[0] == ba.shape[0]
    )
    if not ok:
        raise DimensionError(
            f"affine shapes do not conform: input {xa.shape}, "
            f"weights {wa.shape}, bias {ba.shape}"
        )
    out = xa @ wa.T + ba
    if tape is not None:
        tape.record("affine", (xa, wa))
    return Tensor._wrap(out)


def _windows(x4: np.ndarray, stride: int) -> np.ndarray:
    padded = np.pad(x4, ((0, 0), (0, 0), (PADDING, PADDING), (PADDING, PADDING)))
    win = sliding_window_view(padded, (KERNEL_SIZE, KERNEL_SIZE), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


@lru_cache(maxsize=None)
def _scatter_indices(c: int, h: int, w: int, stride: int):
    # flat index into the padded (c, h+2, w+2) volume for every column entry,
    # laid out to match an (c, h', w', 3, 3) ravel
    hp, wp = h + 2 * PADDING, w + 2 * PADDING
    hs, ws = -(-h // stride), -(-w // stride)
    ci = np.arange(c)[:, None, None, None, None]
    ii = (np.arange(hs) * stride)[None, :, None, None, None]
    ji = (np.arange(ws) * stride)[None, None, :, None, None]
    ui = np.arange(KERNEL_SIZE)[None, None, None, :, None]
    vi = np.arange(KERNEL_SIZE)[None, None, None, None, :]
    flat = (ci * hp + ii + ui) * wp + (ji + vi)
    return flat.ravel(), c * hp * wp, (hp, wp)


def conv2d(x, kernels, stride: int, tape: Tape | None = None) -> Tensor:
    """3x3 cross-correlation with zero padding 1; output side = ceil(side/stride)."""
    if stride not in (1, 2):
        raise ConfigError(f"conv2d stride must be 1 or 2, got {stride}")
    xa, ka = _as_array(x), _as_array(kernels)
    batched = xa.ndim == 4
    x4 = xa if batched else xa[None]
    ok = (
        x4.ndim == 4
        and ka.ndim == 4
        and ka.shape[2:] == (KERNEL_SIZE, KERNEL_SIZE)
        and x4.shape[1] == ka.shape[1]
        and x4.shape[2] >= KERNEL_SIZE
        and x4.shape[3] >= KERNEL_SIZE
    )
    if not ok:
        raise DimensionError(
            f"conv2d shapes do not conform: input {xa.shape}, kernels {ka.shape}"
        )
    win = _windows(x4, stride)  # (n, c, h', w', 3, 3)
    n, c, hs, ws = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, hs * ws, c * KERNEL_SIZE**2)
    out = cols @ ka.reshape(ka.shape[0], -1).T  # (n, h'*w', k)
    out = out.transpose(0, 2, 1).reshape(n, ka.shape[0], hs, ws)
    if not batched:
        out = out[0]
    if tape is not None:
        tape.record("conv2d", (x4, ka, stride, batched))
    return Tensor._wrap(out)


def sigmoid(z, tape: Tape | None = None) -> Tensor:
    out = expit(_as_array(z))
    if tape is not None:
        tape.record("sigmoid", (out,))
    return Tensor._wrap(out)


def relu(x, tape: Tape | None = None) -> Tensor:
    xa = _as_array(x)
    out = np.maximum(xa, 0.0)
    if tape is not None:
        tape.record("relu", (xa,))
    return Tensor._wrap(out)


def tanh(x, tape: Tape | None = None) -> Tensor:
    out = np.tanh(_as_array(x))
    if tape is not None:
        tape.record("tanh", (out,))
    return Tensor._wrap(out)


def flatten(x, tape: Tape | None = None) -> Tensor:
    """Collapse all axes after the leading batch axis."""
    xa = _as_array(x)
    if xa.ndim < 2:
        raise DimensionError(f"flatten needs a batch axis, got shape {xa.shape}")
    out = xa.reshape(xa.shape[0], -1)
    if tape is not None:
        tape.record("flatten", (xa.shape,))
    return Tensor._wrap(out)


# ---------------------------------------------------------------------------
# backwards


def _affine_back(g: np.ndarray, saved: tuple):
    x, w = saved
    if x.ndim == 1:
        return g @ w, np.outer(g, x), g.copy()
    return g @ w, g.T @ x, g.sum(axis=0)


def _conv2d_back(g: np.ndarray, saved: tuple):
    x4, k, stride, batched = saved
    g4 = g if batched else g[None]
    n, c, h, w = x4.shape
    win = _windows(x4, stride)
    dk = np.einsum("nkij,ncijuv->kcuv", g4, win)
    dcols = np.einsum("nkij,kcuv->ncijuv", g4, k)
    flat, per, (hp, wp) = _scatter_indices(c, h, w, stride)
    idx = (np.arange(n)[:, None] * per + flat[None, :]).ravel()
    dpad = np.bincount(idx, weights=dcols.reshape(n, -1).ravel(), minlength=n * per)
    dx = dpad.reshape(n, c, hp, wp)[:, :, PADDING : PADDING + h, PADDING : PADDING + w]
    if not batched:
        dx = dx[0]
    return dx, dk


_VJPS = {
    "affine": _affine_back,
    "conv2d": _conv2d_back,
    "sigmoid": lambda g, saved: (g * saved[0] * (1.0 - saved[0]),),
    "relu": lambda g, saved: (g * (saved[0] > 0),),
    "tanh": lambda g, saved: (g * (1.0 - saved[0] ** 2),),
    "flatten": lambda g, saved: (g.reshape(saved[0]),),
}


def backward_of(op: str, upstream, saved: tuple) -> tuple[Tensor, ...]:
    """Analytic input gradients of a recorded primitive application."""
    grads = _vjp(op, _as_array(upstream), saved)
    return tuple(Tensor._wrap(a) for a in grads)


def _vjp(op: str, g: np.ndarray, saved: tuple) -> tuple[np.ndarray, ...]:
    try:
        rule = _VJPS[op]
    except KeyError:
        raise TapeStateError(f"no backward rule recorded for op {op!r}") from None
    return rule(g, saved)
