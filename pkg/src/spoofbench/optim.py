"""AdamW with decoupled weight decay over named parameter tensors.

Parameters travel as ``{name: Tensor}`` mappings; frozen tensors are the
caller's responsibility to keep out of the mapping.  Steps are pure: they
return fresh params and state, leaving the inputs untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, InputError, SnapshotError
from .tensor import Tensor, read_snapshot, snapshot_bytes

STATE_FORMAT = "spoofbench-optstate"
STATE_VERSION = 1


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class OptimizerState:
    m: dict[str, Tensor]
    v: dict[str, Tensor]
    t: int = 0


def init_state(params: dict[str, Tensor]) -> OptimizerState:
    zeros = {k: Tensor.zeros(p.shape) for k, p in params.items()}
    return OptimizerState(dict(zeros), {k: Tensor.zeros(p.shape) for k, p in params.items()}, 0)


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: OptimizerState,
    cfg: AdamWConfig,
) -> tuple[dict[str, Tensor], OptimizerState]:
    if set(params) != set(grads):
        raise InputError(
            f"gradient names {sorted(grads)} do not match parameter names {sorted(params)}"
        )
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_params: dict[str, Tensor] = {}
    new_m: dict[str, Tensor] = {}
    new_v: dict[str, Tensor] = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionError(
                f"grad shape {g.shape} does not match param {name!r} shape {theta.shape}"
            )
        ga = g.array
        m = cfg.beta1 * state.m[name].array + (1.0 - cfg.beta1) * ga
        v = cfg.beta2 * state.v[name].array + (1.0 - cfg.beta2) * ga**2
        m_hat = m / bc1
        v_hat = v / bc2
        step = cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps))
        new_params[name] = Tensor._wrap(theta.array - step - cfg.lr * cfg.weight_decay * theta.array)
        new_m[name] = Tensor._wrap(m)
        new_v[name] = Tensor._wrap(v)
    return new_params, OptimizerState(new_m, new_v, t)


def save_state(state: OptimizerState, path: str) -> None:
    names = sorted(state.m)
    header = {"format": STATE_FORMAT, "version": STATE_VERSION, "t": state.t, "names": names}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for name in names:
            fh.write(snapshot_bytes(state.m[name]))
        for name in names:
            fh.write(snapshot_bytes(state.v[name]))


def load_state(path: str) -> OptimizerState:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline())
        except ValueError as exc:
            raise SnapshotError(f"unreadable optimizer state header in {path}: {exc}") from None
        if header.get("format") != STATE_FORMAT:
            raise SnapshotError(f"{path} is not an optimizer state file")
        names = list(header["names"])
        m = {name: read_snapshot(fh) for name in names}
        v = {name: read_snapshot(fh) for name in names}
    return OptimizerState(m, v, int(header["t"]))
