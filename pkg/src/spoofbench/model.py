"""Teacher and student networks: frozen convolutional feature extractor
plus a trainable 8-head linear classifier.

The teacher stacks two strided conv stages before the feature projection;
the student drops one stage and halves the feature width, standing in for
the "smaller architecture" distillation target.  Backbones are frozen at
initialization: training only ever updates ``HeadParams``.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError, SnapshotError
from .heads import MASK_ALL, N_HEADS
from .rng import RngStream
from .tensor import Tensor, read_snapshot, snapshot_bytes

INPUT_SHAPE = (3, 16, 16)
STAGE_STRIDE = 2
TEACHER_FEATURE_DIM = 32
STUDENT_FEATURE_DIM = 16
_TEACHER_CHANNELS = (8, 16)
_STUDENT_CHANNELS = (8,)

CHECKPOINT_FORMAT = "spoofbench-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneParams:
    conv_stages: tuple[Tensor, ...]
    proj_w: Tensor
    proj_b: Tensor
    frozen: bool = True

    def tensors(self) -> tuple[Tensor, ...]:
        return (*self.conv_stages, self.proj_w, self.proj_b)


@dataclass(frozen=True)
class HeadParams:
    weights: Tensor  # (8, feature_dim)
    bias: Tensor  # (8,)
    active_heads: int = MASK_ALL

    def __post_init__(self):
        if self.weights.shape[0] != N_HEADS or self.bias.shape != (N_HEADS,):
            raise DimensionError(
                f"head params must cover {N_HEADS} heads, got weights "
                f"{self.weights.shape}, bias {self.bias.shape}"
            )
        if not 1 <= self.active_heads <= MASK_ALL:
            raise ConfigError(f"active-heads mask {self.active_heads:#x} invalid")


@dataclass(frozen=True)
class ModelParams:
    backbone: BackboneParams
    head: HeadParams
    arch_tag: str  # "teacher" | "student"
    trained: bool = False

    @property
    def feature_dim(self) -> int:
        return self.head.weights.shape[1]


def _init_backbone(rng: RngStream, channels: tuple[int, ...], feature_dim: int) -> BackboneParams:
    stages = []
    c_in, side = INPUT_SHAPE[0], INPUT_SHAPE[1]
    for i, c_out in enumerate(channels):
        gen = rng.child("stage", i).generator()
        fan_in = c_in * ops.KERNEL_SIZE**2
        stages.append(Tensor._wrap(gen.normal(0.0, 1.0 / np.sqrt(fan_in), (c_out, c_in, 3, 3))))
        c_in, side = c_out, -(-side // STAGE_STRIDE)
    flat = c_in * side * side
    gen = rng.child("projection").generator()
    proj_w = Tensor._wrap(gen.normal(0.0, 1.0 / np.sqrt(flat), (feature_dim, flat)))
    return BackboneParams(tuple(stages), proj_w, Tensor.zeros((feature_dim,)), frozen=True)


def _init_model(rng: RngStream, channels: tuple[int, ...], feature_dim: int, tag: str) -> ModelParams:
    if feature_dim < N_HEADS:
        raise ConfigError(f"feature dim {feature_dim} must be >= {N_HEADS}")
    head = HeadParams(Tensor.zeros((N_HEADS, feature_dim)), Tensor.zeros((N_HEADS,)))
    return ModelParams(_init_backbone(rng, channels, feature_dim), head, tag)


def init_teacher(rng: RngStream, feature_dim: int = TEACHER_FEATURE_DIM) -> ModelParams:
    return _init_model(rng, _TEACHER_CHANNELS, feature_dim, "teacher")


def init_student(rng: RngStream, feature_dim: int = STUDENT_FEATURE_DIM) -> ModelParams:
    return _init_model(rng, _STUDENT_CHANNELS, feature_dim, "student")


def _check_frames(frames: np.ndarray) -> None:
    if frames.shape[1:] != INPUT_SHAPE:
        raise DimensionError(
            f"frame batch shape {frames.shape} does not match input {INPUT_SHAPE}"
        )


def features(params: ModelParams, frames) -> Tensor:
    """Frozen-backbone feature vectors for a batch (n, 3, 16, 16) -> (n, d)."""
    x = frames.array if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float64)
    _check_frames(x)
    h = Tensor._wrap(x)
    for kernels in params.backbone.conv_stages:
        h = ops.relu(ops.conv2d(h, kernels, STAGE_STRIDE))
    h = ops.flatten(h)
    return ops.tanh(ops.affine(h, params.backbone.proj_w, params.backbone.proj_b))


def forward_frames(params: ModelParams, frames) -> Tensor:
    """Per-frame logits for all 8 heads, batched: (n, 3, 16, 16) -> (n, 8)."""
    return ops.affine(features(params, frames), params.head.weights, params.head.bias)


def forward(params: ModelParams, frame) -> Tensor:
    """Logits for one frame (3, 16, 16) -> (8,); inactive heads are still emitted."""
    x = frame.array if isinstance(frame, Tensor) else np.asarray(frame, dtype=np.float64)
    if x.shape != INPUT_SHAPE:
        raise DimensionError(f"frame shape {x.shape} does not match input {INPUT_SHAPE}")
    return forward_frames(params, x[None]).reshape((N_HEADS,))


def head_probabilities(logits, temperature: float = 1.0) -> Tensor:
    """Per-head probability sigmoid(logit / temperature); works on (8,) or (n, 8)."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    z = logits.array if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    return ops.sigmoid(z / temperature)


def with_head(params: ModelParams, weights: Tensor, bias: Tensor, trained: bool | None = None) -> ModelParams:
    head = replace(params.head, weights=weights, bias=bias)
    return replace(params, head=head, trained=params.trained if trained is None else trained)


def with_mask(params: ModelParams, active_heads: int) -> ModelParams:
    return replace(params, head=replace(params.head, active_heads=active_heads))


def backbone_checksum(backbone: BackboneParams) -> str:
    digest = hashlib.sha256()
    for t in backbone.tensors():
        digest.update(snapshot_bytes(t))
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# checkpoint I/O: one JSON header line, then tensor snapshots in header order


def save_checkpoint(params: ModelParams, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path: str) -> ModelParams:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except ValueError as exc:
            raise SnapshotError(f"unreadable checkpoint header in {path}: {exc}") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise SnapshotError(f"{path} is not a model checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise SnapshotError(f"unsupported checkpoint version {header.get('version')}")
        stages = tuple(read_snapshot(fh) for _ in range(header["n_stages"]))
        proj_w, proj_b = read_snapshot(fh), read_snapshot(fh)
        head_w, head_b = read_snapshot(fh), read_snapshot(fh)
    backbone = BackboneParams(stages, proj_w, proj_b, frozen=bool(header["frozen"]))
    head = HeadParams(head_w, head_b, active_heads=int(header["active_heads"]))
    return ModelParams(backbone, head, str(header["arch_tag"]), trained=bool(header["trained"]))


def checkpoint_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch_tag": params.arch_tag,
        "feature_dim": params.feature_dim,
        "active_heads": params.head.active_heads,
        "trained": params.trained,
        "frozen": params.backbone.frozen,
        "n_stages": len(params.backbone.conv_stages),
    }
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for t in (*params.backbone.tensors(), params.head.weights, params.head.bias):
        buf.write(snapshot_bytes(t))
    return buf.getvalue()
