"""Two-stage training: supervised head fine-tuning, then distillation.

Stage one fits the teacher's 8-head classifier on augmented labeled
frames with the masked multi-head loss; the backbone stays frozen.
Stage two fits a student head to match the trained teacher's tempered
per-head probabilities (plus the hard labels on the labeled portion).
Both stages are deterministic given their config seed, and the shuffle
and augmentation streams depend only on that seed, never on the head
mask, so V1 and V2 runs see byte-identical data order.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .augment import AugmentConfig, augment_array
from .data import filter_split
from .errors import ConfigError, InputError, NonFiniteLossError
from .heads import MASK_ALL, OVERALL_HEAD, active_heads
from .losses import DistillConfig, HeadWeights, RflConfig, _distill_kernel, _multihead_kernel
from .model import ModelParams, features, with_head, with_mask
from .optim import AdamWConfig, adamw_step, init_state
from .rng import RngStream
from .tensor import Tensor


@dataclass(frozen=True)
class TaftConfig:
    epochs: int = 3
    batch_size: int = 32
    head_mask: int = MASK_ALL
    optimizer: AdamWConfig = AdamWConfig()
    loss: RflConfig = RflConfig()
    head_weights: HeadWeights = HeadWeights()
    augment: AugmentConfig = AugmentConfig()
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not active_heads(self.head_mask):
            raise ConfigError("head mask selects no heads")


@dataclass(frozen=True)
class DistillRunConfig:
    distill: DistillConfig = DistillConfig()
    optimizer: AdamWConfig = AdamWConfig()
    epochs: int = 3
    batch_size: int = 32
    unlabeled_fraction: float = 0.5
    head_mask: int = MASK_ALL
    supervised_rfl: RflConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0 <= self.unlabeled_fraction < 1:
            raise ConfigError(
                f"unlabeled fraction must lie in [0, 1), got {self.unlabeled_fraction}"
            )
        if not active_heads(self.head_mask):
            raise ConfigError("head mask selects no heads")


@dataclass
class RunRecord:
    kind: str  # "taft" | "distill"
    variant: str
    config: dict
    epoch_losses: list[float] = field(default_factory=list)
    epoch_head8_losses: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0
    seed: int = 0
    checkpoint_path: str | None = None


def save_record(record: RunRecord, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_record(path: str) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        return RunRecord(**json.load(fh))


def variant_name(head_mask: int) -> str:
    if head_mask == 1 << (OVERALL_HEAD - 1):
        return "v1"
    if head_mask == MASK_ALL:
        return "v2"
    return f"mask-0x{head_mask:02x}"


def _json_config(cfg) -> dict:
    """Config dict as JSON would store it (tuples as lists), so records
    compare equal whether they were kept in memory or reloaded."""
    return json.loads(json.dumps(asdict(cfg)))


def _train_frames(dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack train-split frames: pixels (n, 3, 16, 16), label bits (n, 8),
    session index per frame (n,)."""
    train = filter_split(dataset, "train")
    if not train:
        raise InputError("dataset has no train split")
    pixels = np.concatenate([s.frames_array() for s in train])
    bits = np.concatenate(
        [np.tile(s.labels.as_array(), (len(s.frames), 1)) for s in train]
    )
    owner = np.concatenate(
        [np.full(len(s.frames), i, dtype=int) for i, s in enumerate(train)]
    )
    return pixels, bits, owner


def _check_finite(loss: float, batch_id: int) -> None:
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"batch {batch_id}: loss is {loss}")


def taft(dataset, cfg: TaftConfig, model: ModelParams) -> tuple[ModelParams, RunRecord]:
    """Supervised fine-tuning of the classifier head on the train split."""
    if not model.backbone.frozen:
        raise InputError("backbone must be frozen for head fine-tuning")
    start = time.perf_counter()
    pixels, bits, _ = _train_frames(dataset)
    n = pixels.shape[0]
    root = RngStream(cfg.seed)
    params = {"head_w": model.head.weights, "head_b": model.head.bias}
    state = init_state(params)
    record = RunRecord(kind="taft", variant=variant_name(cfg.head_mask), config=_json_config(cfg), seed=cfg.seed)

    batch_id = 0
    for epoch in range(cfg.epochs):
        order = root.child("shuffle", epoch).generator().permutation(n)
        loss_sum = 0.0
        head8_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = np.stack(
                [
                    augment_array(pixels[i], cfg.augment, root.child("augment", epoch, int(i)))
                    for i in idx
                ]
            )
            feats = features(model, batch)
            tape = ops.Tape()
            logits = ops.affine(feats, params["head_w"], params["head_b"], tape)
            loss, dlogits, head_means = _multihead_kernel(
                logits.array, bits[idx], cfg.head_mask, cfg.head_weights, cfg.loss
            )
            _check_finite(loss, batch_id)
            (_, dw, db), = tape.backward(dlogits)
            params, state = adamw_step(params, {"head_w": dw, "head_b": db}, state, cfg.optimizer)
            loss_sum += loss * len(idx)
            head8_sum += head_means[OVERALL_HEAD - 1] * len(idx)
            batch_id += 1
        record.epoch_losses.append(float(loss_sum / n))
        record.epoch_head8_losses.append(float(head8_sum / n))

    trained = with_mask(
        with_head(model, params["head_w"], params["head_b"], trained=True), cfg.head_mask
    )
    record.wall_time_s = time.perf_counter() - start
    return trained, record


def distill(
    teacher: ModelParams,
    dataset,
    cfg: DistillRunConfig,
    student_init: ModelParams,
) -> tuple[ModelParams, RunRecord]:
    """Fit the student head to the frozen teacher's tempered probabilities.

    Frames are used unaugmented, which keeps both feature sets cacheable;
    a configured fraction of train sessions is treated as unlabeled and
    contributes only the soft term.
    """
    if not teacher.trained:
        raise InputError("distillation requires a trained teacher")
    if student_init.arch_tag != "student":
        raise InputError(f"student init has arch tag {student_init.arch_tag!r}, expected 'student'")
    if student_init.feature_dim > teacher.feature_dim:
        raise ConfigError(
            f"student feature dim {student_init.feature_dim} exceeds teacher's {teacher.feature_dim}"
        )
    if not student_init.backbone.frozen:
        raise InputError("student backbone must be frozen")
    start = time.perf_counter()
    pixels, bits, owner = _train_frames(dataset)
    n = pixels.shape[0]
    n_sessions = int(owner.max()) + 1
    root = RngStream(cfg.seed)

    n_unlabeled = int(round(cfg.unlabeled_fraction * n_sessions))
    unlabeled_sessions = set(
        root.child("unlabeled").generator().permutation(n_sessions)[:n_unlabeled].tolist()
    )
    labeled = np.array([o not in unlabeled_sessions for o in owner])

    # frozen backbones on fixed frames: compute both feature sets once
    t_logits = np.empty((n, 8))
    s_feats = np.empty((n, student_init.feature_dim))
    for lo in range(0, n, 1024):
        chunk = pixels[lo : lo + 1024]
        t_feats = features(teacher, chunk)
        t_logits[lo : lo + chunk.shape[0]] = ops.affine(
            t_feats, teacher.head.weights, teacher.head.bias
        ).array
        s_feats[lo : lo + chunk.shape[0]] = features(student_init, chunk).array

    params = {"head_w": student_init.head.weights, "head_b": student_init.head.bias}
    state = init_state(params)
    record = RunRecord(
        kind="distill", variant="student", config=_json_config(cfg), seed=cfg.seed
    )

    batch_id = 0
    for epoch in range(cfg.epochs):
        order = root.child("shuffle", epoch).generator().permutation(n)
        loss_sum = 0.0
        head8_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            tape = ops.Tape()
            logits = ops.affine(Tensor._wrap(s_feats[idx]), params["head_w"], params["head_b"], tape)
            loss, dlogits, head_means = _distill_kernel(
                logits.array,
                t_logits[idx],
                bits[idx],
                labeled[idx],
                cfg.distill,
                cfg.head_mask,
                cfg.supervised_rfl,
            )
            _check_finite(loss, batch_id)
            (_, dw, db), = tape.backward(dlogits)
            params, state = adamw_step(params, {"head_w": dw, "head_b": db}, state, cfg.optimizer)
            loss_sum += loss * len(idx)
            head8_sum += head_means[OVERALL_HEAD - 1] * len(idx)
            batch_id += 1
        record.epoch_losses.append(float(loss_sum / n))
        record.epoch_head8_losses.append(float(head8_sum / n))

    student = with_mask(
        with_head(student_init, params["head_w"], params["head_b"], trained=True), cfg.head_mask
    )
    record.wall_time_s = time.perf_counter() - start
    return student, record


def convergence_probe(v1_record: RunRecord, v2_record: RunRecord, threshold: float = 0.35) -> dict:
    """Compare head-8 loss trajectories of two runs that differ only in the
    head mask.  Purely descriptive; no pass/fail."""
    cfg1 = dict(v1_record.config)
    cfg2 = dict(v2_record.config)
    cfg1.pop("head_mask", None)
    cfg2.pop("head_mask", None)
    if cfg1 != cfg2:
        raise InputError("records are not comparable: configs differ beyond the head mask")

    def stats(rec: RunRecord) -> dict:
        losses = rec.epoch_head8_losses
        to_thr = next((e + 1 for e, v in enumerate(losses) if v <= threshold), None)
        return {
            "variant": rec.variant,
            "epochs_to_threshold": to_thr,
            "loss_variance": float(np.var(losses)) if losses else 0.0,
            "final_head8_loss": losses[-1] if losses else None,
            "head8_losses": list(losses),
        }

    s1, s2 = stats(v1_record), stats(v2_record)
    e1 = s1["epochs_to_threshold"] or float("inf")
    e2 = s2["epochs_to_threshold"] or float("inf")
    l1, l2 = v1_record.epoch_head8_losses, v2_record.epoch_head8_losses
    return {
        "threshold": threshold,
        "v1": s1,
        "v2": s2,
        "v2_not_slower": e2 <= e1,
        "v2_dominates": bool(l1 and l2 and len(l1) == len(l2) and all(b < a for a, b in zip(l1, l2))),
    }
