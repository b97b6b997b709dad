"""Training objectives with analytic logit gradients.

Three layers: the per-head reduced focal loss (cross-entropy that fades
out once the correct-class probability clears a cutoff), the masked
multi-head aggregate used for teacher fine-tuning, and the distillation
objective blending a hard supervised term with a temperature-softened
match to the teacher.  Batched variants used by the training loops live
alongside the single-sample forms and share the same kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InputError
from .heads import MASK_ALL, N_HEADS, active_heads
from .tensor import Tensor

P_CLAMP = 1e-7


@dataclass(frozen=True)
class RflConfig:
    gamma: float = 2.0
    cutoff: float = 0.5

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.cutoff <= 1:
            raise ConfigError(f"cutoff must be in (0, 1], got {self.cutoff}")


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.5
    tau: float = 2.0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class HeadWeights:
    values: tuple[float, ...] = (1.0,) * N_HEADS

    def __post_init__(self):
        if len(self.values) != N_HEADS:
            raise ConfigError(f"need {N_HEADS} head weights, got {len(self.values)}")
        if any(w < 0 for w in self.values):
            raise ConfigError("head weights must be >= 0")
        if not any(w > 0 for w in self.values):
            raise ConfigError("at least one head weight must be > 0")


def _label_bits(labels) -> np.ndarray:
    bits = getattr(labels, "bits", labels)
    arr = np.asarray(bits, dtype=np.float64)
    if arr.shape != (N_HEADS,):
        raise InputError(f"expected {N_HEADS} label bits, got shape {arr.shape}")
    return arr


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, P_CLAMP, 1.0 - P_CLAMP)


def _rfl_terms(p_t: np.ndarray, cfg: RflConfig):
    """Elementwise loss and d(loss)/d(p_t); p_t already clamped."""
    logp = np.log(p_t)
    below = p_t < cfg.cutoff
    ratio = (1.0 - p_t) / cfg.cutoff
    w = np.where(below, 1.0, ratio**cfg.gamma)
    loss = -w * logp
    # product rule through the modulating factor; dw/dp_t = 0 below the cutoff
    dw = np.where(below, 0.0, -(cfg.gamma / cfg.cutoff) * ratio ** (cfg.gamma - 1.0))
    dldp = -(dw * logp + w / p_t)
    return loss, dldp


def reduced_focal(p: float, y: int, cfg: RflConfig = RflConfig()) -> tuple[float, float]:
    """Loss and its gradient w.r.t. the logit behind probability ``p``."""
    pc = float(_clamp(np.asarray(p, dtype=np.float64)))
    p_t = pc if y else 1.0 - pc
    loss, dldp = _rfl_terms(np.asarray(p_t), cfg)
    dpt_dz = pc * (1.0 - pc) * (1.0 if y else -1.0)
    return float(loss), float(dldp * dpt_dz)


def _multihead_kernel(
    logits: np.ndarray,  # (n, 8)
    bits: np.ndarray,  # (n, 8)
    mask: int,
    weights: HeadWeights,
    cfg: RflConfig,
):
    """Batch loss, per-sample logit grads scaled for the batch mean, and
    per-head mean losses (0 at inactive heads)."""
    act = active_heads(mask)
    if not act:
        raise ConfigError("head mask selects no heads")
    w = np.zeros(N_HEADS)
    for h in act:
        w[h - 1] = weights.values[h - 1]
    wsum = w.sum()
    if wsum <= 0:
        raise ConfigError("active heads carry zero total weight")
    n = logits.shape[0]
    p = _clamp(expit(logits))
    p_t = np.where(bits > 0, p, 1.0 - p)
    loss_h, dldp = _rfl_terms(p_t, cfg)
    dpt_dz = p * (1.0 - p) * np.where(bits > 0, 1.0, -1.0)
    grads = dldp * dpt_dz * (w / (wsum * n))
    loss = float((loss_h * w).sum() / (wsum * n))
    is_active = np.zeros(N_HEADS, dtype=bool)
    is_active[[h - 1 for h in act]] = True
    head_means = np.where(is_active, loss_h.mean(axis=0), 0.0)
    return loss, grads, head_means


def multihead_loss(
    logits,
    labels,
    mask: int = MASK_ALL,
    weights: HeadWeights = HeadWeights(),
    cfg: RflConfig = RflConfig(),
) -> tuple[float, Tensor]:
    """Weighted mean of reduced focal losses over the active heads."""
    z = logits.array if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if z.shape != (N_HEADS,):
        raise InputError(f"expected logits shape ({N_HEADS},), got {z.shape}")
    bits = _label_bits(labels)
    loss, grads, _ = _multihead_kernel(z[None], bits[None], mask, weights, cfg)
    return loss, Tensor._wrap(grads[0])


def _distill_kernel(
    s_logits: np.ndarray,  # (n, 8)
    t_logits: np.ndarray,  # (n, 8)
    bits: np.ndarray,  # (n, 8); rows of unlabeled samples are ignored
    labeled: np.ndarray,  # (n,) bool
    cfg: DistillConfig,
    mask: int,
    supervised_rfl: RflConfig | None,
):
    act = active_heads(mask)
    if not act:
        raise ConfigError("head mask selects no heads")
    sel = np.array([h - 1 for h in act])
    n, n_act = s_logits.shape[0], len(sel)

    ps_tau = expit(s_logits[:, sel] / cfg.tau)
    pt_tau = expit(t_logits[:, sel] / cfg.tau)
    ps_c = _clamp(ps_tau)
    soft = -(pt_tau * np.log(ps_c) + (1.0 - pt_tau) * np.log(1.0 - ps_c))
    dsoft = (ps_tau - pt_tau) / cfg.tau

    ps1 = expit(s_logits[:, sel])
    y = bits[:, sel]
    if supervised_rfl is None:
        p_y = _clamp(np.where(y > 0, ps1, 1.0 - ps1))
        sup = -np.log(p_y)
        dsup = ps1 - y
    else:
        p_t = np.where(y > 0, _clamp(ps1), _clamp(1.0 - ps1))
        sup, dldp = _rfl_terms(p_t, supervised_rfl)
        dsup = dldp * ps1 * (1.0 - ps1) * np.where(y > 0, 1.0, -1.0)
    lab = labeled.astype(np.float64)[:, None]
    per_head = cfg.alpha * soft + (1.0 - cfg.alpha) * sup * lab
    dz = cfg.alpha * dsoft + (1.0 - cfg.alpha) * dsup * lab

    loss = float(per_head.sum() / (n_act * n))
    grads = np.zeros_like(s_logits)
    grads[:, sel] = dz / (n_act * n)
    head_means = np.zeros(N_HEADS)
    head_means[sel] = per_head.mean(axis=0)
    return loss, grads, head_means


def distill_loss(
    student_logits,
    teacher_logits,
    hard_label=None,
    cfg: DistillConfig = DistillConfig(),
    *,
    mask: int = MASK_ALL,
    supervised_rfl: RflConfig | None = None,
    unlabeled: bool = False,
) -> tuple[float, Tensor]:
    """Per-sample distillation loss, averaged over active heads.

    Each head blends a soft term matching the teacher's tempered
    probability (weight alpha) with a supervised log-loss on the hard
    label at temperature 1 (weight 1-alpha).  Samples designated
    ``unlabeled`` contribute only the soft term.  No gradient flows to
    the teacher.
    """
    s = student_logits.array if isinstance(student_logits, Tensor) else np.asarray(student_logits, dtype=np.float64)
    t = teacher_logits.array if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits, dtype=np.float64)
    if s.shape != (N_HEADS,) or t.shape != (N_HEADS,):
        raise InputError(
            f"expected student/teacher logits of shape ({N_HEADS},), got {s.shape} and {t.shape}"
        )
    if hard_label is None and not unlabeled:
        if cfg.alpha < 1:
            raise InputError("alpha < 1 requires a hard label (or an explicit unlabeled sample)")
        unlabeled = True
    bits = np.zeros(N_HEADS) if (unlabeled or hard_label is None) else _label_bits(hard_label)
    labeled = np.array([not unlabeled and hard_label is not None])
    loss, grads, _ = _distill_kernel(s[None], t[None], bits[None], labeled, cfg, mask, supervised_rfl)
    return loss, Tensor._wrap(grads[0])
