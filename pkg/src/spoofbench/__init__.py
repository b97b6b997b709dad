"""Desk-scale face anti-spoofing workbench.

Synthetic multi-domain session data, frozen-backbone multi-head
classifiers, reduced-focal and distillation training, and the full
biometric error-rate protocol (HTER/EER/APCER/BPCER/ACER).
"""

from .data import (
    AttributeLabels,
    DomainSpec,
    Frame,
    Session,
    generate_domain,
    read_manifest,
    write_manifest,
)
from .errors import (
    ConfigError,
    DimensionError,
    InputError,
    LabelValidationError,
    ManifestError,
    NonFiniteLossError,
    ProtocolError,
    SnapshotError,
    SpoofbenchError,
    TapeStateError,
)
from .evaluate import (
    AcerReport,
    ErrorRates,
    ProtocolResult,
    SessionScore,
    acer,
    eer_sweep,
    error_rates,
    run_protocol,
    score_session,
    score_sessions,
)
from .heads import HEAD_SEMANTICS, MASK_ALL, MASK_OVERALL
from .losses import DistillConfig, HeadWeights, RflConfig, distill_loss, multihead_loss, reduced_focal
from .model import (
    ModelParams,
    forward,
    head_probabilities,
    init_student,
    init_teacher,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamWConfig, OptimizerState, adamw_step, init_state
from .rng import RngStream
from .tensor import (
    Tensor,
    read_snapshot,
    snapshot_bytes,
    tensor_from_snapshot_bytes,
    write_snapshot,
)
from .train import DistillRunConfig, RunRecord, TaftConfig, convergence_probe, distill, taft

__version__ = "0.1.0"

__all__ = [
    "AcerReport",
    "AdamWConfig",
    "AttributeLabels",
    "ConfigError",
    "DimensionError",
    "DistillConfig",
    "DistillRunConfig",
    "DomainSpec",
    "ErrorRates",
    "Frame",
    "HEAD_SEMANTICS",
    "HeadWeights",
    "InputError",
    "LabelValidationError",
    "MASK_ALL",
    "MASK_OVERALL",
    "ManifestError",
    "ModelParams",
    "NonFiniteLossError",
    "OptimizerState",
    "ProtocolError",
    "ProtocolResult",
    "RflConfig",
    "RngStream",
    "RunRecord",
    "Session",
    "SessionScore",
    "SnapshotError",
    "SpoofbenchError",
    "TaftConfig",
    "TapeStateError",
    "Tensor",
    "acer",
    "adamw_step",
    "convergence_probe",
    "distill",
    "distill_loss",
    "eer_sweep",
    "error_rates",
    "forward",
    "generate_domain",
    "head_probabilities",
    "init_state",
    "init_student",
    "init_teacher",
    "load_checkpoint",
    "multihead_loss",
    "read_manifest",
    "read_snapshot",
    "reduced_focal",
    "run_protocol",
    "save_checkpoint",
    "score_session",
    "score_sessions",
    "snapshot_bytes",
    "taft",
    "tensor_from_snapshot_bytes",
    "write_manifest",
    "write_snapshot",
    "__version__",
]
