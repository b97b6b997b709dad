"""Training-loop tests: head fine-tuning, distillation, run records.

The backbone is frozen by contract, so every training run must leave it
byte-identical; full runs must be bitwise reproducible from (config,
seed) alone.
"""

import dataclasses
import json
import math

import numpy as np
import pytest

from spoofbench import (
    ConfigError,
    DistillRunConfig,
    InputError,
    NonFiniteLossError,
    RngStream,
    RunRecord,
    TaftConfig,
    convergence_probe,
    distill,
    generate_domain,
    init_student,
    init_teacher,
    taft,
)
from spoofbench.bench import DESK_LR, default_domain_specs, desk_distill_config, desk_taft_config
from spoofbench.heads import MASK_ALL, MASK_OVERALL, mask_of
from spoofbench.model import backbone_checksum, checkpoint_bytes
from spoofbench.train import _check_finite, load_record, save_record, variant_name


@pytest.fixture(scope="module")
def dataset():
    lab, _ = default_domain_specs(17)
    return generate_domain(lab, 120)


@pytest.fixture(scope="module")
def taft_cfg():
    return desk_taft_config(MASK_ALL, seed=17)


@pytest.fixture(scope="module")
def trained_teacher(dataset, taft_cfg):
    model = init_teacher(RngStream(17).child("model", "teacher"))
    return taft(dataset, taft_cfg, model)


@pytest.fixture(scope="module")
def student_init():
    return init_student(RngStream(17).child("model", "student"))


# ---------------------------------------------------------------------------
# config validation


def test_taft_config_validation():
    with pytest.raises(ConfigError):
        TaftConfig(epochs=0)
    with pytest.raises(ConfigError):
        TaftConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TaftConfig(head_mask=0)


def test_distill_config_validation():
    with pytest.raises(ConfigError):
        DistillRunConfig(epochs=0)
    with pytest.raises(ConfigError):
        DistillRunConfig(batch_size=-1)
    with pytest.raises(ConfigError):
        DistillRunConfig(unlabeled_fraction=1.0)
    with pytest.raises(ConfigError):
        DistillRunConfig(unlabeled_fraction=-0.1)
    with pytest.raises(ConfigError):
        DistillRunConfig(head_mask=0)


def test_variant_names():
    assert variant_name(MASK_OVERALL) == "v1"
    assert variant_name(MASK_ALL) == "v2"
    assert variant_name(mask_of(1, 8)) == "mask-0x81"


# ---------------------------------------------------------------------------
# taft


def test_taft_smoke_and_record(dataset, taft_cfg, trained_teacher):
    trained, record = trained_teacher
    assert trained.trained
    assert trained.head.active_heads == MASK_ALL
    assert record.kind == "taft"
    assert record.variant == "v2"
    assert record.seed == 17
    assert len(record.epoch_losses) == taft_cfg.epochs
    assert len(record.epoch_head8_losses) == taft_cfg.epochs
    assert all(math.isfinite(v) for v in record.epoch_losses + record.epoch_head8_losses)
    assert record.wall_time_s > 0
    # records store the config as JSON represents it, so round-trips compare equal
    assert record.config == json.loads(json.dumps(dataclasses.asdict(taft_cfg)))


def test_taft_loss_decreases(trained_teacher):
    _, record = trained_teacher
    assert record.epoch_losses[-1] < record.epoch_losses[0]
    assert record.epoch_head8_losses[-1] < record.epoch_head8_losses[0]


def test_taft_moves_the_head(dataset, taft_cfg, trained_teacher):
    trained, _ = trained_teacher
    fresh = init_teacher(RngStream(17).child("model", "teacher"))
    assert not np.array_equal(trained.head.weights.array, fresh.head.weights.array)


def test_taft_leaves_backbone_untouched(trained_teacher):
    trained, _ = trained_teacher
    fresh = init_teacher(RngStream(17).child("model", "teacher"))
    assert backbone_checksum(trained.backbone) == backbone_checksum(fresh.backbone)


def test_taft_bitwise_reproducible(dataset, taft_cfg):
    runs = []
    for _ in range(2):
        model = init_teacher(RngStream(17).child("model", "teacher"))
        trained, record = taft(dataset, taft_cfg, model)
        runs.append((checkpoint_bytes(trained), record.epoch_losses))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_taft_seed_changes_the_run(dataset, taft_cfg, trained_teacher):
    trained, record = trained_teacher
    model = init_teacher(RngStream(17).child("model", "teacher"))
    other, other_record = taft(dataset, dataclasses.replace(taft_cfg, seed=18), model)
    assert other_record.epoch_losses != record.epoch_losses
    assert checkpoint_bytes(other) != checkpoint_bytes(trained)


def test_taft_mask_restricts_supervision(dataset, taft_cfg):
    model = init_teacher(RngStream(17).child("model", "teacher"))
    cfg = dataclasses.replace(taft_cfg, head_mask=MASK_OVERALL, epochs=1)
    trained, record = taft(dataset, cfg, model)
    assert record.variant == "v1"
    assert trained.head.active_heads == MASK_OVERALL
    # inactive head rows receive no gradient, only decoupled weight decay,
    # and the head starts at zero, so they must remain exactly zero
    assert np.array_equal(trained.head.weights.array[:7], np.zeros((7, 32)))


def test_taft_requires_train_split(dataset, taft_cfg):
    model = init_teacher(RngStream(17).child("model", "teacher"))
    relabeled = [dataclasses.replace(s, split="test") for s in dataset if s.split != "train"]
    with pytest.raises(InputError):
        taft(relabeled, taft_cfg, model)


def test_taft_requires_frozen_backbone(dataset, taft_cfg):
    model = init_teacher(RngStream(17).child("model", "teacher"))
    thawed = dataclasses.replace(model, backbone=dataclasses.replace(model.backbone, frozen=False))
    with pytest.raises(InputError):
        taft(dataset, taft_cfg, thawed)


# ---------------------------------------------------------------------------
# distill


def test_distill_smoke_and_record(dataset, trained_teacher, student_init):
    teacher, _ = trained_teacher
    cfg = desk_distill_config(seed=21)
    student, record = distill(teacher, dataset, cfg, student_init)
    assert student.trained
    assert student.arch_tag == "student"
    assert record.kind == "distill"
    assert record.variant == "student"
    assert len(record.epoch_losses) == cfg.epochs
    assert all(math.isfinite(v) for v in record.epoch_losses)
    assert record.epoch_losses[-1] < record.epoch_losses[0]


def test_distill_leaves_teacher_and_backbone_untouched(dataset, trained_teacher, student_init):
    teacher, _ = trained_teacher
    before = checkpoint_bytes(teacher)
    student, _ = distill(teacher, dataset, desk_distill_config(seed=21), student_init)
    assert checkpoint_bytes(teacher) == before
    assert backbone_checksum(student.backbone) == backbone_checksum(student_init.backbone)


def test_distill_bitwise_reproducible(dataset, trained_teacher, student_init):
    teacher, _ = trained_teacher
    cfg = desk_distill_config(seed=21)
    a, rec_a = distill(teacher, dataset, cfg, student_init)
    b, rec_b = distill(teacher, dataset, cfg, student_init)
    assert checkpoint_bytes(a) == checkpoint_bytes(b)
    assert rec_a.epoch_losses == rec_b.epoch_losses


def test_distill_unlabeled_fraction_matters(dataset, trained_teacher, student_init):
    teacher, _ = trained_teacher
    cfg = desk_distill_config(seed=21)
    half = distill(teacher, dataset, cfg, student_init)[1]
    none = distill(teacher, dataset, dataclasses.replace(cfg, unlabeled_fraction=0.0), student_init)[1]
    assert half.epoch_losses != none.epoch_losses


def test_distill_requires_trained_teacher(dataset, student_init):
    raw = init_teacher(RngStream(17).child("model", "teacher"))
    with pytest.raises(InputError):
        distill(raw, dataset, desk_distill_config(seed=21), student_init)


def test_distill_rejects_wrong_student_arch(dataset, trained_teacher):
    teacher, _ = trained_teacher
    with pytest.raises(InputError):
        distill(teacher, dataset, desk_distill_config(seed=21), init_teacher(RngStream(3).child("m")))


def test_distill_rejects_oversized_student(dataset, trained_teacher):
    teacher, _ = trained_teacher
    wide = init_student(RngStream(3).child("m"), feature_dim=teacher.feature_dim + 8)
    with pytest.raises(ConfigError):
        distill(teacher, dataset, desk_distill_config(seed=21), wide)


# ---------------------------------------------------------------------------
# loss guards and records


def test_nonfinite_loss_guard():
    _check_finite(0.3, 4)
    for bad in (float("nan"), float("inf"), -float("inf")):
        with pytest.raises(NonFiniteLossError, match="batch 7"):
            _check_finite(bad, 7)


def test_run_record_round_trip(tmp_path, trained_teacher):
    _, record = trained_teacher
    path = tmp_path / "record.json"
    save_record(record, str(path))
    assert load_record(str(path)) == record


# ---------------------------------------------------------------------------
# convergence probe


def probe_record(mask, losses, seed=3):
    cfg = json.loads(json.dumps(dataclasses.asdict(TaftConfig(head_mask=mask, seed=seed))))
    return RunRecord(
        kind="taft",
        variant=variant_name(mask),
        config=cfg,
        epoch_losses=list(losses),
        epoch_head8_losses=list(losses),
        seed=seed,
    )


def test_convergence_probe_fields():
    v1 = probe_record(MASK_OVERALL, [0.5, 0.4, 0.36])
    v2 = probe_record(MASK_ALL, [0.45, 0.34, 0.30])
    probe = convergence_probe(v1, v2, threshold=0.35)
    assert probe["threshold"] == 0.35
    assert probe["v1"]["variant"] == "v1"
    assert probe["v1"]["epochs_to_threshold"] is None
    assert probe["v2"]["epochs_to_threshold"] == 2
    assert probe["v2"]["final_head8_loss"] == 0.30
    assert probe["v2_not_slower"] is True
    assert probe["v2_dominates"] is True


def test_convergence_probe_no_domination_when_curves_cross():
    v1 = probe_record(MASK_OVERALL, [0.5, 0.30])
    v2 = probe_record(MASK_ALL, [0.45, 0.40])
    probe = convergence_probe(v1, v2)
    assert probe["v2_dominates"] is False
    assert probe["v2_not_slower"] is False  # v1 reaches 0.35 at epoch 2, v2 never


def test_convergence_probe_rejects_mismatched_configs():
    v1 = probe_record(MASK_OVERALL, [0.5], seed=3)
    v2 = probe_record(MASK_ALL, [0.5], seed=4)
    with pytest.raises(InputError):
        convergence_probe(v1, v2)


def test_desk_lr_is_recorded_in_config(taft_cfg):
    assert taft_cfg.optimizer.lr == DESK_LR
