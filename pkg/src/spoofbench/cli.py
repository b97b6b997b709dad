"""Command-line experiment runner.

Subcommands: generate | train | distill | eval | report.  Exit codes: 0
success, 1 internal invariant/assertion failure, 2 usage or input error.
``SPOOFBENCH_SEED`` overrides the config seed.  Every command records the
files it produced under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import SEED_ENV_VAR, ExperimentConfig, parse_experiment_config
from .data import generate_domain, read_manifest, split_counts, write_manifest
from .errors import (
    ConfigError,
    InputError,
    LabelValidationError,
    ManifestError,
    ProtocolError,
    SnapshotError,
    SpoofbenchError,
)
from .evaluate import comparison_table, run_protocol, save_protocol_result, score_sessions, write_scores_csv
from .heads import MASK_ALL, MASK_OVERALL
from .model import init_student, init_teacher, load_checkpoint, save_checkpoint
from .rng import RngStream
from .train import distill, save_record, taft, variant_name

USAGE_ERRORS = (
    InputError,
    ConfigError,
    ManifestError,
    LabelValidationError,
    ProtocolError,
    SnapshotError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
)


def _load_config(path: str) -> ExperimentConfig:
    override = os.environ.get(SEED_ENV_VAR)
    if override is not None:
        try:
            override = int(override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {override!r}") from None
    return parse_experiment_config(path, seed_override=override)


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_file_manifest(out_dir: str, command: str, produced: list[str]) -> None:
    rel = sorted(os.path.relpath(p, out_dir) for p in produced)
    path = os.path.join(out_dir, f"{command}_files.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"command": command, "files": rel}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise InputError(f"{what} not found: {path}")
    return path


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    out = _ensure_out(args.out)
    names = [args.domain] if args.domain else sorted(cfg.domains)
    produced = []
    for name in names:
        spec, n_sessions = cfg.domain(name)
        sessions = generate_domain(spec, n_sessions)
        path = os.path.join(out, f"{name}.jsonl")
        write_manifest(sessions, path, inline=not args.frame_files)
        produced.append(path)
        counts = split_counts(sessions)
        print(
            f"domain {name}: train {counts['train']}  calib {counts['calib']}  "
            f"test {counts['test']}  (total {len(sessions)})"
        )
    _write_file_manifest(out, "generate", produced)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = _ensure_out(args.out)
    dataset = read_manifest(_require_file(args.data, "training manifest"))
    mask = MASK_OVERALL if args.variant == "v1" else MASK_ALL
    taft_cfg = replace(cfg.taft, head_mask=mask)
    model = init_teacher(RngStream(cfg.seed).child("init-teacher"))
    trained, record = taft(dataset, taft_cfg, model)
    ckpt = os.path.join(out, f"teacher_{args.variant}.ckpt")
    save_checkpoint(trained, ckpt)
    record.checkpoint_path = ckpt
    record_path = os.path.join(out, f"teacher_{args.variant}_record.json")
    save_record(record, record_path)
    _write_file_manifest(out, f"train_{args.variant}", [ckpt, record_path])
    losses = ", ".join(f"{v:.4f}" for v in record.epoch_losses)
    print(f"trained {args.variant} ({record.wall_time_s:.1f}s); per-epoch loss: {losses}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_distill(args) -> int:
    cfg = _load_config(args.config)
    out = _ensure_out(args.out)
    teacher = load_checkpoint(_require_file(args.teacher, "teacher checkpoint"))
    dataset = read_manifest(_require_file(args.data, "training manifest"))
    student_init = init_student(RngStream(cfg.seed).child("init-student"))
    student, record = distill(teacher, dataset, cfg.distill, student_init)
    ckpt = os.path.join(out, "student.ckpt")
    save_checkpoint(student, ckpt)
    record.checkpoint_path = ckpt
    record_path = os.path.join(out, "student_record.json")
    save_record(record, record_path)
    _write_file_manifest(out, "distill", [ckpt, record_path])
    losses = ", ".join(f"{v:.4f}" for v in record.epoch_losses)
    print(f"distilled student ({record.wall_time_s:.1f}s); per-epoch loss: {losses}")
    print(f"checkpoint: {ckpt}")
    return 0


def _method_name(params) -> str:
    if params.arch_tag == "teacher":
        return f"teacher-{variant_name(params.head.active_heads)}"
    return params.arch_tag


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    out = _ensure_out(args.out)
    params = load_checkpoint(_require_file(args.model, "model checkpoint"))
    method = args.method or _method_name(params)
    if args.protocol:
        if ":" not in args.protocol:
            raise InputError(f"--protocol must look like train:eval, got {args.protocol!r}")
        pairs = [tuple(args.protocol.split(":", 1))]
    else:
        pairs = list(cfg.protocols)
    if not pairs:
        raise InputError("no protocols: pass --protocol or list pairs in the config")
    policy = args.policy or cfg.policy
    produced = []
    rows = []
    for train_dom, eval_dom in pairs:
        train_manifest = _require_file(os.path.join(args.data_dir, f"{train_dom}.jsonl"), "manifest")
        eval_manifest = _require_file(os.path.join(args.data_dir, f"{eval_dom}.jsonl"), "manifest")
        train_sessions = read_manifest(train_manifest)
        eval_sessions = read_manifest(eval_manifest)
        result = run_protocol(params, train_sessions, eval_sessions, policy, cfg.aggregator)
        tag = f"{method}_{train_dom}_to_{eval_dom}"
        json_path = os.path.join(out, f"eval_{tag}.json")
        save_protocol_result(result, json_path, method=method)
        scores = score_sessions(params, [s for s in eval_sessions if s.split == "test"], cfg.aggregator)
        csv_path = os.path.join(out, f"eval_{tag}_scores.csv")
        write_scores_csv(scores, csv_path)
        produced += [json_path, csv_path]
        rows.append(
            {
                "method": method,
                "protocol": f"{train_dom}->{eval_dom}",
                "hter": result.rates.hter,
                "acer": result.acer_report.acer,
                "eer": result.eer,
            }
        )
    table = comparison_table(rows)
    table_path = os.path.join(out, f"eval_{method}_table.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    produced.append(table_path)
    _write_file_manifest(out, "eval", produced)
    print(table)
    return 0


def _collect_eval_jsons(runs_dir: str) -> list[dict]:
    found = []
    for root, _, files in os.walk(runs_dir):
        for name in sorted(files):
            if name.startswith("eval_") and name.endswith(".json"):
                with open(os.path.join(root, name), encoding="utf-8") as fh:
                    payload = json.load(fh)
                if "hter" in payload:
                    found.append(payload)
    return found


def cmd_report(args) -> int:
    if not os.path.isdir(args.runs):
        raise InputError(f"runs directory not found: {args.runs}")
    payloads = _collect_eval_jsons(args.runs)
    if not payloads:
        raise InputError(f"no evaluation results under {args.runs}")
    groups: dict[tuple[str, str], list[dict]] = {}
    for p in payloads:
        key = (p.get("method", "model"), f"{p['train_domain']}->{p['eval_domain']}")
        groups.setdefault(key, []).append(p)
    rows = []
    for (method, protocol), entries in sorted(groups.items()):
        if len(entries) == 1:
            e = entries[0]
            rows.append(
                {"method": method, "protocol": protocol, "hter": e["hter"], "acer": e["acer"], "eer": e["eer"]}
            )
        else:
            def agg(key: str) -> str:
                vals = np.array([e[key] for e in entries]) * 100.0
                iqr = np.percentile(vals, 75) - np.percentile(vals, 25)
                return f"{np.median(vals):.2f} ± {iqr:.2f}"
            rows.append(
                {
                    "method": f"{method} (n={len(entries)})",
                    "protocol": protocol,
                    "hter": agg("hter"),
                    "acer": agg("acer"),
                    "eer": agg("eer"),
                }
            )
    table = comparison_table(rows)
    print(table)
    if args.out:
        out = _ensure_out(args.out)
        path = os.path.join(out, "report.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
        _write_file_manifest(out, "report", [path])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spoofbench",
        description="Synthetic face anti-spoofing workbench: data generation, "
        "two-stage training, biometric evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize domain manifests")
    p.add_argument("--config", required=True)
    p.add_argument("--domain", help="single domain name (default: all in config)")
    p.add_argument("--out", required=True)
    p.add_argument("--frame-files", action="store_true", help="write frames as files, not inline")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="fine-tune a teacher head")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", choices=("v1", "v2"), required=True)
    p.add_argument("--data", required=True, help="training manifest path")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("distill", help="distill a student from a trained teacher")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_distill)

    p = sub.add_parser("eval", help="run train->eval protocols for a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True, help="directory holding <domain>.jsonl manifests")
    p.add_argument("--protocol", help="train:eval pair (default: all pairs in config)")
    p.add_argument("--policy", choices=("fixed-0.5", "eer-on-calib", "oracle-best"))
    p.add_argument("--method", help="method name for tables (default: derived from checkpoint)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="consolidate evaluation results into one table")
    p.add_argument("--runs", required=True, help="directory scanned recursively for eval results")
    p.add_argument("--out", help="optionally write report.txt here")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SpoofbenchError, AssertionError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1


def console() -> None:
    sys.exit(main())
