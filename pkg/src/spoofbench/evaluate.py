"""Session scoring and biometric error metrics.

A session's spoof score is the aggregate of per-frame head-8
probabilities; higher means more likely attack.  The decision rule at a
threshold t is: score >= t rejects the session as an attack.  On top of
that sit FAR/FRR/HTER, the EER sweep, APCER/BPCER/ACER (max APCER over
attack types when several are present) and the train-domain /
eval-domain protocol runner.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import Session, filter_split, read_manifest
from .errors import ConfigError, InputError, ProtocolError
from .heads import OVERALL_HEAD
from .model import ModelParams, forward_frames, head_probabilities

AGGREGATORS = {"mean": np.mean, "median": np.median, "max": np.max}
THRESHOLD_POLICIES = ("fixed-0.5", "eer-on-calib", "oracle-best")
HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class SessionScore:
    session_id: str
    domain_tag: str
    frame_scores: tuple[float, ...]
    aggregate: float
    true_label: int  # 1 = attack
    attack_type: str = ""


@dataclass(frozen=True)
class ErrorRates:
    far: float
    frr: float
    hter: float
    threshold: float


@dataclass(frozen=True)
class AcerReport:
    apcer: float
    bpcer: float
    acer: float
    threshold: float
    per_type: dict[str, float]


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    roc: tuple[tuple[float, float], ...]  # (FAR, 1-FRR) per swept threshold


@dataclass(frozen=True)
class ProtocolResult:
    train_domain: str
    eval_domain: str
    policy: str
    rates: ErrorRates
    acer_report: AcerReport
    eer: float
    eer_threshold: float
    histograms: dict


def _aggregate(values: np.ndarray, aggregator: str) -> float:
    try:
        fn = AGGREGATORS[aggregator]
    except KeyError:
        raise ConfigError(f"aggregator must be one of {sorted(AGGREGATORS)}, got {aggregator!r}") from None
    return float(fn(values))


def score_session(params: ModelParams, session: Session, aggregator: str = "mean") -> SessionScore:
    if not session.frames:
        raise InputError(f"session {session.id} has no frames")
    return score_sessions(params, [session], aggregator)[0]


def score_sessions(
    params: ModelParams,
    sessions,
    aggregator: str = "mean",
    batch_frames: int = 1024,
) -> list[SessionScore]:
    """Vectorized scoring: per-frame head-8 probability, then aggregation."""
    sessions = list(sessions)
    if not sessions:
        return []
    counts = [len(s.frames) for s in sessions]
    if min(counts) == 0:
        raise InputError("cannot score an empty session")
    frames = np.concatenate([s.frames_array() for s in sessions])
    probs = np.empty(frames.shape[0])
    for lo in range(0, frames.shape[0], batch_frames):
        batch = frames[lo : lo + batch_frames]
        logits = forward_frames(params, batch)
        probs[lo : lo + batch.shape[0]] = head_probabilities(logits).array[:, OVERALL_HEAD - 1]
    out = []
    offset = 0
    for sess, n in zip(sessions, counts):
        fs = probs[offset : offset + n]
        offset += n
        out.append(
            SessionScore(
                session_id=sess.id,
                domain_tag=sess.domain_tag,
                frame_scores=tuple(float(p) for p in fs),
                aggregate=_aggregate(fs, aggregator),
                true_label=1 if sess.labels.is_attack else 0,
                attack_type=sess.attack_type,
            )
        )
    return out


def _partition(scores) -> tuple[list[SessionScore], list[SessionScore]]:
    scores = list(scores)
    bona = [s for s in scores if s.true_label == 0]
    attacks = [s for s in scores if s.true_label == 1]
    if not bona or not attacks:
        raise ProtocolError("score set must contain both bona fide and attack sessions")
    return bona, attacks


def error_rates(scores, threshold: float) -> ErrorRates:
    bona, attacks = _partition(scores)
    far = sum(1 for s in attacks if s.aggregate < threshold) / len(attacks)
    frr = sum(1 for s in bona if s.aggregate >= threshold) / len(bona)
    return ErrorRates(far=far, frr=frr, hter=(far + frr) / 2, threshold=threshold)


def sweep_thresholds(scores) -> list[float]:
    """All distinct-score midpoints plus the endpoints 0 and 1, ascending."""
    vals = sorted({s.aggregate for s in scores})
    mids = [(a + b) / 2 for a, b in zip(vals, vals[1:])]
    return sorted({0.0, *mids, 1.0})


def eer_sweep(scores) -> EerResult:
    best: ErrorRates | None = None
    roc = []
    for thr in sweep_thresholds(scores):
        r = error_rates(scores, thr)
        roc.append((r.far, 1.0 - r.frr))
        if best is None or abs(r.far - r.frr) < abs(best.far - best.frr):
            best = r
    return EerResult(eer=(best.far + best.frr) / 2, threshold=best.threshold, roc=tuple(roc))


def acer(scores, threshold: float) -> AcerReport:
    bona, attacks = _partition(scores)
    bpcer = sum(1 for s in bona if s.aggregate >= threshold) / len(bona)
    by_type: dict[str, list[SessionScore]] = {}
    for s in attacks:
        by_type.setdefault(s.attack_type or "attack", []).append(s)
    per_type = {
        t: sum(1 for s in group if s.aggregate < threshold) / len(group)
        for t, group in sorted(by_type.items())
    }
    apcer = max(per_type.values())
    return AcerReport(apcer=apcer, bpcer=bpcer, acer=(apcer + bpcer) / 2, threshold=threshold, per_type=per_type)


def oracle_threshold(scores) -> float:
    """Diagnostic: the swept threshold minimizing HTER on these very scores."""
    best = None
    for thr in sweep_thresholds(scores):
        r = error_rates(scores, thr)
        if best is None or r.hter < best.hter:
            best = r
    return best.threshold


def _score_histograms(scores) -> dict:
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    bona = np.array([s.aggregate for s in scores if s.true_label == 0])
    att = np.array([s.aggregate for s in scores if s.true_label == 1])
    return {
        "bin_edges": edges.tolist(),
        "bona_fide": np.histogram(bona, bins=edges)[0].tolist(),
        "attack": np.histogram(att, bins=edges)[0].tolist(),
    }


def _domain_of(sessions) -> str:
    tags = sorted({s.domain_tag for s in sessions})
    return "+".join(tags)


def run_protocol(
    params: ModelParams,
    train_sessions,
    eval_sessions,
    policy: str = "eer-on-calib",
    aggregator: str = "mean",
) -> ProtocolResult:
    """Fix a threshold on the train domain per policy, evaluate on the eval
    domain's test split.  ``oracle-best`` peeks at the eval scores and is
    reported for diagnostics only."""
    if policy not in THRESHOLD_POLICIES:
        raise ConfigError(f"policy must be one of {THRESHOLD_POLICIES}, got {policy!r}")
    if isinstance(train_sessions, (str,)):
        train_sessions = read_manifest(train_sessions)
    if isinstance(eval_sessions, (str,)):
        eval_sessions = read_manifest(eval_sessions)
    test = filter_split(eval_sessions, "test")
    if not test:
        raise ProtocolError("eval domain has no test split")
    test_scores = score_sessions(params, test, aggregator)
    if policy == "fixed-0.5":
        threshold = 0.5
    elif policy == "eer-on-calib":
        calib = filter_split(train_sessions, "calib")
        if not calib:
            raise ProtocolError("train domain has no calib split for threshold fitting")
        threshold = eer_sweep(score_sessions(params, calib, aggregator)).threshold
    else:
        threshold = oracle_threshold(test_scores)
    eer_res = eer_sweep(test_scores)
    return ProtocolResult(
        train_domain=_domain_of(train_sessions),
        eval_domain=_domain_of(eval_sessions),
        policy=policy,
        rates=error_rates(test_scores, threshold),
        acer_report=acer(test_scores, threshold),
        eer=eer_res.eer,
        eer_threshold=eer_res.threshold,
        histograms=_score_histograms(test_scores),
    )


# ---------------------------------------------------------------------------
# emission


def write_scores_csv(scores, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "domain", "label", "aggregate", "frame_scores"])
        for s in scores:
            writer.writerow(
                [s.session_id, s.domain_tag, s.true_label, repr(s.aggregate), ";".join(repr(f) for f in s.frame_scores)]
            )


def protocol_result_dict(result: ProtocolResult) -> dict:
    return {
        "train_domain": result.train_domain,
        "eval_domain": result.eval_domain,
        "policy": result.policy,
        "threshold": result.rates.threshold,
        "far": result.rates.far,
        "frr": result.rates.frr,
        "hter": result.rates.hter,
        "apcer": result.acer_report.apcer,
        "bpcer": result.acer_report.bpcer,
        "acer": result.acer_report.acer,
        "apcer_per_type": result.acer_report.per_type,
        "eer": result.eer,
        "eer_threshold": result.eer_threshold,
        "histograms": result.histograms,
    }


def save_protocol_result(result: ProtocolResult, path: str, method: str = "") -> None:
    payload = protocol_result_dict(result)
    if method:
        payload["method"] = method
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    """Plain-text table with aligned columns."""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    def line(cells):
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), rule, *(line(r) for r in rows)])


def comparison_table(rows: list[dict]) -> str:
    """Rows need method/protocol/hter/acer/eer keys; rates as fractions."""
    headers = ["method", "protocol", "HTER%", "ACER%", "EER%"]
    body = [
        [
            str(r["method"]),
            str(r["protocol"]),
            _fmt_pct(r["hter"]),
            _fmt_pct(r["acer"]),
            _fmt_pct(r["eer"]),
        ]
        for r in rows
    ]
    return format_table(headers, body)


def _fmt_pct(value) -> str:
    if isinstance(value, str):
        return value
    return f"{100.0 * value:.2f}"
