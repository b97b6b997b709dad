"""Synthetic multi-domain session data: label schema, generator, manifests.

A session is a short clip of small RGB frames sharing one label vector.
Bona fide sessions render a smooth face-like blob under domain-specific
lighting and sensor noise.  Attack sessions overlay visible spoof cues
(fingers, device border, on-screen UI, moire interference, glare,
reflections) or, for imperceptible attacks, reshape only the noise
spectrum.  Domains differ in lighting, chroma, noise level, cue strength
and attack mix, standing in for dataset-to-dataset shift.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    InputError,
    LabelValidationError,
    ManifestError,
)
from .heads import N_HEADS, VISIBLE_CUE_HEADS
from .rng import RngStream
from .tensor import Tensor, snapshot_bytes, tensor_from_snapshot_bytes

FRAME_SIDE = 16
FRAME_SHAPE = (3, FRAME_SIDE, FRAME_SIDE)
FRAMES_PER_SESSION = 8
SPLITS = ("train", "calib", "test")
ATTACK_TYPES = ("print", "replay", "imperceptible")
BONA_FIDE = "bona_fide"
MANIFEST_VERSION = 1

_YY, _XX = np.mgrid[0:FRAME_SIDE, 0:FRAME_SIDE].astype(np.float64)


@dataclass(frozen=True)
class AttributeLabels:
    """Per-head binary labels; bit j (1-based) feeds head j."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        object.__setattr__(self, "bits", bits)
        if len(bits) != N_HEADS or any(b not in (0, 1) for b in bits):
            raise LabelValidationError(f"labels must be {N_HEADS} bits in {{0,1}}, got {self.bits}")
        visible = any(bits[h - 1] for h in VISIBLE_CUE_HEADS)
        if visible and not bits[7]:
            raise LabelValidationError(
                "violated invariant: any visible cue bit set requires the overall bit (head 8)"
            )
        expect7 = 1 if (bits[7] and not visible) else 0
        if bits[6] != expect7:
            raise LabelValidationError(
                "violated invariant: the imperceptible bit (head 7) must be set exactly "
                "when the session is an attack with no visible cue"
            )

    @classmethod
    def bona_fide(cls) -> "AttributeLabels":
        return cls((0,) * N_HEADS)

    @classmethod
    def from_flags(cls, attack: bool, cues=()) -> "AttributeLabels":
        cues = set(cues)
        if cues and not attack:
            raise LabelValidationError("visible cues are only defined for attacks")
        if not cues.issubset(VISIBLE_CUE_HEADS):
            raise LabelValidationError(f"cue indices must be in {VISIBLE_CUE_HEADS}, got {sorted(cues)}")
        bits = [0] * N_HEADS
        for c in cues:
            bits[c - 1] = 1
        bits[7] = 1 if attack else 0
        bits[6] = 1 if (attack and not cues) else 0
        return cls(tuple(bits))

    @property
    def is_attack(self) -> bool:
        return bool(self.bits[7])

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.float64)


@dataclass(frozen=True)
class Frame:
    pixels: Tensor

    def __post_init__(self):
        if self.pixels.shape != FRAME_SHAPE:
            raise DimensionError(f"frame shape {self.pixels.shape} != {FRAME_SHAPE}")
        arr = self.pixels.array
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("frame pixels must lie in [0, 1]")


@dataclass(frozen=True)
class Session:
    id: str
    domain_tag: str
    frames: tuple[Frame, ...]
    labels: AttributeLabels
    split: str
    attack_type: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise InputError(f"session {self.id} has no frames")
        if self.split not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.attack_type:
            if self.attack_type not in (BONA_FIDE, *ATTACK_TYPES):
                raise InputError(f"unknown attack type {self.attack_type!r}")
            if (self.attack_type == BONA_FIDE) == self.labels.is_attack:
                raise LabelValidationError(
                    f"attack type {self.attack_type!r} contradicts overall label bit"
                )

    def frames_array(self) -> np.ndarray:
        return np.stack([f.pixels.array for f in self.frames])


def filter_split(sessions, split: str) -> list[Session]:
    if split not in SPLITS:
        raise InputError(f"split must be one of {SPLITS}, got {split!r}")
    return [s for s in sessions if s.split == split]


def split_counts(sessions) -> dict[str, int]:
    counts = {s: 0 for s in SPLITS}
    for sess in sessions:
        counts[sess.split] += 1
    return counts


@dataclass(frozen=True)
class DomainSpec:
    name: str
    stream: RngStream
    base_luminance: tuple[float, float] = (0.4, 0.7)
    chroma_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sensor_noise_std: float = 0.04
    cue_intensities: tuple[float, ...] = (1.0,) * 6  # heads 1..6 in order
    attack_fraction: float = 0.5
    attack_mix: tuple[float, float, float] = (0.4, 0.4, 0.2)  # print, replay, imperceptible

    def __post_init__(self):
        lo, hi = self.base_luminance
        if not (0 <= lo <= hi <= 1):
            raise ConfigError(f"base luminance range {self.base_luminance} invalid")
        if self.sensor_noise_std < 0:
            raise ConfigError("sensor noise std must be >= 0")
        if len(self.cue_intensities) != 6 or any(k < 0 for k in self.cue_intensities):
            raise ConfigError(f"need 6 cue intensities >= 0, got {self.cue_intensities}")
        if not 0 <= self.attack_fraction <= 1:
            raise ConfigError(f"attack fraction {self.attack_fraction} outside [0, 1]")
        if len(self.attack_mix) != 3 or any(p < 0 for p in self.attack_mix):
            raise ConfigError(f"attack mix {self.attack_mix} must be 3 proportions >= 0")
        if abs(sum(self.attack_mix) - 1.0) > 1e-9:
            raise ConfigError(f"attack mix {self.attack_mix} must sum to 1")


# ---------------------------------------------------------------------------
# generation


def _apportion(total: int, weights) -> list[int]:
    """Integer counts proportional to weights, largest remainder rule."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return [0] * len(w)
    exact = w / w.sum() * total
    counts = np.floor(exact).astype(int)
    order = np.argsort(-(exact - counts), kind="stable")
    for i in range(total - counts.sum()):
        counts[order[i]] += 1
    return counts.tolist()


def _assign_splits(roles: list[str], fractions, gen: np.random.Generator) -> list[str]:
    """Per-split assignment, stratified by bona-fide/attack so every split
    keeps both classes whenever counts allow."""
    splits = [""] * len(roles)
    for cls_attack in (False, True):
        idx = [i for i, r in enumerate(roles) if (r != BONA_FIDE) == cls_attack]
        counts = _apportion(len(idx), fractions)
        pool = [s for s, c in zip(SPLITS, counts) for _ in range(c)]
        gen.shuffle(pool)
        for i, s in zip(idx, pool):
            splits[i] = s
    return splits


def _highpass_noise(gen: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance noise with energy pushed to high spatial frequencies.

    Drawn independently per channel: digitally injected perturbations have no
    reason to respect the shared-luminance structure of real sensor noise.
    """
    white = gen.normal(0.0, 1.0, shape)
    hp = white - 0.25 * (
        np.roll(white, 1, -1) + np.roll(white, -1, -1) + np.roll(white, 1, -2) + np.roll(white, -1, -2)
    )
    return hp / np.sqrt(1.25)  # design variance of the filter on white noise


def _sensor_noise(gen: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance camera-style noise: smooth in space, shared across channels.

    Physical sensor noise at this resolution is dominated by luminance shot
    noise, so one spatial field is replicated over RGB and gently low-passed.
    """
    n_frames, n_channels = shape[0], shape[1]
    white = gen.normal(0.0, 1.0, (n_frames, 1) + tuple(shape[2:]))
    lp = white + 0.5 * (
        np.roll(white, 1, -1) + np.roll(white, -1, -1) + np.roll(white, 1, -2) + np.roll(white, -1, -2)
    )
    return np.repeat(lp / np.sqrt(2.0), n_channels, axis=1)


_CUE_DRAWS = {
    "print": ((1, 0.6), (2, 0.8), (5, 0.4)),
    "replay": ((1, 0.35), (2, 0.7), (3, 0.5), (4, 0.8), (5, 0.4), (6, 0.4)),
}
_CUE_FALLBACK = {"print": 2, "replay": 4}


def _draw_cues(role: str, gen: np.random.Generator) -> set[int]:
    cues = {c for c, p in _CUE_DRAWS[role] if gen.random() < p}
    return cues or {_CUE_FALLBACK[role]}


def _blend(frames: np.ndarray, mask: np.ndarray, color, alpha: float) -> np.ndarray:
    a = np.clip(alpha, 0.0, 1.0) * mask  # (16, 16)
    col = np.asarray(color)[:, None, None]
    return frames * (1.0 - a) + col * a


def _apply_cues(frames: np.ndarray, cues: set[int], intensities, gen: np.random.Generator) -> np.ndarray:
    n_frames = frames.shape[0]
    for cue in sorted(cues):
        k = intensities[cue - 1]
        if cue == 1:  # fingers: dark skin-tone occluders at image corners
            n_spots = 1 + int(gen.random() < 0.4)
            for _ in range(n_spots):
                corner = gen.integers(0, 4)
                cy = 0.0 if corner < 2 else float(FRAME_SIDE - 1)
                cx = 0.0 if corner % 2 == 0 else float(FRAME_SIDE - 1)
                radius = gen.uniform(3.2, 5.0)
                tone = np.array([0.45, 0.30, 0.22]) * (1.0 + gen.uniform(-0.08, 0.08))
                mask = ((_YY - cy) ** 2 + (_XX - cx) ** 2 <= radius**2).astype(np.float64)
                frames = _blend(frames, mask, tone, 0.85 * k)
        elif cue == 2:  # dark device border ring
            width = int(gen.integers(1, 3))
            mask = np.zeros((FRAME_SIDE, FRAME_SIDE))
            mask[:width], mask[-width:] = 1.0, 1.0
            mask[:, :width], mask[:, -width:] = 1.0, 1.0
            frames = _blend(frames, mask, (0.07, 0.07, 0.07), 0.9 * k)
        elif cue == 3:  # banded on-screen UI strip
            height = int(gen.integers(3, 6))
            top = gen.random() < 0.5
            rows = slice(0, height) if top else slice(FRAME_SIDE - height, FRAME_SIDE)
            mask = np.zeros((FRAME_SIDE, FRAME_SIDE))
            mask[rows] = 1.0
            shade = np.where(_YY.astype(int) % 2 == 0, 0.85, 0.2)
            band = np.stack([shade] * 3)
            a = np.clip(0.75 * k, 0.0, 1.0) * mask
            frames = frames * (1.0 - a) + band * a
        elif cue == 4:  # moire: near-Nyquist sinusoidal interference
            fx, fy = gen.uniform(0.22, 0.46, 2)
            phase = gen.uniform(0.0, 2 * np.pi)
            drift = gen.uniform(0.2, 0.7)
            chan = 1.0 + gen.uniform(-0.15, 0.15, 3)
            steps = phase + drift * np.arange(n_frames)
            pattern = np.sin(2 * np.pi * (fx * _XX + fy * _YY) + steps[:, None, None])
            frames = frames + 0.22 * k * chan[None, :, None, None] * pattern[:, None]
        elif cue == 5:  # bright saturated glare spot
            cy, cx = gen.uniform(2.0, FRAME_SIDE - 2.0, 2)
            sig = gen.uniform(1.2, 2.2)
            spot = np.exp(-((_YY - cy) ** 2 + (_XX - cx) ** 2) / (2 * sig**2))
            frames = frames + 0.85 * k * np.array([1.0, 1.0, 0.92])[:, None, None] * spot
        elif cue == 6:  # low-contrast mirrored ghost
            a = np.clip(0.3 * k, 0.0, 1.0)
            ghost = frames[..., ::-1]
            frames = (1.0 - a) * frames + a * (0.3 + 0.55 * ghost)
    return frames


def _render_session(spec: DomainSpec, role: str, gen: np.random.Generator, n_frames: int):
    lum = gen.uniform(*spec.base_luminance)
    tilt = gen.uniform(-0.06, 0.06)
    base = lum + np.asarray(spec.chroma_bias)[:, None, None] + tilt * (_YY / (FRAME_SIDE - 1) - 0.5)
    cy, cx = (FRAME_SIDE - 1) / 2 + gen.uniform(-2.0, 2.0, 2)
    sigma = gen.uniform(2.2, 3.8)
    amp = gen.uniform(0.22, 0.4)
    skin = np.array([1.25, 0.95, 0.75]) * amp
    if role == "print":
        skin = skin * 0.85  # printed faces come out flatter
    drift = gen.normal(0.0, 0.25, (n_frames, 2))
    dy = (_YY[None] - cy - drift[:, 0, None, None]) ** 2
    dx = (_XX[None] - cx - drift[:, 1, None, None]) ** 2
    blob = np.exp(-(dy + dx) / (2 * sigma**2))  # (F, 16, 16)
    frames = base[None] + skin[None, :, None, None] * blob[:, None]
    if role == "replay":
        frames = frames + np.array([-0.02, 0.0, 0.03])[None, :, None, None]  # cool screen tint

    cues: set[int] = set()
    if role in ("print", "replay"):
        cues = _draw_cues(role, gen)
        frames = _apply_cues(frames, cues, spec.cue_intensities, gen)

    if role == "imperceptible":
        noise = spec.sensor_noise_std * _highpass_noise(gen, frames.shape)
    else:
        noise = spec.sensor_noise_std * _sensor_noise(gen, frames.shape)
    return np.clip(frames + noise, 0.0, 1.0), cues


def generate_domain(
    spec: DomainSpec,
    n_sessions: int,
    frames_per_session: int = FRAMES_PER_SESSION,
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> list[Session]:
    if n_sessions < 1:
        raise InputError(f"n_sessions must be >= 1, got {n_sessions}")
    n_attacks = int(round(spec.attack_fraction * n_sessions))
    per_type = _apportion(n_attacks, spec.attack_mix)
    roles = [BONA_FIDE] * (n_sessions - n_attacks)
    for t, count in zip(ATTACK_TYPES, per_type):
        roles.extend([t] * count)
    assign_gen = spec.stream.child("assign").generator()
    assign_gen.shuffle(roles)
    splits = _assign_splits(roles, split_fractions, assign_gen)

    sessions = []
    for i, (role, split) in enumerate(zip(roles, splits)):
        gen = spec.stream.child("session", i).generator()
        pixels, cues = _render_session(spec, role, gen, frames_per_session)
        labels = AttributeLabels.from_flags(role != BONA_FIDE, cues)
        frames = tuple(Frame(Tensor._wrap(np.ascontiguousarray(p))) for p in pixels)
        sessions.append(
            Session(
                id=f"{spec.name}-{i:05d}",
                domain_tag=spec.name,
                frames=frames,
                labels=labels,
                split=split,
                attack_type=role,
            )
        )
    return sessions


# ---------------------------------------------------------------------------
# manifest I/O: one JSON object per line, header first


def write_manifest(sessions, path: str, inline: bool = True) -> None:
    sessions = list(sessions)
    header = {"version": MANIFEST_VERSION, "count": len(sessions), "splits": split_counts(sessions)}
    frames_dir = None
    if not inline:
        frames_dir = os.path.splitext(str(path))[0] + "_frames"
        os.makedirs(frames_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for sess in sessions:
            if inline:
                frames = [
                    base64.b64encode(snapshot_bytes(f.pixels)).decode("ascii") for f in sess.frames
                ]
            else:
                frames = []
                for j, f in enumerate(sess.frames):
                    rel = os.path.join(os.path.basename(frames_dir), f"{sess.id}_{j}.spbt")
                    with open(os.path.join(os.path.dirname(os.path.abspath(path)), rel), "wb") as out:
                        out.write(snapshot_bytes(f.pixels))
                    frames.append(rel)
            record = {
                "id": sess.id,
                "domain": sess.domain_tag,
                "split": sess.split,
                "labels": list(sess.labels.bits),
                "attack_type": sess.attack_type,
                "frames": frames,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _decode_frame(entry: str, base_dir: str, lineno: int) -> Frame:
    if isinstance(entry, str):
        try:
            raw = base64.b64decode(entry.encode("ascii"), validate=True)
        except (ValueError, UnicodeEncodeError):
            raw = None
        if raw is not None and raw[:4] == b"SPBT":
            return Frame(tensor_from_snapshot_bytes(raw))
        full = os.path.join(base_dir, entry)
        if os.path.exists(full):
            with open(full, "rb") as fh:
                return Frame(tensor_from_snapshot_bytes(fh.read()))
    raise ManifestError(f"line {lineno}: frame entry is neither inline data nor a readable path")


def read_manifest(path: str) -> list[Session]:
    if not os.path.exists(path):
        raise InputError(f"manifest not found: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ManifestError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
        declared = int(header["count"])
        declared_splits = dict(header.get("splits", {}))
        if header.get("version") != MANIFEST_VERSION:
            raise ManifestError(f"line 1: unsupported manifest version {header.get('version')}")
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"line 1: bad manifest header: {exc}") from None

    sessions = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ManifestError(f"line {lineno}: invalid JSON: {exc}") from None
        try:
            labels_bits = tuple(obj["labels"])
            frames_field = obj["frames"]
            sess_id, domain, split = obj["id"], obj["domain"], obj["split"]
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"line {lineno}: missing field {exc}") from None
        try:
            labels = AttributeLabels(labels_bits)
        except LabelValidationError as exc:
            raise LabelValidationError(f"line {lineno}: {exc}") from None
        frames = tuple(_decode_frame(e, base_dir, lineno) for e in frames_field)
        try:
            sessions.append(
                Session(
                    id=sess_id,
                    domain_tag=domain,
                    frames=frames,
                    labels=labels,
                    split=split,
                    attack_type=obj.get("attack_type", ""),
                )
            )
        except InputError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None

    if len(sessions) != declared:
        raise ManifestError(f"manifest declares {declared} sessions but contains {len(sessions)}")
    if declared_splits:
        actual = split_counts(sessions)
        if {k: int(v) for k, v in declared_splits.items()} != actual:
            raise ManifestError(
                f"per-split counts {actual} do not match header {declared_splits}"
            )
    return sessions
