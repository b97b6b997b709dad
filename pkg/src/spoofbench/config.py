"""Experiment configuration files.

INI-style sections: one ``[experiment]`` block, one ``[domain.<name>]``
block per synthetic domain, ``[taft]`` and ``[distill]`` training blocks,
and a ``[protocols]`` block listing train:eval domain pairs.  Multi-value
keys are whitespace-separated.  Parsed configs are plain dataclasses, so
a parsed config plus its seed is a complete reproducibility snapshot.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .augment import AugmentConfig
from .data import DomainSpec
from .errors import ConfigError, InputError
from .evaluate import AGGREGATORS, THRESHOLD_POLICIES
from .heads import MASK_ALL
from .losses import DistillConfig, HeadWeights, RflConfig
from .optim import AdamWConfig
from .rng import RngStream
from .train import DistillRunConfig, TaftConfig

SEED_ENV_VAR = "SPOOFBENCH_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    domains: dict[str, tuple[DomainSpec, int]]  # name -> (spec, n_sessions)
    taft: TaftConfig
    distill: DistillRunConfig
    protocols: tuple[tuple[str, str], ...]
    policy: str = "eer-on-calib"
    aggregator: str = "mean"

    def domain(self, name: str) -> tuple[DomainSpec, int]:
        try:
            return self.domains[name]
        except KeyError:
            raise ConfigError(
                f"domain {name!r} is not defined; known domains: {sorted(self.domains)}"
            ) from None


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split())


def parse_experiment_config(path: str, seed_override: int | None = None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    try:
        return _build(parser, seed_override)
    except (ValueError, KeyError, configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"invalid config {path}: {exc!r}") from None


def _build(parser: configparser.ConfigParser, seed_override: int | None) -> ExperimentConfig:
    exp = parser["experiment"]
    seed = int(exp.get("seed", "0")) if seed_override is None else int(seed_override)
    output_dir = exp.get("output_dir", "runs")
    root = RngStream(seed)

    domains: dict[str, tuple[DomainSpec, int]] = {}
    for section in parser.sections():
        if not section.startswith("domain."):
            continue
        name = section.split(".", 1)[1]
        sec = parser[section]
        lum = _floats(sec.get("base_luminance", "0.4 0.7"))
        spec = DomainSpec(
            name=name,
            stream=root.child("domain", name),
            base_luminance=(lum[0], lum[1]),
            chroma_bias=_floats(sec.get("chroma_bias", "0 0 0")),
            sensor_noise_std=sec.getfloat("sensor_noise_std", 0.04),
            cue_intensities=_floats(sec.get("cue_intensities", "1 1 1 1 1 1")),
            attack_fraction=sec.getfloat("attack_fraction", 0.5),
            attack_mix=_floats(sec.get("attack_mix", "0.4 0.4 0.2")),
        )
        domains[name] = (spec, sec.getint("sessions", 200))
    if not domains:
        raise ConfigError("config defines no [domain.<name>] sections")

    t = parser["taft"] if parser.has_section("taft") else {}
    taft_cfg = TaftConfig(
        epochs=int(t.get("epochs", 3)),
        batch_size=int(t.get("batch_size", 32)),
        head_mask=MASK_ALL,
        optimizer=AdamWConfig(
            lr=float(t.get("lr", 1e-3)),
            weight_decay=float(t.get("weight_decay", 0.01)),
        ),
        loss=RflConfig(gamma=float(t.get("gamma", 2.0)), cutoff=float(t.get("cutoff", 0.5))),
        head_weights=HeadWeights(_floats(t.get("head_weights", "1 1 1 1 1 1 1 1"))),
        augment=AugmentConfig(apply_prob=float(t.get("augment_prob", 0.5))),
        seed=seed,
    )

    d = parser["distill"] if parser.has_section("distill") else {}
    sup_rfl = str(d.get("supervised_rfl", "false")).strip().lower() in ("1", "true", "yes", "on")
    distill_cfg = DistillRunConfig(
        distill=DistillConfig(alpha=float(d.get("alpha", 0.5)), tau=float(d.get("tau", 2.0))),
        optimizer=AdamWConfig(
            lr=float(d.get("lr", 1e-3)),
            weight_decay=float(d.get("weight_decay", 0.01)),
        ),
        epochs=int(d.get("epochs", 3)),
        batch_size=int(d.get("batch_size", 32)),
        unlabeled_fraction=float(d.get("unlabeled_fraction", 0.5)),
        head_mask=MASK_ALL,
        supervised_rfl=RflConfig(
            gamma=float(d.get("gamma", 2.0)), cutoff=float(d.get("cutoff", 0.5))
        )
        if sup_rfl
        else None,
        seed=seed,
    )

    p = parser["protocols"] if parser.has_section("protocols") else {}
    pairs = []
    for token in str(p.get("pairs", "")).split():
        if ":" not in token:
            raise ConfigError(f"protocol pair {token!r} must look like train:eval")
        train, evald = token.split(":", 1)
        for name in (train, evald):
            if name not in domains:
                raise ConfigError(f"protocol references undefined domain {name!r}")
        pairs.append((train, evald))
    policy = str(p.get("policy", "eer-on-calib"))
    if policy not in THRESHOLD_POLICIES:
        raise ConfigError(f"policy must be one of {THRESHOLD_POLICIES}, got {policy!r}")
    aggregator = str(p.get("aggregator", "mean"))
    if aggregator not in AGGREGATORS:
        raise ConfigError(f"aggregator must be one of {sorted(AGGREGATORS)}, got {aggregator!r}")

    return ExperimentConfig(
        seed=seed,
        output_dir=output_dir,
        domains=domains,
        taft=taft_cfg,
        distill=distill_cfg,
        protocols=tuple(pairs),
        policy=policy,
        aggregator=aggregator,
    )
