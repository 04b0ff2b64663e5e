"""Config-driven experiment pipeline: load, transform, filter, train, eval.

Configuration is an INI file with sections [dataset], [transform],
[filter], [train], [eval] and [output]; any key can be overridden through
environment variables named TKGKIT_<SECTION>_<KEY>.  A run writes every
artifact (transformed dataset, lineage, reports, checkpoint, metrics) into
one output directory together with a manifest carrying the config hash,
seed and package version, and is byte-reproducible for a fixed config.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .cpd import CpdConfig
from .embed import TrainConfig, config_dict, save_model, train
from .eval import TIE_RULES, evaluate, ranks_tsv
from .graph import (
    TemporalGraph,
    dataset_stats,
    format_stats,
    load_dataset,
    save_dataset,
    save_triples,
    strip_temporal,
)
from .leakage import FILTER_MODES, apply_filter, audit, audit_csv, format_audit
from .proximity import PROXIMITY_MEASURES
from .transform import (
    TransformResult,
    identity,
    merge,
    random_split,
    save_lineage,
    split_cpd,
    split_parameterized,
    timestamp,
)

logger = logging.getLogger(__name__)

TRANSFORM_METHODS = (
    "none",
    "timestamp",
    "split_time",
    "split_count",
    "split_cpd",
    "merge",
    "random",
)

ENV_PREFIX = "TKGKIT_"

_DEFAULTS: dict[str, dict[str, str]] = {
    "dataset": {"format": "valid_time"},
    "transform": {
        "method": "none",
        "score": "pref",
        "min_size": "1",
        "jump": "1",
        "scope": "predicate",
        "seed": "0",
    },
    "filter": {"mode": "inter"},
    "train": {
        "dimension": "100",
        "epochs": "200",
        "learning_rate": "1e-3",
        "batch_size": "500",
        "negative_samples": "500",
        "negative_mode": "per_batch",
        "margin": "1.0",
        "temperature": "0.5",
        "norm": "l1",
        "seed": "0",
        "adversarial": "true",
        "detach_weights": "true",
    },
    "eval": {"tie_rule": "optimistic", "hits": "1,3,10", "dump_ranks": "false"},
    "output": {},
}


class ConfigError(Exception):
    """Missing, out-of-range or unparseable configuration."""


@dataclass
class PipelineConfig:
    data_path: Path
    data_format: str
    transform_method: str
    filter_mode: str
    train: TrainConfig
    out_dir: Path
    grow: float | None = None
    shrink: float | None = None
    epsilon: float | None = None
    score: str = "pref"
    min_size: int = 1
    jump: int = 1
    gamma: float | None = None
    scope: str = "predicate"
    transform_seed: int = 0
    tie_rule: str = "optimistic"
    hits_ks: tuple[int, ...] = (1, 3, 10)
    dump_ranks: bool = False
    threads: int = 1
    deterministic: bool = False
    raw: dict[str, dict[str, str]] = field(default_factory=dict)


def read_config_file(path: str | Path, environ=None) -> dict[str, dict[str, str]]:
    """INI file -> nested dict, with defaults and environment overrides."""
    cp = configparser.ConfigParser()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    raw = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in raw:
            raise ConfigError(f"unknown config section [{sec}]")
        raw[sec].update({k: v for k, v in cp[sec].items()})
    environ = os.environ if environ is None else environ
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        sec, _, key = rest.partition("_")
        sec = sec.lower()
        key = key.lower()
        if sec in raw and key:
            raw[sec][key] = value
    return raw


def config_hash(raw: dict[str, dict[str, str]]) -> str:
    lines = sorted(
        f"{sec}.{key}={value}" for sec, vals in raw.items() for key, value in vals.items()
    )
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def _get(raw: dict, sec: str, key: str, conv, required: bool = False):
    value = raw.get(sec, {}).get(key)
    if value is None or value == "":
        if required:
            raise ConfigError(f"[{sec}] {key} is required")
        return None
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec}] {key}: cannot parse {value!r}") from exc


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def build_config(raw: dict[str, dict[str, str]]) -> PipelineConfig:
    """Validate the raw key-value config into a typed PipelineConfig.

    Every range check happens here, before any data is touched.
    """
    data_path = _get(raw, "dataset", "path", Path, required=True)
    if not data_path.is_dir():
        raise ConfigError(f"[dataset] path {data_path} is not a directory")
    data_format = _get(raw, "dataset", "format", str, required=True)
    if data_format not in ("valid_time", "event"):
        raise ConfigError(f"[dataset] format must be valid_time or event, got {data_format!r}")

    method = _get(raw, "transform", "method", str, required=True)
    if method not in TRANSFORM_METHODS:
        raise ConfigError(f"[transform] method must be one of {TRANSFORM_METHODS}")
    grow = _get(raw, "transform", "grow", float)
    shrink = _get(raw, "transform", "shrink", float)
    epsilon = _get(raw, "transform", "epsilon", float)
    score = _get(raw, "transform", "score", str) or "pref"
    if score not in PROXIMITY_MEASURES:
        raise ConfigError(f"[transform] score must be one of {PROXIMITY_MEASURES}")
    min_size = _get(raw, "transform", "min_size", int) or 1
    jump = _get(raw, "transform", "jump", int) or 1
    gamma = _get(raw, "transform", "gamma", float)
    scope = _get(raw, "transform", "scope", str) or "predicate"
    if scope not in ("predicate", "graph"):
        raise ConfigError("[transform] scope must be predicate or graph")
    transform_seed = _get(raw, "transform", "seed", int) or 0
    if method in ("split_time", "split_count", "random"):
        if grow is None or grow <= 1:
            raise ConfigError(f"[transform] method {method} needs grow > 1")
    if method == "merge":
        if shrink is None or shrink <= 1:
            raise ConfigError("[transform] method merge needs shrink > 1 (inf allowed)")
    if method == "split_cpd":
        if epsilon is None or epsilon <= 0:
            raise ConfigError("[transform] method split_cpd needs epsilon > 0")
        if min_size < 1 or jump < 1:
            raise ConfigError("[transform] min_size and jump must be >= 1")
        if gamma is not None and gamma <= 0:
            raise ConfigError("[transform] gamma must be > 0 when set")

    filter_mode = _get(raw, "filter", "mode", str, required=True)
    if filter_mode not in FILTER_MODES:
        raise ConfigError(f"[filter] mode must be one of {FILTER_MODES}")

    train_cfg = TrainConfig(
        dimension=_get(raw, "train", "dimension", int, required=True),
        epochs=_get(raw, "train", "epochs", int, required=True),
        learning_rate=_get(raw, "train", "learning_rate", float, required=True),
        batch_size=_get(raw, "train", "batch_size", int, required=True),
        negative_samples=_get(raw, "train", "negative_samples", int, required=True),
        negative_mode=_get(raw, "train", "negative_mode", str, required=True),
        margin=_get(raw, "train", "margin", float, required=True),
        temperature=_get(raw, "train", "temperature", float, required=True),
        norm=_get(raw, "train", "norm", str, required=True),
        seed=_get(raw, "train", "seed", int, required=True),
        adversarial=_get(raw, "train", "adversarial", _bool, required=True),
        detach_weights=_get(raw, "train", "detach_weights", _bool, required=True),
    )
    try:
        train_cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from exc

    tie_rule = _get(raw, "eval", "tie_rule", str, required=True)
    if tie_rule not in TIE_RULES:
        raise ConfigError(f"[eval] tie_rule must be one of {TIE_RULES}")
    hits_raw = _get(raw, "eval", "hits", str, required=True)
    try:
        hits_ks = tuple(int(k) for k in hits_raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"[eval] hits: cannot parse {hits_raw!r}") from exc
    if not hits_ks or any(k < 1 for k in hits_ks):
        raise ConfigError("[eval] hits must be positive integers")
    dump_ranks = _get(raw, "eval", "dump_ranks", _bool, required=True)

    out_dir = _get(raw, "output", "dir", Path, required=True)

    return PipelineConfig(
        data_path=data_path,
        data_format=data_format,
        transform_method=method,
        filter_mode=filter_mode,
        train=train_cfg,
        out_dir=out_dir,
        grow=grow,
        shrink=shrink,
        epsilon=epsilon,
        score=score,
        min_size=min_size,
        jump=jump,
        gamma=gamma,
        scope=scope,
        transform_seed=transform_seed,
        tie_rule=tie_rule,
        hits_ks=hits_ks,
        dump_ranks=dump_ranks,
        raw=raw,
    )


def apply_transform(g: TemporalGraph, cfg: PipelineConfig) -> TransformResult:
    method = cfg.transform_method
    if method == "none":
        return identity(g)
    if method == "timestamp":
        return timestamp(g)
    if method == "split_time":
        return split_parameterized(g, "time", cfg.grow)
    if method == "split_count":
        return split_parameterized(g, "count", cfg.grow)
    if method == "split_cpd":
        workers = 1 if cfg.deterministic else max(1, cfg.threads)
        cpd_cfg = CpdConfig(
            epsilon=cfg.epsilon, min_size=cfg.min_size, jump=cfg.jump, gamma=cfg.gamma
        )
        return split_cpd(g, score=cfg.score, cfg=cpd_cfg, scope=cfg.scope, workers=workers)
    if method == "merge":
        return merge(g, cfg.shrink)
    if method == "random":
        return random_split(g, cfg.grow, seed=cfg.transform_seed)
    raise ConfigError(f"unknown transform method {method!r}")


def run_pipeline(cfg: PipelineConfig):
    """Execute all stages and write artifacts; returns the metric report."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []

    def write(name: str, text: str) -> None:
        (out / name).write_text(text, encoding="utf-8")
        artifacts.append(name)

    logger.info("loading %s (%s)", cfg.data_path, cfg.data_format)
    g = load_dataset(cfg.data_path, cfg.data_format)
    write("stats.txt", format_stats(dataset_stats(g)))

    logger.info("transform: %s", cfg.transform_method)
    result = apply_transform(g, cfg)
    save_dataset(result.graph, out / "transformed")
    artifacts.append("transformed/")
    save_lineage(result.graph, result.lineage, out / "lineage.tsv")
    artifacts.append("lineage.tsv")
    write("transform_report.txt", result.report.format())

    triples = strip_temporal(result.graph)
    audit_report = audit(triples["train"], triples["valid"], triples["test"])
    write("audit.txt", format_audit(audit_report))
    write("audit.csv", audit_csv(audit_report))

    logger.info("filter: %s", cfg.filter_mode)
    f_train, f_valid, f_test = apply_filter(
        triples["train"], triples["valid"], triples["test"], cfg.filter_mode
    )
    save_triples(
        {"train": f_train, "valid": f_valid, "test": f_test},
        result.graph.entity_labels,
        result.graph.predicate_labels,
        out / "filtered",
    )
    artifacts.append("filtered/")

    logger.info("training %d triples", len(f_train))
    history: list[float] = []
    model = train(
        f_train,
        result.graph.num_entities,
        result.graph.num_predicates,
        cfg.train,
        history=history,
    )
    run_hash = config_hash(cfg.raw)
    save_model(
        model,
        out / "model",
        extra_meta={
            "train_config": config_dict(cfg.train),
            "config_hash": run_hash,
            "version": __version__,
        },
    )
    artifacts.append("model/")
    write(
        "loss_history.csv",
        "epoch,loss\n" + "".join(f"{i},{x:.10g}\n" for i, x in enumerate(history)),
    )

    logger.info("evaluating %d test triples", len(f_test))
    known = set(f_train) | set(f_valid) | set(f_test)
    report, records = evaluate(
        model, f_test, known, tie_rule=cfg.tie_rule, ks=cfg.hits_ks
    )
    write("metrics.txt", report.format())
    write("metrics.csv", report.csv())
    if cfg.dump_ranks:
        write("ranks.tsv", ranks_tsv(records))

    manifest = {
        "version": __version__,
        "config_hash": run_hash,
        "seed": cfg.train.seed,
        "transform_seed": cfg.transform_seed,
        "artifacts": sorted(artifacts),
        "config": cfg.raw,
    }
    write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return report
