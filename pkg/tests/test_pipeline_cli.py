"""Config handling, pipeline artifacts, CLI subcommands and exit codes."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import pytest

import tkgkit
from tkgkit.cli import main
from tkgkit.pipeline import (
    ConfigError,
    build_config,
    config_hash,
    read_config_file,
    run_pipeline,
)


def write_ini(path: Path, data_dir: Path, out_dir: Path, **overrides) -> Path:
    sections = {
        "dataset": {"path": str(data_dir)},
        "transform": {"method": "timestamp"},
        "filter": {"mode": "both"},
        "train": {
            "epochs": "2",
            "dimension": "8",
            "batch_size": "4",
            "negative_samples": "2",
        },
        "output": {"dir": str(out_dir)},
    }
    for dotted, value in overrides.items():
        sec, key = dotted.split("__")
        sections.setdefault(sec, {})[key] = str(value)
    lines = []
    for sec, vals in sections.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in vals.items())
        lines.append("")
    path.write_text("\n".join(lines))
    return path


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------

def test_read_config_merges_defaults(tmp_path, tiny_dataset):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    raw = read_config_file(ini, environ={})
    assert raw["dataset"]["format"] == "valid_time"  # default kept
    assert raw["train"]["epochs"] == "2"  # file wins
    assert raw["train"]["learning_rate"] == "1e-3"  # default


def test_read_config_unknown_section(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[records]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        read_config_file(ini, environ={})


def test_read_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read_config_file(tmp_path / "absent.ini", environ={})


def test_env_overrides(tmp_path, tiny_dataset):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    raw = read_config_file(
        ini,
        environ={
            "TKGKIT_TRAIN_EPOCHS": "9",
            "TKGKIT_TRAIN_LEARNING_RATE": "0.5",
            "TKGKIT_FILTER_MODE": "none",
            "UNRELATED": "x",
        },
    )
    assert raw["train"]["epochs"] == "9"
    assert raw["train"]["learning_rate"] == "0.5"
    assert raw["filter"]["mode"] == "none"


def test_config_hash_properties(tmp_path, tiny_dataset):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    raw = read_config_file(ini, environ={})
    h1 = config_hash(raw)
    h2 = config_hash({k: dict(v) for k, v in reversed(list(raw.items()))})
    assert h1 == h2  # order-insensitive
    raw["train"]["epochs"] = "3"
    assert config_hash(raw) != h1


def base_raw(tiny_dataset, tmp_path):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    return read_config_file(ini, environ={})


@pytest.mark.parametrize(
    "section,key,value,hint",
    [
        ("dataset", "path", "/nonexistent/place", "not a directory"),
        ("dataset", "format", "parquet", "valid_time or event"),
        ("transform", "method", "shuffle", "method must be"),
        ("transform", "score", "katz", "score must be"),
        ("transform", "scope", "global", "scope must be"),
        ("filter", "mode", "hard", "mode must be"),
        ("train", "epochs", "-1", "epochs"),
        ("train", "dimension", "zero", "cannot parse"),
        ("train", "adversarial", "maybe", "cannot parse"),
        ("eval", "tie_rule", "best", "tie_rule"),
        ("eval", "hits", "1,x", "hits"),
    ],
)
def test_build_config_rejects(tiny_dataset, tmp_path, section, key, value, hint):
    raw = base_raw(tiny_dataset, tmp_path)
    raw[section][key] = value
    with pytest.raises(ConfigError, match=hint):
        build_config(raw)


def test_build_config_requires_out_dir(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["output"] = {}
    with pytest.raises(ConfigError, match="dir is required"):
        build_config(raw)


def test_split_methods_need_grow(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["transform"]["method"] = "split_time"
    with pytest.raises(ConfigError, match="grow"):
        build_config(raw)
    raw["transform"]["grow"] = "0.5"
    with pytest.raises(ConfigError, match="grow"):
        build_config(raw)


def test_merge_needs_shrink_inf_allowed(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["transform"]["method"] = "merge"
    with pytest.raises(ConfigError, match="shrink"):
        build_config(raw)
    raw["transform"]["shrink"] = "inf"
    cfg = build_config(raw)
    assert math.isinf(cfg.shrink)


def test_split_cpd_needs_epsilon(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["transform"]["method"] = "split_cpd"
    with pytest.raises(ConfigError, match="epsilon"):
        build_config(raw)
    raw["transform"]["epsilon"] = "2.0"
    cfg = build_config(raw)
    assert cfg.epsilon == 2.0


def test_build_config_happy(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    cfg = build_config(raw)
    assert cfg.transform_method == "timestamp"
    assert cfg.filter_mode == "both"
    assert cfg.train.epochs == 2
    assert cfg.hits_ks == (1, 3, 10)
    assert cfg.raw is raw


# ---------------------------------------------------------------------------
# pipeline runs
# ---------------------------------------------------------------------------

EXPECTED_FILES = [
    "audit.csv",
    "audit.txt",
    "lineage.tsv",
    "loss_history.csv",
    "manifest.json",
    "metrics.csv",
    "metrics.txt",
    "stats.txt",
    "transform_report.txt",
]


def test_run_pipeline_artifacts(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    cfg = build_config(raw)
    report = run_pipeline(cfg)
    out = cfg.out_dir
    for name in EXPECTED_FILES:
        assert (out / name).is_file(), name
    for sub in ("transformed", "filtered", "model"):
        assert (out / sub).is_dir()
    assert report.query_count > 0

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == tkgkit.__version__
    assert manifest["config_hash"] == config_hash(raw)
    assert manifest["seed"] == cfg.train.seed
    assert manifest["artifacts"] == sorted(manifest["artifacts"])
    listed = {a.rstrip("/") for a in manifest["artifacts"]}
    expected = set(EXPECTED_FILES) | {"transformed", "filtered", "model"}
    assert listed == expected - {"manifest.json"}  # manifest never lists itself


def test_run_pipeline_byte_reproducible(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    cfg = build_config(raw)
    run_pipeline(cfg)
    first = tree_digest(cfg.out_dir)
    run_pipeline(build_config(raw))
    second = tree_digest(cfg.out_dir)
    assert first == second


def test_run_pipeline_dump_ranks(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["eval"]["dump_ranks"] = "true"
    cfg = build_config(raw)
    run_pipeline(cfg)
    ranks = (cfg.out_dir / "ranks.tsv").read_text().splitlines()
    assert ranks[0] == "subject\tpredicate\tobject\tside\trank"
    assert len(ranks) > 1


def test_run_pipeline_loss_history_rows(tiny_dataset, tmp_path):
    raw = base_raw(tiny_dataset, tmp_path)
    raw["train"]["epochs"] = "4"
    cfg = build_config(raw)
    run_pipeline(cfg)
    lines = (cfg.out_dir / "loss_history.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 5


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_load_stats(tiny_dataset, capsys):
    assert main(["load-stats", "--data", str(tiny_dataset)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["entities", "3"]


def test_cli_transform_writes_outputs(tiny_dataset, tmp_path, capsys):
    out = tmp_path / "t"
    rc = main([
        "transform", "--data", str(tiny_dataset), "--method", "split_time",
        "--grow", "2", "--out", str(out),
    ])
    assert rc == 0
    assert (out / "train.txt").is_file()
    assert (out / "lineage.tsv").is_file()
    assert (out / "transform_report.txt").is_file()
    assert "predicates 2 -> 4" in capsys.readouterr().out


def test_cli_audit_csv(tiny_dataset, tmp_path, capsys):
    csv = tmp_path / "audit.csv"
    assert main(["audit", "--data", str(tiny_dataset), "--csv", str(csv)]) == 0
    assert "intra-set duplicates" in capsys.readouterr().out
    assert csv.read_text().startswith("metric,value")


def test_cli_filter_train_eval_chain(tiny_dataset, tmp_path, capsys):
    filtered = tmp_path / "filtered"
    assert main([
        "filter", "--data", str(tiny_dataset), "--mode", "both", "--out", str(filtered),
    ]) == 0
    model_dir = tmp_path / "model"
    assert main([
        "train", "--triples", str(filtered), "--out", str(model_dir),
        "--dimension", "8", "--epochs", "2", "--batch-size", "4",
        "--negative-samples", "2", "--export",
    ]) == 0
    assert (model_dir / "entity.npy").is_file()
    assert (model_dir / "entity_embeddings.tsv").is_file()
    capsys.readouterr()
    ranks = tmp_path / "ranks.tsv"
    assert main([
        "eval", "--triples", str(filtered), "--model", str(model_dir),
        "--ranks-out", str(ranks),
    ]) == 0
    out = capsys.readouterr().out
    assert "mrr" in out
    assert ranks.read_text().startswith("subject\t")


def test_cli_eval_model_mismatch(tiny_dataset, tmp_path, capsys):
    filtered = tmp_path / "filtered"
    main(["filter", "--data", str(tiny_dataset), "--mode", "none", "--out", str(filtered)])
    model_dir = tmp_path / "model"
    main([
        "train", "--triples", str(filtered), "--out", str(model_dir),
        "--dimension", "4", "--epochs", "0",
    ])
    other = tmp_path / "other"
    other.mkdir()
    for name in ("train", "valid", "test"):
        (other / f"{name}.txt").write_text("x\tr\ty\n")
    assert main(["eval", "--triples", str(other), "--model", str(model_dir)]) == 3


def test_cli_segment_debug(tmp_path, capsys):
    sig = tmp_path / "sig.csv"
    sig.write_text("0\n0\n0\n5\n5\n5\n")
    assert main(["segment-debug", "--signal", str(sig), "--epsilon", "0.001"]) == 0
    out = capsys.readouterr().out
    assert "breakpoints: 3 6" in out
    assert main(["segment-debug", "--signal", str(tmp_path / "no.csv"),
                 "--epsilon", "1"]) == 3
    assert main(["segment-debug", "--signal", str(sig), "--epsilon", "-1"]) == 2


def test_cli_run_exit_codes(tiny_dataset, tmp_path, capsys):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    assert main(["run", "--config", str(ini)]) == 0
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = write_ini(tmp_path / "bad.ini", tmp_path / "nope", tmp_path / "out2")
    assert main(["run", "--config", str(bad)]) == 2


def test_cli_run_data_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    for name in ("train", "valid", "test"):
        (empty / f"{name}.txt").write_text("")
    ini = write_ini(tmp_path / "c.ini", empty, tmp_path / "out")
    assert main(["run", "--config", str(ini)]) == 3


def test_cli_run_numeric_error(tiny_dataset, tmp_path):
    import numpy as np

    ini = write_ini(
        tmp_path / "c.ini", tiny_dataset, tmp_path / "out",
        train__learning_rate="1e308", train__epochs="3",
    )
    with np.errstate(all="ignore"):
        assert main(["run", "--config", str(ini)]) == 4


def test_cli_run_seed_override(tiny_dataset, tmp_path, capsys):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    main(["run", "--config", str(ini), "--seed", "3"])
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["transform_seed"] == 3


def test_cli_sweep_grid(tiny_dataset, tmp_path, capsys):
    out = tmp_path / "sweep"
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, out)
    rc = main([
        "run", "--config", str(ini),
        "--sweep", "train.dimension=4,8",
        "--sweep", "train.seed=0,1",
    ])
    assert rc == 0
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert dirs == [
        "dimension=4_seed=0", "dimension=4_seed=1",
        "dimension=8_seed=0", "dimension=8_seed=1",
    ]
    for d in dirs:
        assert (out / d / "metrics.txt").is_file()


def test_cli_sweep_bad_spec(tiny_dataset, tmp_path):
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    assert main(["run", "--config", str(ini), "--sweep", "dimension=4"]) == 2
    assert main(["run", "--config", str(ini), "--sweep", "train.dimension="]) == 2


def test_cli_env_override(tiny_dataset, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TKGKIT_TRAIN_EPOCHS", "0")
    ini = write_ini(tmp_path / "c.ini", tiny_dataset, tmp_path / "out")
    assert main(["run", "--config", str(ini)]) == 0
    lines = (tmp_path / "out" / "loss_history.csv").read_text().splitlines()
    assert lines == ["epoch,loss"]  # zero epochs: header only


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert tkgkit.__version__ in capsys.readouterr().out


def test_cli_rejects_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
