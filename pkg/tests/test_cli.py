"""End-to-end tests of the command-line pipeline and its exit codes.

All invocations go through ``main(argv)`` in-process: exit code 0 is
success, 1 a config/usage problem, 2 re-weighting hitting its iteration cap,
3 a data problem.
"""
from __future__ import annotations

import csv
import json

import pytest
import yaml

from ngram_debias.cli import (
    AUDIT_FILE,
    BIAS_REPORT_FILE,
    CONFUSION_FILE,
    CURVE_FILE,
    ENV_CONFIG,
    EVAL_SUMMARY_FILE,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NO_CONVERGENCE,
    EXIT_OK,
    NORMALIZED_FILE,
    PREPROCESS_SUMMARY_FILE,
    REWEIGHT_TRACE_FILE,
    WEIGHTS_FILE,
    main,
)
from ngram_debias.synthetic import (
    SyntheticSpec,
    planted_group_corpus,
    planted_training_corpus,
    write_group_jsonl,
    write_training_csv,
)

SPEC = SyntheticSpec(n_per_class=30, n_group=40)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Synthetic training CSV + dialect-group JSONL shared by the CLI tests."""
    root = tmp_path_factory.mktemp("data")
    train = planted_training_corpus(seed=9, spec=SPEC)
    write_training_csv(train, root / "train.csv")
    group_a = planted_group_corpus(seed=9, group="groupa", spec=SPEC)
    group_b = planted_group_corpus(seed=9, group="groupb", spec=SPEC)
    write_group_jsonl([group_a, group_b], root / "groups.jsonl")
    return root


def base_config(data_dir, out_dir) -> dict:
    return {
        "schema": ["neg", "other"],
        "output_dir": str(out_dir),
        "dataset": {
            "path": str(data_dir / "train.csv"),
            "format": "csv",
            "id_column": "id",
        },
        "split": {"fractions": [0.8, 0.1, 0.1], "seed": 11},
        "preprocess": {"min_tokens": 2},
        "audit": {"n": 2, "top_k": 10},
        "reweight": {
            "lambda": 0.01,
            "step_size": 50.0,
            "max_iters": 300,
            "tolerance": 1.0e-7,
            "seed": 0,
        },
        "train": {"seed": 7, "epochs": 8, "learning_rate": 0.1},
        "biaseval": {
            "groups_path": str(data_dir / "groups.jsonl"),
            "negative_classes": ["neg"],
            "sample_size": 30,
            "seed": 11,
            "model_before": "baseline.txt",
            "model_after": "model.txt",
        },
        "learning_curve": {"portions": [0.5, 1.0], "repeats": 2, "seed": 5},
    }


def write_config(path, config) -> str:
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def test_no_config_is_usage_error(capsys, monkeypatch):
    monkeypatch.delenv(ENV_CONFIG, raising=False)
    assert main(["preprocess"]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "--config" in err and ENV_CONFIG in err


def test_missing_config_file(capsys):
    assert main(["preprocess", "--config", "/nonexistent.yaml"]) == EXIT_CONFIG
    assert "does not exist" in capsys.readouterr().err


def test_invalid_yaml(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("schema: [unclosed\n", encoding="utf-8")
    assert main(["preprocess", "--config", str(path)]) == EXIT_CONFIG
    assert "not valid YAML" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, data_dir, capsys):
    config = base_config(data_dir, tmp_path / "out")
    config["reweight"]["learning_rate"] = 0.1  # not a reweight key
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "reweight" in err and "learning_rate" in err and "allowed keys" in err


def test_missing_required_seed(tmp_path, data_dir, capsys):
    config = base_config(data_dir, tmp_path / "out")
    del config["split"]["seed"]
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_CONFIG
    assert "split.seed" in capsys.readouterr().err


def test_field_specific_type_message(tmp_path, data_dir, capsys):
    config = base_config(data_dir, tmp_path / "out")
    config["train"]["seed"] = True
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_CONFIG
    assert "train.seed" in capsys.readouterr().err


def test_invalid_hyperparameter_named(tmp_path, data_dir, capsys):
    config = base_config(data_dir, tmp_path / "out")
    config["train"]["learning_rate"] = -0.5
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_CONFIG
    assert "train" in capsys.readouterr().err


def test_missing_dataset_path(tmp_path, data_dir, capsys):
    config = base_config(data_dir, tmp_path / "out")
    config["dataset"]["path"] = str(data_dir / "absent.csv")
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_CONFIG
    assert "dataset.path" in capsys.readouterr().err


def test_unknown_command_is_usage_error(capsys):
    assert main(["not-a-command"]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().err.lower()


def test_env_var_supplies_config(tmp_path, data_dir, monkeypatch):
    out = tmp_path / "out"
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, out))
    monkeypatch.setenv(ENV_CONFIG, path)
    assert main(["preprocess"]) == EXIT_OK
    assert (out / NORMALIZED_FILE).exists()


# ---------------------------------------------------------------------------
# Stage ordering and data errors
# ---------------------------------------------------------------------------


def test_audit_before_preprocess_is_data_error(tmp_path, data_dir, capsys):
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, tmp_path / "out"))
    assert main(["audit", "--config", path]) == EXIT_DATA
    assert "preprocess" in capsys.readouterr().err


def test_train_without_weights_file_is_data_error(tmp_path, data_dir, capsys):
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, tmp_path / "out"))
    assert main(["preprocess", "--config", path]) == EXIT_OK
    code = main(["train", "--config", path, "--weights", "weights.jsonl"])
    assert code == EXIT_DATA
    assert "reweight" in capsys.readouterr().err


def test_evaluate_without_model_is_data_error(tmp_path, data_dir, capsys):
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, tmp_path / "out"))
    assert main(["preprocess", "--config", path]) == EXIT_OK
    assert main(["evaluate", "--config", path]) == EXIT_DATA
    assert "train" in capsys.readouterr().err


def test_reweight_iteration_cap_exit_2(tmp_path, data_dir):
    config = base_config(data_dir, tmp_path / "out")
    config["reweight"]["max_iters"] = 1
    config["reweight"]["tolerance"] = 1.0e-15
    config["reweight"]["step_size"] = 1.0e-3
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_OK
    assert main(["reweight", "--config", path]) == EXIT_NO_CONVERGENCE
    # Artifacts are still written for inspection.
    assert (tmp_path / "out" / WEIGHTS_FILE).exists()
    assert (tmp_path / "out" / REWEIGHT_TRACE_FILE).exists()


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def test_full_pipeline_artifacts(tmp_path, data_dir, capsys):
    out = tmp_path / "out"
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, out))
    steps = [
        ["preprocess"],
        ["audit"],
        ["reweight"],
        ["train", "--weights", "none", "--model-out", "baseline.txt"],
        ["train", "--weights", WEIGHTS_FILE, "--model-out", "model.txt"],
        ["evaluate", "--model", "model.txt", "--weighted-f1"],
        ["bias-eval"],
        ["learning-curve"],
    ]
    for step in steps:
        assert main([*step, "--config", path]) == EXIT_OK, step
    captured = capsys.readouterr().out
    assert "macro F1" in captured
    assert "weighted F1" in captured
    assert "ratio" in captured

    for name in (
        NORMALIZED_FILE, PREPROCESS_SUMMARY_FILE, AUDIT_FILE, WEIGHTS_FILE,
        REWEIGHT_TRACE_FILE, "baseline.txt", "model.txt",
        "baseline_train_trace.csv", "model_train_trace.csv",
        CONFUSION_FILE, EVAL_SUMMARY_FILE, BIAS_REPORT_FILE, CURVE_FILE,
        "freq_train_n1.csv", "freq_train_n2.csv",
        "freq_black_n1.csv", "freq_white_n2.csv",
    ):
        assert (out / name).exists(), name

    with open(out / BIAS_REPORT_FILE) as handle:
        rows = list(csv.DictReader(handle))
    assert [row["variant"] for row in rows] == ["before", "after"]
    assert all(row["class"] == "neg" for row in rows)
    assert all(row["dataset"] == "train" for row in rows)

    with open(out / AUDIT_FILE) as handle:
        audit_rows = list(csv.DictReader(handle))
    assert {row["class"] for row in audit_rows} == {"neg", "other"}
    # The planted bigram dominates the neg class ranking.
    neg_top = next(row for row in audit_rows if row["class"] == "neg")
    assert neg_top["ngram"] == "bad_wolf"

    # The reweight trace is non-increasing.
    with open(out / REWEIGHT_TRACE_FILE) as handle:
        objectives = [float(row["objective"]) for row in csv.DictReader(handle)]
    assert objectives == sorted(objectives, reverse=True)

    with open(out / CURVE_FILE) as handle:
        curve_rows = list(csv.DictReader(handle))
    assert [row["portion"] for row in curve_rows] == ["0.5", "1.0"]


def test_seed_override_changes_split(tmp_path, data_dir):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    path = write_config(tmp_path / "config.yaml", base_config(data_dir, tmp_path / "out"))
    for out, seed in ((out_a, "101"), (out_b, "202")):
        assert main(["preprocess", "--config", path, "--out", str(out)]) == EXIT_OK
        assert main(["audit", "--config", path, "--out", str(out), "--seed", seed]) == EXIT_OK
    audit_a = (out_a / AUDIT_FILE).read_text()
    audit_b = (out_b / AUDIT_FILE).read_text()
    assert audit_a != audit_b  # different split seeds shuffle the splits


# ---------------------------------------------------------------------------
# Identical groups give a ratio of exactly 1
# ---------------------------------------------------------------------------


def test_identical_groups_ratio_is_one(tmp_path, data_dir):
    groups_path = tmp_path / "identical_groups.jsonl"
    with open(groups_path, "w", encoding="utf-8") as handle:
        for i in range(20):
            text = f"calm{i % 5} day{i % 3} calm{(i + 2) % 5}"
            for prefix, major in (("b", "black"), ("w", "white")):
                posteriors = {"white": 0.03, "black": 0.03, "hispanic": 0.02, "asian": 0.02}
                posteriors[major] = 0.93
                handle.write(
                    json.dumps(
                        {"id": f"{prefix}{i}", "text": text, "posteriors": posteriors}
                    )
                    + "\n"
                )
    config = base_config(data_dir, tmp_path / "out")
    config["biaseval"]["groups_path"] = str(groups_path)
    config["biaseval"]["model_before"] = "model.txt"
    config["biaseval"]["model_after"] = "model.txt"
    path = write_config(tmp_path / "config.yaml", config)
    assert main(["preprocess", "--config", path]) == EXIT_OK
    assert main(["train", "--config", path]) == EXIT_OK
    assert main(["bias-eval", "--config", path]) == EXIT_OK
    with open(tmp_path / "out" / BIAS_REPORT_FILE) as handle:
        rows = list(csv.DictReader(handle))
    for row in rows:
        assert float(row["ratio"]) == 1.0
        assert float(row["t"]) == 0.0
        assert float(row["p"]) == 1.0
        assert row["stars"] == ""
