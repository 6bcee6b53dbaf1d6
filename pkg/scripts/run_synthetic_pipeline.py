#!/usr/bin/env python3
"""Run the full debiasing pipeline end-to-end on the synthetic corpora.

Generates the planted-bigram data, writes a run config, then drives the CLI
through preprocess, audit, reweight, baseline and re-weighted training,
evaluation, group bias comparison, and a learning curve.  Finishes by
printing the before/after group-ratio table, which should show the ratio
for the "neg" class shrinking toward 1 after re-weighting.

Example:
    python3 scripts/run_synthetic_pipeline.py --out runs/synthetic --seed 1
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import yaml

from ngram_debias import cli
from ngram_debias.synthetic import (
    SyntheticSpec,
    planted_group_corpus,
    planted_training_corpus,
    write_group_jsonl,
    write_training_csv,
)

STEPS = (
    ["preprocess"],
    ["audit"],
    ["reweight"],
    ["train", "--weights", "none", "--model-out", "baseline.txt"],
    ["train", "--weights", cli.WEIGHTS_FILE, "--model-out", "model.txt"],
    ["evaluate", "--model", "model.txt", "--weighted-f1"],
    ["bias-eval"],
    ["learning-curve"],
)


def build_config(data_dir: Path, out_dir: Path, seed: int, epochs: int) -> dict:
    return {
        "schema": ["neg", "other"],
        "output_dir": str(out_dir),
        "dataset": {
            "path": str(data_dir / "train.csv"),
            "format": "csv",
            "id_column": "id",
        },
        "split": {"fractions": [0.8, 0.1, 0.1], "seed": seed + 100},
        "preprocess": {"min_tokens": 2},
        "audit": {"n": 2, "top_k": 20},
        "reweight": {
            "lambda": 0.01,
            "n": 2,
            "step_size": 50.0,
            "max_iters": 2000,
            "tolerance": 1.0e-8,
            "seed": 0,
        },
        "train": {"seed": 7, "epochs": epochs, "learning_rate": 0.1},
        "biaseval": {
            "groups_path": str(data_dir / "groups.jsonl"),
            "negative_classes": ["neg"],
            "sample_size": 120,
            "seed": 11,
            "model_before": "baseline.txt",
            "model_after": "model.txt",
            "dataset_name": "synthetic",
        },
        "learning_curve": {
            "portions": [0.2, 0.4, 0.6, 0.8, 1.0],
            "repeats": 5,
            "seed": 5,
        },
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("runs/synthetic"),
                        help="run directory (default: runs/synthetic)")
    parser.add_argument("--seed", type=int, default=1,
                        help="dataset seed; the split seed derives from it")
    parser.add_argument("--epochs", type=int, default=60)
    args = parser.parse_args(argv)

    data_dir = args.out / "data"
    artifact_dir = args.out / "artifacts"
    data_dir.mkdir(parents=True, exist_ok=True)

    spec = SyntheticSpec()
    write_training_csv(planted_training_corpus(seed=args.seed, spec=spec),
                       data_dir / "train.csv")
    write_group_jsonl(
        [
            planted_group_corpus(seed=args.seed, group=name, spec=spec)
            for name in ("groupa", "groupb")
        ],
        data_dir / "groups.jsonl",
    )

    config_path = args.out / "config.yaml"
    config_path.write_text(
        yaml.safe_dump(build_config(data_dir, artifact_dir, args.seed, args.epochs)),
        encoding="utf-8",
    )
    print(f"config -> {config_path}")

    for step in STEPS:
        print(f"$ ngram-debias {' '.join(step)}")
        code = cli.main([*step, "--config", str(config_path)])
        if code != cli.EXIT_OK:
            print(f"step {step[0]!r} failed with exit code {code}")
            return code

    print()
    print("group bias ratios (black / white mean membership):")
    with open(artifact_dir / cli.BIAS_REPORT_FILE, encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            print(
                f"  {row['class']:>8s} {row['variant']:>7s}: "
                f"ratio {float(row['ratio']):.3f}  "
                f"(p_black {float(row['p_hat_black']):.4f}, "
                f"p_white {float(row['p_hat_white']):.4f}, "
                f"t {float(row['t']):.2f}{row['stars']})"
            )
    print(f"\nartifacts -> {artifact_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
