#!/usr/bin/env python3
"""Generate the planted-bigram synthetic corpora as pipeline input files.

Writes ``train.csv`` (labeled two-class training data) and ``groups.jsonl``
(two unlabeled dialect-group corpora with demographic posteriors) into the
output directory.  The planted bigram "bad wolf" appears in most "neg"
documents and at different rates across the two groups, which is what the
re-weighting pipeline is expected to detect and correct.

Example:
    python3 scripts/make_synthetic_corpus.py --out data/synthetic --seed 1
"""
from __future__ import annotations

import argparse
from pathlib import Path

from ngram_debias.synthetic import (
    SyntheticSpec,
    planted_group_corpus,
    planted_training_corpus,
    write_group_jsonl,
    write_training_csv,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data/synthetic"),
                        help="output directory (default: data/synthetic)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-per-class", type=int, default=100,
                        help="labeled documents per class (default: 100)")
    parser.add_argument("--n-group", type=int, default=150,
                        help="documents per dialect group (default: 150)")
    args = parser.parse_args(argv)

    spec = SyntheticSpec(n_per_class=args.n_per_class, n_group=args.n_group)
    args.out.mkdir(parents=True, exist_ok=True)

    train = planted_training_corpus(seed=args.seed, spec=spec)
    train_path = args.out / "train.csv"
    write_training_csv(train, train_path)

    groups = [
        planted_group_corpus(seed=args.seed, group=name, spec=spec)
        for name in ("groupa", "groupb")
    ]
    groups_path = args.out / "groups.jsonl"
    write_group_jsonl(groups, groups_path)

    print(f"wrote {len(train)} labeled documents to {train_path}")
    print(
        f"wrote {sum(len(g) for g in groups)} group documents "
        f"({' + '.join(str(len(g)) for g in groups)}) to {groups_path}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
