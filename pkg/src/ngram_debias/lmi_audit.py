"""Local mutual information audit of class-correlated n-grams.

For an n-gram w and class c,

    lmi(w, c) = p(w, c) * ln( p(c | w) / p(c) )

with all probabilities estimated from occurrence counts (multiplicity, not
document presence): p(w, c) = count(w, c) / total, p(c | w) =
count(w, c) / count(w), p(c) = count(c) / total, where ``total`` is the
number of n-gram occurrences in the whole corpus and count(c) the number of
occurrences inside class-c documents.  Natural log throughout.  Values are
conventionally reported scaled by 1e6.

Conventions: count(w, c) = 0 with count(w) > 0 gives exactly 0.0; an n-gram
absent from the corpus has undefined LMI, represented as float('nan').
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import LabeledCorpus, LabelSchema
from .preprocess import extract_ngrams, tokenize

__all__ = [
    "Ngram",
    "NgramStats",
    "LmiEntry",
    "AuditRow",
    "collect_stats",
    "lmi",
    "top_k_lmi",
    "top_k_frequency",
    "audit_report",
    "write_audit_report",
    "format_ngram",
]

Ngram = tuple[str, ...]

LMI_SCALE = 1e6


def format_ngram(ngram: Ngram) -> str:
    """Join n-gram tokens with underscores for tabular output."""
    return "_".join(ngram)


@dataclass(frozen=True)
class NgramStats:
    """Occurrence counts for all n-grams of one order over a labeled corpus.

    ``counts`` maps each n-gram to its per-class occurrence counts (length
    C); ``class_totals[c]`` is the total number of n-gram occurrences inside
    class-c documents and ``total`` their sum, so the per-class rows of
    ``counts`` always sum over classes to the n-gram's corpus count.
    """

    n: int
    schema: LabelSchema
    counts: Mapping[Ngram, tuple[int, ...]]
    class_totals: tuple[int, ...]
    total: int

    def count_w(self, ngram: Ngram) -> int:
        row = self.counts.get(ngram)
        return 0 if row is None else int(sum(row))

    def count_wc(self, ngram: Ngram, class_index: int) -> int:
        row = self.counts.get(ngram)
        return 0 if row is None else int(row[class_index])

    def vocabulary(self) -> list[Ngram]:
        return sorted(self.counts)


@dataclass(frozen=True)
class LmiEntry:
    """One audited n-gram for one class."""

    ngram: Ngram
    class_index: int
    lmi: float
    count: int


@dataclass(frozen=True)
class AuditRow:
    """Audit-table row: train/test LMI (scaled 1e6) and counts for one n-gram."""

    class_name: str
    ngram: Ngram
    train_lmi_e6: float
    test_lmi_e6: float
    train_count: int
    test_count: int


def collect_stats(corpus: LabeledCorpus, n: int) -> NgramStats:
    """Count n-gram occurrences per class over a fully labeled corpus.

    Documents must already be normalized (``text`` filled); raises ValueError
    naming the first unlabeled document otherwise.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    num_classes = corpus.schema.num_classes
    counts: dict[Ngram, np.ndarray] = {}
    class_totals = np.zeros(num_classes, dtype=np.int64)
    for doc in corpus:
        if doc.label is None:
            raise ValueError(f"collect_stats requires labels; document {doc.id!r} has none")
        grams = extract_ngrams(tokenize(doc.text), n)
        class_totals[doc.label] += len(grams)
        for gram in grams:
            row = counts.get(gram)
            if row is None:
                row = np.zeros(num_classes, dtype=np.int64)
                counts[gram] = row
            row[doc.label] += 1
    frozen = {gram: tuple(int(x) for x in row) for gram, row in counts.items()}
    return NgramStats(
        n=n,
        schema=corpus.schema,
        counts=frozen,
        class_totals=tuple(int(x) for x in class_totals),
        total=int(class_totals.sum()),
    )


def lmi(stats: NgramStats, ngram: Ngram, class_index: int) -> float:
    """Local mutual information of (ngram, class); see module docstring.

    Returns float('nan') when the n-gram never occurs.  In a corpus whose
    occurrences all fall in one class, every defined value is exactly 0.0.
    """
    if stats.total == 0:
        raise ValueError("LMI undefined: corpus contains no n-grams of this order")
    if not (0 <= class_index < stats.schema.num_classes):
        raise ValueError(f"class index {class_index} out of range")
    c_w = stats.count_w(ngram)
    if c_w == 0:
        return float("nan")
    c_wc = stats.count_wc(ngram, class_index)
    if c_wc == 0:
        return 0.0
    p_wc = c_wc / stats.total
    p_c_given_w = c_wc / c_w
    p_c = stats.class_totals[class_index] / stats.total
    return p_wc * math.log(p_c_given_w / p_c)


def top_k_lmi(stats: NgramStats, class_index: int, k: int) -> list[LmiEntry]:
    """The k n-grams with the highest LMI for one class.

    Ties break by higher corpus count, then lexicographic n-gram order, so
    the ranking is fully deterministic.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    entries = [
        LmiEntry(
            ngram=gram,
            class_index=class_index,
            lmi=lmi(stats, gram, class_index),
            count=stats.count_w(gram),
        )
        for gram in stats.counts
    ]
    entries.sort(key=lambda e: (-e.lmi, -e.count, e.ngram))
    return entries[:k]


def top_k_frequency(corpus: LabeledCorpus, n: int, k: int) -> list[tuple[Ngram, int]]:
    """The k most frequent n-grams (occurrence counts) with deterministic ties.

    Labels are not consulted, so this also works for unlabeled group corpora.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    totals: dict[Ngram, int] = {}
    for doc in corpus:
        for gram in extract_ngrams(tokenize(doc.text), n):
            totals[gram] = totals.get(gram, 0) + 1
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def audit_report(
    train_stats: NgramStats, test_stats: NgramStats, k: int
) -> list[AuditRow]:
    """Per class, the top-k train-LMI n-grams with their train and test values.

    LMI columns are scaled by 1e6.  An n-gram absent from the test corpus
    gets a test value of float('nan') (serialized as "nan").  Requires both
    stats to share the same n-gram order and schema.
    """
    if train_stats.n != test_stats.n:
        raise ValueError(
            f"n-gram order mismatch: train n={train_stats.n}, test n={test_stats.n}"
        )
    if train_stats.schema != test_stats.schema:
        raise ValueError("schema mismatch between train and test statistics")
    rows: list[AuditRow] = []
    for class_index, class_name in enumerate(train_stats.schema.classes):
        for entry in top_k_lmi(train_stats, class_index, k):
            test_value = lmi(test_stats, entry.ngram, class_index)
            rows.append(
                AuditRow(
                    class_name=class_name,
                    ngram=entry.ngram,
                    train_lmi_e6=entry.lmi * LMI_SCALE,
                    test_lmi_e6=(
                        float("nan") if math.isnan(test_value) else test_value * LMI_SCALE
                    ),
                    train_count=entry.count,
                    test_count=test_stats.count_w(entry.ngram),
                )
            )
    return rows


def write_audit_report(rows: Sequence[AuditRow], path: str) -> None:
    """Write audit rows as plot-ready CSV (floats via repr, undefined as nan)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["class", "ngram", "train_lmi_e6", "test_lmi_e6", "train_count", "test_count"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.class_name,
                    format_ngram(row.ngram),
                    repr(float(row.train_lmi_e6)),
                    repr(float(row.test_lmi_e6)),
                    row.train_count,
                    row.test_count,
                ]
            )
