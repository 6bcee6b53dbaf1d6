"""Tests for n-gram statistics and local mutual information.

The core check is an independent brute-force oracle: n-gram occurrences are
re-enumerated with plain Counter bookkeeping and the LMI formula is
re-evaluated from scratch, then compared against the production path.
"""
from __future__ import annotations

import csv
import math
from collections import Counter

import numpy as np
import pytest

from helpers import corpus_from, random_labeled_corpus
from ngram_debias.corpus import LabeledCorpus
from ngram_debias.lmi_audit import (
    LMI_SCALE,
    AuditRow,
    audit_report,
    collect_stats,
    format_ngram,
    lmi,
    top_k_frequency,
    top_k_lmi,
    write_audit_report,
)


def brute_force_lmi(corpus: LabeledCorpus, n: int) -> dict[tuple, float]:
    """Independent LMI computation: flat occurrence list + Counter grouping."""
    occurrences: list[tuple[tuple[str, ...], int]] = []
    for doc in corpus:
        tokens = doc.text.split()
        for i in range(len(tokens) - n + 1):
            occurrences.append((tuple(tokens[i : i + n]), doc.label))
    total = len(occurrences)
    pair_counts = Counter(occurrences)
    gram_counts = Counter(g for g, _ in occurrences)
    class_counts = Counter(c for _, c in occurrences)
    values: dict[tuple, float] = {}
    for gram in gram_counts:
        for c in range(corpus.schema.num_classes):
            c_wc = pair_counts[(gram, c)]
            if c_wc == 0:
                values[(gram, c)] = 0.0
                continue
            p_wc = c_wc / total
            p_c_given_w = c_wc / gram_counts[gram]
            p_c = class_counts[c] / total
            values[(gram, c)] = p_wc * math.log(p_c_given_w / p_c)
    return values


# ---------------------------------------------------------------------------
# Hand-checked values
# ---------------------------------------------------------------------------


def test_lmi_hand_value():
    # One bigram occurring 3 times, all in class 0, out of 10 occurrences
    # total, with class 0 holding 6 of the 10: contribution
    # (3/10) * ln((3/3) / (6/10)) = 0.3 * ln(5/3 * ... ) -- worked out below.
    corpus = corpus_from(
        [
            ("bad wolf bad wolf bad", 0),  # bigrams: bw wb bw wb -> 4 occurrences
            ("calm calm calm", 1),  # cc cc -> 2 occurrences
            ("bad wolf x", 0),  # bw wf -> 2 occurrences
            ("y z w", 1),  # yz zw -> 2 occurrences
        ]
    )
    stats = collect_stats(corpus, 2)
    assert stats.total == 10
    assert stats.class_totals == (6, 4)
    assert stats.count_w(("bad", "wolf")) == 3
    got = lmi(stats, ("bad", "wolf"), 0)
    expected = 0.3 * math.log((3 / 3) / (6 / 10))
    assert got == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.15324768712979722, rel=1e-12)


def test_lmi_conventions():
    corpus = corpus_from([("a b c", 0), ("a b", 1)])
    stats = collect_stats(corpus, 2)
    # Present overall but absent from class 1's complement cases:
    assert lmi(stats, ("b", "c"), 1) == 0.0  # count(w,c)=0, count(w)>0
    assert math.isnan(lmi(stats, ("z", "q"), 0))  # absent n-gram
    with pytest.raises(ValueError):
        lmi(stats, ("a", "b"), 5)
    empty = corpus_from([("a", 0)])
    with pytest.raises(ValueError):
        lmi(collect_stats(empty, 2), ("a", "b"), 0)  # no bigrams at all


def test_single_class_occurrences_give_zero():
    # When every occurrence lies in one class, p(c|w) == p(c) for that class,
    # so all defined LMI values are exactly 0.0.
    corpus = corpus_from([("a b a b", 0), ("b a", 0), ("only unigrams", 1)][0:2])
    stats = collect_stats(corpus, 2)
    for gram in stats.counts:
        assert lmi(stats, gram, 0) == 0.0


def test_collect_stats_requires_labels():
    corpus = corpus_from([("a b", 0), ("c d", None)])
    with pytest.raises(ValueError, match="d1"):
        collect_stats(corpus, 2)
    with pytest.raises(ValueError):
        collect_stats(corpus_from([("a b", 0)]), 0)


def test_counts_multiplicity_not_presence():
    corpus = corpus_from([("x y x y x y", 0)])
    stats = collect_stats(corpus, 2)
    assert stats.count_wc(("x", "y"), 0) == 3  # occurrences, not documents
    assert stats.count_wc(("y", "x"), 0) == 2
    assert stats.total == 5


# ---------------------------------------------------------------------------
# Brute-force equivalence
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_lmi_matches_brute_force(seed, n):
    rng = np.random.default_rng([seed, n])
    corpus = random_labeled_corpus(rng, num_classes=int(rng.integers(2, 4)))
    if collect_stats(corpus, n).total == 0:
        pytest.skip("degenerate draw with no n-grams")
    stats = collect_stats(corpus, n)
    expected = brute_force_lmi(corpus, n)
    grams = {g for g, _ in expected}
    assert set(stats.counts) == grams
    for (gram, c), value in expected.items():
        got = lmi(stats, gram, c)
        assert got == pytest.approx(value, rel=1e-9, abs=1e-15)


# ---------------------------------------------------------------------------
# Rankings
# ---------------------------------------------------------------------------


def test_top_k_lmi_ordering_and_ties():
    corpus = corpus_from(
        [
            ("bad wolf q", 0),
            ("bad wolf r", 0),
            ("calm sea q", 1),
            ("calm sea r", 1),
        ]
    )
    stats = collect_stats(corpus, 2)
    top = top_k_lmi(stats, 0, 3)
    assert top[0].ngram == ("bad", "wolf")
    assert top[0].count == 2
    # ("wolf","q") and ("wolf","r") tie on LMI and count; lexicographic order
    # breaks the tie deterministically.
    assert [e.ngram for e in top[1:]] == [("wolf", "q"), ("wolf", "r")]
    assert top_k_lmi(stats, 0, 0) == []
    with pytest.raises(ValueError):
        top_k_lmi(stats, 0, -1)


def test_top_k_frequency_ignores_labels():
    corpus = corpus_from([("a b a b", None), ("a b", None)], classes=("only",))
    ranked = top_k_frequency(corpus, 2, 2)
    assert ranked[0] == (("a", "b"), 3)
    assert ranked[1] == (("b", "a"), 1)


# ---------------------------------------------------------------------------
# Audit report
# ---------------------------------------------------------------------------


def test_audit_report_scale_and_nan(tmp_path):
    train = corpus_from([("bad wolf x", 0), ("calm sea y", 1), ("bad wolf z", 0)])
    test = corpus_from([("calm sea t", 1), ("other words", 0)])
    rows = audit_report(collect_stats(train, 2), collect_stats(test, 2), k=1)
    assert len(rows) == 2  # one per class
    by_class = {r.class_name: r for r in rows}
    top_a = by_class["a"]
    assert top_a.ngram == ("bad", "wolf")
    assert top_a.train_lmi_e6 == pytest.approx(
        lmi(collect_stats(train, 2), ("bad", "wolf"), 0) * LMI_SCALE
    )
    assert math.isnan(top_a.test_lmi_e6)  # absent from the test corpus
    assert top_a.test_count == 0

    path = tmp_path / "audit.csv"
    write_audit_report(rows, path)
    with open(path) as handle:
        parsed = list(csv.reader(handle))
    assert parsed[0] == [
        "class", "ngram", "train_lmi_e6", "test_lmi_e6", "train_count", "test_count",
    ]
    row_a = next(r for r in parsed[1:] if r[0] == "a")
    assert row_a[1] == "bad_wolf"
    assert float(row_a[2]) == top_a.train_lmi_e6  # repr round-trips exactly
    assert row_a[3] == "nan"


def test_audit_report_requires_matching_stats():
    train = corpus_from([("a b c", 0), ("d e f", 1)])
    with pytest.raises(ValueError):
        audit_report(collect_stats(train, 2), collect_stats(train, 1), k=1)
    other_schema = corpus_from([("a b c", 0), ("d e f", 1)], classes=("x", "y"))
    with pytest.raises(ValueError):
        audit_report(collect_stats(train, 2), collect_stats(other_schema, 2), k=1)


def test_format_ngram():
    assert format_ngram(("a",)) == "a"
    assert format_ngram(("a", "b", "c")) == "a_b_c"
