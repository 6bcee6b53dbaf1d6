"""Tests for the bias table, its objective, and projected subgradient descent.

Oracles used here are independent of the production path: bias fractions are
recomputed with explicit loops, gradients are checked against central finite
differences, and the canonical one-free-weight problem is solved by brute
grid search over a closed-form objective.
"""
from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from helpers import corpus_from, random_labeled_corpus
from ngram_debias.corpus import LabeledCorpus
from ngram_debias.reweight import (
    BiasTable,
    ReweightConfig,
    TracePoint,
    WeightVector,
    compute_bias,
    load_weights,
    objective,
    objective_gradient,
    optimize_weights,
    save_weights,
    write_trace_csv,
)


def loop_bias(corpus: LabeledCorpus, alphas, n=2):
    """Independent bias computation: explicit presence loops per n-gram."""
    doc_grams = []
    for doc in corpus:
        tokens = doc.text.split()
        doc_grams.append({tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)})
    vocab = sorted(set().union(*doc_grams)) if doc_grams else []
    table = {}
    for gram in vocab:
        numer = [0.0] * corpus.schema.num_classes
        denom = 0.0
        for i, doc in enumerate(corpus):
            if gram in doc_grams[i]:
                w = 1.0 + alphas[i]
                numer[doc.label] += w
                denom += w
        table[gram] = [x / denom for x in numer]
    return table


# ---------------------------------------------------------------------------
# Config and containers
# ---------------------------------------------------------------------------


def test_config_validation():
    ReweightConfig()  # defaults are valid
    for bad in (
        {"lam": -0.1},
        {"n": 0},
        {"step_size": 0.0},
        {"max_iters": 0},
        {"tolerance": 0.0},
        {"min_count": 0},
    ):
        with pytest.raises(ValueError):
            ReweightConfig(**bad)


def test_weight_vector_validation():
    assert len(WeightVector.zeros(4)) == 4
    with pytest.raises(ValueError):
        WeightVector(np.array([[1.0]]))
    with pytest.raises(ValueError):
        WeightVector(np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        WeightVector(np.array([np.inf]))


def test_bias_table_row_sum_validation():
    corpus = corpus_from([("a b", 0), ("a b", 1)])
    table = compute_bias(corpus, n=2)
    with pytest.raises(ValueError):
        BiasTable(
            vocabulary=table.vocabulary,
            rows=np.array([[0.7, 0.7]]),
            schema=table.schema,
        )


# ---------------------------------------------------------------------------
# Bias fractions
# ---------------------------------------------------------------------------


def test_bias_hand_values():
    corpus = corpus_from(
        [("s t", 0), ("s t", 0), ("s t", 0), ("s t", 1)], classes=("a", "b")
    )
    table = compute_bias(corpus, n=2)
    assert table.vocabulary == (("s", "t"),)
    assert table.value(("s", "t"), 0) == 0.75
    assert table.value(("s", "t"), 1) == 0.25
    # Upweighting one class-0 document shifts the fraction to 4/5.
    upweighted = compute_bias(corpus, WeightVector(np.array([1.0, 0, 0, 0])), n=2)
    assert upweighted.value(("s", "t"), 0) == pytest.approx(0.8, rel=1e-15)
    assert upweighted.max_by_ngram().tolist() == [0.8]


def test_bias_uses_presence_not_multiplicity():
    # (x, y) occurs twice in the first document but m_ij is 0/1, so the
    # fraction is 1 of 2 documents, not 2 of 3 occurrences.
    corpus = corpus_from([("x y x y", 0), ("x y", 1)])
    table = compute_bias(corpus, n=2)
    assert table.value(("x", "y"), 0) == 0.5


def test_bias_min_count_filters_vocabulary():
    corpus = corpus_from([("a b c", 0), ("a b d", 1)])
    full = compute_bias(corpus, n=2, min_count=1)
    assert ("b", "c") in full.vocabulary
    filtered = compute_bias(corpus, n=2, min_count=2)
    assert filtered.vocabulary == (("a", "b"),)


def test_bias_matches_loop_oracle_random():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        corpus = random_labeled_corpus(rng, max_docs=25, num_classes=3, min_len=2)
        alphas = rng.uniform(0.0, 2.0, size=len(corpus))
        table = compute_bias(corpus, WeightVector(alphas), n=2)
        expected = loop_bias(corpus, alphas, n=2)
        assert set(table.vocabulary) == set(expected)
        for j, gram in enumerate(table.vocabulary):
            np.testing.assert_allclose(table.rows[j], expected[gram], rtol=1e-12)


def test_bias_alignment_errors():
    corpus = corpus_from([("a b", 0), ("c d", 1)])
    with pytest.raises(ValueError):
        compute_bias(corpus, WeightVector(np.zeros(3)), n=2)
    with pytest.raises(ValueError):
        compute_bias(corpus_from([], classes=("a",)), n=2)


# ---------------------------------------------------------------------------
# Objective and subgradient
# ---------------------------------------------------------------------------


def test_objective_hand_values():
    corpus = corpus_from(
        [("s t", 0), ("s t", 0), ("s t", 0), ("s t", 1)], classes=("a", "b")
    )
    config = ReweightConfig(lam=0.5, n=2)
    assert objective(corpus, None, config) == pytest.approx(0.75)
    alpha = WeightVector(np.array([0.0, 0.0, 0.0, 3.0]))
    # b = (3/7, 4/7); max 4/7; penalty 0.5 * 3.
    assert objective(corpus, alpha, config) == pytest.approx(4 / 7 + 1.5, rel=1e-12)
    squared = ReweightConfig(lam=0.5, n=2, squared_penalty=True)
    assert objective(corpus, alpha, squared) == pytest.approx(4 / 7 + 4.5, rel=1e-12)


def test_gradient_zero_at_balanced_tie():
    # Two documents sharing one bigram, one per class: b = (1/2, 1/2), and
    # averaging the tied-class subgradients cancels exactly.
    corpus = corpus_from([("s t", 0), ("s t", 1)])
    grad = objective_gradient(corpus, None, ReweightConfig(lam=1.0, n=2))
    np.testing.assert_array_equal(grad, np.zeros(2))


def test_gradient_origin_penalty_is_zero():
    # At alpha = 0 the norm subgradient is taken as 0, so the gradient equals
    # the data term alone; with lam huge this must not change it.
    corpus = corpus_from([("s t", 0), ("s t", 0), ("s t", 1)])
    light = objective_gradient(corpus, None, ReweightConfig(lam=1e-9, n=2))
    heavy = objective_gradient(corpus, None, ReweightConfig(lam=1e9, n=2))
    np.testing.assert_allclose(light, heavy, atol=1e-18)


def _fd_gradient(corpus, alphas, config, h=1e-5):
    base = np.asarray(alphas, dtype=np.float64)
    grad = np.empty_like(base)
    for i in range(len(base)):
        plus, minus = base.copy(), base.copy()
        plus[i] += h
        minus[i] -= h
        grad[i] = (
            objective(corpus, WeightVector(plus), config)
            - objective(corpus, WeightVector(minus), config)
        ) / (2 * h)
    return grad


def _column_gap(corpus, alphas, n):
    table = compute_bias(corpus, WeightVector(np.asarray(alphas, dtype=np.float64)), n=n)
    if not table.vocabulary:
        return np.inf
    top2 = np.sort(table.rows, axis=1)[:, -2:]
    return float(np.min(top2[:, 1] - top2[:, 0]))


def test_gradient_matches_finite_differences():
    checked = 0
    seed = 0
    while checked < 10:
        seed += 1
        rng = np.random.default_rng(seed)
        corpus = random_labeled_corpus(rng, max_docs=15, num_classes=2, min_len=2, min_docs=4)
        alphas = rng.uniform(0.1, 1.5, size=len(corpus))
        config = ReweightConfig(lam=float(rng.uniform(0.01, 1.0)), n=2)
        if _column_gap(corpus, alphas, 2) < 1e-3:
            continue  # near-tied argmax: objective not differentiable there
        analytic = objective_gradient(corpus, WeightVector(alphas), config)
        numeric = _fd_gradient(corpus, alphas, config)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / denom < 1e-6
        checked += 1


def test_gradient_matches_finite_differences_squared_penalty():
    rng = np.random.default_rng(7)
    corpus = corpus_from([("s t u", 0), ("s t", 0), ("t u", 1), ("s t v", 1)])
    alphas = rng.uniform(0.2, 1.0, size=4)
    config = ReweightConfig(lam=0.3, n=2, squared_penalty=True)
    assert _column_gap(corpus, alphas, 2) > 1e-3
    analytic = objective_gradient(corpus, WeightVector(alphas), config)
    numeric = _fd_gradient(corpus, alphas, config)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def test_optimizer_stationary_at_balanced_tie():
    corpus = corpus_from([("s t", 0), ("s t", 1)])
    result = optimize_weights(corpus, ReweightConfig(lam=1.0, n=2))
    assert result.converged
    assert result.iterations == 0
    np.testing.assert_array_equal(result.weights.alphas, np.zeros(2))
    assert result.trace[0].objective == pytest.approx(0.5)


def test_optimizer_empty_vocabulary_is_stationary():
    corpus = corpus_from([("single", 0), ("word", 1), ("here", 0)])
    result = optimize_weights(corpus, ReweightConfig(lam=1.0, n=2))
    assert result.converged
    assert result.trace[0].objective == 0.0
    np.testing.assert_array_equal(result.weights.alphas, np.zeros(3))


def test_optimizer_nine_one_fixture_matches_grid_oracle():
    # Nine class-a documents and one class-b document share the single
    # vocabulary bigram.  Only the class-b weight a can lower the objective:
    #     F(a) = 9 / (10 + a) + lam * a        (while a < 8)
    # Brute grid search over a in [0, 5] at 1e-3 resolution is the oracle.
    lam = 0.05
    docs = [("s t", 0)] * 9 + [("s t", 1)]
    corpus = corpus_from(docs, classes=("a", "b"))
    grid = np.arange(0.0, 5.0 + 1e-9, 1e-3)
    grid_values = 9.0 / (10.0 + grid) + lam * grid
    best = float(grid_values.min())
    assert best == pytest.approx(9.0 / math.sqrt(180.0) * 2.0 - 10.0 * lam, rel=1e-6)

    config = ReweightConfig(
        lam=lam, n=2, step_size=50.0, max_iters=500, tolerance=1e-9
    )
    result = optimize_weights(corpus, config)
    assert result.converged
    alphas = result.weights.alphas
    np.testing.assert_array_equal(alphas[:9], np.zeros(9))  # projection held
    achieved = 9.0 / (10.0 + alphas[9]) + lam * alphas[9]
    assert abs(achieved - best) <= 1e-2
    assert abs(alphas[9] - (math.sqrt(180.0) - 10.0)) < 0.35


def test_optimizer_trace_monotone_on_random_corpora():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        corpus = random_labeled_corpus(rng, max_docs=20, num_classes=3, min_len=2)
        config = ReweightConfig(
            lam=float(rng.choice([0.01, 0.1, 1.0])),
            n=2,
            step_size=float(rng.choice([0.1, 1.0, 10.0])),
            max_iters=40,
            tolerance=1e-7,
        )
        result = optimize_weights(corpus, config)
        values = [p.objective for p in result.trace]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
        assert values[-1] <= values[0]
        assert result.trace[0].iteration == 0


def test_optimizer_callback_and_convergence_flag():
    docs = [("s t", 0)] * 9 + [("s t", 1)]
    corpus = corpus_from(docs, classes=("a", "b"))
    seen: list[tuple[int, float]] = []
    config = ReweightConfig(lam=0.05, n=2, step_size=50.0, max_iters=2, tolerance=1e-12)
    result = optimize_weights(
        corpus, config, callback=lambda i, a, v: seen.append((i, v))
    )
    assert not result.converged  # budget exhausted before tolerance reached
    assert [i for i, _ in seen] == [p.iteration for p in result.trace[1:]]
    assert all(v == pytest.approx(p.objective) for (_, v), p in zip(seen, result.trace[1:]))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_weights_roundtrip(tmp_path):
    corpus = corpus_from([("a b", 0), ("c d", 1), ("e f", 0)])
    weights = WeightVector(np.array([0.5, 0.0, 1.25]))
    path = tmp_path / "weights.jsonl"
    save_weights(corpus, weights, path)
    loaded = load_weights(path, corpus)
    np.testing.assert_array_equal(loaded.alphas, weights.alphas)
    # A subset corpus reads the same file; extra ids are ignored.
    subset = corpus.select([2])
    np.testing.assert_array_equal(load_weights(path, subset).alphas, [1.25])


def test_load_weights_missing_ids(tmp_path):
    corpus = corpus_from([("a b", 0), ("c d", 1)])
    path = tmp_path / "weights.jsonl"
    save_weights(corpus.select([0]), WeightVector(np.array([0.1])), path)
    with pytest.raises(ValueError, match="d1"):
        load_weights(path, corpus)


def test_save_weights_length_mismatch(tmp_path):
    corpus = corpus_from([("a b", 0), ("c d", 1)])
    with pytest.raises(ValueError):
        save_weights(corpus, WeightVector(np.array([0.1])), tmp_path / "w.jsonl")


def test_write_trace_csv(tmp_path):
    trace = (TracePoint(0, 0.9, 0.0), TracePoint(1, 0.85, 0.125))
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    with open(path) as handle:
        parsed = list(csv.reader(handle))
    assert parsed[0] == ["iteration", "objective", "step_size"]
    assert parsed[1] == ["0", "0.9", "0.0"]
    assert parsed[2] == ["1", "0.85", "0.125"]
