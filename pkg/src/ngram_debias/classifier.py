"""Reference softmax n-gram classifier trained with weighted cross-entropy.

The model is linear over sparse n-gram features: logits = x W^T + b with
W of shape (C, V).  Per-sample weighted cross-entropy is

    loss_i = -(1 + alpha_i) * ln yhat_i[y_i]

so alpha = 0 recovers plain cross-entropy.  Training is mini-batch gradient
descent on the mean weighted loss plus (l2 / 2) ||W||^2 (biases are not
regularized), with per-epoch shuffling from a seeded generator and early
stopping on the weighted validation loss; the parameters from the best
validation epoch are returned.  Predicted probabilities are clamped at
1e-12 inside the loss; each clamp increments a module counter.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .corpus import Document, LabeledCorpus, LabelSchema
from .lmi_audit import Ngram
from .preprocess import extract_ngrams, tokenize
from .reweight import WeightVector

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureMap",
    "TrainConfig",
    "SoftmaxModel",
    "EpochPoint",
    "PredictionSet",
    "build_features",
    "transform",
    "weighted_ce_loss",
    "ce_objective",
    "ce_gradient",
    "train",
    "predict_proba",
    "predict",
    "save_model",
    "load_model",
    "load_external_predictions",
    "clamp_events",
    "reset_clamp_events",
]

PROB_FLOOR = 1e-12
WEIGHTINGS = ("binary", "count", "tfidf")

_clamp_events = 0


def clamp_events() -> int:
    """Number of probability clamps applied inside the loss so far."""
    return _clamp_events


def reset_clamp_events() -> None:
    global _clamp_events
    _clamp_events = 0


def _register_clamps(count: int) -> None:
    global _clamp_events
    if count:
        _clamp_events += count
        logger.debug("clamped %d probabilities at %g", count, PROB_FLOOR)


# =========================================================================
# Features
# =========================================================================

@dataclass(frozen=True)
class FeatureMap:
    """Column layout for n-gram features.

    ``vocabulary`` maps each n-gram to its column; ``n_range`` lists the
    n-gram orders included; ``weighting`` is one of binary / count / tfidf;
    ``idf[j] = ln(N / df_j)`` is present only for tfidf.
    """

    vocabulary: Mapping[Ngram, int]
    n_range: tuple[int, ...] = (1, 2)
    weighting: str = "binary"
    idf: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.weighting not in WEIGHTINGS:
            raise ValueError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )
        if self.weighting == "tfidf" and self.idf is None:
            raise ValueError("tfidf weighting requires idf values")

    @property
    def num_features(self) -> int:
        return len(self.vocabulary)


def _doc_ngrams(doc: Document, n_range: Sequence[int]) -> list[Ngram]:
    tokens = tokenize(doc.text)
    grams: list[Ngram] = []
    for n in n_range:
        grams.extend(extract_ngrams(tokens, n))
    return grams


def build_features(
    corpus: LabeledCorpus,
    n_range: Sequence[int] = (1, 2),
    weighting: str = "binary",
) -> FeatureMap:
    """Vocabulary (and idf for tfidf) from a training corpus.

    Columns are assigned in sorted n-gram order, so the layout depends only
    on the corpus content.
    """
    orders = tuple(sorted(set(int(n) for n in n_range)))
    if not orders or orders[0] < 1:
        raise ValueError(f"n_range must contain integers >= 1, got {list(n_range)}")
    doc_freq: dict[Ngram, int] = {}
    for doc in corpus:
        for gram in set(_doc_ngrams(doc, orders)):
            doc_freq[gram] = doc_freq.get(gram, 0) + 1
    vocab = {gram: j for j, gram in enumerate(sorted(doc_freq))}
    idf = None
    if weighting == "tfidf":
        n_docs = len(corpus)
        idf = np.array(
            [math.log(n_docs / doc_freq[gram]) for gram in sorted(doc_freq)],
            dtype=np.float64,
        )
    return FeatureMap(vocabulary=vocab, n_range=orders, weighting=weighting, idf=idf)


def transform(feature_map: FeatureMap, corpus: LabeledCorpus) -> sparse.csr_matrix:
    """Sparse feature matrix (N, V); n-grams outside the vocabulary are dropped."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    vocab = feature_map.vocabulary
    for doc in corpus:
        counts: dict[int, float] = {}
        for gram in _doc_ngrams(doc, feature_map.n_range):
            j = vocab.get(gram)
            if j is not None:
                counts[j] = counts.get(j, 0.0) + 1.0
        for j in sorted(counts):
            indices.append(j)
            if feature_map.weighting == "binary":
                data.append(1.0)
            elif feature_map.weighting == "count":
                data.append(counts[j])
            else:  # tfidf
                data.append(counts[j] * feature_map.idf[j])
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (
            np.asarray(data, dtype=np.float64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(corpus), feature_map.num_features),
    )


# =========================================================================
# Loss
# =========================================================================

def weighted_ce_loss(yhat: np.ndarray, y: np.ndarray, alpha: float) -> float:
    """-(1 + alpha) * sum_c y_c ln yhat_c for one sample (y is one-hot)."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: yhat {yhat.shape} vs y {y.shape}")
    picked = float(yhat[np.argmax(y)])
    if picked < PROB_FLOOR:
        _register_clamps(1)
        picked = PROB_FLOOR
    return -(1.0 + alpha) * math.log(picked)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _mean_weighted_ce(
    probs: np.ndarray, labels: np.ndarray, alphas: np.ndarray
) -> float:
    picked = probs[np.arange(len(labels)), labels]
    below = int(np.count_nonzero(picked < PROB_FLOOR))
    _register_clamps(below)
    picked = np.maximum(picked, PROB_FLOOR)
    return float(np.mean((1.0 + alphas) * -np.log(picked)))


def ce_objective(
    weights: np.ndarray,
    biases: np.ndarray,
    features: sparse.csr_matrix,
    labels: np.ndarray,
    alphas: np.ndarray,
    l2: float,
) -> float:
    """Mean weighted cross-entropy plus (l2 / 2) ||W||^2 at given parameters."""
    probs = _softmax(features @ weights.T + biases)
    data = _mean_weighted_ce(probs, labels, alphas)
    return data + 0.5 * l2 * float(np.sum(weights * weights))


def ce_gradient(
    weights: np.ndarray,
    biases: np.ndarray,
    features: sparse.csr_matrix,
    labels: np.ndarray,
    alphas: np.ndarray,
    l2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`ce_objective` with respect to (W, b)."""
    n = features.shape[0]
    probs = _softmax(features @ weights.T + biases)
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta *= (1.0 + alphas)[:, None]
    grad_w = np.asarray((delta.T @ features) / n) + l2 * weights
    grad_b = delta.sum(axis=0) / n
    return grad_w, grad_b


# =========================================================================
# Model and training
# =========================================================================

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    l2: float = 1e-4
    seed: int = 0
    early_stop_patience: int = 5

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.early_stop_patience < 1:
            raise ValueError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )


@dataclass(frozen=True)
class SoftmaxModel:
    """Linear softmax classifier: logits = x W^T + b."""

    schema: LabelSchema
    feature_map: FeatureMap
    weights: np.ndarray  # (C, V)
    biases: np.ndarray  # (C,)

    def __post_init__(self) -> None:
        c, v = self.weights.shape
        if c != self.schema.num_classes:
            raise ValueError("weight rows do not match the number of classes")
        if v != self.feature_map.num_features:
            raise ValueError("weight columns do not match the vocabulary size")
        if self.biases.shape != (c,):
            raise ValueError("bias vector does not match the number of classes")


@dataclass(frozen=True)
class EpochPoint:
    """Per-epoch losses: training objective (with l2) and validation data loss."""

    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class PredictionSet:
    """Per-document class probability vectors, each summing to 1 (+- 1e-6)."""

    ids: tuple[str, ...]
    probs: np.ndarray  # (N, C)
    tag: str = ""

    def __post_init__(self) -> None:
        if self.probs.ndim != 2 or self.probs.shape[0] != len(self.ids):
            raise ValueError("probs must be (num_docs, num_classes)")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be non-negative")
        if self.probs.size and np.max(np.abs(self.probs.sum(axis=1) - 1.0)) > 1e-6:
            raise ValueError("probability rows must sum to 1 within 1e-6")

    def __len__(self) -> int:
        return len(self.ids)


def train(
    train_corpus: LabeledCorpus,
    val_corpus: LabeledCorpus,
    weights: WeightVector | None,
    config: TrainConfig,
    n_range: Sequence[int] = (1, 2),
    weighting: str = "binary",
    feature_map: FeatureMap | None = None,
) -> tuple[SoftmaxModel, list[EpochPoint]]:
    """Train from W = 0, b = 0; returns the best-validation model and the trace.

    ``weights`` covers train then validation documents in order (None means
    alpha = 0 everywhere).  Validation loss is the mean weighted
    cross-entropy without the l2 term; the reported train loss includes it.
    """
    if train_corpus.schema != val_corpus.schema:
        raise ValueError("train and validation corpora use different schemas")
    n_train, n_val = len(train_corpus), len(val_corpus)
    if n_train == 0 or n_val == 0:
        raise ValueError("training and validation corpora must be non-empty")
    alphas = _aligned_split_alphas(weights, n_train, n_val)
    alpha_train, alpha_val = alphas

    if feature_map is None:
        feature_map = build_features(train_corpus, n_range, weighting)
    x_train = transform(feature_map, train_corpus)
    x_val = transform(feature_map, val_corpus)
    y_train = train_corpus.labels()
    y_val = val_corpus.labels()

    num_classes = train_corpus.schema.num_classes
    w = np.zeros((num_classes, feature_map.num_features))
    b = np.zeros(num_classes)
    rng = np.random.default_rng(config.seed)

    best_val = math.inf
    best_w, best_b = w.copy(), b.copy()
    stall = 0
    trace: list[EpochPoint] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_w, grad_b = ce_gradient(
                w, b, x_train[batch], y_train[batch], alpha_train[batch], config.l2
            )
            w -= config.learning_rate * grad_w
            b -= config.learning_rate * grad_b
        train_loss = ce_objective(w, b, x_train, y_train, alpha_train, config.l2)
        val_probs = _softmax(x_val @ w.T + b)
        val_loss = _mean_weighted_ce(val_probs, y_val, alpha_val)
        trace.append(EpochPoint(epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_w, best_b = w.copy(), b.copy()
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                logger.info("early stop at epoch %d (best val %.6f)", epoch, best_val)
                break
    model = SoftmaxModel(
        schema=train_corpus.schema, feature_map=feature_map, weights=best_w, biases=best_b
    )
    return model, trace


def _aligned_split_alphas(
    weights: WeightVector | None, n_train: int, n_val: int
) -> tuple[np.ndarray, np.ndarray]:
    if weights is None:
        return np.zeros(n_train), np.zeros(n_val)
    if len(weights) != n_train + n_val:
        raise ValueError(
            f"weight vector has {len(weights)} entries for {n_train} train "
            f"+ {n_val} validation documents"
        )
    return weights.alphas[:n_train], weights.alphas[n_train:]


def predict_proba(
    model: SoftmaxModel, corpus: LabeledCorpus, tag: str = ""
) -> PredictionSet:
    """Class probabilities per document; out-of-vocabulary text gets softmax(b)."""
    features = transform(model.feature_map, corpus)
    probs = _softmax(features @ model.weights.T + model.biases)
    return PredictionSet(ids=tuple(d.id for d in corpus), probs=probs, tag=tag)


def predict(model: SoftmaxModel, corpus: LabeledCorpus) -> np.ndarray:
    """Predicted class indices; probability ties resolve to the lowest index."""
    return np.argmax(predict_proba(model, corpus).probs, axis=1)


# =========================================================================
# Serialization
# =========================================================================

_MODEL_HEADER = "ngram-softmax v1"


def save_model(model: SoftmaxModel, path: str) -> None:
    """Versioned flat-text model file; floats via repr for bit-exact round-trips."""
    fm = model.feature_map
    vocab_in_order = sorted(fm.vocabulary, key=fm.vocabulary.__getitem__)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(_MODEL_HEADER + "\n")
        handle.write("classes\t" + "\t".join(model.schema.classes) + "\n")
        handle.write("n_range\t" + " ".join(str(n) for n in fm.n_range) + "\n")
        handle.write("weighting\t" + fm.weighting + "\n")
        handle.write(f"vocab\t{fm.num_features}\n")
        for gram in vocab_in_order:
            handle.write(" ".join(gram) + "\n")
        if fm.idf is not None:
            handle.write("idf\t" + " ".join(repr(float(x)) for x in fm.idf) + "\n")
        handle.write("weights\n")
        for row in model.weights:
            handle.write(" ".join(repr(float(x)) for x in row) + "\n")
        handle.write("biases\t" + " ".join(repr(float(x)) for x in model.biases) + "\n")


def load_model(path: str) -> SoftmaxModel:
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0] != _MODEL_HEADER:
        found = lines[0] if lines else "<empty file>"
        raise ValueError(f"unsupported model file version: {found!r}")
    cursor = 1

    def expect(prefix: str) -> list[str]:
        nonlocal cursor
        parts = lines[cursor].split("\t")
        if parts[0] != prefix:
            raise ValueError(f"model file {path!r}: expected {prefix!r} at line {cursor + 1}")
        cursor += 1
        return parts[1:]

    classes = expect("classes")
    n_range = tuple(int(x) for x in expect("n_range")[0].split())
    weighting = expect("weighting")[0]
    vocab_size = int(expect("vocab")[0])
    vocab: dict[Ngram, int] = {}
    for j in range(vocab_size):
        vocab[tuple(lines[cursor].split(" "))] = j
        cursor += 1
    idf = None
    if lines[cursor].startswith("idf\t"):
        idf = np.array(
            [float(x) for x in lines[cursor].split("\t")[1].split()], dtype=np.float64
        )
        cursor += 1
    if lines[cursor] != "weights":
        raise ValueError(f"model file {path!r}: expected weights section")
    cursor += 1
    rows = []
    for _ in range(len(classes)):
        rows.append([float(x) for x in lines[cursor].split()])
        cursor += 1
    weights = np.array(rows, dtype=np.float64)
    biases = np.array([float(x) for x in expect("biases")[0].split()], dtype=np.float64)
    schema = LabelSchema(tuple(classes))
    feature_map = FeatureMap(
        vocabulary=vocab, n_range=n_range, weighting=weighting, idf=idf
    )
    return SoftmaxModel(schema=schema, feature_map=feature_map, weights=weights, biases=biases)


def load_external_predictions(
    path: str,
    schema: LabelSchema,
    known_ids: Sequence[str] | None = None,
    tag: str = "",
) -> PredictionSet:
    """Read ``{"id": ..., "probs": [...]}`` records produced by another model.

    Rows whose probabilities do not sum to 1 within 1e-3 are rejected with
    their row numbers; rows that pass are renormalized to sum exactly to 1.
    With ``known_ids`` given, ids outside that set are an error (first 10
    offenders listed).
    """
    ids: list[str] = []
    rows: list[list[float]] = []
    bad_rows: list[int] = []
    with open(path, encoding="utf-8") as handle:
        for line_num, line in enumerate(handle):
            if not line.strip():
                continue
            record = json.loads(line)
            probs = [float(x) for x in record["probs"]]
            if len(probs) != schema.num_classes:
                raise ValueError(
                    f"{path!r} line {line_num}: expected {schema.num_classes} "
                    f"probabilities, got {len(probs)}"
                )
            if abs(sum(probs) - 1.0) > 1e-3 or any(p < 0 for p in probs):
                bad_rows.append(line_num)
                continue
            ids.append(str(record["id"]))
            rows.append(probs)
    if bad_rows:
        shown = ", ".join(str(r) for r in bad_rows[:10])
        raise ValueError(
            f"{path!r}: {len(bad_rows)} rows fail the sum-to-1 check "
            f"(tolerance 1e-3); row numbers: {shown}"
        )
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path!r}: duplicate prediction ids")
    if known_ids is not None:
        known = set(known_ids)
        unknown = [i for i in ids if i not in known]
        if unknown:
            shown = ", ".join(unknown[:10])
            raise ValueError(
                f"{path!r}: {len(unknown)} predictions reference unknown "
                f"document ids (first few: {shown})"
            )
    probs = np.array(rows, dtype=np.float64)
    if probs.size:
        probs = probs / probs.sum(axis=1, keepdims=True)
    else:
        probs = probs.reshape(0, schema.num_classes)
    return PredictionSet(ids=tuple(ids), probs=probs, tag=tag or path)
