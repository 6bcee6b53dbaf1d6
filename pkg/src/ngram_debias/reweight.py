"""Per-sample re-weighting that minimizes per-n-gram class bias.

Each training/validation sample i gets a weight 1 + alpha_i with alpha_i >= 0.
For every n-gram j in the vocabulary, the weighted class-membership fraction

    b_j^c = sum_i m_ij * (1 + alpha_i) * [y_i = c] / sum_i m_ij * (1 + alpha_i)

uses document presence m_ij in {0, 1} (an n-gram repeated inside one document
counts once here, unlike the occurrence-based LMI audit).  The objective

    F(alpha) = sum_j max_c b_j^c + lam * ||alpha||_2

is minimized by projected subgradient descent from alpha = 0: at each
iteration the subgradient of the data term (argmax ties averaged over the
tied classes) plus the penalty subgradient (0 at the origin) is followed
with step size step_size / sqrt(iteration), halved while the objective would
increase, and the iterate is projected back onto alpha >= 0.  The recorded
objective trace is therefore non-increasing.  Optimization stops when an
accepted step decreases the objective by less than ``tolerance``, or when no
descent step exists, or at ``max_iters`` (reported as not converged).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .corpus import LabeledCorpus, LabelSchema
from .lmi_audit import Ngram
from .preprocess import extract_ngrams, tokenize

logger = logging.getLogger(__name__)

__all__ = [
    "ReweightConfig",
    "WeightVector",
    "BiasTable",
    "TracePoint",
    "ReweightResult",
    "compute_bias",
    "objective",
    "objective_gradient",
    "optimize_weights",
    "save_weights",
    "load_weights",
    "write_trace_csv",
]


@dataclass(frozen=True)
class ReweightConfig:
    """Hyperparameters of the re-weighting objective and optimizer.

    ``lam`` scales the norm penalty; ``squared_penalty`` switches it from
    lam * ||alpha||_2 to lam * ||alpha||_2^2.  ``n`` is the n-gram order and
    ``min_count`` the minimum document frequency for vocabulary membership.
    ``seed`` is carried for config completeness; the optimizer itself is
    deterministic and draws no random numbers.
    """

    lam: float = 1.0
    n: int = 2
    step_size: float = 0.1
    max_iters: int = 2000
    tolerance: float = 1e-6
    seed: int = 0
    squared_penalty: bool = False
    min_count: int = 1

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")


@dataclass(frozen=True)
class WeightVector:
    """Learned per-sample weights alpha, aligned to a corpus's document order."""

    alphas: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.alphas, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("alphas must be a 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("alphas must be finite")
        if np.any(arr < 0):
            raise ValueError("alphas must be non-negative")
        object.__setattr__(self, "alphas", arr)

    def __len__(self) -> int:
        return len(self.alphas)

    @staticmethod
    def zeros(n: int) -> "WeightVector":
        return WeightVector(np.zeros(n, dtype=np.float64))


@dataclass(frozen=True)
class BiasTable:
    """Weighted class-membership fractions b_j^c for every vocabulary n-gram.

    ``rows[j]`` holds the per-class fractions for ``vocabulary[j]`` and sums
    to 1.
    """

    vocabulary: tuple[Ngram, ...]
    rows: np.ndarray  # (V, C)
    schema: LabelSchema

    def __post_init__(self) -> None:
        if len(self.vocabulary) != self.rows.shape[0]:
            raise ValueError("vocabulary and rows disagree in length")
        if self.rows.size and not np.allclose(self.rows.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("bias rows must sum to 1 over classes")

    def value(self, ngram: Ngram, class_index: int) -> float:
        j = self.vocabulary.index(ngram)
        return float(self.rows[j, class_index])

    def max_by_ngram(self) -> np.ndarray:
        return self.rows.max(axis=1)


@dataclass(frozen=True)
class TracePoint:
    """One accepted optimizer iteration (iteration 0 is the starting point)."""

    iteration: int
    objective: float
    step_size: float


@dataclass(frozen=True)
class ReweightResult:
    weights: WeightVector
    trace: tuple[TracePoint, ...]
    converged: bool

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration


# =========================================================================
# Presence structure and vectorized objective/gradient
# =========================================================================

class _BiasProblem:
    """Precomputed presence matrix and per-class slices for one corpus."""

    def __init__(self, corpus: LabeledCorpus, n: int, min_count: int) -> None:
        if len(corpus) == 0:
            raise ValueError("cannot re-weight an empty corpus")
        labels = corpus.labels()  # raises on unlabeled documents
        doc_sets = [
            sorted(set(extract_ngrams(tokenize(doc.text), n))) for doc in corpus
        ]
        doc_freq: dict[Ngram, int] = {}
        for grams in doc_sets:
            for gram in grams:
                doc_freq[gram] = doc_freq.get(gram, 0) + 1
        vocab = tuple(sorted(g for g, c in doc_freq.items() if c >= min_count))
        col = {gram: j for j, gram in enumerate(vocab)}

        indptr = [0]
        indices: list[int] = []
        for grams in doc_sets:
            cols = sorted(col[g] for g in grams if g in col)
            indices.extend(cols)
            indptr.append(len(indices))
        data = np.ones(len(indices), dtype=np.float64)
        matrix = sparse.csr_matrix(
            (data, np.asarray(indices, dtype=np.int32), np.asarray(indptr, dtype=np.int32)),
            shape=(len(corpus), len(vocab)),
        )

        self.vocabulary = vocab
        self.schema = corpus.schema
        self.labels = labels
        self.matrix = matrix
        self.num_docs = len(corpus)
        self.num_classes = corpus.schema.num_classes
        self.class_rows = [
            np.flatnonzero(labels == c) for c in range(self.num_classes)
        ]
        self.class_slices = [matrix[rows] for rows in self.class_rows]

    def bias_matrix(self, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(B, Dn): per-class fractions (C, V) and weighted denominators (V,)."""
        weights = 1.0 + alpha
        denom = self.matrix.T @ weights
        numer = np.empty((self.num_classes, len(self.vocabulary)))
        for c in range(self.num_classes):
            numer[c] = self.class_slices[c].T @ weights[self.class_rows[c]]
        bias = numer / denom if denom.size else numer
        return bias, denom

    def penalty(self, alpha: np.ndarray, lam: float, squared: bool) -> float:
        norm = float(np.linalg.norm(alpha))
        return lam * norm * norm if squared else lam * norm

    def objective(self, alpha: np.ndarray, lam: float, squared: bool) -> float:
        bias, _ = self.bias_matrix(alpha)
        data_term = float(bias.max(axis=0).sum()) if bias.size else 0.0
        return data_term + self.penalty(alpha, lam, squared)

    def subgradient(self, alpha: np.ndarray, lam: float, squared: bool) -> np.ndarray:
        grad = np.zeros(self.num_docs)
        bias, denom = self.bias_matrix(alpha)
        if bias.size:
            col_max = bias.max(axis=0)
            is_max = bias == col_max  # exact ties share the subgradient
            n_tied = is_max.sum(axis=0)
            scale = 1.0 / (n_tied * denom)  # (V,)
            # d b_j^c / d alpha_i = m_ij ([y_i = c] - b_j^c) / Dn_j, averaged
            # over the argmax classes of column j.
            tied_bias = (bias * is_max).sum(axis=0) * scale
            grad -= self.matrix @ tied_bias
            membership = is_max * scale  # (C, V)
            for c in range(self.num_classes):
                rows = self.class_rows[c]
                if rows.size:
                    grad[rows] += self.class_slices[c] @ membership[c]
        if squared:
            grad += 2.0 * lam * alpha
        else:
            norm = float(np.linalg.norm(alpha))
            if norm > 0.0:
                grad += lam * alpha / norm
        return grad


# =========================================================================
# Public operations
# =========================================================================

def compute_bias(
    corpus: LabeledCorpus,
    weights: WeightVector | None = None,
    n: int = 2,
    min_count: int = 1,
) -> BiasTable:
    """Weighted per-n-gram class fractions; ``weights=None`` means alpha = 0.

    With alpha = 0 every row equals the raw fraction of documents containing
    the n-gram that belong to each class.
    """
    problem = _BiasProblem(corpus, n, min_count)
    alpha = _aligned_alphas(weights, problem.num_docs)
    bias, _ = problem.bias_matrix(alpha)
    return BiasTable(vocabulary=problem.vocabulary, rows=bias.T.copy(), schema=problem.schema)


def _aligned_alphas(weights: WeightVector | None, num_docs: int) -> np.ndarray:
    if weights is None:
        return np.zeros(num_docs)
    if len(weights) != num_docs:
        raise ValueError(
            f"weight vector has {len(weights)} entries for {num_docs} documents"
        )
    return weights.alphas


def objective(
    corpus: LabeledCorpus, weights: WeightVector | None, config: ReweightConfig
) -> float:
    """F(alpha) = sum_j max_c b_j^c + penalty(alpha); see module docstring."""
    problem = _BiasProblem(corpus, config.n, config.min_count)
    alpha = _aligned_alphas(weights, problem.num_docs)
    return problem.objective(alpha, config.lam, config.squared_penalty)


def objective_gradient(
    corpus: LabeledCorpus, weights: WeightVector | None, config: ReweightConfig
) -> np.ndarray:
    """Subgradient of the objective at ``weights`` (ties averaged, origin penalty 0)."""
    problem = _BiasProblem(corpus, config.n, config.min_count)
    alpha = _aligned_alphas(weights, problem.num_docs)
    return problem.subgradient(alpha, config.lam, config.squared_penalty)


def optimize_weights(
    corpus: LabeledCorpus,
    config: ReweightConfig,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> ReweightResult:
    """Projected subgradient descent on the bias objective from alpha = 0.

    Backtracking halves the step while it would increase the objective, so
    the trace is non-increasing and the final objective never exceeds the
    initial one.  ``callback(iteration, alpha, objective)`` observes every
    accepted step.
    """
    problem = _BiasProblem(corpus, config.n, config.min_count)
    alpha = np.zeros(problem.num_docs)
    value = problem.objective(alpha, config.lam, config.squared_penalty)
    trace = [TracePoint(0, value, 0.0)]
    converged = False

    for iteration in range(1, config.max_iters + 1):
        grad = problem.subgradient(alpha, config.lam, config.squared_penalty)
        if not np.any(grad):
            converged = True  # exact stationarity (e.g. single-class corpus)
            break
        step = config.step_size / math.sqrt(iteration)
        accepted = False
        for _ in range(60):
            candidate = np.maximum(alpha - step * grad, 0.0)
            cand_value = problem.objective(candidate, config.lam, config.squared_penalty)
            if cand_value <= value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True  # no descent step at any scale: numerically stationary
            break
        decrease = value - cand_value
        alpha, value = candidate, cand_value
        trace.append(TracePoint(iteration, value, step))
        if callback is not None:
            callback(iteration, alpha, value)
        if decrease < config.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(
            "re-weighting stopped at max_iters=%d without reaching tolerance %g",
            config.max_iters,
            config.tolerance,
        )
    return ReweightResult(
        weights=WeightVector(alpha), trace=tuple(trace), converged=converged
    )


# =========================================================================
# Weight file round-trip
# =========================================================================

def save_weights(corpus: LabeledCorpus, weights: WeightVector, path: str) -> None:
    """Write one ``{"id": ..., "alpha": ...}`` record per document."""
    if len(weights) != len(corpus):
        raise ValueError(
            f"weight vector has {len(weights)} entries for {len(corpus)} documents"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for doc, alpha in zip(corpus, weights.alphas):
            handle.write(json.dumps({"id": doc.id, "alpha": float(alpha)}) + "\n")


def load_weights(path: str, corpus: LabeledCorpus) -> WeightVector:
    """Read a weight file and align it to ``corpus`` document order.

    Raises ValueError when a document is missing from the file; entries for
    unknown documents are ignored so one file can serve corpus subsets.
    """
    table: dict[str, float] = {}
    with open(path, encoding="utf-8") as handle:
        for line_num, line in enumerate(handle):
            if not line.strip():
                continue
            record = json.loads(line)
            table[str(record["id"])] = float(record["alpha"])
    missing = [doc.id for doc in corpus if doc.id not in table]
    if missing:
        raise ValueError(
            f"weight file {path!r} lacks {len(missing)} document ids "
            f"(first few: {missing[:5]})"
        )
    return WeightVector(np.array([table[doc.id] for doc in corpus], dtype=np.float64))


def write_trace_csv(trace: Sequence[TracePoint], path: str) -> None:
    """Objective trace as CSV (iteration, objective, step_size); floats via repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("iteration,objective,step_size\n")
        for point in trace:
            handle.write(
                f"{point.iteration},{float(point.objective)!r},{float(point.step_size)!r}\n"
            )
