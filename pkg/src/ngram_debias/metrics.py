"""Confusion-matrix evaluation and stratified learning curves.

Macro scores average per-class precision/recall over classes; per-class F1
is the harmonic mean 2PR / (P + R).  A class with no predicted (or no true)
instances has undefined precision (recall); it is scored 0 with a warning.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import TrainConfig, predict, train
from .corpus import LabeledCorpus, LabelSchema, floor_fraction

logger = logging.getLogger(__name__)

__all__ = [
    "ConfusionMatrix",
    "EvalSummary",
    "CurvePoint",
    "confusion",
    "macro_scores",
    "stratified_subsample",
    "learning_curve",
    "write_confusion_csv",
    "write_eval_summary_csv",
    "write_learning_curve_csv",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    matrix: np.ndarray  # (C, C) int64
    schema: LabelSchema

    def __post_init__(self) -> None:
        c = self.schema.num_classes
        if self.matrix.shape != (c, c):
            raise ValueError(
                f"confusion matrix shape {self.matrix.shape} does not match "
                f"{c} classes"
            )
        if np.any(self.matrix < 0):
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.matrix.sum())


@dataclass(frozen=True)
class EvalSummary:
    """Per-class and aggregate scores derived from one confusion matrix."""

    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    weighted_f1: float


@dataclass(frozen=True)
class CurvePoint:
    """Mean and population std of macro F1 at one training-set portion."""

    portion: float
    mean_f1: float
    std_f1: float


def confusion(
    truth: Sequence[int], predicted: Sequence[int], schema: LabelSchema
) -> ConfusionMatrix:
    """Tally a confusion matrix from aligned truth/prediction index sequences."""
    y_true = np.asarray(truth, dtype=np.int64)
    y_pred = np.asarray(predicted, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("truth and predictions must be 1-d and equal length")
    if len(y_true) == 0:
        raise ValueError("cannot evaluate an empty prediction list")
    c = schema.num_classes
    if np.any((y_true < 0) | (y_true >= c)) or np.any((y_pred < 0) | (y_pred >= c)):
        raise ValueError(f"class index outside 0..{c - 1}")
    matrix = np.zeros((c, c), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return ConfusionMatrix(matrix=matrix, schema=schema)


def macro_scores(cm: ConfusionMatrix) -> EvalSummary:
    """Precision/recall/F1 per class plus macro averages, accuracy, weighted F1.

    Weighted F1 weights each class's F1 by its true-instance share.
    """
    matrix = cm.matrix.astype(np.float64)
    diag = np.diag(matrix)
    pred_totals = matrix.sum(axis=0)
    true_totals = matrix.sum(axis=1)

    precision = np.zeros(len(diag))
    recall = np.zeros(len(diag))
    for i, name in enumerate(cm.schema.classes):
        if pred_totals[i] > 0:
            precision[i] = diag[i] / pred_totals[i]
        else:
            logger.warning("precision undefined for class %r (never predicted); using 0", name)
        if true_totals[i] > 0:
            recall[i] = diag[i] / true_totals[i]
        else:
            logger.warning("recall undefined for class %r (no true instances); using 0", name)
    with np.errstate(invalid="ignore"):
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)

    total = matrix.sum()
    weighted_f1 = float((true_totals / total) @ f1)
    return EvalSummary(
        precision=tuple(float(x) for x in precision),
        recall=tuple(float(x) for x in recall),
        f1=tuple(float(x) for x in f1),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        accuracy=float(diag.sum() / total),
        weighted_f1=weighted_f1,
    )


def stratified_subsample(
    corpus: LabeledCorpus, portion: float, rng: np.random.Generator
) -> LabeledCorpus:
    """Per-class floor(portion * class_size) documents, uniformly without
    replacement, returned in original corpus order.  portion = 1.0 is the
    identity.  Raises when a class would become empty."""
    if not 0.0 < portion <= 1.0:
        raise ValueError(f"portion must be in (0, 1], got {portion}")
    by_class: dict[int, list[int]] = {}
    for pos, doc in enumerate(corpus):
        if doc.label is None:
            raise ValueError(f"subsampling requires labels; document {doc.id!r} has none")
        by_class.setdefault(doc.label, []).append(pos)
    picks: list[int] = []
    for label in sorted(by_class):
        positions = by_class[label]
        k = floor_fraction(portion, len(positions))
        if k == 0:
            raise ValueError(
                f"portion {portion} empties class "
                f"{corpus.schema.classes[label]!r} ({len(positions)} documents)"
            )
        chosen = rng.permutation(len(positions))[:k]
        picks.extend(positions[i] for i in chosen)
    return corpus.select(sorted(picks))


def learning_curve(
    train_corpus: LabeledCorpus,
    val_corpus: LabeledCorpus,
    test_corpus: LabeledCorpus,
    portions: Sequence[float],
    repeats: int,
    config: TrainConfig,
    seed: int = 0,
    n_range: Sequence[int] = (1, 2),
    weighting: str = "binary",
) -> list[CurvePoint]:
    """Macro F1 on the fixed test split as the train/val size grows.

    For each portion and repeat, the train and validation splits are
    stratified-subsampled with a generator seeded deterministically from
    (seed, portion index, repeat index); the training seed itself stays
    fixed at ``config.seed`` so repeats differ only in the subsample.
    Reported std is the population standard deviation over repeats.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if not portions:
        raise ValueError("portions must be non-empty")
    if list(portions) != sorted(portions):
        raise ValueError("portions must be ascending")
    y_test = test_corpus.labels()
    points: list[CurvePoint] = []
    for p_index, portion in enumerate(portions):
        scores = []
        for repeat in range(repeats):
            rng = np.random.default_rng([seed, p_index, repeat])
            sub_train = stratified_subsample(train_corpus, portion, rng)
            sub_val = stratified_subsample(val_corpus, portion, rng)
            model, _ = train(sub_train, sub_val, None, config, n_range, weighting)
            cm = confusion(y_test, predict(model, test_corpus), test_corpus.schema)
            scores.append(macro_scores(cm).macro_f1)
        points.append(
            CurvePoint(
                portion=float(portion),
                mean_f1=float(np.mean(scores)),
                std_f1=float(np.std(scores)),  # ddof=0: population std
            )
        )
    return points


# =========================================================================
# Tabular output
# =========================================================================

def write_confusion_csv(cm: ConfusionMatrix, path: str) -> None:
    """Matrix with one header row/column of class names (rows = true class)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["true\\pred", *cm.schema.classes])
        for name, row in zip(cm.schema.classes, cm.matrix):
            writer.writerow([name, *(int(x) for x in row)])


def write_eval_summary_csv(summary: EvalSummary, schema: LabelSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["class", "precision", "recall", "f1"])
        for i, name in enumerate(schema.classes):
            writer.writerow(
                [
                    name,
                    repr(summary.precision[i]),
                    repr(summary.recall[i]),
                    repr(summary.f1[i]),
                ]
            )
        writer.writerow(
            [
                "macro",
                repr(summary.macro_precision),
                repr(summary.macro_recall),
                repr(summary.macro_f1),
            ]
        )
        writer.writerow(["accuracy", repr(summary.accuracy), "", ""])
        writer.writerow(["weighted_f1", repr(summary.weighted_f1), "", ""])


def write_learning_curve_csv(points: Sequence[CurvePoint], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("portion,mean_f1,std_f1\n")
        for point in points:
            handle.write(
                f"{point.portion!r},{point.mean_f1!r},{point.std_f1!r}\n"
            )
