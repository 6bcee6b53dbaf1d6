"""Cross-group (dialect) bias quantification for classifier predictions.

Documents carry dialect-membership posteriors over four groups.  A document
is assigned to a group when that group's posterior is strictly above the
major threshold (default 0.80) and the combined hispanic + asian posterior
is strictly below the minor threshold (default 0.10); everything else is
dropped.  Per group, a fixed-size uniform sample (without replacement,
seeded) is scored by the classifier, and the mean predicted membership
p_hat of each negative class is compared across groups with Welch's
unequal-variance t-test.  The headline number is the ratio
p_hat_black / p_hat_white.

Two-sided p-values come from Student's t survival function evaluated
through the regularized incomplete beta function, implemented here with the
standard continued-fraction expansion (modified Lentz), absolute error
below 1e-8.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import PredictionSet
from .corpus import LabeledCorpus, LabelSchema

logger = logging.getLogger(__name__)

__all__ = [
    "GROUPS",
    "DialectPosteriors",
    "GroupSample",
    "TTestResult",
    "BiasRow",
    "dialect_filter",
    "sample_group",
    "mean_membership",
    "bias_ratio",
    "welch_t_test",
    "significance_stars",
    "regularized_incomplete_beta",
    "student_t_two_sided_p",
    "bias_report",
    "write_bias_report",
]

GROUPS = ("white", "black", "hispanic", "asian")

MAJOR_THRESHOLD = 0.80
MINOR_THRESHOLD = 0.10
DEFAULT_SAMPLE_SIZE = 10_000


@dataclass(frozen=True)
class DialectPosteriors:
    """Group-membership posteriors for one document; must sum to 1 (+- 1e-6)."""

    white: float
    black: float
    hispanic: float
    asian: float

    def __post_init__(self) -> None:
        values = (self.white, self.black, self.hispanic, self.asian)
        if any(v < 0 for v in values):
            raise ValueError(f"posteriors must be non-negative, got {values}")
        if abs(sum(values) - 1.0) > 1e-6:
            raise ValueError(f"posteriors must sum to 1, got {values}")

    @staticmethod
    def from_mapping(mapping: dict) -> "DialectPosteriors":
        missing = [g for g in GROUPS if g not in mapping]
        if missing:
            raise ValueError(f"posteriors missing groups {missing}")
        return DialectPosteriors(**{g: float(mapping[g]) for g in GROUPS})


@dataclass(frozen=True)
class GroupSample:
    """A sampled group corpus together with its predictions."""

    group: str
    documents: LabeledCorpus
    predictions: PredictionSet

    def __post_init__(self) -> None:
        if len(self.documents) != len(self.predictions):
            raise ValueError(
                f"group {self.group!r}: {len(self.documents)} documents but "
                f"{len(self.predictions)} predictions"
            )


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float


@dataclass(frozen=True)
class BiasRow:
    """One line of the bias report: one negative class, one model variant."""

    dataset: str
    class_name: str
    variant: str
    p_hat_black: float
    p_hat_white: float
    t: float
    p_value: float
    stars: str
    ratio: float


# =========================================================================
# Group assignment and sampling
# =========================================================================

def dialect_filter(
    corpus: LabeledCorpus,
    major_threshold: float = MAJOR_THRESHOLD,
    minor_threshold: float = MINOR_THRESHOLD,
) -> dict[str, LabeledCorpus]:
    """Partition documents into dialect groups by their posteriors.

    A document joins group g when posterior(g) > major_threshold (strict)
    and posterior(hispanic) + posterior(asian) < minor_threshold (strict).
    Documents without posteriors, or meeting neither condition, are dropped;
    the returned groups are disjoint.  Keys are group names; groups with no
    members map to empty corpora.
    """
    buckets: dict[str, list[int]] = {g: [] for g in GROUPS}
    for pos, doc in enumerate(corpus):
        if doc.posteriors is None:
            continue
        post = DialectPosteriors.from_mapping(dict(doc.posteriors))
        if post.hispanic + post.asian >= minor_threshold:
            continue
        for group in GROUPS:
            if getattr(post, group) > major_threshold:
                buckets[group].append(pos)
                break
    return {g: corpus.select(positions) for g, positions in buckets.items()}


def sample_group(
    corpus: LabeledCorpus, n: int = DEFAULT_SAMPLE_SIZE, seed: int = 0
) -> LabeledCorpus:
    """Uniform sample of ``n`` documents without replacement (seeded PCG64).

    When the group holds fewer than ``n`` documents the whole group is
    returned and a warning logged.  Sampled documents keep corpus order.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if len(corpus) <= n:
        if len(corpus) < n:
            logger.warning(
                "group has only %d documents; requested sample of %d, using all",
                len(corpus),
                n,
            )
        return corpus
    rng = np.random.default_rng(seed)
    picks = sorted(int(i) for i in rng.permutation(len(corpus))[:n])
    return corpus.select(picks)


# =========================================================================
# Statistics
# =========================================================================

def mean_membership(predictions: PredictionSet, class_index: int) -> float:
    """Mean predicted probability of one class over a prediction set."""
    if len(predictions) == 0:
        raise ValueError("mean membership undefined for an empty prediction set")
    return float(np.mean(predictions.probs[:, class_index]))


def bias_ratio(p_hat_black: float, p_hat_white: float) -> float:
    """p_hat_black / p_hat_white; nan with a warning when the denominator is 0."""
    if p_hat_white == 0.0:
        logger.warning("bias ratio undefined: p_hat_white is zero")
        return float("nan")
    return p_hat_black / p_hat_white


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    logger.warning("incomplete beta continued fraction hit the iteration cap")
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]; absolute error below 1e-8."""
    if a <= 0 or b <= 0:
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    # Symmetry I_x(a, b) = 1 - I_{1-x}(b, a) keeps the fraction convergent.
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value of Student's t: I_{df / (df + t^2)}(df / 2, 1 / 2)."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def welch_t_test(
    a: Sequence[float], b: Sequence[float], pooled: bool = False
) -> TTestResult:
    """Unequal-variance t-test (or pooled-variance with ``pooled=True``).

    Welch: t = (mean_a - mean_b) / sqrt(s_a^2 / n_a + s_b^2 / n_b) with
    Welch-Satterthwaite degrees of freedom; sample variances use ddof = 1.
    When both samples have zero variance the statistic is undefined and
    (nan, nan, df) is returned with a warning.  Requires >= 2 values a side.
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    na, nb = len(xa), len(xb)
    if na < 2 or nb < 2:
        raise ValueError(f"need at least 2 values per sample, got {na} and {nb}")
    va = float(np.var(xa, ddof=1))
    vb = float(np.var(xb, ddof=1))
    diff = float(np.mean(xa) - np.mean(xb))
    if pooled:
        df = float(na + nb - 2)
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    else:
        sea2, seb2 = va / na, vb / nb
        se = math.sqrt(sea2 + seb2)
        if va == 0.0 and vb == 0.0:
            df = float(na + nb - 2)
        else:
            df = (sea2 + seb2) ** 2 / (
                sea2**2 / (na - 1) + seb2**2 / (nb - 1)
            )
    if se == 0.0:
        logger.warning("t statistic undefined: both samples have zero variance")
        return TTestResult(t=float("nan"), p=float("nan"), df=df)
    t = diff / se
    return TTestResult(t=t, p=student_t_two_sided_p(t, df), df=df)


def significance_stars(p: float) -> str:
    """'***' for p < 0.001, '**' for p < 0.01, '*' for p < 0.05, else ''."""
    if math.isnan(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# =========================================================================
# Report assembly
# =========================================================================

def bias_report(
    before_black: PredictionSet,
    before_white: PredictionSet,
    after_black: PredictionSet,
    after_white: PredictionSet,
    schema: LabelSchema,
    negative_classes: Sequence[str],
    dataset: str = "",
) -> list[BiasRow]:
    """One row per negative class per variant (before, after re-weighting).

    Each row compares the black-aligned and white-aligned samples' mean
    predicted membership in the class, with Welch's t-test and the
    black/white ratio.
    """
    for preds in (before_black, before_white, after_black, after_white):
        if preds.probs.shape[1] != schema.num_classes:
            raise ValueError(
                f"prediction set {preds.tag!r} has {preds.probs.shape[1]} classes; "
                f"schema declares {schema.num_classes}"
            )
    rows: list[BiasRow] = []
    variants = (
        ("before", before_black, before_white),
        ("after", after_black, after_white),
    )
    for class_name in negative_classes:
        class_index = schema.index(class_name)
        for variant, black, white in variants:
            p_black = mean_membership(black, class_index)
            p_white = mean_membership(white, class_index)
            result = welch_t_test(
                black.probs[:, class_index], white.probs[:, class_index]
            )
            rows.append(
                BiasRow(
                    dataset=dataset,
                    class_name=class_name,
                    variant=variant,
                    p_hat_black=p_black,
                    p_hat_white=p_white,
                    t=result.t,
                    p_value=result.p,
                    stars=significance_stars(result.p),
                    ratio=bias_ratio(p_black, p_white),
                )
            )
    return rows


def write_bias_report(rows: Sequence[BiasRow], path: str) -> None:
    """Bias rows as CSV; floats via repr, undefined values as nan."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [
                "dataset",
                "class",
                "variant",
                "p_hat_black",
                "p_hat_white",
                "t",
                "p",
                "stars",
                "ratio",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.dataset,
                    row.class_name,
                    row.variant,
                    repr(float(row.p_hat_black)),
                    repr(float(row.p_hat_white)),
                    repr(float(row.t)),
                    repr(float(row.p_value)),
                    row.stars,
                    repr(float(row.ratio)),
                ]
            )
