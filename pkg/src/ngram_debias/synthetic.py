"""Seeded synthetic corpora with a planted class-correlated bigram.

The generator builds a two-class corpus ("neg" vs "other") in which one
planted bigram occurs in most neg documents and a minority of other
documents, plus two unlabeled dialect-group corpora ("groupa", "groupb")
that carry the planted bigram at different rates and dialect posteriors
suitable for threshold filtering.  Raw texts include a sprinkling of
mentions, URLs, hashtags, casing, and letter elongation, all of which the
normalizer removes exactly, so planted rates survive preprocessing.

Everything is driven by one integer seed through numpy's PCG64, so a given
(seed, spec) pair always produces byte-identical corpora.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import Document, LabeledCorpus, LabelSchema, write_corpus_jsonl

__all__ = [
    "SyntheticSpec",
    "SCHEMA",
    "PLANTED",
    "planted_training_corpus",
    "planted_group_corpus",
    "write_training_csv",
    "write_group_jsonl",
]

SCHEMA = LabelSchema(("neg", "other"))
PLANTED = ("bad", "wolf")

_NEG_WORDS = tuple(f"grim{i}" for i in range(8))
_OTHER_WORDS = tuple(f"calm{i}" for i in range(8))
_COMMON_WORDS = tuple(f"day{i}" for i in range(10))


@dataclass(frozen=True)
class SyntheticSpec:
    """Rates and sizes of the planted-bigram fixture.

    ``planted_rate_neg``/``planted_rate_other`` are per-class probabilities
    that a training document contains the planted bigram;
    ``group_rate_a``/``group_rate_b`` are the analogous probabilities for
    the two dialect-group corpora.
    """

    n_per_class: int = 100
    planted_rate_neg: float = 0.9
    planted_rate_other: float = 0.15
    n_group: int = 150
    group_rate_a: float = 0.6
    group_rate_b: float = 0.1
    noise: bool = True


def _noisify(tokens: list[str], rng: np.random.Generator) -> list[str]:
    """Add normalization-removable noise: mention/URL tokens, a hashtag,
    uppercasing, and letter elongation."""
    out = list(tokens)
    if rng.random() < 0.15:
        out.insert(0, f"@user{rng.integers(100)}")
    if rng.random() < 0.15:
        out.append(f"http://t.co/{rng.integers(1000)}")
    if rng.random() < 0.1:
        i = int(rng.integers(len(out)))
        if not out[i].startswith(("@", "#", "http")):
            out[i] = "#" + out[i]
    if rng.random() < 0.1:
        i = int(rng.integers(len(out)))
        word = out[i]
        if word.isalpha():
            j = int(rng.integers(len(word)))
            out[i] = word[:j] + word[j] * 2 + word[j:]  # triple one letter
    if rng.random() < 0.1:
        i = int(rng.integers(len(out)))
        out[i] = out[i].upper()
    return out


def _compose(
    rng: np.random.Generator,
    pool: tuple[str, ...],
    n_pool: int,
    planted: bool,
) -> list[str]:
    """Interleave pool words with common fillers (w0 m0 w1 m1 w2 ...).

    Fillers never neighbor each other, and the planted bigram goes at the
    start or end of the document, next to a pool word.  Every non-planted
    bigram therefore contains a pool-specific word and cannot be shared
    across corpora built from different pools: the planted bigram itself is
    the only deliberately cross-class n-gram.
    """
    words = [pool[i] for i in rng.integers(len(pool), size=n_pool)]
    fillers = [
        _COMMON_WORDS[i] for i in rng.integers(len(_COMMON_WORDS), size=n_pool - 1)
    ]
    tokens: list[str] = []
    for i, word in enumerate(words):
        tokens.append(word)
        if i < len(fillers):
            tokens.append(fillers[i])
    if planted:
        if rng.random() < 0.5:
            tokens = list(PLANTED) + tokens
        else:
            tokens = tokens + list(PLANTED)
    return tokens


def planted_training_corpus(seed: int, spec: SyntheticSpec = SyntheticSpec()) -> LabeledCorpus:
    """Two-class labeled corpus with the planted bigram; raw_text only."""
    rng = np.random.default_rng([seed, 0])
    docs: list[Document] = []
    for label, prefix, pool, rate in (
        (0, "neg", _NEG_WORDS, spec.planted_rate_neg),
        (1, "oth", _OTHER_WORDS, spec.planted_rate_other),
    ):
        for i in range(spec.n_per_class):
            tokens = _compose(
                rng,
                pool,
                n_pool=int(rng.integers(3, 5)),
                planted=bool(rng.random() < rate),
            )
            if spec.noise:
                tokens = _noisify(tokens, rng)
            docs.append(
                Document(id=f"{prefix}{i:04d}", raw_text=" ".join(tokens), label=label)
            )
    return LabeledCorpus(schema=SCHEMA, documents=tuple(docs))


def _group_posteriors(
    rng: np.random.Generator, major: str, contaminated: bool
) -> dict[str, float]:
    if contaminated:
        # Fails the filter: major posterior too low / minor mass too high.
        return {"white": 0.4, "black": 0.3, "hispanic": 0.2, "asian": 0.1}
    major_p = float(rng.uniform(0.85, 0.93))
    hispanic = float(rng.uniform(0.0, 0.03))
    asian = float(rng.uniform(0.0, 0.03))
    other_p = 1.0 - major_p - hispanic - asian
    out = {"hispanic": hispanic, "asian": asian}
    out[major] = major_p
    out["black" if major == "white" else "white"] = other_p
    return out


def planted_group_corpus(
    seed: int,
    group: str,
    spec: SyntheticSpec = SyntheticSpec(),
) -> LabeledCorpus:
    """Unlabeled dialect-group corpus with posteriors and the planted bigram.

    ``group`` is "groupa" (black-aligned, high planted rate) or "groupb"
    (white-aligned, low planted rate).  About 10% of documents get
    contaminated posteriors that the dialect filter must drop.
    """
    if group == "groupa":
        rate, major, stream = spec.group_rate_a, "black", 1
    elif group == "groupb":
        rate, major, stream = spec.group_rate_b, "white", 2
    else:
        raise ValueError(f"group must be 'groupa' or 'groupb', got {group!r}")
    rng = np.random.default_rng([seed, stream])
    docs: list[Document] = []
    for i in range(spec.n_group):
        tokens = _compose(
            rng,
            _OTHER_WORDS,
            n_pool=int(rng.integers(2, 4)),
            planted=bool(rng.random() < rate),
        )
        if spec.noise:
            tokens = _noisify(tokens, rng)
        posteriors = _group_posteriors(rng, major, contaminated=bool(rng.random() < 0.1))
        docs.append(
            Document(
                id=f"{group}{i:04d}",
                raw_text=" ".join(tokens),
                group=group,
                posteriors=posteriors,
            )
        )
    return LabeledCorpus(schema=SCHEMA, documents=tuple(docs))


def write_training_csv(corpus: LabeledCorpus, path: str) -> None:
    """Training corpus as raw CSV (id, text, label) for the CLI pipeline."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "text", "label"])
        for doc in corpus:
            label = "" if doc.label is None else corpus.schema.classes[doc.label]
            writer.writerow([doc.id, doc.raw_text, label])


def write_group_jsonl(corpora: Sequence[LabeledCorpus], path: str) -> None:
    """Group corpora as one JSONL file for the CLI's bias-eval input.

    JSONL ingest reads the ``text`` field, so the raw text goes there (the
    pipeline re-normalizes group files on every read).
    """
    if not corpora:
        raise ValueError("need at least one group corpus")
    documents = [
        replace(doc, text=doc.raw_text)
        for corpus in corpora
        for doc in corpus
    ]
    write_corpus_jsonl(
        LabeledCorpus(schema=corpora[0].schema, documents=tuple(documents)), path
    )
