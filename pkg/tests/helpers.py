"""Shared corpus builders for the test suite."""
from __future__ import annotations

import numpy as np

from ngram_debias.corpus import Document, LabeledCorpus, LabelSchema


def corpus_from(
    texts_labels: list[tuple[str, int | None]], classes: tuple[str, ...] = ("a", "b")
) -> LabeledCorpus:
    """Corpus whose documents are already normalized (text == raw_text)."""
    schema = LabelSchema(tuple(classes))
    docs = tuple(
        Document(id=f"d{i}", raw_text=text, text=text, label=label)
        for i, (text, label) in enumerate(texts_labels)
    )
    return LabeledCorpus(schema=schema, documents=docs)


def random_labeled_corpus(
    rng: np.random.Generator,
    max_docs: int = 50,
    vocab_size: int = 20,
    num_classes: int = 2,
    max_len: int = 12,
    min_docs: int = 1,
    min_len: int = 0,
) -> LabeledCorpus:
    """Random normalized corpus over a small token vocabulary."""
    vocab = [f"w{i}" for i in range(vocab_size)]
    n_docs = int(rng.integers(min_docs, max_docs + 1))
    pairs: list[tuple[str, int | None]] = []
    for _ in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        tokens = [vocab[j] for j in rng.integers(vocab_size, size=length)]
        pairs.append((" ".join(tokens), int(rng.integers(num_classes))))
    classes = tuple(f"c{k}" for k in range(num_classes))
    return corpus_from(pairs, classes)
