"""Corpus containers, file ingestion, and deterministic stratified splitting.

A corpus is an immutable sequence of documents tied to a label schema.  All
randomness used for splitting flows from an explicit integer seed through a
single numpy PCG64 generator, so splits are bit-reproducible on a platform.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "LabelSchema",
    "Document",
    "LabeledCorpus",
    "CsvFormat",
    "JsonlFormat",
    "IngestReport",
    "ingest",
    "write_corpus_jsonl",
    "class_distribution",
    "stratified_split",
    "floor_fraction",
]


# =========================================================================
# Core containers
# =========================================================================

@dataclass(frozen=True)
class LabelSchema:
    """Ordered list of class names; class index = position in the tuple."""

    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.classes) == 0:
            raise ValueError("label schema must declare at least one class")
        if any(not c for c in self.classes):
            raise ValueError("label schema contains an empty class name")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"label schema has duplicate class names: {self.classes}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        """Index of a class name; raises ValueError for unknown names."""
        try:
            return self.classes.index(name)
        except ValueError:
            raise ValueError(
                f"unknown label {name!r}; declared classes are {list(self.classes)}"
            ) from None


@dataclass(frozen=True)
class Document:
    """One text sample.

    ``raw_text`` is the string as ingested; ``text`` is the normalized form
    and stays empty until preprocessing fills it.  ``label`` is a class index
    into the owning schema or None for unlabeled documents.  ``weight`` holds
    a learned per-sample weight alpha (0 by default).  ``posteriors`` carries
    optional dialect-membership posteriors keyed by group name.
    """

    id: str
    raw_text: str
    text: str = ""
    label: int | None = None
    weight: float = 0.0
    group: str | None = None
    posteriors: Mapping[str, float] | None = None


@dataclass(frozen=True)
class LabeledCorpus:
    """Immutable document collection plus its label schema."""

    schema: LabelSchema
    documents: tuple[Document, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            if doc.label is not None and not (0 <= doc.label < self.schema.num_classes):
                raise ValueError(
                    f"document {doc.id!r} has label index {doc.label} outside "
                    f"schema with {self.schema.num_classes} classes"
                )

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def labels(self) -> np.ndarray:
        """Label indices as an int array; raises if any document is unlabeled."""
        out = np.empty(len(self.documents), dtype=np.int64)
        for i, doc in enumerate(self.documents):
            if doc.label is None:
                raise ValueError(f"document {doc.id!r} is unlabeled")
            out[i] = doc.label
        return out

    def fully_labeled(self) -> bool:
        return all(doc.label is not None for doc in self.documents)

    def select(self, indices: Sequence[int]) -> "LabeledCorpus":
        """New corpus with the documents at ``indices`` (order as given)."""
        docs = tuple(self.documents[i] for i in indices)
        return LabeledCorpus(schema=self.schema, documents=docs)

    def with_documents(self, documents: Sequence[Document]) -> "LabeledCorpus":
        return LabeledCorpus(schema=self.schema, documents=tuple(documents))


# =========================================================================
# Ingestion
# =========================================================================

@dataclass(frozen=True)
class CsvFormat:
    """Delimited-file layout.

    ``text``/``label``/``id`` name columns either by header name (requires
    ``header=True``) or by zero-based position.  ``label_map`` translates raw
    cell values (e.g. numeric codes) to schema class names before lookup.
    Structurally broken rows (too short for the referenced columns) are
    tolerated up to ``max_bad_rows`` and then rejected.
    """

    text: str | int = "text"
    label: str | int | None = "label"
    id: str | int | None = None
    delimiter: str = ","
    quotechar: str = '"'
    header: bool = True
    label_map: Mapping[str, str] | None = None
    max_bad_rows: int = 0


@dataclass(frozen=True)
class JsonlFormat:
    """Structured-record layout: one JSON object per line.

    Records carry ``{id, text, label?, group?, posteriors?}``.  ``text`` is
    taken as already normalized when written by this toolkit; for raw inputs
    it is simply the document text (preprocessing reads ``raw_text``, which
    is set to the same string).  Unparseable lines are tolerated up to
    ``max_bad_rows`` and then rejected.
    """

    max_bad_rows: int = 0


@dataclass(frozen=True)
class IngestReport:
    """Counts from one ingestion pass."""

    rows_read: int = 0
    skipped_missing_text: int = 0
    malformed_rows: int = 0


def ingest(
    path: str,
    schema: LabelSchema,
    fmt: CsvFormat | JsonlFormat,
) -> tuple[LabeledCorpus, IngestReport]:
    """Read a delimited or structured-record file into a corpus.

    Documents preserve file order.  Rows with missing/empty text are skipped
    and counted in the report.  A label outside the schema (after any
    ``label_map`` translation) raises ValueError with the offending value.
    Raises ValueError if no documents remain.
    """
    if isinstance(fmt, CsvFormat):
        docs, report = _ingest_csv(path, schema, fmt)
    elif isinstance(fmt, JsonlFormat):
        docs, report = _ingest_jsonl(path, schema, fmt)
    else:  # pragma: no cover - guarded by type hints
        raise TypeError(f"unsupported format descriptor {type(fmt).__name__}")
    if not docs:
        raise ValueError(f"no usable records in {path!r}")
    corpus = LabeledCorpus(schema=schema, documents=tuple(docs))
    if report.skipped_missing_text:
        logger.info(
            "%s: skipped %d rows with missing text", path, report.skipped_missing_text
        )
    if report.malformed_rows:
        logger.warning("%s: tolerated %d malformed rows", path, report.malformed_rows)
    return corpus, report


def _resolve_label(raw: str, schema: LabelSchema, fmt: CsvFormat | JsonlFormat) -> int:
    label_map = getattr(fmt, "label_map", None)
    if label_map is not None and raw in label_map:
        raw = label_map[raw]
    return schema.index(raw)


def _ingest_csv(
    path: str, schema: LabelSchema, fmt: CsvFormat
) -> tuple[list[Document], IngestReport]:
    def column(row: list[str], ref: str | int, header_index: Mapping[str, int]) -> str:
        if isinstance(ref, int):
            pos = ref
        else:
            if ref not in header_index:
                raise ValueError(f"column {ref!r} not present in header of {path!r}")
            pos = header_index[ref]
        if pos >= len(row):
            raise IndexError(pos)
        return row[pos]

    docs: list[Document] = []
    rows_read = skipped = malformed = 0
    header_index: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, delimiter=fmt.delimiter, quotechar=fmt.quotechar)
        if fmt.header:
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"no usable records in {path!r}") from None
            header_index = {name: i for i, name in enumerate(header)}
        else:
            for ref in (fmt.text, fmt.label, fmt.id):
                if isinstance(ref, str):
                    raise ValueError(
                        f"column {ref!r} referenced by name but header=False"
                    )
        for row_num, row in enumerate(reader):
            rows_read += 1
            if not row:
                continue
            try:
                text = column(row, fmt.text, header_index)
                raw_label = (
                    column(row, fmt.label, header_index)
                    if fmt.label is not None
                    else ""
                )
                doc_id = (
                    column(row, fmt.id, header_index)
                    if fmt.id is not None
                    else f"row{row_num}"
                )
            except IndexError:
                malformed += 1
                if malformed > fmt.max_bad_rows:
                    raise ValueError(
                        f"{path!r}: malformed row count exceeded tolerance "
                        f"{fmt.max_bad_rows} at data row {row_num}"
                    ) from None
                continue
            if not text.strip():
                skipped += 1
                continue
            label = _resolve_label(raw_label, schema, fmt) if raw_label != "" else None
            docs.append(Document(id=doc_id, raw_text=text, label=label))
    report = IngestReport(rows_read, skipped, malformed)
    return docs, report


def _ingest_jsonl(
    path: str, schema: LabelSchema, fmt: JsonlFormat
) -> tuple[list[Document], IngestReport]:
    docs: list[Document] = []
    rows_read = skipped = malformed = 0
    with open(path, encoding="utf-8") as handle:
        for line_num, line in enumerate(handle):
            if not line.strip():
                continue
            rows_read += 1
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
            except ValueError:
                malformed += 1
                if malformed > fmt.max_bad_rows:
                    raise ValueError(
                        f"{path!r}: malformed record count exceeded tolerance "
                        f"{fmt.max_bad_rows} at line {line_num}"
                    ) from None
                continue
            text = record.get("text")
            if not isinstance(text, str) or not text.strip():
                skipped += 1
                continue
            raw_label = record.get("label")
            label = (
                _resolve_label(str(raw_label), schema, fmt)
                if raw_label is not None
                else None
            )
            posteriors = record.get("posteriors")
            if posteriors is not None and not isinstance(posteriors, dict):
                raise ValueError(
                    f"{path!r} line {line_num}: posteriors must be an object"
                )
            docs.append(
                Document(
                    id=str(record.get("id", f"row{line_num}")),
                    raw_text=text,
                    text=text,
                    label=label,
                    group=record.get("group"),
                    posteriors=posteriors,
                )
            )
    return docs, IngestReport(rows_read, skipped, malformed)


def write_corpus_jsonl(corpus: LabeledCorpus, path: str) -> None:
    """Write documents as structured records (id, text, label?, group?, posteriors?)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for doc in corpus:
            record: dict = {"id": doc.id, "text": doc.text}
            if doc.label is not None:
                record["label"] = corpus.schema.classes[doc.label]
            if doc.group is not None:
                record["group"] = doc.group
            if doc.posteriors is not None:
                record["posteriors"] = {k: float(v) for k, v in doc.posteriors.items()}
            handle.write(json.dumps(record, sort_keys=True) + "\n")


# =========================================================================
# Statistics and splitting
# =========================================================================

def class_distribution(corpus: LabeledCorpus) -> dict[str, float]:
    """Fraction of labeled documents per class (unlabeled documents ignored).

    Fractions sum to 1 over the labeled subset.  Raises ValueError when no
    document carries a label.
    """
    counts = np.zeros(corpus.schema.num_classes, dtype=np.int64)
    for doc in corpus:
        if doc.label is not None:
            counts[doc.label] += 1
    total = int(counts.sum())
    if total == 0:
        raise ValueError("class distribution undefined: corpus has no labeled documents")
    return {
        name: float(counts[i] / total) for i, name in enumerate(corpus.schema.classes)
    }


def floor_fraction(fraction: float, n: int) -> int:
    """floor(fraction * n) with a tiny epsilon guarding float dust.

    Without the guard, e.g. 0.7 * 10 == 6.999999999999999 would floor to 6.
    """
    return int(math.floor(fraction * n + 1e-9))


def stratified_split(
    corpus: LabeledCorpus,
    fractions: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[LabeledCorpus, LabeledCorpus, LabeledCorpus]:
    """Deterministic per-class train/val/test split.

    Per class, split sizes are floor(fraction * class_size) for val and test;
    integer remainders go to train.  Each class's documents are shuffled with
    one seeded numpy PCG64 generator (classes processed in schema order,
    Fisher-Yates permutation), then cut in train/val/test order.  Output
    splits keep documents in their original corpus order.

    Requires a fully labeled corpus, three positive fractions summing to 1,
    and at least 3 documents in every class.
    """
    if len(fractions) != 3:
        raise ValueError(f"expected 3 split fractions, got {len(fractions)}")
    if any(f <= 0 for f in fractions):
        raise ValueError(f"split fractions must be positive, got {list(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {list(fractions)}")
    if not corpus.fully_labeled():
        raise ValueError("stratified split requires a fully labeled corpus")

    by_class: list[list[int]] = [[] for _ in range(corpus.schema.num_classes)]
    for pos, doc in enumerate(corpus):
        by_class[doc.label].append(pos)
    for name, positions in zip(corpus.schema.classes, by_class):
        if 0 < len(positions) < 3:
            raise ValueError(
                f"class {name!r} has only {len(positions)} documents; "
                "need at least 3 per class to split"
            )

    rng = np.random.default_rng(seed)
    picks: tuple[list[int], list[int], list[int]] = ([], [], [])
    f_train, f_val, f_test = fractions
    for positions in by_class:
        n = len(positions)
        if n == 0:
            continue
        n_val = floor_fraction(f_val, n)
        n_test = floor_fraction(f_test, n)
        n_train = n - n_val - n_test  # floor(f_train * n) plus the remainder
        shuffled = [positions[i] for i in rng.permutation(n)]
        picks[0].extend(shuffled[:n_train])
        picks[1].extend(shuffled[n_train : n_train + n_val])
        picks[2].extend(shuffled[n_train + n_val :])
    train, val, test = (corpus.select(sorted(p)) for p in picks)
    return train, val, test
