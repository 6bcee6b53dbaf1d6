"""Command-line pipeline for corpus bias auditing and debiasing.

Subcommands: preprocess, audit, reweight, train, evaluate, bias-eval,
learning-curve.  All of them read one YAML run config (``--config`` or the
``NGRAM_DEBIAS_CONFIG`` environment variable) that is validated fully,
with field-specific messages, before any corpus data is read.  Stages
communicate through files in the output directory, so a pipeline is a
sequence of invocations over one config.

Exit codes: 0 success, 1 config/usage error, 2 re-weighting stopped at the
iteration cap without reaching tolerance, 3 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import yaml

from . import biaseval as be
from . import classifier as clf
from . import lmi_audit as audit_mod
from . import metrics as metrics_mod
from . import preprocess as prep
from . import reweight as rw
from .corpus import (
    CsvFormat,
    JsonlFormat,
    LabeledCorpus,
    LabelSchema,
    ingest,
    stratified_split,
    write_corpus_jsonl,
)

logger = logging.getLogger(__name__)

ENV_CONFIG = "NGRAM_DEBIAS_CONFIG"

# Canonical artifact names inside the output directory.
NORMALIZED_FILE = "normalized.jsonl"
PREPROCESS_SUMMARY_FILE = "preprocess_summary.csv"
AUDIT_FILE = "lmi_audit.csv"
WEIGHTS_FILE = "weights.jsonl"
REWEIGHT_TRACE_FILE = "reweight_trace.csv"
DEFAULT_MODEL_FILE = "model.txt"
CONFUSION_FILE = "confusion.csv"
EVAL_SUMMARY_FILE = "eval_summary.csv"
BIAS_REPORT_FILE = "bias_report.csv"
CURVE_FILE = "learning_curve.csv"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2
EXIT_DATA = 3


class ConfigError(Exception):
    """Bad configuration or usage; maps to exit code 1."""


class DataError(Exception):
    """Unreadable or inconsistent data; maps to exit code 3."""


# =========================================================================
# Run configuration
# =========================================================================

@dataclass
class BiasEvalSettings:
    groups_path: Path
    negative_classes: tuple[str, ...]
    major_threshold: float
    minor_threshold: float
    sample_size: int
    seed: int
    model_before: str
    model_after: str
    dataset_name: str


@dataclass
class CurveSettings:
    portions: tuple[float, ...]
    repeats: int
    seed: int


@dataclass
class RunConfig:
    schema: LabelSchema
    output_dir: Path
    dataset_path: Path
    dataset_format: CsvFormat | JsonlFormat
    split_fractions: tuple[float, float, float]
    split_seed: int
    preprocess: prep.PreprocessConfig
    audit_n: int
    audit_top_k: int
    reweight: rw.ReweightConfig | None
    train: clf.TrainConfig | None
    train_n_range: tuple[int, ...]
    train_weighting: str
    train_weights: str | None
    train_model_out: str
    biaseval: BiasEvalSettings | None
    curve: CurveSettings | None


def _require_mapping(value: Any, field: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ConfigError(f"{field}: expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(mapping: Mapping[str, Any], allowed: Sequence[str], field: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{field}: unknown keys {unknown}; allowed keys are {sorted(allowed)}")


def _get(
    mapping: Mapping[str, Any],
    key: str,
    kind: type | tuple[type, ...],
    field: str,
    default: Any = None,
    required: bool = False,
) -> Any:
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError(f"{field}: required key is missing")
        return default
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{field}: expected an integer, got a boolean")
    if not isinstance(value, kind):
        kind_name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"{field}: expected {kind_name}, got {value!r}")
    return value


def _existing_path(raw: str, field: str) -> Path:
    path = Path(raw)
    if not path.exists():
        raise ConfigError(f"{field}: path {raw!r} does not exist")
    return path


def _parse_dataset(section: Mapping[str, Any]) -> tuple[Path, CsvFormat | JsonlFormat]:
    _check_keys(
        section,
        [
            "path", "format", "text_column", "label_column", "id_column",
            "delimiter", "quotechar", "header", "label_map", "max_bad_rows",
        ],
        "dataset",
    )
    path = _existing_path(
        _get(section, "path", str, "dataset.path", required=True), "dataset.path"
    )
    kind = _get(section, "format", str, "dataset.format", default="csv")
    max_bad = _get(section, "max_bad_rows", int, "dataset.max_bad_rows", default=0)
    if max_bad < 0:
        raise ConfigError("dataset.max_bad_rows: must be >= 0")
    if kind == "jsonl":
        return path, JsonlFormat(max_bad_rows=max_bad)
    if kind != "csv":
        raise ConfigError(f"dataset.format: expected 'csv' or 'jsonl', got {kind!r}")
    label_map_raw = section.get("label_map")
    label_map = None
    if label_map_raw is not None:
        label_map = {
            str(k): str(v)
            for k, v in _require_mapping(label_map_raw, "dataset.label_map").items()
        }
    fmt = CsvFormat(
        text=_get(section, "text_column", (str, int), "dataset.text_column", default="text"),
        label=_get(section, "label_column", (str, int), "dataset.label_column", default="label"),
        id=_get(section, "id_column", (str, int), "dataset.id_column"),
        delimiter=_get(section, "delimiter", str, "dataset.delimiter", default=","),
        quotechar=_get(section, "quotechar", str, "dataset.quotechar", default='"'),
        header=_get(section, "header", bool, "dataset.header", default=True),
        label_map=label_map,
        max_bad_rows=max_bad,
    )
    return path, fmt


def _parse_preprocess(section: Mapping[str, Any]) -> prep.PreprocessConfig:
    _check_keys(
        section,
        [
            "lowercase", "strip_mentions", "strip_urls", "strip_emoticons",
            "collapse_elongation", "hashtag_mode", "strip_punctuation",
            "min_tokens", "wordlist",
        ],
        "preprocess",
    )
    wordlist = None
    wordlist_raw = _get(section, "wordlist", str, "preprocess.wordlist")
    if wordlist_raw is not None:
        path = _existing_path(wordlist_raw, "preprocess.wordlist")
        wordlist = prep.load_wordlist(str(path))
    try:
        return prep.PreprocessConfig(
            lowercase=_get(section, "lowercase", bool, "preprocess.lowercase", default=True),
            strip_mentions=_get(section, "strip_mentions", bool, "preprocess.strip_mentions", default=True),
            strip_urls=_get(section, "strip_urls", bool, "preprocess.strip_urls", default=True),
            strip_emoticons=_get(section, "strip_emoticons", bool, "preprocess.strip_emoticons", default=True),
            collapse_elongation=_get(section, "collapse_elongation", bool, "preprocess.collapse_elongation", default=True),
            hashtag_mode=_get(section, "hashtag_mode", str, "preprocess.hashtag_mode", default=prep.HASHTAG_STRIP),
            strip_punctuation=_get(section, "strip_punctuation", bool, "preprocess.strip_punctuation", default=True),
            min_tokens=_get(section, "min_tokens", int, "preprocess.min_tokens", default=2),
            wordlist=wordlist,
        )
    except ValueError as err:
        raise ConfigError(f"preprocess: {err}") from None


def _parse_reweight(section: Mapping[str, Any]) -> rw.ReweightConfig:
    _check_keys(
        section,
        ["lambda", "n", "step_size", "max_iters", "tolerance", "seed",
         "squared_penalty", "min_count"],
        "reweight",
    )
    try:
        return rw.ReweightConfig(
            lam=_get(section, "lambda", float, "reweight.lambda", default=1.0),
            n=_get(section, "n", int, "reweight.n", default=2),
            step_size=_get(section, "step_size", float, "reweight.step_size", default=0.1),
            max_iters=_get(section, "max_iters", int, "reweight.max_iters", default=2000),
            tolerance=_get(section, "tolerance", float, "reweight.tolerance", default=1e-6),
            seed=_get(section, "seed", int, "reweight.seed", required=True),
            squared_penalty=_get(section, "squared_penalty", bool, "reweight.squared_penalty", default=False),
            min_count=_get(section, "min_count", int, "reweight.min_count", default=1),
        )
    except ValueError as err:
        raise ConfigError(f"reweight: {err}") from None


def _parse_train(section: Mapping[str, Any]) -> tuple[clf.TrainConfig, tuple[int, ...], str, str | None, str]:
    _check_keys(
        section,
        ["learning_rate", "epochs", "batch_size", "l2", "seed",
         "early_stop_patience", "n_range", "weighting", "weights", "model_out"],
        "train",
    )
    try:
        config = clf.TrainConfig(
            learning_rate=_get(section, "learning_rate", float, "train.learning_rate", default=0.05),
            epochs=_get(section, "epochs", int, "train.epochs", default=30),
            batch_size=_get(section, "batch_size", int, "train.batch_size", default=32),
            l2=_get(section, "l2", float, "train.l2", default=1e-4),
            seed=_get(section, "seed", int, "train.seed", required=True),
            early_stop_patience=_get(section, "early_stop_patience", int, "train.early_stop_patience", default=5),
        )
    except ValueError as err:
        raise ConfigError(f"train: {err}") from None
    n_range_raw = _get(section, "n_range", list, "train.n_range", default=[1, 2])
    if not n_range_raw or not all(isinstance(n, int) and n >= 1 for n in n_range_raw):
        raise ConfigError(f"train.n_range: expected a list of integers >= 1, got {n_range_raw!r}")
    weighting = _get(section, "weighting", str, "train.weighting", default="binary")
    if weighting not in clf.WEIGHTINGS:
        raise ConfigError(
            f"train.weighting: expected one of {list(clf.WEIGHTINGS)}, got {weighting!r}"
        )
    weights = _get(section, "weights", str, "train.weights")
    model_out = _get(section, "model_out", str, "train.model_out", default=DEFAULT_MODEL_FILE)
    return config, tuple(n_range_raw), weighting, weights, model_out


def _parse_biaseval(section: Mapping[str, Any], schema: LabelSchema, dataset_path: Path) -> BiasEvalSettings:
    _check_keys(
        section,
        ["groups_path", "negative_classes", "major_threshold", "minor_threshold",
         "sample_size", "seed", "model_before", "model_after", "dataset_name"],
        "biaseval",
    )
    groups_path = _existing_path(
        _get(section, "groups_path", str, "biaseval.groups_path", required=True),
        "biaseval.groups_path",
    )
    negative_raw = _get(section, "negative_classes", list, "biaseval.negative_classes", required=True)
    if not negative_raw:
        raise ConfigError("biaseval.negative_classes: must list at least one class")
    for name in negative_raw:
        if name not in schema.classes:
            raise ConfigError(
                f"biaseval.negative_classes: {name!r} is not in the schema {list(schema.classes)}"
            )
    major = _get(section, "major_threshold", float, "biaseval.major_threshold", default=be.MAJOR_THRESHOLD)
    minor = _get(section, "minor_threshold", float, "biaseval.minor_threshold", default=be.MINOR_THRESHOLD)
    if not 0.0 < major < 1.0:
        raise ConfigError(f"biaseval.major_threshold: must lie in (0, 1), got {major}")
    if not 0.0 < minor < 1.0:
        raise ConfigError(f"biaseval.minor_threshold: must lie in (0, 1), got {minor}")
    sample_size = _get(section, "sample_size", int, "biaseval.sample_size", default=be.DEFAULT_SAMPLE_SIZE)
    if sample_size < 1:
        raise ConfigError(f"biaseval.sample_size: must be >= 1, got {sample_size}")
    return BiasEvalSettings(
        groups_path=groups_path,
        negative_classes=tuple(str(n) for n in negative_raw),
        major_threshold=major,
        minor_threshold=minor,
        sample_size=sample_size,
        seed=_get(section, "seed", int, "biaseval.seed", required=True),
        model_before=_get(section, "model_before", str, "biaseval.model_before", default=DEFAULT_MODEL_FILE),
        model_after=_get(section, "model_after", str, "biaseval.model_after", required=True),
        dataset_name=_get(section, "dataset_name", str, "biaseval.dataset_name", default=dataset_path.stem),
    )


def _parse_curve(section: Mapping[str, Any]) -> CurveSettings:
    _check_keys(section, ["portions", "repeats", "seed"], "learning_curve")
    portions_raw = _get(section, "portions", list, "learning_curve.portions", required=True)
    portions: list[float] = []
    for value in portions_raw:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"learning_curve.portions: expected numbers, got {value!r}")
        portions.append(float(value))
    if not portions or any(not 0.0 < p <= 1.0 for p in portions):
        raise ConfigError(f"learning_curve.portions: values must lie in (0, 1], got {portions}")
    if portions != sorted(portions):
        raise ConfigError("learning_curve.portions: values must be ascending")
    repeats = _get(section, "repeats", int, "learning_curve.repeats", default=10)
    if repeats < 1:
        raise ConfigError(f"learning_curve.repeats: must be >= 1, got {repeats}")
    return CurveSettings(
        portions=tuple(portions),
        repeats=repeats,
        seed=_get(section, "seed", int, "learning_curve.seed", required=True),
    )


def load_run_config(
    path: str | None,
    out_override: str | None = None,
    seed_override: int | None = None,
) -> RunConfig:
    """Parse and validate the YAML run config before any data is read.

    ``out_override`` replaces ``output_dir``; ``seed_override`` replaces
    every seed in the file.
    """
    if path is None:
        raise ConfigError(
            f"no run config given; pass --config or set ${ENV_CONFIG}"
        )
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    with open(path, encoding="utf-8") as handle:
        try:
            raw = yaml.safe_load(handle)
        except yaml.YAMLError as err:
            raise ConfigError(f"config file {path!r} is not valid YAML: {err}") from None
    top = _require_mapping(raw, "config")
    _check_keys(
        top,
        ["schema", "output_dir", "dataset", "split", "preprocess", "audit",
         "reweight", "train", "biaseval", "learning_curve"],
        "config",
    )

    schema_raw = _get(top, "schema", list, "schema", required=True)
    if len(schema_raw) < 2 or not all(isinstance(c, str) and c for c in schema_raw):
        raise ConfigError(f"schema: expected a list of >= 2 class names, got {schema_raw!r}")
    try:
        schema = LabelSchema(tuple(schema_raw))
    except ValueError as err:
        raise ConfigError(f"schema: {err}") from None

    dataset_path, dataset_format = _parse_dataset(
        _require_mapping(_get(top, "dataset", dict, "dataset", required=True), "dataset")
    )

    split = _require_mapping(_get(top, "split", dict, "split", required=True), "split")
    _check_keys(split, ["fractions", "seed"], "split")
    fractions_raw = _get(split, "fractions", list, "split.fractions", default=[0.8, 0.1, 0.1])
    if len(fractions_raw) != 3 or not all(
        isinstance(f, (int, float)) and not isinstance(f, bool) and f > 0 for f in fractions_raw
    ):
        raise ConfigError(f"split.fractions: expected 3 positive numbers, got {fractions_raw!r}")
    fractions = tuple(float(f) for f in fractions_raw)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split.fractions: must sum to 1, got {list(fractions)}")
    split_seed = _get(split, "seed", int, "split.seed", required=True)

    preprocess_cfg = _parse_preprocess(
        _require_mapping(_get(top, "preprocess", dict, "preprocess", default={}), "preprocess")
    )

    audit_section = _require_mapping(_get(top, "audit", dict, "audit", default={}), "audit")
    _check_keys(audit_section, ["n", "top_k"], "audit")
    audit_n = _get(audit_section, "n", int, "audit.n", default=2)
    if audit_n < 1:
        raise ConfigError(f"audit.n: must be >= 1, got {audit_n}")
    audit_top_k = _get(audit_section, "top_k", int, "audit.top_k", default=20)
    if audit_top_k < 1:
        raise ConfigError(f"audit.top_k: must be >= 1, got {audit_top_k}")

    reweight_cfg = None
    if "reweight" in top and top["reweight"] is not None:
        reweight_cfg = _parse_reweight(_require_mapping(top["reweight"], "reweight"))

    train_cfg = None
    train_n_range: tuple[int, ...] = (1, 2)
    train_weighting = "binary"
    train_weights: str | None = None
    train_model_out = DEFAULT_MODEL_FILE
    if "train" in top and top["train"] is not None:
        train_cfg, train_n_range, train_weighting, train_weights, train_model_out = (
            _parse_train(_require_mapping(top["train"], "train"))
        )

    biaseval_cfg = None
    if "biaseval" in top and top["biaseval"] is not None:
        biaseval_cfg = _parse_biaseval(
            _require_mapping(top["biaseval"], "biaseval"), schema, dataset_path
        )

    curve_cfg = None
    if "learning_curve" in top and top["learning_curve"] is not None:
        curve_cfg = _parse_curve(_require_mapping(top["learning_curve"], "learning_curve"))

    output_dir = Path(
        out_override
        if out_override is not None
        else _get(top, "output_dir", str, "output_dir", default="out")
    )

    cfg = RunConfig(
        schema=schema,
        output_dir=output_dir,
        dataset_path=dataset_path,
        dataset_format=dataset_format,
        split_fractions=fractions,  # type: ignore[arg-type]
        split_seed=split_seed,
        preprocess=preprocess_cfg,
        audit_n=audit_n,
        audit_top_k=audit_top_k,
        reweight=reweight_cfg,
        train=train_cfg,
        train_n_range=train_n_range,
        train_weighting=train_weighting,
        train_weights=train_weights,
        train_model_out=train_model_out,
        biaseval=biaseval_cfg,
        curve=curve_cfg,
    )
    if seed_override is not None:
        cfg = _override_seeds(cfg, seed_override)
    return cfg


def _override_seeds(cfg: RunConfig, seed: int) -> RunConfig:
    cfg = dataclasses.replace(cfg, split_seed=seed)
    if cfg.reweight is not None:
        cfg.reweight = dataclasses.replace(cfg.reweight, seed=seed)
    if cfg.train is not None:
        cfg.train = dataclasses.replace(cfg.train, seed=seed)
    if cfg.biaseval is not None:
        cfg.biaseval = dataclasses.replace(cfg.biaseval, seed=seed)
    if cfg.curve is not None:
        cfg.curve = dataclasses.replace(cfg.curve, seed=seed)
    return cfg


# =========================================================================
# Shared stage plumbing
# =========================================================================

def _require_section(value: Any, name: str) -> Any:
    if value is None:
        raise ConfigError(f"{name}: this command needs the {name!r} config section")
    return value


def _out_path(cfg: RunConfig, name: str) -> Path:
    return cfg.output_dir / name


def _load_normalized(cfg: RunConfig) -> LabeledCorpus:
    path = _out_path(cfg, NORMALIZED_FILE)
    if not path.exists():
        raise DataError(
            f"{path} not found; run the preprocess command first"
        )
    try:
        corpus, _ = ingest(str(path), cfg.schema, JsonlFormat())
    except ValueError as err:
        raise DataError(str(err)) from None
    return corpus


def _load_splits(cfg: RunConfig) -> tuple[LabeledCorpus, LabeledCorpus, LabeledCorpus]:
    corpus = _load_normalized(cfg)
    try:
        return stratified_split(corpus, cfg.split_fractions, cfg.split_seed)
    except ValueError as err:
        raise DataError(str(err)) from None


def _concat(a: LabeledCorpus, b: LabeledCorpus) -> LabeledCorpus:
    return LabeledCorpus(schema=a.schema, documents=a.documents + b.documents)


def _load_model(cfg: RunConfig, name: str) -> clf.SoftmaxModel:
    path = _out_path(cfg, name)
    if not path.exists():
        raise DataError(f"model file {path} not found; run the train command first")
    try:
        return clf.load_model(str(path))
    except ValueError as err:
        raise DataError(str(err)) from None


def _dialect_groups(cfg: RunConfig) -> dict[str, LabeledCorpus]:
    settings = _require_section(cfg.biaseval, "biaseval")
    try:
        corpus, _ = ingest(str(settings.groups_path), cfg.schema, JsonlFormat())
    except ValueError as err:
        raise DataError(str(err)) from None
    corpus = prep.normalize_corpus(corpus, cfg.preprocess)
    corpus, _ = prep.filter_short(corpus, cfg.preprocess.min_tokens)
    try:
        return be.dialect_filter(corpus, settings.major_threshold, settings.minor_threshold)
    except ValueError as err:
        raise DataError(str(err)) from None


# =========================================================================
# Commands
# =========================================================================

def cmd_preprocess(cfg: RunConfig, args: argparse.Namespace) -> int:
    try:
        corpus, report = ingest(str(cfg.dataset_path), cfg.schema, cfg.dataset_format)
    except (ValueError, OSError) as err:
        raise DataError(str(err)) from None
    corpus = prep.normalize_corpus(corpus, cfg.preprocess)
    corpus, dropped = prep.filter_short(corpus, cfg.preprocess.min_tokens)
    if len(corpus) == 0:
        raise DataError("preprocessing removed every document")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_corpus_jsonl(corpus, str(_out_path(cfg, NORMALIZED_FILE)))
    with open(_out_path(cfg, PREPROCESS_SUMMARY_FILE), "w", encoding="utf-8", newline="\n") as handle:
        handle.write("rows_read,skipped_missing_text,malformed_rows,dropped_short,documents\n")
        handle.write(
            f"{report.rows_read},{report.skipped_missing_text},"
            f"{report.malformed_rows},{dropped},{len(corpus)}\n"
        )
    print(
        f"preprocess: {len(corpus)} documents "
        f"(skipped {report.skipped_missing_text} missing text, "
        f"{report.malformed_rows} malformed, dropped {dropped} short)"
    )
    return EXIT_OK


def cmd_audit(cfg: RunConfig, args: argparse.Namespace) -> int:
    train_corpus, _, test_corpus = _load_splits(cfg)
    try:
        train_stats = audit_mod.collect_stats(train_corpus, cfg.audit_n)
        test_stats = audit_mod.collect_stats(test_corpus, cfg.audit_n)
        rows = audit_mod.audit_report(train_stats, test_stats, cfg.audit_top_k)
    except ValueError as err:
        raise DataError(str(err)) from None
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    audit_mod.write_audit_report(rows, str(_out_path(cfg, AUDIT_FILE)))

    for order in sorted({1, cfg.audit_n}):
        ranked = audit_mod.top_k_frequency(train_corpus, order, cfg.audit_top_k)
        _write_frequency(ranked, _out_path(cfg, f"freq_train_n{order}.csv"))
    if cfg.biaseval is not None:
        for group, group_corpus in sorted(_dialect_groups(cfg).items()):
            if len(group_corpus) == 0:
                continue
            for order in sorted({1, cfg.audit_n}):
                ranked = audit_mod.top_k_frequency(group_corpus, order, cfg.audit_top_k)
                _write_frequency(ranked, _out_path(cfg, f"freq_{group}_n{order}.csv"))
    print(f"audit: wrote {len(rows)} rows to {_out_path(cfg, AUDIT_FILE)}")
    return EXIT_OK


def _write_frequency(ranked: list[tuple[tuple[str, ...], int]], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("ngram,count\n")
        for gram, count in ranked:
            handle.write(f"{audit_mod.format_ngram(gram)},{count}\n")


def cmd_reweight(cfg: RunConfig, args: argparse.Namespace) -> int:
    config = _require_section(cfg.reweight, "reweight")
    train_corpus, val_corpus, _ = _load_splits(cfg)
    pool = _concat(train_corpus, val_corpus)
    try:
        result = rw.optimize_weights(pool, config)
    except ValueError as err:
        raise DataError(str(err)) from None
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rw.save_weights(pool, result.weights, str(_out_path(cfg, WEIGHTS_FILE)))
    rw.write_trace_csv(result.trace, str(_out_path(cfg, REWEIGHT_TRACE_FILE)))
    start, end = result.trace[0].objective, result.trace[-1].objective
    print(
        f"reweight: objective {start!r} -> {end!r} in {result.iterations} "
        f"iterations ({'converged' if result.converged else 'iteration cap hit'})"
    )
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    config = _require_section(cfg.train, "train")
    train_corpus, val_corpus, _ = _load_splits(cfg)
    weights_name = args.weights if args.weights is not None else cfg.train_weights
    weights = None
    if weights_name and weights_name != "none":
        weights_path = Path(weights_name)
        if not weights_path.is_absolute() and not weights_path.exists():
            weights_path = _out_path(cfg, weights_name)
        if not weights_path.exists():
            raise DataError(f"weights file {weights_path} not found; run reweight first")
        try:
            weights = rw.load_weights(str(weights_path), _concat(train_corpus, val_corpus))
        except ValueError as err:
            raise DataError(str(err)) from None
    try:
        model, trace = clf.train(
            train_corpus, val_corpus, weights, config,
            n_range=cfg.train_n_range, weighting=cfg.train_weighting,
        )
    except ValueError as err:
        raise DataError(str(err)) from None
    model_name = args.model_out if args.model_out is not None else cfg.train_model_out
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    clf.save_model(model, str(_out_path(cfg, model_name)))
    trace_name = Path(model_name).stem + "_train_trace.csv"
    with open(_out_path(cfg, trace_name), "w", encoding="utf-8", newline="\n") as handle:
        handle.write("epoch,train_loss,val_loss\n")
        for point in trace:
            handle.write(f"{point.epoch},{point.train_loss!r},{point.val_loss!r}\n")
    print(
        f"train: {len(trace)} epochs, best val loss "
        f"{min(p.val_loss for p in trace)!r}, model -> {_out_path(cfg, model_name)}"
    )
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> int:
    _, _, test_corpus = _load_splits(cfg)
    model_name = args.model if args.model is not None else cfg.train_model_out
    model = _load_model(cfg, model_name)
    if model.schema != cfg.schema:
        raise DataError(
            f"model classes {list(model.schema.classes)} do not match "
            f"config schema {list(cfg.schema.classes)}"
        )
    try:
        predicted = clf.predict(model, test_corpus)
        cm = metrics_mod.confusion(test_corpus.labels(), predicted, cfg.schema)
    except ValueError as err:
        raise DataError(str(err)) from None
    summary = metrics_mod.macro_scores(cm)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    metrics_mod.write_confusion_csv(cm, str(_out_path(cfg, CONFUSION_FILE)))
    metrics_mod.write_eval_summary_csv(summary, cfg.schema, str(_out_path(cfg, EVAL_SUMMARY_FILE)))
    print(f"evaluate: macro F1 {summary.macro_f1!r}, accuracy {summary.accuracy!r}")
    if args.weighted_f1:
        print(f"evaluate: weighted F1 {summary.weighted_f1!r}")
    return EXIT_OK


def cmd_bias_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    settings = _require_section(cfg.biaseval, "biaseval")
    groups = _dialect_groups(cfg)
    for name in ("black", "white"):
        if len(groups[name]) == 0:
            raise DataError(f"dialect filter produced an empty {name!r} group")
    samples = {
        name: be.sample_group(groups[name], settings.sample_size, settings.seed)
        for name in ("black", "white")
    }
    model_before = _load_model(cfg, settings.model_before)
    model_after = _load_model(cfg, settings.model_after)
    rows = be.bias_report(
        before_black=clf.predict_proba(model_before, samples["black"], tag="before/black"),
        before_white=clf.predict_proba(model_before, samples["white"], tag="before/white"),
        after_black=clf.predict_proba(model_after, samples["black"], tag="after/black"),
        after_white=clf.predict_proba(model_after, samples["white"], tag="after/white"),
        schema=cfg.schema,
        negative_classes=settings.negative_classes,
        dataset=settings.dataset_name,
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    be.write_bias_report(rows, str(_out_path(cfg, BIAS_REPORT_FILE)))
    for row in rows:
        print(
            f"bias-eval: {row.class_name}/{row.variant}: "
            f"ratio {row.ratio!r} (t {row.t!r}{', ' + row.stars if row.stars else ''})"
        )
    return EXIT_OK


def cmd_learning_curve(cfg: RunConfig, args: argparse.Namespace) -> int:
    settings = _require_section(cfg.curve, "learning_curve")
    config = _require_section(cfg.train, "train")
    train_corpus, val_corpus, test_corpus = _load_splits(cfg)
    try:
        points = metrics_mod.learning_curve(
            train_corpus, val_corpus, test_corpus,
            settings.portions, settings.repeats, config, settings.seed,
            n_range=cfg.train_n_range, weighting=cfg.train_weighting,
        )
    except ValueError as err:
        raise DataError(str(err)) from None
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    metrics_mod.write_learning_curve_csv(points, str(_out_path(cfg, CURVE_FILE)))
    for point in points:
        print(f"learning-curve: portion {point.portion!r} macro F1 {point.mean_f1!r} +- {point.std_f1!r}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "preprocess": cmd_preprocess,
    "audit": cmd_audit,
    "reweight": cmd_reweight,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "bias-eval": cmd_bias_eval,
    "learning-curve": cmd_learning_curve,
}


# =========================================================================
# Argument parsing and entry point
# =========================================================================

class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems as ConfigError (exit 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"usage: {message}")


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        help=f"path to the YAML run config (default: ${ENV_CONFIG})",
    )
    common.add_argument(
        "--out", default=argparse.SUPPRESS, help="output directory (overrides config)"
    )
    common.add_argument(
        "--seed",
        type=int,
        default=argparse.SUPPRESS,
        help="override every seed in the config",
    )
    common.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS,
        help="log debug detail",
    )
    parser = _Parser(
        prog="ngram-debias",
        description="Corpus bias auditing and sample re-weighting pipeline.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("preprocess", parents=[common], help="ingest + normalize the dataset")
    sub.add_parser("audit", parents=[common], help="LMI audit and frequency tables")
    sub.add_parser("reweight", parents=[common], help="learn per-sample weights")
    p_train = sub.add_parser("train", parents=[common], help="train the softmax classifier")
    p_train.add_argument("--weights", default=None, help="weights file, or 'none' for alpha=0")
    p_train.add_argument("--model-out", default=None, help="model file name in the output dir")
    p_eval = sub.add_parser("evaluate", parents=[common], help="evaluate on the test split")
    p_eval.add_argument("--model", default=None, help="model file name in the output dir")
    p_eval.add_argument("--weighted-f1", action="store_true", help="also print weighted F1")
    sub.add_parser("bias-eval", parents=[common], help="cross-group bias report")
    sub.add_parser("learning-curve", parents=[common], help="macro F1 vs training size")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        verbose = getattr(args, "verbose", False)
        logging.basicConfig(
            level=logging.DEBUG if verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        config_path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
        cfg = load_run_config(
            config_path,
            out_override=getattr(args, "out", None),
            seed_override=getattr(args, "seed", None),
        )
        for name in ("weights", "model_out", "model", "weighted_f1"):
            if not hasattr(args, name):
                setattr(args, name, None if name != "weighted_f1" else False)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
