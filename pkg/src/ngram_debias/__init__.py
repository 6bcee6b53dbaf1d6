"""Corpus bias auditing and debiasing for n-gram text classifiers.

The toolkit detects class-correlated n-grams with local mutual information,
learns per-sample weights that equalize per-n-gram class membership, trains
a weighted softmax reference classifier, and quantifies cross-group bias in
its predictions before and after re-weighting.
"""
from .biaseval import (
    BiasRow,
    DialectPosteriors,
    GroupSample,
    TTestResult,
    bias_ratio,
    bias_report,
    dialect_filter,
    mean_membership,
    sample_group,
    significance_stars,
    welch_t_test,
)
from .classifier import (
    FeatureMap,
    PredictionSet,
    SoftmaxModel,
    TrainConfig,
    build_features,
    load_external_predictions,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
    weighted_ce_loss,
)
from .corpus import (
    CsvFormat,
    Document,
    IngestReport,
    JsonlFormat,
    LabeledCorpus,
    LabelSchema,
    class_distribution,
    ingest,
    stratified_split,
    write_corpus_jsonl,
)
from .lmi_audit import (
    AuditRow,
    LmiEntry,
    NgramStats,
    audit_report,
    collect_stats,
    lmi,
    top_k_frequency,
    top_k_lmi,
)
from .metrics import (
    ConfusionMatrix,
    CurvePoint,
    EvalSummary,
    confusion,
    learning_curve,
    macro_scores,
)
from .preprocess import (
    PreprocessConfig,
    extract_ngrams,
    filter_short,
    normalize,
    normalize_corpus,
    tokenize,
)
from .reweight import (
    BiasTable,
    ReweightConfig,
    ReweightResult,
    WeightVector,
    compute_bias,
    objective,
    objective_gradient,
    optimize_weights,
)

__version__ = "0.1.0"
