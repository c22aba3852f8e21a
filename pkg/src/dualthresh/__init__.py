"""Dual-threshold conformal prediction.

Calibrates two thresholds from held-out classifier outputs -- a conformal
quantile guaranteeing prediction-set coverage and a ROC-optimized
abstention cutoff -- then applies them to new samples and aggregates the
uncertainty/detection metric suite over condition x severity groups.
"""

__version__ = "0.1.0"

from .calibration import (
    AbstentionGroundTruth,
    CalibratedThresholds,
    RocCurve,
    abstention_threshold,
    calibrate,
    calibration_scores,
    conformal_threshold,
    roc_points,
)
from .core import (
    DegenerateLabelsError,
    LabeledSample,
    as_logits,
    as_probabilities,
    nonconformity,
    softmax,
)
from .datagen import (
    GeneratorConfig,
    derive_seed,
    exchangeable_split,
    generate_dataset,
    signal_strength,
)
from .metrics import (
    EvaluationSummary,
    abstention_rate,
    average_set_size,
    confidence,
    detection_auc,
    empirical_coverage,
    margin,
    normalized_entropy,
    summarize,
)
from .prediction import (
    EvaluationRecord,
    PredictionSet,
    abstain_decision,
    evaluate_sample,
    evaluate_samples,
    prediction_set,
)

__all__ = [
    "AbstentionGroundTruth",
    "CalibratedThresholds",
    "DegenerateLabelsError",
    "EvaluationRecord",
    "EvaluationSummary",
    "GeneratorConfig",
    "LabeledSample",
    "PredictionSet",
    "RocCurve",
    "__version__",
    "abstain_decision",
    "abstention_rate",
    "abstention_threshold",
    "as_logits",
    "as_probabilities",
    "average_set_size",
    "calibrate",
    "calibration_scores",
    "confidence",
    "conformal_threshold",
    "derive_seed",
    "detection_auc",
    "empirical_coverage",
    "evaluate_sample",
    "evaluate_samples",
    "exchangeable_split",
    "generate_dataset",
    "margin",
    "nonconformity",
    "normalized_entropy",
    "prediction_set",
    "roc_points",
    "signal_strength",
    "softmax",
    "summarize",
]
