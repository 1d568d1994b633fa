"""Adversarially debiased recidivism risk modeling toolkit."""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FilterSpec,
    IngestReport,
    RawRecord,
    Scaler,
    Schema,
    SplitSpec,
    default_schema,
    encode_dataset,
    load_records,
    split_dataset,
    standardize_features,
)
from .metrics import (
    CalibrationTable,
    FairnessReport,
    GroupedPredictions,
    accuracy,
    auc,
    binarize,
    calibration_table,
    decile_threshold,
    decile_to_score,
    error_rate_gaps,
    fairness_report,
    high_risk_gap,
)
from .training import (
    TrainConfig,
    TrainedPair,
    adversary_input,
    coupled_loss,
    predict,
    train,
)

__all__ = [
    "Dataset", "FilterSpec", "IngestReport", "RawRecord", "Scaler", "Schema",
    "SplitSpec", "default_schema", "encode_dataset", "load_records",
    "split_dataset", "standardize_features",
    "CalibrationTable", "FairnessReport", "GroupedPredictions", "accuracy",
    "auc", "binarize", "calibration_table", "decile_threshold",
    "decile_to_score", "error_rate_gaps", "fairness_report", "high_risk_gap",
    "TrainConfig", "TrainedPair", "adversary_input", "coupled_loss",
    "predict", "train",
]
