"""Imprecision-range loss training and evaluation for LSTM lab-value forecasting."""

from ._core import (
    MEASURES,
    Dataset,
    Model,
    ParseError,
    PatientRecord,
    ShapeError,
    TrainingDiverged,
    __version__,
    accuracy,
    base_loss,
    delta_sequence,
    distance,
    generate_synthetic,
    gradcheck,
    init_model,
    perturb,
    run_cli,
    train_baseline,
    train_curriculum,
    weight_vector,
)

__all__ = [
    "MEASURES",
    "Dataset",
    "Model",
    "ParseError",
    "PatientRecord",
    "ShapeError",
    "TrainingDiverged",
    "__version__",
    "accuracy",
    "base_loss",
    "delta_sequence",
    "distance",
    "generate_synthetic",
    "gradcheck",
    "init_model",
    "perturb",
    "run_cli",
    "train_baseline",
    "train_curriculum",
    "weight_vector",
]
