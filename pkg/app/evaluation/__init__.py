# Copyright (c) 2025 sprowii
from app.evaluation.metrics import (
    ConfusionMatrix,
    F1Report,
    calibrate_threshold,
    confusion_matrix,
    frame_f1,
    likelihood_tradeoff,
    one_sided_discriminativeness,
    outcome_map,
    reconstruction_error,
)

__all__ = [
    "ConfusionMatrix",
    "F1Report",
    "calibrate_threshold",
    "confusion_matrix",
    "frame_f1",
    "likelihood_tradeoff",
    "one_sided_discriminativeness",
    "outcome_map",
    "reconstruction_error",
]
