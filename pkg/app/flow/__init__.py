# Copyright (c) 2025 sprowii
"""NoteFlow: упрощённый RealNVP для кадров одной ноты."""
from app.flow.models import CouplingLayer, DenseLayer, FlowModel, PermutationLayer, TrainConfig
from app.flow.storage import load_model, save_model
from app.flow.training import FlowTrainResult, train_flow
from app.flow.transform import forward, inverse, log_likelihood, log_prior, sample

__all__ = [
    "CouplingLayer",
    "DenseLayer",
    "FlowModel",
    "FlowTrainResult",
    "PermutationLayer",
    "TrainConfig",
    "forward",
    "inverse",
    "load_model",
    "log_likelihood",
    "log_prior",
    "sample",
    "save_model",
    "train_flow",
]
