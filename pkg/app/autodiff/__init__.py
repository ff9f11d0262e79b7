# Copyright (c) 2025 sprowii
"""Обратное дифференцирование над массивами numpy."""
from app.autodiff.gradcheck import evaluate_with_gradient, finite_difference_gradient
from app.autodiff.optim import AdamState, adam_step
from app.autodiff.record import ComputationRecord, Var, add_row, concat, mul_rows
from app.autodiff.tensor import Tensor

__all__ = [
    "AdamState",
    "ComputationRecord",
    "Tensor",
    "Var",
    "adam_step",
    "add_row",
    "concat",
    "evaluate_with_gradient",
    "finite_difference_gradient",
    "mul_rows",
]
