# Copyright (c) 2025 sprowii
"""Градиенты по записи и конечно-разностный оракул для их проверки."""
from typing import Dict, Optional, Tuple

import numpy as np

from app.autodiff.record import ComputationRecord, Var
from app.autodiff.tensor import Tensor
from app.errors import ShapeError


def evaluate_with_gradient(record: ComputationRecord, seed_output: Optional[Var] = None) -> Tuple[float, Dict[Var, Tensor]]:
    """Значение скалярного выхода и градиенты по всем дифференцируемым листьям.

    Args:
        record: запись вычислений
        seed_output: узел-выход; по умолчанию последний записанный

    Returns:
        (значение, {лист: градиент})

    Raises:
        ShapeError: выход не скалярный
        GradientError: NaN в обратном проходе, с номером и видом операции
    """
    output = seed_output if seed_output is not None else Var(record, len(record) - 1)
    grads = record.backward(output)
    value = float(np.asarray(output.value).reshape(-1)[0])
    return value, {Var(record, i): Tensor(g, checked=False) for i, g in grads.items()}


def finite_difference_gradient(record: ComputationRecord, leaf: Var, step: float = 1e-5,
                               output: Optional[Var] = None) -> Tensor:
    """Центральные разности (f(x+h) - f(x-h)) / 2h по каждой координате листа."""
    if step <= 0:
        raise ValueError(f"step должен быть > 0, получено: {step}")
    out = output if output is not None else Var(record, len(record) - 1)
    if out.value.size != 1:
        raise ShapeError(f"finite differences need a scalar output, got shape {out.value.shape}")

    base = np.array(leaf.value, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        up = float(record.replay({leaf: base}, out).reshape(-1)[0])
        flat[i] = original - step
        down = float(record.replay({leaf: base}, out).reshape(-1)[0])
        flat[i] = original
        grad.reshape(-1)[i] = (up - down) / (2.0 * step)
    return Tensor(grad, checked=False)
