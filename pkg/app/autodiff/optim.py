# Copyright (c) 2025 sprowii
"""Adam с коррекцией смещения.

Шаг функциональный: возвращает новые параметры и моменты, входы не меняет.
lr и t могут быть массивами по ведущей оси (по кадру), так решатель
декомпозиции ведёт независимое расписание для каждого кадра.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from app.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from app.errors import ShapeError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            v={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
        )


def _per_row(value: ArrayLike, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr
    return arr.reshape(arr.shape + (1,) * (ndim - arr.ndim))


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: ArrayLike, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS,
              t: ArrayLike = 1, mask: Optional[np.ndarray] = None) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Один шаг Adam.

    Args:
        params: параметры по именам
        grads: градиенты той же структуры
        state: моменты первого и второго порядка
        lr: шаг обучения, скаляр или вектор по ведущей оси
        t: номер шага (>= 1), скаляр или вектор по ведущей оси
        mask: булев вектор по ведущей оси; где False, параметры и моменты не меняются

    Raises:
        ShapeError: несовпадение форм параметров, градиентов или моментов
        ValueError: t < 1
    """
    if set(params) != set(grads) or set(params) != set(state.m) or set(params) != set(state.v):
        raise ShapeError("adam_step: наборы параметров, градиентов и моментов различаются")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 1):
        raise ValueError(f"номер шага Adam должен быть >= 1, получено: {t}")

    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m0, v0 = state.m[name], state.v[name]
        if g.shape != p.shape or m0.shape != p.shape or v0.shape != p.shape:
            raise ShapeError(f"adam_step[{name}]: {p.shape} / grad {g.shape} / moments {m0.shape}, {v0.shape}")
        lr_b = _per_row(lr, p.ndim)
        t_b = _per_row(t_arr, p.ndim)

        m = beta1 * m0 + (1.0 - beta1) * g
        v = beta2 * v0 + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t_b)
        v_hat = v / (1.0 - beta2 ** t_b)
        updated = p - lr_b * m_hat / (np.sqrt(v_hat) + eps)

        if mask is not None:
            keep = _per_row(np.asarray(mask, dtype=bool), p.ndim)
            updated = np.where(keep, updated, p)
            m = np.where(keep, m, m0)
            v = np.where(keep, v, v0)
        new_params[name], new_m[name], new_v[name] = updated, m, v
    return new_params, AdamState(new_m, new_v)
