# Copyright (c) 2025 sprowii
"""Неизменяемый 64-битный тензор."""
from typing import Optional, Tuple

import numpy as np

from app.config import CHECKED_TENSORS
from app.errors import NonFiniteError, ShapeError


class Tensor:
    """Плотный массив float64 в row-major порядке, доступный только для чтения.

    В checked-режиме NaN/Inf отклоняются при создании. С copy=False уже
    неизменяемый массив используется без копирования (параметры обученных
    моделей), изменяемый всё равно копируется.
    """

    __slots__ = ("_values",)

    def __init__(self, values, checked: Optional[bool] = None, copy: bool = True):
        if isinstance(values, Tensor):
            values = values.values
        arr = np.asarray(values, dtype=np.float64)
        if copy or arr.flags.writeable or not arr.flags.c_contiguous:
            arr = np.array(arr, dtype=np.float64, order="C")
        if CHECKED_TENSORS if checked is None else checked:
            if not np.all(np.isfinite(arr)):
                bad = int(arr.size - np.count_nonzero(np.isfinite(arr)))
                raise NonFiniteError(f"tensor of shape {arr.shape} contains {bad} non-finite values")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._values.shape

    @property
    def size(self) -> int:
        return int(self._values.size)

    def item(self) -> float:
        if self._values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self._values.reshape(-1)[0])

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"
