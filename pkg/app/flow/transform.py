# Copyright (c) 2025 sprowii
"""Прямое и обратное преобразование NoteFlow, правдоподобие, сэмплирование.

Функции *_graph строят вычисления в ComputationRecord и нужны там, где
требуются градиенты (обучение, декомпозиция). Остальные функции принимают
и возвращают массивы numpy: кадр формы (D,) или пачку кадров (n, D).
"""
from typing import Dict, Tuple

import numpy as np

from app.autodiff import ComputationRecord, Tensor, Var, add_row, concat
from app.config import LOG_2PI
from app.errors import FlowOverflowError, ShapeError
from app.flow.models import CouplingLayer, FlowModel


# ============================================================================
# ГРАФЫ
# ============================================================================

def parameter_vars(record: ComputationRecord, model: FlowModel, differentiable: bool = True) -> Dict[str, Var]:
    """Листья для всех параметров модели; при differentiable=False это константы."""
    return {
        name: record.leaf(Tensor(value, checked=False, copy=False), name=name, differentiable=differentiable)
        for name, value in model.parameters().items()
    }


def _mlp(x: Var, params: Dict[str, Var], prefix: str, depth: int) -> Var:
    h = x
    for j in range(depth):
        h = add_row(h @ params[f"{prefix}.{j}.w"], params[f"{prefix}.{j}.b"])
        if j < depth - 1:
            h = h.selu()
    return h


def _scale_shift(model: FlowModel, i: int, layer: CouplingLayer, xa: Var, params: Dict[str, Var]) -> Tuple[Var, Var]:
    s = _mlp(xa, params, f"c{i}.scale", len(layer.scale_net)).tanh().scale(model.scale_bound)
    t = _mlp(xa, params, f"c{i}.shift", len(layer.shift_net))
    return s, t


def forward_graph(model: FlowModel, x: Var, params: Dict[str, Var]) -> Tuple[Var, Var]:
    """x (n, D) -> (z (n, D), log|det J| (n,))."""
    n_layers = model.n_coupling
    log_det = None
    for i, layer in enumerate(model.couplings):
        a = layer.n_pass
        xa = x.take(range(a), axis=1)
        xb = x.take(range(a, model.dim), axis=1)
        s, t = _scale_shift(model, i, layer, xa, params)
        x = concat([xa, xb * s.exp() + t], axis=1)
        layer_log_det = s.sum(axis=1)
        log_det = layer_log_det if log_det is None else log_det + layer_log_det
        if i < n_layers - 1:
            x = x.take(model.permutations[i].perm, axis=1)
    return x, log_det


def inverse_graph(model: FlowModel, z: Var, params: Dict[str, Var], check_overflow: bool = False) -> Var:
    """z (n, D) -> x (n, D).

    Raises:
        FlowOverflowError: при check_overflow, если после слоя появились NaN/Inf
    """
    x = z
    for i in range(model.n_coupling - 1, -1, -1):
        layer = model.couplings[i]
        a = layer.n_pass
        xa = x.take(range(a), axis=1)
        zb = x.take(range(a, model.dim), axis=1)
        s, t = _scale_shift(model, i, layer, xa, params)
        x = concat([xa, (zb - t) * (-s).exp()], axis=1)
        if check_overflow and not np.all(np.isfinite(x.value)):
            raise FlowOverflowError(i)
        if i > 0:
            x = x.take(model.permutations[i - 1].inverse, axis=1)
    return x


def log_prior_graph(z: Var) -> Var:
    """log N(z; 0, I) по строкам: -(D/2) ln 2π - ½‖z‖²."""
    dim = z.shape[-1]
    return z.sumsq(axis=-1).scale(-0.5).offset(-0.5 * dim * LOG_2PI)


def mean_nll_graph(model: FlowModel, x: Var, params: Dict[str, Var]) -> Var:
    """Средний отрицательный логарифм правдоподобия по пачке (функция потерь обучения)."""
    z, log_det = forward_graph(model, x, params)
    loglik = log_prior_graph(z) + log_det
    return loglik.sum().scale(-1.0 / x.shape[0])


# ============================================================================
# NUMPY API
# ============================================================================

def _as_batch(model: FlowModel, x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr.reshape(1, -1) if single else arr
    if batch.ndim != 2 or batch.shape[1] != model.dim:
        raise ShapeError(f"ожидались кадры размерности {model.dim}, получено: {arr.shape}")
    return batch, single


def forward(model: FlowModel, x) -> Tuple[np.ndarray, np.ndarray]:
    batch, single = _as_batch(model, x)
    rec = ComputationRecord()
    z, log_det = forward_graph(model, rec.leaf(batch, "x", differentiable=False),
                               parameter_vars(rec, model, differentiable=False))
    if single:
        return z.value[0].copy(), float(log_det.value[0])
    return z.value.copy(), log_det.value.copy()


def inverse(model: FlowModel, z) -> np.ndarray:
    batch, single = _as_batch(model, z)
    rec = ComputationRecord()
    x = inverse_graph(model, rec.leaf(batch, "z", differentiable=False),
                      parameter_vars(rec, model, differentiable=False), check_overflow=True)
    return x.value[0].copy() if single else x.value.copy()


def log_prior(z) -> np.ndarray:
    arr = np.asarray(z, dtype=np.float64)
    dim = arr.shape[-1]
    result = -0.5 * dim * LOG_2PI - 0.5 * np.sum(arr * arr, axis=-1)
    return float(result) if arr.ndim == 1 else result


def log_likelihood(model: FlowModel, x):
    """log p(x) в натах с учётом log|det J|."""
    z, log_det = forward(model, x)
    return log_prior(z) + log_det


def sample(model: FlowModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """n независимых сэмплов: z ~ N(0, I), x = f⁻¹(z)."""
    if n < 1:
        raise ValueError(f"n должно быть >= 1, получено: {n}")
    return inverse(model, rng.standard_normal((n, model.dim)))
