# Copyright (c) 2025 sprowii
"""Метрики: ошибка реконструкции, односторонняя различимость, F1 по кадрам."""
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from app.errors import DatasetError, ShapeError
from app.flow.models import FlowModel
from app.flow.transform import log_likelihood
from app.logging_config import log

TP, FP, FN, TN = "TP", "FP", "FN", "TN"


def _matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: ожидалась матрица, форма {arr.shape}")
    return arr


# ============================================================================
# РЕКОНСТРУКЦИЯ
# ============================================================================

def frame_errors(S, S_hat) -> np.ndarray:
    """‖s_t − ŝ_t‖₂ для каждого кадра; матрицы D×T."""
    S, S_hat = _matrix(S, "S"), _matrix(S_hat, "S_hat")
    if S.shape != S_hat.shape:
        raise ShapeError(f"S {S.shape} и S_hat {S_hat.shape} различаются")
    return np.linalg.norm(S - S_hat, axis=0)


def reconstruction_error(S, S_hat) -> float:
    errors = frame_errors(S, S_hat)
    if errors.size == 0:
        raise ShapeError("нет кадров для оценки")
    return float(np.mean(errors))


def likelihood_tradeoff(model: FlowModel, frames, components) -> Tuple[float, float]:
    """Средний log p(x) в натах на измерение: для самих кадров и для компонент DDS.

    frames и components имеют форму (n, D).
    """
    frames = _matrix(frames, "frames")
    components = _matrix(components, "components")
    if len(frames) == 0 or len(components) == 0:
        raise DatasetError("пустой набор кадров")
    data_ll = float(np.mean(log_likelihood(model, frames))) / model.dim
    dds_ll = float(np.mean(log_likelihood(model, components))) / model.dim
    return data_ll, dds_ll


# ============================================================================
# ОДНОСТОРОННЯЯ РАЗЛИЧИМОСТЬ
# ============================================================================

def d_os_from_loglik(own_loglik, other_loglik) -> float:
    """Доля своих кадров со строго меньшим log p, чем максимум по чужим."""
    own = np.asarray(own_loglik, dtype=np.float64).ravel()
    other = np.asarray(other_loglik, dtype=np.float64).ravel()
    if own.size == 0 or other.size == 0:
        raise DatasetError("односторонняя различимость: пустой набор кадров")
    theta = np.max(other)
    return float(np.count_nonzero(own < theta)) / own.size


def one_sided_discriminativeness(model: FlowModel, own, other, same_source: bool = False) -> float:
    if len(own) == 0 or len(other) == 0:
        raise DatasetError("односторонняя различимость: пустой набор кадров")
    if same_source:
        return 1.0
    return d_os_from_loglik(log_likelihood(model, own), log_likelihood(model, other))


@dataclass
class ConfusionMatrix:
    values: np.ndarray  # (K, K), строка = модель, столбец = чужой источник
    labels: Tuple[Any, ...]

    def validate(self) -> List[str]:
        errors = []
        k = len(self.labels)
        if self.values.shape != (k, k):
            errors.append(f"форма {self.values.shape} при {k} метках")
            return errors
        if np.any(self.values < 0) or np.any(self.values > 1):
            errors.append("значения вне [0, 1]")
        if not np.all(np.diag(self.values) == 1.0):
            errors.append("диагональ не равна 1")
        return errors

    @property
    def max_off_diagonal(self) -> float:
        k = len(self.labels)
        if k < 2:
            return 0.0
        return float(np.max(self.values[~np.eye(k, dtype=bool)]))


def confusion_matrix(flows: Sequence[FlowModel], test_sets: Sequence, labels: Sequence[Any] = ()) -> ConfusionMatrix:
    if len(flows) != len(test_sets):
        raise ShapeError(f"потоков {len(flows)}, наборов кадров {len(test_sets)}")
    k = len(flows)
    labels = tuple(labels) if labels else tuple(f.source_label for f in flows)
    # log p каждой модели на каждом наборе считается один раз
    loglik = [[log_likelihood(flows[i], test_sets[j]) if len(test_sets[j]) else np.empty(0)
               for j in range(k)] for i in range(k)]
    values = np.ones((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                values[i, j] = d_os_from_loglik(loglik[i][i], loglik[i][j])
    return ConfusionMatrix(values, labels)


# ============================================================================
# F1 ПО КАДРАМ
# ============================================================================

@dataclass
class F1Report:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _scores(tp, fp, fn):
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0, 2.0 * precision * recall / (precision + recall), 0.0)
    return precision, recall, f1


def _pair(H, truth) -> Tuple[np.ndarray, np.ndarray]:
    H = _matrix(H, "H")
    truth = np.asarray(truth)
    if truth.shape != H.shape:
        raise ShapeError(f"H {H.shape} и truth {truth.shape} различаются")
    return H, truth.astype(bool)


def frame_f1(H_grouped, truth, threshold: float) -> F1Report:
    """Бинаризация H ≥ threshold и поклеточные TP/FP/FN против truth."""
    H, truth = _pair(H_grouped, truth)
    predicted = H >= threshold
    tp = int(np.count_nonzero(predicted & truth))
    fp = int(np.count_nonzero(predicted & ~truth))
    fn = int(np.count_nonzero(~predicted & truth))
    precision, recall, f1 = _scores(tp, fp, fn)
    return F1Report(float(threshold), float(precision), float(recall), float(f1), tp, fp, fn)


def threshold_candidates(H_grouped) -> np.ndarray:
    """Середины между соседними различными значениями, плюс порог ниже минимума и выше максимума."""
    levels = np.unique(_matrix(H_grouped, "H"))
    if levels.size == 0:
        return np.array([0.0])
    mids = 0.5 * (levels[:-1] + levels[1:])
    return np.concatenate([[levels[0] - 1.0], mids, [levels[-1] + 1.0]])


def calibrate_threshold(H_grouped, truth) -> F1Report:
    """Порог с максимальным F1 перебором всех кандидатов; при равенстве берётся больший."""
    H, truth = _pair(H_grouped, truth)
    candidates = threshold_candidates(H)
    if not truth.any():
        log.warning("calibrate_threshold: в разметке нет активных клеток, F1 = 0 при любом пороге")

    values = np.sort(H.ravel())
    positives = np.sort(H[truth])
    n_pos = positives.size
    predicted = values.size - np.searchsorted(values, candidates, side="left")
    tp = n_pos - np.searchsorted(positives, candidates, side="left")
    _, _, f1 = _scores(tp, predicted - tp, n_pos - tp)
    best = int(np.flatnonzero(f1 == f1.max())[-1])
    return frame_f1(H, truth, float(candidates[best]))


def outcome_map(H_grouped, truth, threshold: float) -> np.ndarray:
    """Клетки TP/FP/FN/TN после бинаризации, массив строк той же формы."""
    H, truth = _pair(H_grouped, truth)
    predicted = H >= threshold
    out = np.full(H.shape, TN, dtype=object)
    out[predicted & truth] = TP
    out[predicted & ~truth] = FP
    out[~predicted & truth] = FN
    return out
