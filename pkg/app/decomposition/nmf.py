# Copyright (c) 2025 sprowii
"""Переполненный (overcomplete) NMF с фиксированным словарём.

Словарь W - все обучающие кадры как есть, W не обучается. Для каждого
кадра s_t минимизируется ‖s_t − W·h_t‖₂ (норма, не квадрат) проецированным
Adam, h_t ← max(h_t, 0) после каждого шага, старт h = 1/N.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.autodiff import ComputationRecord, Tensor
from app.config import FRAME_CHUNK, NMF_LR
from app.decomposition.schedule import SolverResult, SolverSchedule, frame_chunks, map_chunks, run_projected_adam
from app.errors import ShapeError
from app.logging_config import log


@dataclass(frozen=True, eq=False)
class FixedDictionary:
    W: np.ndarray  # (D, N)
    source_of: np.ndarray  # (N,) метка источника каждого столбца
    sources: Tuple[Any, ...]  # порядок строк после группировки

    @property
    def n_atoms(self) -> int:
        return self.W.shape[1]

    @property
    def n_bins(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_frames(cls, frames_by_source: Dict[Any, np.ndarray]) -> "FixedDictionary":
        """Столбцы словаря - кадры (n_k, D) всех источников, источники по возрастанию метки."""
        sources = tuple(sorted(frames_by_source))
        blocks, labels = [], []
        for source in sources:
            frames = np.asarray(frames_by_source[source], dtype=np.float64)
            if frames.ndim != 2 or frames.shape[0] == 0:
                raise ShapeError(f"источник {source}: ожидались кадры (n, D), форма {frames.shape}")
            blocks.append(frames)
            labels.extend([source] * len(frames))
        W = np.ascontiguousarray(np.vstack(blocks).T)
        W.setflags(write=False)
        source_of = np.asarray(labels)
        source_of.setflags(write=False)
        return cls(W, source_of, sources)

    def validate(self) -> List[str]:
        errors = []
        if self.W.ndim != 2:
            errors.append(f"W должен быть матрицей, форма {self.W.shape}")
            return errors
        if np.any(self.W < 0):
            errors.append("W содержит отрицательные значения")
        if len(self.source_of) != self.W.shape[1]:
            errors.append(f"меток {len(self.source_of)}, столбцов {self.W.shape[1]}")
        unknown = set(self.source_of.tolist()) - set(self.sources)
        if unknown:
            errors.append(f"метки без источника: {sorted(unknown)}")
        return errors


def mean_dictionary(frames_by_source: Dict[Any, np.ndarray]) -> FixedDictionary:
    """По одному столбцу на источник: средний обучающий кадр."""
    return FixedDictionary.from_frames(
        {source: np.mean(np.asarray(frames, dtype=np.float64), axis=0, keepdims=True)
         for source, frames in frames_by_source.items()})


@dataclass
class NMFResult:
    H: np.ndarray  # (N, T)
    loss: np.ndarray  # (T,)
    reconstruction: np.ndarray  # (D, T)
    failed: np.ndarray  # (T,)
    summary: Dict[str, int] = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        return self.loss


def _target_frames(S) -> np.ndarray:
    values = S.values if hasattr(S, "values") else S
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"ожидалась спектрограмма D×T, форма {values.shape}")
    return np.ascontiguousarray(values.T)


def _graph(frames: np.ndarray, W_T: np.ndarray, h: np.ndarray, differentiable: bool = True):
    rec = ComputationRecord()
    h_var = rec.leaf(h, "h", differentiable=differentiable)
    recon = h_var @ rec.constant(Tensor(W_T, checked=False, copy=False), "W")
    loss = (rec.constant(frames, "s") - recon).norm(axis=1)
    return rec, h_var, recon, loss


def nmf_decompose(S, dictionary: FixedDictionary, schedule: Optional[SolverSchedule] = None,
                  chunk: int = FRAME_CHUNK, threads: int = 1, label: str = "nmf") -> NMFResult:
    """Активации словаря для каждого кадра S.

    Args:
        S: Spectrogram или матрица (D, T)
        dictionary: фиксированный словарь с D строками
        schedule: расписание решателя (по умолчанию lr = NMF_LR)

    Raises:
        ShapeError: число бинов S и словаря различается
    """
    schedule = schedule or SolverSchedule(lr=NMF_LR)
    frames = _target_frames(S)
    if frames.shape[1] != dictionary.n_bins:
        raise ShapeError(f"D спектрограммы {frames.shape[1]} != D словаря {dictionary.n_bins}")
    n_frames, n_atoms = frames.shape[0], dictionary.n_atoms
    W_T = np.ascontiguousarray(dictionary.W.T)
    W_T.setflags(write=False)

    def solve(rows: np.ndarray) -> Tuple[np.ndarray, SolverResult]:
        chunk_frames = frames[rows]

        def objective(params: Dict[str, np.ndarray], idx: np.ndarray):
            rec, h, _, loss = _graph(chunk_frames[idx], W_T, params["h"])
            if not np.all(np.isfinite(loss.value)):
                return loss.value.copy(), None
            grads = rec.backward(loss.sum())
            return loss.value.copy(), {"h": grads[h.index]}

        init = {"h": np.full((len(rows), n_atoms), 1.0 / n_atoms)}
        result = run_projected_adam(objective, init, lambda p: {"h": np.maximum(p["h"], 0.0)}, schedule,
                                    label=f"{label} кадры {rows[0]}..{rows[-1]}")
        return rows, result

    H = np.zeros((n_atoms, n_frames))
    failed = np.zeros(n_frames, dtype=bool)
    totals: Dict[str, int] = {}
    for rows, result in map_chunks(solve, frame_chunks(n_frames, chunk), threads):
        H[:, rows] = result.params["h"].T
        failed[rows] = result.failed
        for key, value in result.summary().items():
            totals[key] = totals.get(key, 0) + value

    _, _, recon, loss = _graph(frames, W_T, H.T, differentiable=False)
    log.info(f"[{label}] N={n_atoms}, T={n_frames}, средняя невязка {float(np.mean(loss.value)):.6g}")
    return NMFResult(H, loss.value.copy(), recon.value.T.copy(), failed, totals)


def group_by_source(H: np.ndarray, dictionary: FixedDictionary) -> np.ndarray:
    """Строка k = сумма строк H, чьи столбцы словаря принадлежат источнику k."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape[0] != dictionary.n_atoms:
        raise ShapeError(f"H имеет {H.shape[0]} строк, в словаре {dictionary.n_atoms} столбцов")
    return np.vstack([H[dictionary.source_of == source].sum(axis=0) for source in dictionary.sources])
