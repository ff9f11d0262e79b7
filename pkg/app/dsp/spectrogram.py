# Copyright (c) 2025 sprowii
"""STFT и нормализация лог-магнитуд в [0, 1].

Нормализация: дБ относительно максимума корпуса (norm_meta.reference),
обрезка снизу на floor_db, линейное отображение [floor_db, 0] -> [0, 1].
NormMeta считается по обучающим данным и без изменений применяется к
тестовым.
"""
from dataclasses import dataclass
from typing import Iterable, List, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.config import FLOOR_DB, KEEP_BINS, STFT_HOP, STFT_WINDOW
from app.dsp.audio import Waveform
from app.errors import DatasetError, ShapeError


@dataclass(frozen=True)
class NormMeta:
    reference: float
    floor_db: float = FLOOR_DB
    keep_bins: int = KEEP_BINS


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # (D, T)
    hop: int = STFT_HOP
    window: int = STFT_WINDOW
    norm_meta: Optional[NormMeta] = None

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    def frames(self) -> np.ndarray:
        """Кадры по строкам, (T, D)."""
        return np.ascontiguousarray(self.values.T)

    def validate(self) -> List[str]:
        errors = []
        if self.values.ndim != 2:
            errors.append(f"ожидалась матрица D×T, форма {self.values.shape}")
        elif np.any(self.values < 0) or np.any(self.values > 1):
            errors.append("значения вне [0, 1]")
        if self.norm_meta is not None and self.values.ndim == 2 and self.n_bins != self.norm_meta.keep_bins:
            errors.append(f"D={self.n_bins}, ожидалось {self.norm_meta.keep_bins}")
        return errors


def hann_window(n: int) -> np.ndarray:
    """Периодическое окно Ханна: w[i] = 0.5·(1 − cos(2πi/n))."""
    if n < 2:
        raise ValueError(f"длина окна должна быть >= 2, получено: {n}")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def n_frames_for(n_samples: int, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> int:
    """T = 1 + floor((len − window) / hop); 0, если сигнал короче окна."""
    if n_samples < window:
        return 0
    return 1 + (n_samples - window) // hop


def stft_magnitude(wave: Union[Waveform, np.ndarray], window: int = STFT_WINDOW, hop: int = STFT_HOP) -> np.ndarray:
    """Модуль ДПФ окон без дополнения нулями, (window // 2 + 1, T)."""
    samples = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError(f"ожидался моно-сигнал, форма {samples.shape}")
    if len(samples) < window:
        raise ShapeError(f"сигнал ({len(samples)} сэмплов) короче окна ({window})")
    if hop < 1:
        raise ValueError(f"hop должен быть >= 1, получено: {hop}")
    frames = sliding_window_view(samples, window)[::hop]
    return np.abs(np.fft.rfft(frames * hann_window(window), axis=1)).T


def compute_norm_meta(mags: Iterable[np.ndarray], keep_bins: int = KEEP_BINS, floor_db: float = FLOOR_DB) -> NormMeta:
    """Опорный максимум по всему корпусу (только по сохраняемым бинам)."""
    reference = 0.0
    for mag in mags:
        kept = np.asarray(mag)[:keep_bins]
        if kept.size:
            reference = max(reference, float(np.max(kept)))
    if not reference > 0:
        raise DatasetError("корпус нулевой: опорный максимум для нормализации не определён")
    return NormMeta(reference, float(floor_db), int(keep_bins))


def log_normalize(mag: np.ndarray, keep_bins: int = KEEP_BINS, floor_db: float = FLOOR_DB,
                  meta: Optional[NormMeta] = None, hop: int = STFT_HOP, window: int = STFT_WINDOW) -> Spectrogram:
    """Магнитуды (bins, T) -> Spectrogram с D = keep_bins и значениями в [0, 1].

    Без meta опорный максимум берётся из самого mag.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] < keep_bins:
        raise ShapeError(f"ожидалось >= {keep_bins} бинов, форма {mag.shape}")
    if np.any(mag < 0):
        raise ValueError("магнитуды должны быть неотрицательны")
    if meta is None:
        meta = compute_norm_meta([mag], keep_bins, floor_db)
    kept = mag[:meta.keep_bins]
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(kept / meta.reference)
    db = np.clip(db, meta.floor_db, 0.0)
    values = (db - meta.floor_db) / -meta.floor_db
    return Spectrogram(values, hop, window, meta)
