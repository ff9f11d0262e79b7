# Copyright (c) 2025 sprowii
"""Чтение и запись WAV, приведение к моно 16 кГц."""
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from app.config import SAMPLE_RATE
from app.errors import MalformedWavError, MissingInputError, UnsupportedCodecError
from app.logging_config import log

PathLike = Union[str, os.PathLike]

SUPPORTED_FORMATS = {"WAV", "WAVEX"}
SUPPORTED_SUBTYPES = {"PCM_16", "FLOAT"}


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def validate(self) -> List[str]:
        errors = []
        if self.samples.ndim != 1:
            errors.append(f"ожидался моно-сигнал, форма {self.samples.shape}")
        if self.sample_rate <= 0:
            errors.append(f"sample_rate должен быть > 0, получено: {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            errors.append("NaN/Inf в сэмплах")
        elif self.samples.size and np.max(np.abs(self.samples)) > 1.0:
            errors.append("сэмплы вне [-1, 1]")
        return errors


def resample(samples: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    """Полифазный передискретизатор с оконным sinc-фильтром."""
    if from_rate == to_rate:
        return np.asarray(samples, dtype=np.float64)
    g = math.gcd(int(from_rate), int(to_rate))
    return resample_poly(np.asarray(samples, dtype=np.float64), to_rate // g, from_rate // g)


def read_wav(path: PathLike, target_rate: int = SAMPLE_RATE) -> Waveform:
    """Читает RIFF/WAVE (PCM 16 или float 32), сводит в моно, передискретизирует.

    Raises:
        MissingInputError: файла нет
        MalformedWavError: заголовок не разбирается
        UnsupportedCodecError: не WAV или неподдерживаемый формат сэмплов
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError([path])
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise MalformedWavError(f"{path}: не удалось разобрать заголовок ({exc})") from exc
    if info.format not in SUPPORTED_FORMATS:
        raise UnsupportedCodecError(f"{path}: контейнер {info.format} не поддерживается")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise UnsupportedCodecError(f"{path}: формат сэмплов {info.subtype} не поддерживается")

    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as exc:
        raise MalformedWavError(f"{path}: {exc}") from exc
    mono = data.mean(axis=1)
    if rate != target_rate:
        log.debug(f"{path.name}: {rate} Гц -> {target_rate} Гц")
        mono = resample(mono, rate, target_rate)
    return Waveform(mono, target_rate)


def write_wav(path: PathLike, wave: Waveform) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), wave.samples, wave.sample_rate, subtype="FLOAT", format="WAV")
