# Copyright (c) 2025 sprowii
"""Аудио -> нормализованные лог-спектрограммы."""
from app.dsp.audio import Waveform, read_wav, resample, write_wav
from app.dsp.spectrogram import (
    NormMeta,
    Spectrogram,
    compute_norm_meta,
    hann_window,
    log_normalize,
    n_frames_for,
    stft_magnitude,
)

__all__ = [
    "NormMeta",
    "Spectrogram",
    "Waveform",
    "compute_norm_meta",
    "hann_window",
    "log_normalize",
    "n_frames_for",
    "read_wav",
    "resample",
    "stft_magnitude",
    "write_wav",
]
