# Copyright (c) 2025 sprowii
"""Сплиты train/test по пресетам и извлечение кадров."""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np

from app.config import FLOOR_DB, KEEP_BINS, NOTE_DURATION_S, STFT_HOP, STFT_WINDOW, VELOCITIES
from app.data.models import PresetParams, SplitSpec
from app.data.synth import synth_note
from app.dsp.audio import Waveform
from app.dsp.spectrogram import NormMeta, compute_norm_meta, log_normalize, stft_magnitude
from app.errors import SplitError
from app.logging_config import log


@dataclass
class SplitData:
    spec: SplitSpec
    norm_meta: NormMeta
    # высота -> кадры (N, D)
    train_frames: Dict[int, np.ndarray] = field(default_factory=dict)
    test_frames: Dict[int, np.ndarray] = field(default_factory=dict)


def default_splits(n_presets: int, n_splits: int, test_per_split: int, notes: Sequence[int]) -> List[SplitSpec]:
    """Сплит i тестируется на пресетах {i·m, ..., i·m + m − 1} (по модулю), обучается на остальных."""
    if test_per_split < 1 or test_per_split >= n_presets:
        raise SplitError(f"тестовых пресетов на сплит должно быть от 1 до {n_presets - 1}, получено: {test_per_split}")
    splits = []
    for i in range(n_splits):
        test = sorted({(i * test_per_split + j) % n_presets for j in range(test_per_split)})
        train = [p for p in range(n_presets) if p not in test]
        splits.append(SplitSpec(f"split{i}", tuple(train), tuple(test), tuple(notes)))
    return splits


def frames_from_waves(waves: Iterable[Waveform], meta: NormMeta, window: int = STFT_WINDOW,
                      hop: int = STFT_HOP) -> np.ndarray:
    """STFT + нормализация по meta, кадры всех волн подряд, (N, D)."""
    blocks = [log_normalize(stft_magnitude(w, window, hop), meta.keep_bins, meta.floor_db, meta, hop, window).frames()
              for w in waves]
    if not blocks:
        return np.zeros((0, meta.keep_bins))
    return np.vstack(blocks)


def note_waves(pitch: int, presets: Sequence[PresetParams], velocities: Sequence[int] = VELOCITIES,
               duration_s: float = NOTE_DURATION_S) -> List[Waveform]:
    return [synth_note(pitch, v, preset, duration_s) for preset in presets for v in velocities]


def check_split(spec: SplitSpec, presets: Sequence[PresetParams]) -> Dict[int, PresetParams]:
    by_id = {p.preset_id: p for p in presets}
    errors = spec.validate(by_id)
    if errors:
        raise SplitError("; ".join(errors))
    return by_id


def split_from_waves(spec: SplitSpec, train_waves: Dict[int, List[Waveform]], test_waves: Dict[int, List[Waveform]],
                     keep_bins: int = KEEP_BINS, floor_db: float = FLOOR_DB) -> SplitData:
    """Кадры сплита из готовых волн (высота -> список волн).

    Опорный максимум нормализации берётся только из обучающих волн и
    применяется к тестовым без изменений.
    """
    missing = [p for p in spec.notes if not train_waves.get(p) or p not in test_waves]
    if missing:
        raise SplitError(f"{spec.name}: нет волн для нот {missing}")
    meta = compute_norm_meta(
        (stft_magnitude(w) for p in spec.notes for w in train_waves[p]), keep_bins, floor_db)

    data = SplitData(spec, meta)
    for pitch in spec.notes:
        data.train_frames[pitch] = frames_from_waves(train_waves[pitch], meta)
        data.test_frames[pitch] = frames_from_waves(test_waves[pitch], meta)
    log.info(f"{spec.name}: train кадров {sum(len(f) for f in data.train_frames.values())}, "
             f"test кадров {sum(len(f) for f in data.test_frames.values())}, ref={meta.reference:.4g}")
    return data


def build_split(spec: SplitSpec, presets: Sequence[PresetParams], velocities: Sequence[int] = VELOCITIES,
                duration_s: float = NOTE_DURATION_S, keep_bins: int = KEEP_BINS,
                floor_db: float = FLOOR_DB) -> SplitData:
    """Синтезирует все (пресет, velocity) для каждой ноты и собирает кадры.

    Raises:
        SplitError: пересечение train/test или неизвестный пресет
    """
    by_id = check_split(spec, presets)
    train_presets = [by_id[i] for i in spec.train_presets]
    test_presets = [by_id[i] for i in spec.test_presets]
    return split_from_waves(
        spec,
        {p: note_waves(p, train_presets, velocities, duration_s) for p in spec.notes},
        {p: note_waves(p, test_presets, velocities, duration_s) for p in spec.notes},
        keep_bins, floor_db)
