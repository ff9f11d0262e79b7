# Copyright (c) 2025 sprowii
"""Аддитивный синтез нот с негармоничными обертонами и рендер пьес."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import NOTE_DURATION_S, SAMPLE_RATE, STFT_HOP, STFT_WINDOW, VELOCITIES
from app.data.models import MAX_PITCH, MIN_PITCH, NoteEvent, PresetParams
from app.dsp.audio import Waveform
from app.dsp.spectrogram import n_frames_for
from app.errors import DatasetError
from app.logging_config import log

RELEASE_S = 0.01
PEAK_GAIN = 0.25


def midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def partial_frequencies(f0: float, inharmonicity: float, n_partials: int) -> np.ndarray:
    """f_n = f0·n·√(1 + B·n²), n = 1..n_partials."""
    n = np.arange(1, n_partials + 1, dtype=np.float64)
    return f0 * n * np.sqrt(1.0 + inharmonicity * n * n)


def _tilt_amplitudes(tilt_db_per_octave: float, n_partials: int) -> np.ndarray:
    n = np.arange(1, n_partials + 1, dtype=np.float64)
    return 10.0 ** (tilt_db_per_octave * np.log2(n) / 20.0)


def synth_note(pitch: int, velocity: int, preset: PresetParams, duration_s: float = NOTE_DURATION_S,
               sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Одна нота.

    Громкость растёт как (velocity/127)^1.5, а наклон спектра при сильном
    ударе становится положе, так что яркость тоже зависит от velocity.
    Обертоны выше Найквиста отбрасываются. Фазы и шум детерминированы
    через (preset.seed, pitch, velocity).
    """
    if not (MIN_PITCH <= pitch <= MAX_PITCH):
        raise ValueError(f"pitch должен быть от {MIN_PITCH} до {MAX_PITCH}, получено: {pitch}")
    if not (0 < velocity <= 127):
        raise ValueError(f"velocity должна быть от 1 до 127, получено: {velocity}")
    if not duration_s > 0:
        raise ValueError(f"duration_s должен быть > 0, получено: {duration_s}")
    errors = preset.validate()
    if errors:
        raise ValueError("; ".join(errors))

    rng = np.random.default_rng(np.random.SeedSequence([preset.seed, pitch, velocity]))
    n_samples = int(round(duration_s * sample_rate))
    t = np.arange(n_samples) / sample_rate
    v = velocity / 127.0

    freqs = partial_frequencies(midi_to_hz(pitch), preset.inharmonicity, preset.n_partials)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=preset.n_partials)
    audible = freqs < sample_rate / 2.0

    amplitudes = _tilt_amplitudes(preset.spectral_tilt * (1.5 - 0.5 * v), preset.n_partials)
    gain = PEAK_GAIN * v ** 1.5 / np.sum(_tilt_amplitudes(preset.spectral_tilt, preset.n_partials))
    rates = preset.decay_rate * (1.0 + 0.1 * np.arange(preset.n_partials))

    signal = np.zeros(n_samples)
    for f, a, phi, rate in zip(freqs[audible], amplitudes[audible], phases[audible], rates[audible]):
        signal += a * np.exp(-rate * t) * np.sin(2.0 * np.pi * f * t + phi)
    signal *= gain

    noise = 10.0 ** (preset.noise_floor_db / 20.0) * v * np.exp(-preset.decay_rate * t)
    signal += noise * rng.standard_normal(n_samples)

    envelope = np.ones(n_samples)
    if preset.attack_ms > 0:
        envelope = np.minimum(envelope, t / (preset.attack_ms / 1000.0))
    release = int(round(RELEASE_S * sample_rate))
    if 0 < release <= n_samples:
        envelope[-release:] *= np.linspace(1.0, 0.0, release)
    signal *= envelope

    peak = np.max(np.abs(signal)) if n_samples else 0.0
    if peak > 1.0:
        log.warning(f"Нота {pitch}/{velocity} (пресет {preset.preset_id}) обрезана, пик {peak:.3f}")
        signal = np.clip(signal, -1.0, 1.0)
    return Waveform(signal, sample_rate)


def _check_pitch_overlaps(events: Sequence[NoteEvent]) -> None:
    by_pitch: Dict[int, List[NoteEvent]] = {}
    for event in events:
        by_pitch.setdefault(event.pitch, []).append(event)
    for pitch, group in by_pitch.items():
        group = sorted(group, key=lambda e: e.onset_s)
        for a, b in zip(group[:-1], group[1:]):
            if b.onset_s < a.end_s:
                raise DatasetError(f"события высоты {pitch} перекрываются: {a.onset_s}s и {b.onset_s}s")


def truth_matrix(events: Sequence[NoteEvent], pitches: Sequence[int], n_frames: int,
                 sample_rate: int = SAMPLE_RATE, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> np.ndarray:
    """truth[k, t] = 1, если центр окна t попадает в [onset, onset + duration] события высоты k."""
    centers = (np.arange(n_frames) * hop + window / 2.0) / sample_rate
    row_of = {p: k for k, p in enumerate(pitches)}
    truth = np.zeros((len(pitches), n_frames), dtype=np.int64)
    for event in events:
        active = (centers >= event.onset_s) & (centers <= event.end_s)
        truth[row_of[event.pitch], active] = 1
    return truth


def render_piece(events: Sequence[NoteEvent], preset: PresetParams, pitches: Optional[Sequence[int]] = None,
                 sample_rate: int = SAMPLE_RATE, window: int = STFT_WINDOW,
                 hop: int = STFT_HOP) -> Tuple[Waveform, np.ndarray, List[int]]:
    """Пьеса = сумма нот, поставленных на свои onset; плюс матрица активности (K, T).

    Returns:
        (волна, truth, список высот по строкам truth)

    Raises:
        DatasetError: пустые или перекрывающиеся события; сумма нот выходит за [-1, 1]
    """
    if not events:
        raise DatasetError("пустой список событий")
    rows = sorted({e.pitch for e in events}) if pitches is None else list(pitches)
    for event in events:
        errors = event.validate()
        if errors:
            raise DatasetError("; ".join(errors))
        if event.pitch not in rows:
            raise DatasetError(f"высота {event.pitch} отсутствует в списке строк {rows}")
    _check_pitch_overlaps(events)

    length = max(int(round(e.end_s * sample_rate)) for e in events)
    mix = np.zeros(length)
    for event in events:
        note = synth_note(event.pitch, event.velocity, preset, event.duration_s, sample_rate).samples
        start = int(round(event.onset_s * sample_rate))
        end = min(start + len(note), length)
        mix[start:end] += note[:end - start]

    n_frames = n_frames_for(length, window, hop)
    if n_frames == 0:
        raise DatasetError(f"пьеса ({length} сэмплов) короче окна анализа ({window})")
    peak = float(np.max(np.abs(mix)))
    if peak > 1.0:
        raise DatasetError(f"пьеса (пресет {preset.preset_id}) выходит за [-1, 1], пик {peak:.3f}; "
                           f"уменьшите полифонию или velocity")
    return Waveform(mix, sample_rate), truth_matrix(events, rows, n_frames, sample_rate, window, hop), rows


def default_piece(notes: Sequence[int]) -> List[NoteEvent]:
    """Короткая полифоническая пьеса: арпеджио, пары соседних нот, аккорд."""
    notes = list(notes)
    if not notes:
        raise DatasetError("пустой список нот для пьесы")
    events = [NoteEvent(p, VELOCITIES[i % len(VELOCITIES)], 0.5 * i, 1.0) for i, p in enumerate(notes)]

    t0 = 0.5 * len(notes) + 0.75
    for i in range(len(notes) - 1):
        velocity = VELOCITIES[(i + 2) % len(VELOCITIES)]
        events.append(NoteEvent(notes[i], velocity, t0 + 1.25 * i, 1.0))
        events.append(NoteEvent(notes[i + 1], velocity, t0 + 1.25 * i, 1.0))

    t1 = t0 + 1.25 * max(len(notes) - 1, 0) + 0.5
    chord = sorted({notes[0], notes[len(notes) // 2], notes[-1]})
    events.extend(NoteEvent(p, VELOCITIES[-2], t1, 1.5) for p in chord)
    return events


def default_presets(n_presets: int, seed: int) -> List[PresetParams]:
    """Набор пресетов с заметно разными B, наклоном и затуханием."""
    if n_presets < 2:
        raise DatasetError(f"нужно хотя бы 2 пресета, получено: {n_presets}")
    rng = np.random.default_rng(seed)
    presets = []
    for preset_id in range(n_presets):
        presets.append(PresetParams(
            preset_id=preset_id,
            inharmonicity=float(10.0 ** rng.uniform(-4.5, -3.0)),
            n_partials=int(rng.integers(12, 31)),
            spectral_tilt=float(rng.uniform(-9.0, -3.0)),
            decay_rate=float(rng.uniform(0.8, 3.0)),
            attack_ms=float(rng.uniform(2.0, 15.0)),
            noise_floor_db=float(rng.uniform(-70.0, -55.0)),
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return presets
