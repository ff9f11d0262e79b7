# Copyright (c) 2025 sprowii
import numpy as np
import pytest
import soundfile as sf

from app.dsp import (
    NormMeta,
    Waveform,
    compute_norm_meta,
    hann_window,
    log_normalize,
    n_frames_for,
    read_wav,
    stft_magnitude,
    write_wav,
)
from app.errors import DatasetError, MalformedWavError, MissingInputError, ShapeError, UnsupportedCodecError


def _tone(freq: float, seconds: float = 1.0, rate: int = 16000, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def test_hann_window_is_periodic():
    w = hann_window(8)
    assert w[0] == 0.0
    assert w[4] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:4], w[7:4:-1])


def test_frame_count_for_two_second_note():
    assert n_frames_for(32000) == 59
    assert n_frames_for(2047) == 0
    assert n_frames_for(2048) == 1


def test_stft_peak_at_bin_center_frequency():
    mag = stft_magnitude(_tone(100 * 16000 / 2048))
    assert mag.shape == (1025, n_frames_for(16000))
    assert set(np.argmax(mag, axis=0).tolist()) == {100}


def test_stft_rejects_short_signal():
    with pytest.raises(ShapeError):
        stft_magnitude(np.zeros(100))


def test_log_normalize_range_and_reference():
    mag = stft_magnitude(_tone(440.0))
    spec = log_normalize(mag)
    assert spec.values.shape == (512, mag.shape[1])
    assert spec.values.min() >= 0.0
    assert spec.values.max() == pytest.approx(1.0)
    assert spec.validate() == []


def test_train_meta_applies_to_louder_test():
    quiet = stft_magnitude(_tone(440.0, amp=0.1))
    loud = stft_magnitude(_tone(440.0, amp=0.8))
    meta = compute_norm_meta([quiet])
    spec = log_normalize(loud, meta=meta)
    assert spec.norm_meta == meta
    # громче опорного уровня -> срез в 1
    assert spec.values.max() == 1.0


def test_floor_maps_to_zero():
    mag = np.zeros((600, 3))
    mag[0, 0] = 1.0
    spec = log_normalize(mag, meta=NormMeta(1.0))
    assert spec.values[0, 0] == 1.0
    assert spec.values[1, 1] == 0.0


def test_silent_corpus_has_no_reference():
    with pytest.raises(DatasetError):
        compute_norm_meta([np.zeros((1025, 4))])


def test_wav_roundtrip(tmp_path):
    wave = Waveform(_tone(220.0, 0.25))
    path = tmp_path / "a" / "tone.wav"
    write_wav(path, wave)
    back = read_wav(path)
    assert back.sample_rate == 16000
    np.testing.assert_allclose(back.samples, wave.samples, atol=1e-7)


def test_wav_is_resampled_to_16k(tmp_path):
    path = tmp_path / "cd.wav"
    sf.write(str(path), _tone(440.0, 1.0, rate=44100), 44100, subtype="PCM_16")
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert len(back.samples) == 16000


def test_stereo_is_mixed_down(tmp_path):
    path = tmp_path / "stereo.wav"
    left = _tone(440.0, 0.2)
    sf.write(str(path), np.column_stack([left, np.zeros_like(left)]), 16000, subtype="FLOAT")
    np.testing.assert_allclose(read_wav(path).samples, left / 2, atol=1e-7)


def test_unsupported_sample_format(tmp_path):
    path = tmp_path / "deep.wav"
    sf.write(str(path), _tone(440.0, 0.2), 16000, subtype="PCM_24")
    with pytest.raises(UnsupportedCodecError):
        read_wav(path)


def test_unsupported_container(tmp_path):
    path = tmp_path / "tone.flac"
    sf.write(str(path), _tone(440.0, 0.2), 16000, format="FLAC")
    with pytest.raises(UnsupportedCodecError):
        read_wav(path)


def test_malformed_header(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"RIFF\x00\x00\x00\x00JUNKJUNK")
    with pytest.raises(MalformedWavError):
        read_wav(path)


def test_missing_file(tmp_path):
    with pytest.raises(MissingInputError):
        read_wav(tmp_path / "nope.wav")
