# Copyright (c) 2025 sprowii
import numpy as np
import pytest

from app.data import (
    NoteEvent,
    PresetParams,
    SplitSpec,
    build_split,
    check_split,
    default_piece,
    default_presets,
    default_splits,
    render_piece,
    synth_note,
)
import app.data.synth as synth
from app.data.manifest import dump_manifest, read_manifest, write_manifest
from app.data.synth import partial_frequencies
from app.dsp import Waveform, n_frames_for, stft_magnitude
from app.errors import DatasetError, MissingInputError, SplitError

PURE = PresetParams(preset_id=0, inharmonicity=0.0, n_partials=1, spectral_tilt=0.0,
                    noise_floor_db=-120.0, seed=5)


def test_inharmonic_partials():
    freqs = partial_frequencies(440.0, 4e-4, 10)
    assert freqs[0] == pytest.approx(440.0 * np.sqrt(1.0004))
    assert freqs[-1] == pytest.approx(4400.0 * np.sqrt(1.04))


def test_single_partial_peaks_at_fundamental():
    wave = synth_note(69, 96, PURE, duration_s=1.0)
    mag = stft_magnitude(wave)
    assert int(np.argmax(mag.mean(axis=1))) == 56


def test_velocity_raises_level():
    preset = default_presets(2, seed=0)[0]
    soft = synth_note(57, 32, preset, 0.5).samples
    hard = synth_note(57, 127, preset, 0.5).samples
    assert np.sqrt(np.mean(hard ** 2)) > np.sqrt(np.mean(soft ** 2))


def test_synthesis_is_deterministic():
    preset = default_presets(3, seed=9)[2]
    np.testing.assert_array_equal(synth_note(45, 64, preset, 0.3).samples, synth_note(45, 64, preset, 0.3).samples)


def test_invalid_note_arguments():
    with pytest.raises(ValueError):
        synth_note(20, 64, PURE)
    with pytest.raises(ValueError):
        synth_note(60, 0, PURE)


def test_piece_is_sum_of_notes():
    preset = default_presets(2, seed=1)[1]
    a = [NoteEvent(57, 64, 0.0, 1.0)]
    b = [NoteEvent(69, 96, 0.0, 1.0)]
    wave_a, _, _ = render_piece(a, preset, pitches=[57, 69])
    wave_b, _, _ = render_piece(b, preset, pitches=[57, 69])
    wave_ab, truth, rows = render_piece(a + b, preset)
    assert rows == [57, 69]
    np.testing.assert_allclose(wave_ab.samples, wave_a.samples + wave_b.samples, atol=1e-12)
    assert truth.shape == (2, n_frames_for(len(wave_ab.samples)))


def test_truth_marks_one_contiguous_run():
    _, truth, _ = render_piece([NoteEvent(57, 64, 0.5, 1.0)], PURE)
    active = np.flatnonzero(truth[0])
    assert truth.shape == (1, 43)
    assert active[0] == 14
    assert active[-1] == 42
    assert np.all(np.diff(active) == 1)


def test_empty_and_overlapping_pieces():
    with pytest.raises(DatasetError):
        render_piece([], PURE)
    with pytest.raises(DatasetError):
        render_piece([NoteEvent(57, 64, 0.0, 1.0), NoteEvent(57, 64, 0.5, 1.0)], PURE)


def test_piece_outside_unit_range_is_rejected(monkeypatch):
    def flat_note(pitch, velocity, preset, duration_s, sample_rate):
        return Waveform(np.full(int(round(duration_s * sample_rate)), 0.6), sample_rate)

    monkeypatch.setattr(synth, "synth_note", flat_note)
    chord = [NoteEvent(57, 64, 0.0, 1.0), NoteEvent(69, 64, 0.0, 1.0)]
    with pytest.raises(DatasetError) as err:
        render_piece(chord, PURE)
    assert "1.200" in str(err.value)

    # одна нота в пределах
    wave, _, _ = render_piece(chord[:1], PURE)
    assert np.max(np.abs(wave.samples)) == 0.6
    assert wave.validate() == []


def test_default_piece_is_polyphonic():
    events = default_piece([57, 69])
    wave, truth, rows = render_piece(events, PURE)
    assert rows == [57, 69]
    assert np.any(truth.sum(axis=0) == 2)
    assert all(e.validate() == [] for e in events)


def test_presets_differ():
    presets = default_presets(4, seed=0)
    assert len({p.inharmonicity for p in presets}) == 4
    assert all(p.validate() == [] for p in presets)
    with pytest.raises(DatasetError):
        default_presets(1, seed=0)


def test_default_splits_are_disjoint():
    splits = default_splits(8, 3, 2, [57])
    assert [s.test_presets for s in splits] == [(0, 1), (2, 3), (4, 5)]
    for s in splits:
        assert not set(s.train_presets) & set(s.test_presets)
        assert len(s.train_presets) == 6


def test_split_frames():
    presets = default_presets(3, seed=4)
    data = build_split(SplitSpec("s", (0, 1), (2,), (57,)), presets)
    assert data.train_frames[57].shape == (2 * 4 * 59, 512)
    assert data.test_frames[57].shape == (4 * 59, 512)
    assert data.train_frames[57].min() >= 0.0
    assert data.train_frames[57].max() == pytest.approx(1.0)


def test_overlapping_split():
    with pytest.raises(SplitError):
        check_split(SplitSpec("s", (0, 1), (1,), (57,)), default_presets(3, seed=0))


def test_unknown_preset_is_named():
    with pytest.raises(SplitError) as err:
        check_split(SplitSpec("s", (0, 1), (9,), (57,)), default_presets(3, seed=0))
    assert "9" in str(err.value)


def test_manifest_roundtrip(tmp_path):
    manifest = {"version": 1, "presets": [PURE.to_dict()], "splits": [], "notes": [57]}
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    assert read_manifest(path) == manifest
    assert path.read_text(encoding="utf-8") == dump_manifest(manifest)
    assert PresetParams.from_dict(read_manifest(path)["presets"][0]) == PURE


def test_manifest_errors(tmp_path):
    with pytest.raises(MissingInputError):
        read_manifest(tmp_path / "none.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(DatasetError):
        read_manifest(broken)
    partial = tmp_path / "partial.json"
    partial.write_text('{"version": 1}', encoding="utf-8")
    with pytest.raises(DatasetError):
        read_manifest(partial)
