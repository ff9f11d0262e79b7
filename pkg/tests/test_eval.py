# Copyright (c) 2025 sprowii
from dataclasses import replace

import numpy as np
import pytest

from app.config import FOUR_NOTES, N_PRESETS, N_SPLITS, NMF_LR, TEST_PRESETS_PER_SPLIT
from app.data import build_split, default_piece, default_presets, default_splits, render_piece
from app.decomposition import FixedDictionary, SolverSchedule, dds_decompose, group_by_source, nmf_decompose
from app.dsp.spectrogram import log_normalize, stft_magnitude
from app.errors import DatasetError, ShapeError
from app.evaluation import (
    calibrate_threshold,
    confusion_matrix,
    frame_f1,
    likelihood_tradeoff,
    one_sided_discriminativeness,
    outcome_map,
    reconstruction_error,
)
from app.evaluation.metrics import d_os_from_loglik, frame_errors, threshold_candidates
from app.evaluation.reports import write_activation_map, write_confusion, write_f1_summary
from app.flow import FlowModel, TrainConfig, log_prior, train_flow
from app.storage.matrix_store import read_table
from tests.conftest import perturbed_flow


# ============================================================================
# реконструкция
# ============================================================================

def test_reconstruction_error_is_mean_frame_norm():
    assert reconstruction_error([[3.0], [4.0]], np.zeros((2, 1))) == 5.0
    assert reconstruction_error([[1.0, 3.0], [0.0, 0.0]], np.zeros((2, 2))) == 2.0
    np.testing.assert_array_equal(frame_errors([[1.0, 3.0]], [[1.0, 1.0]]), [0.0, 2.0])


def test_reconstruction_error_shapes():
    with pytest.raises(ShapeError):
        reconstruction_error(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        reconstruction_error(np.zeros((2, 0)), np.zeros((2, 0)))


def test_likelihood_tradeoff_per_dimension(rng):
    model = FlowModel.create(4, n_coupling=2, hidden_width=4, n_hidden=1)
    frames = rng.normal(size=(6, 4))
    comps = rng.normal(size=(3, 4))
    data_ll, dds_ll = likelihood_tradeoff(model, frames, comps)
    assert data_ll == pytest.approx(np.mean(log_prior(frames)) / 4)
    assert dds_ll == pytest.approx(np.mean(log_prior(comps)) / 4)
    with pytest.raises(DatasetError):
        likelihood_tradeoff(model, frames, np.zeros((0, 4)))


# ============================================================================
# различимость
# ============================================================================

def test_one_sided_discriminativeness_example():
    assert d_os_from_loglik([-1.0, -0.5, -0.1], [-0.5, -3.0]) == pytest.approx(1 / 3)
    assert d_os_from_loglik([-1.0, -0.5], [-10.0]) == 0.0


def test_discriminativeness_is_invariant_to_monotone_maps(rng):
    own, other = rng.normal(size=20), rng.normal(size=15)
    assert d_os_from_loglik(np.exp(own), np.exp(other)) == d_os_from_loglik(own, other)


def test_discriminativeness_edge_cases(rng):
    model = perturbed_flow(3)
    frames = rng.uniform(size=(5, 3))
    assert one_sided_discriminativeness(model, frames, frames, same_source=True) == 1.0
    with pytest.raises(DatasetError):
        d_os_from_loglik([], [1.0])
    with pytest.raises(DatasetError):
        one_sided_discriminativeness(model, frames, np.zeros((0, 3)))


def test_confusion_matrix(rng):
    flows = [perturbed_flow(3, seed=k, label=str(k)) for k in range(3)]
    sets = [rng.uniform(size=(10, 3)) + k for k in range(3)]
    cm = confusion_matrix(flows, sets)
    assert cm.labels == ("0", "1", "2")
    assert cm.validate() == []
    np.testing.assert_array_equal(np.diag(cm.values), np.ones(3))
    assert 0.0 <= cm.max_off_diagonal <= 1.0


def test_single_source_confusion(rng):
    cm = confusion_matrix([perturbed_flow(2)], [rng.uniform(size=(4, 2))], labels=[57])
    np.testing.assert_array_equal(cm.values, [[1.0]])
    assert cm.max_off_diagonal == 0.0


def test_confusion_needs_one_set_per_flow(rng):
    with pytest.raises(ShapeError):
        confusion_matrix([perturbed_flow(2)], [])


# ============================================================================
# F1
# ============================================================================

def test_frame_f1_example():
    report = frame_f1([[0.9, 0.6], [0.1, 0.8]], [[1, 0], [0, 1]], 0.5)
    assert (report.tp, report.fp, report.fn) == (2, 1, 0)
    assert report.precision == pytest.approx(2 / 3)
    assert report.recall == 1.0
    assert report.f1 == pytest.approx(0.8)


def test_empty_prediction_scores_zero():
    report = frame_f1([[0.1, 0.2]], [[1, 0]], 5.0)
    assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)


def test_perfect_activations_calibrate_to_one():
    truth = np.array([[1, 0, 1], [0, 1, 0]])
    report = calibrate_threshold(truth.astype(float), truth)
    assert report.f1 == 1.0
    assert 0.0 < report.threshold <= 1.0


def test_calibration_is_optimal(rng):
    H = rng.uniform(size=(3, 12))
    truth = rng.uniform(size=(3, 12)) < 0.4
    best = calibrate_threshold(H, truth)
    scores = [frame_f1(H, truth, c).f1 for c in threshold_candidates(H)]
    assert best.f1 == pytest.approx(max(scores))
    assert best.f1 == frame_f1(H, truth, best.threshold).f1


def test_calibration_tie_takes_larger_threshold():
    report = calibrate_threshold([[0.2, 0.8]], [[0, 0]])
    assert report.f1 == 0.0
    assert report.threshold == pytest.approx(1.8)


def test_f1_ignores_row_order(rng):
    H = rng.uniform(size=(4, 6))
    truth = rng.uniform(size=(4, 6)) < 0.5
    order = [2, 0, 3, 1]
    assert frame_f1(H[order], truth[order], 0.5) == frame_f1(H, truth, 0.5)


def test_outcome_map():
    out = outcome_map([[0.9, 0.6], [0.1, 0.8]], [[1, 0], [1, 1]], 0.5)
    assert out.tolist() == [["TP", "FP"], ["FN", "TP"]]


def test_f1_shape_mismatch():
    with pytest.raises(ShapeError):
        frame_f1(np.zeros((2, 3)), np.zeros((2, 2)), 0.5)


# ============================================================================
# отчёты
# ============================================================================

def test_reports(tmp_path, rng):
    cm = confusion_matrix([perturbed_flow(2, seed=1), perturbed_flow(2, seed=2)],
                          [rng.uniform(size=(4, 2)), rng.uniform(size=(4, 2))], labels=[57, 69])
    write_confusion(tmp_path / "cm.csv", cm)
    rows = read_table(tmp_path / "cm.csv")
    assert [r["model"] for r in rows] == ["57", "69"]
    assert rows[0]["57"] == "1.0"

    H = np.array([[0.9, 0.1, 0.7]])
    truth = np.array([[1, 0, 0]])
    write_activation_map(tmp_path / "map.csv", H, truth, [57], 0.5)
    assert [r["outcome"] for r in read_table(tmp_path / "map.csv")] == ["TP", "TN", "FP"]

    write_f1_summary(tmp_path / "f1.csv", [("dds", "test", "split0", frame_f1(H, truth, 0.5))])
    (row,) = read_table(tmp_path / "f1.csv")
    assert row["method"] == "dds"
    assert float(row["f1"]) == pytest.approx(2 / 3)


# ============================================================================
# эксперимент на синтетических сплитах
# ============================================================================

EXPERIMENT_KEEP_BINS = 128
EXPERIMENT_VELOCITIES = (64, 127)
EXPERIMENT_FLOW = TrainConfig(lr=1e-3, max_epochs=150, batch_size=128, patience=20,
                              n_coupling=6, hidden_width=32, n_hidden=2)
EXPERIMENT_SCHEDULE = SolverSchedule(max_steps=2000)


def _piece_spectrogram(events, preset, notes, meta):
    wave, truth, _ = render_piece(events, preset, pitches=notes)
    S = log_normalize(stft_magnitude(wave), meta.keep_bins, meta.floor_db, meta)
    return S.values, truth


def _piece_activations(S, train_frames, flows):
    dictionary = FixedDictionary.from_frames(train_frames)
    nmf = nmf_decompose(S, dictionary, SolverSchedule(max_steps=EXPERIMENT_SCHEDULE.max_steps, lr=NMF_LR))
    dds = dds_decompose(S, flows, EXPERIMENT_SCHEDULE)
    return {"nmf": group_by_source(nmf.H, dictionary), "dds": dds.H}


@pytest.mark.slow
def test_dds_beats_nmf_under_preset_shift():
    notes = list(FOUR_NOTES)
    presets = default_presets(N_PRESETS, seed=0)
    by_id = {p.preset_id: p for p in presets}
    events = default_piece(notes)
    splits = default_splits(N_PRESETS, N_SPLITS, TEST_PRESETS_PER_SPLIT, notes)
    assert len(splits) >= 3

    dds_wins = 0
    held_out = {"nmf": [], "dds": []}
    for i, spec in enumerate(splits):
        data = build_split(spec, presets, EXPERIMENT_VELOCITIES, duration_s=1.0, keep_bins=EXPERIMENT_KEEP_BINS)
        flows = [train_flow(data.train_frames[p], replace(EXPERIMENT_FLOW, seed=10 * i + k), str(p)).model
                 for k, p in enumerate(notes)]

        errors = {"nmf": [], "dds": []}
        for k, pitch in enumerate(notes):
            S = data.test_frames[pitch].T
            dictionary = FixedDictionary.from_frames({pitch: data.train_frames[pitch]})
            nmf = nmf_decompose(S, dictionary, SolverSchedule(max_steps=EXPERIMENT_SCHEDULE.max_steps, lr=NMF_LR))
            dds = dds_decompose(S, flows[k:k + 1], EXPERIMENT_SCHEDULE)
            errors["nmf"].append(reconstruction_error(S, nmf.reconstruction))
            errors["dds"].append(reconstruction_error(S, dds.reconstruction))
        if np.mean(errors["dds"]) < np.mean(errors["nmf"]):
            dds_wins += 1

        cm = confusion_matrix(flows, [data.train_frames[p] for p in notes], labels=notes)
        assert cm.validate() == []
        np.testing.assert_array_equal(np.diag(cm.values), np.ones(len(notes)))
        assert cm.max_off_diagonal < 0.05

        S_train, truth_train = _piece_spectrogram(events, by_id[spec.train_presets[0]], notes, data.norm_meta)
        S_test, truth_test = _piece_spectrogram(events, by_id[spec.test_presets[0]], notes, data.norm_meta)
        H_train = _piece_activations(S_train, data.train_frames, flows)
        H_test = _piece_activations(S_test, data.train_frames, flows)
        for method in held_out:
            calibrated = calibrate_threshold(H_train[method], truth_train)
            held_out[method].append(frame_f1(H_test[method], truth_test, calibrated.threshold))

    assert dds_wins >= 3
    f1 = {m: np.mean([r.f1 for r in reports]) for m, reports in held_out.items()}
    recall = {m: np.mean([r.recall for r in reports]) for m, reports in held_out.items()}
    assert f1["dds"] > f1["nmf"]
    assert recall["dds"] > recall["nmf"]
