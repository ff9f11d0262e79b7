# Copyright (c) 2025 sprowii
"""Команды конвейера: synth, train, decompose, eval."""
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.cli.run_config import RunConfig
from app.cli.workspace import METHODS, PIECES, Workspace, is_non_empty_dir
from app.config import SAMPLE_RATE
from app.data.manifest import MANIFEST_VERSION, read_manifest, splits_of, write_manifest
from app.data.models import SplitSpec
from app.data.splits import check_split, split_from_waves
from app.data.synth import default_piece, default_presets, render_piece, synth_note
from app.decomposition.dds import components, dds_decompose
from app.decomposition.nmf import FixedDictionary, group_by_source, mean_dictionary, nmf_decompose
from app.dsp.audio import Waveform, read_wav, write_wav
from app.dsp.spectrogram import NormMeta, log_normalize, stft_magnitude
from app.errors import ConfigError, DatasetError, MissingInputError
from app.evaluation.metrics import (
    calibrate_threshold,
    confusion_matrix,
    frame_f1,
    likelihood_tradeoff,
    reconstruction_error,
)
from app.evaluation.reports import (
    RECONSTRUCTION_COLUMNS,
    TRADEOFF_COLUMNS,
    report_files,
    write_activation_map,
    write_confusion,
    write_f1_summary,
    write_plot_data,
    write_records,
)
from app.flow.models import FlowModel
from app.flow.storage import load_model, save_model
from app.flow.training import train_flow
from app.logging_config import log
from app.storage.matrix_store import read_labeled_matrix, read_matrix, write_labeled_matrix, write_matrix, write_table

LOSS_COLUMNS = ["frame", "loss", "residual", "failed"]
HISTORY_COLUMNS = ["epoch", "train_nll", "val_loglik", "val_loglik_per_dim"]


def _parallel(fn, items: Sequence[Any], threads: int) -> List[Any]:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _dataset(ws: Workspace) -> Tuple[Dict[str, Any], List[SplitSpec], List[int]]:
    manifest = read_manifest(ws.manifest)
    return manifest, splits_of(manifest), sorted(int(p) for p in manifest["notes"])


# ============================================================================
# SYNTH
# ============================================================================

def cmd_synth(run: RunConfig, ws: Workspace, force: bool = False) -> Path:
    """Пресеты, WAV нот и пьес, разметка, кадры признаков, манифест.

    Raises:
        DatasetError: каталог датасета не пуст и нет --force
        SplitError: в сплите неизвестный пресет или пересечение train/test
    """
    run.ensure_valid()
    if is_non_empty_dir(ws.dataset):
        if not force:
            raise DatasetError(f"{ws.dataset} уже существует и не пуст (используйте --force)")
        log.warning(f"synth: --force, удаляю {ws.dataset}")
        shutil.rmtree(ws.dataset)

    data_seed, _ = run.seeds()
    presets = default_presets(run.n_presets, data_seed)
    by_id = {p.preset_id: p for p in presets}
    specs = run.split_specs()
    for spec in specs:
        check_split(spec, presets)
    notes = sorted(run.notes)

    used = sorted({pid for s in specs for pid in s.train_presets + s.test_presets})
    for preset_id in used:
        for pitch in notes:
            for velocity in run.velocities:
                write_wav(ws.note_audio(preset_id, pitch, velocity),
                          synth_note(pitch, velocity, by_id[preset_id], run.note_duration_s, SAMPLE_RATE))
    log.info(f"synth: {len(used) * len(notes) * len(run.velocities)} нот записано в {ws.dataset / 'audio'}")

    cache: Dict[Tuple[int, int, int], Waveform] = {}

    def load(preset_id: int, pitch: int, velocity: int) -> Waveform:
        key = (preset_id, pitch, velocity)
        if key not in cache:
            cache[key] = read_wav(ws.note_audio(*key), SAMPLE_RATE)
        return cache[key]

    def waves(preset_ids: Sequence[int]) -> Dict[int, List[Waveform]]:
        return {p: [load(pid, p, v) for pid in preset_ids for v in run.velocities] for p in notes}

    events = default_piece(notes)
    split_entries = []
    for spec in specs:
        data = split_from_waves(spec, waves(spec.train_presets), waves(spec.test_presets),
                                run.keep_bins, run.floor_db)
        features = {}
        for pitch in notes:
            for part, frames in (("train", data.train_frames[pitch]), ("test", data.test_frames[pitch])):
                path = ws.note_features(spec.name, pitch, part)
                write_matrix(path, frames.T, data.norm_meta)
                features[f"{pitch}_{part}"] = {"path": ws.relative(path), "n_frames": int(len(frames))}

        pieces = {}
        for piece, preset_id in (("train", spec.train_presets[0]), ("test", spec.test_presets[0])):
            pieces[piece] = _render_piece(ws, spec.name, piece, events, by_id[preset_id], notes, data.norm_meta)
        split_entries.append({**spec.to_dict(), "features": features, "pieces": pieces})

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": run.seed,
        "data_seed": data_seed,
        "sample_rate": SAMPLE_RATE,
        "note_duration_s": run.note_duration_s,
        "velocities": list(run.velocities),
        "notes": notes,
        "presets": [by_id[pid].to_dict() for pid in sorted(by_id)],
        "splits": split_entries,
        "piece": {"events": [e.to_dict() for e in events]},
    }
    write_manifest(ws.manifest, manifest)
    run.echo(ws.dataset)
    log.info(f"synth: датасет готов, сплитов {len(specs)}, нот {len(notes)}: {ws.manifest}")
    return ws.manifest


def _render_piece(ws: Workspace, split: str, piece: str, events, preset, notes: List[int],
                  meta: NormMeta) -> Dict[str, Any]:
    wave, truth, rows = render_piece(events, preset, pitches=notes)
    audio = ws.piece_audio(split, piece)
    write_wav(audio, wave)
    spectrogram = log_normalize(stft_magnitude(read_wav(audio, SAMPLE_RATE)), meta.keep_bins, meta.floor_db, meta)
    if spectrogram.n_frames != truth.shape[1]:
        raise DatasetError(f"{split}/{piece}: кадров {spectrogram.n_frames}, в разметке {truth.shape[1]}")
    write_matrix(ws.piece_features(split, piece), spectrogram.values, meta)
    write_labeled_matrix(ws.truth(split, piece), truth, rows)
    return {
        "preset": preset.preset_id,
        "audio": ws.relative(audio),
        "truth": ws.relative(ws.truth(split, piece)),
        "features": ws.relative(ws.piece_features(split, piece)),
        "n_frames": int(truth.shape[1]),
    }


# ============================================================================
# TRAIN
# ============================================================================

def cmd_train(run: RunConfig, ws: Workspace, retrain: bool = False) -> List[Path]:
    """По NoteFlow на каждую (сплит, нота); уже обученные пропускаются без --retrain."""
    run.ensure_valid()
    _, specs, notes = _dataset(ws)
    jobs = [(i, spec, pitch) for i, spec in enumerate(specs) for pitch in notes]
    missing = ws.missing([ws.note_features(spec.name, pitch, "train") for _, spec, pitch in jobs])
    if missing:
        raise MissingInputError(missing)

    def train_one(job) -> Optional[Path]:
        split_index, spec, pitch = job
        path = ws.model(spec.name, pitch)
        if path.exists() and not retrain:
            log.info(f"train: {ws.relative(path)} уже есть, пропускаю")
            return None
        values, _ = read_matrix(ws.note_features(spec.name, pitch, "train"))
        result = train_flow(values.T, run.train_config(seed=run.model_seed_for(split_index, pitch)),
                            source_label=str(pitch))
        save_model(result.model, path)
        dim = result.model.dim
        write_table(ws.history(spec.name, pitch), HISTORY_COLUMNS,
                    [[epoch, nll, ll, ll / dim]
                     for epoch, (nll, ll) in enumerate(zip(result.train_nll, result.history), start=1)])
        return path

    trained = [p for p in _parallel(train_one, jobs, run.threads) if p is not None]
    run.echo(ws.models)
    log.info(f"train: обучено моделей {len(trained)}, всего {len(jobs)}")
    return [ws.model(spec.name, pitch) for _, spec, pitch in jobs]


# ============================================================================
# DECOMPOSE
# ============================================================================

@dataclass
class Decomposition:
    activations: np.ndarray  # (K, T) по источникам
    reconstruction: np.ndarray  # (D, T)
    loss: np.ndarray
    residual: np.ndarray
    failed: np.ndarray
    components: Optional[np.ndarray] = None  # (D, K, T), только DDS


def decompose(method: str, S: np.ndarray, train_frames: Dict[int, np.ndarray], flows: Sequence[FlowModel],
              run: RunConfig, label: str) -> Decomposition:
    if method == "dds":
        result = dds_decompose(S, flows, run.schedule(), c=run.c, h_init=run.h_init,
                               chunk=run.frame_chunk, threads=run.threads, label=label)
        return Decomposition(result.H, result.reconstruction, result.loss, result.residual, result.failed,
                             components(result.state, flows))
    if method in ("nmf", "mean"):
        dictionary = (FixedDictionary.from_frames(train_frames) if method == "nmf"
                      else mean_dictionary(train_frames))
        result = nmf_decompose(S, dictionary, run.schedule(lr=run.nmf_lr),
                               chunk=run.frame_chunk, threads=run.threads, label=label)
        return Decomposition(group_by_source(result.H, dictionary), result.reconstruction,
                             result.loss, result.residual, result.failed)
    raise ConfigError(f"неизвестный метод декомпозиции: {method} (ожидался один из {', '.join(METHODS)})")


def _write_loss(path: Path, result: Decomposition) -> None:
    write_table(path, LOSS_COLUMNS, [[t, float(result.loss[t]), float(result.residual[t]), bool(result.failed[t])]
                                     for t in range(len(result.loss))])


def cmd_decompose(run: RunConfig, ws: Workspace, method: str) -> Path:
    """Кадры тестовых нот (по словарю своей ноты) и обе пьесы (по всем нотам).

    Для nmf и mean словарь строится из обучающих кадров, для dds нужны
    обученные NoteFlow. Активации пишутся сгруппированными по нотам (K×T)
    в одинаковой раскладке для всех методов.
    """
    if method not in METHODS:
        raise ConfigError(f"неизвестный метод декомпозиции: {method} (ожидался один из {', '.join(METHODS)})")
    run.ensure_valid()
    _, specs, notes = _dataset(ws)
    required = []
    for spec in specs:
        for pitch in notes:
            required += [ws.note_features(spec.name, pitch, "train"), ws.note_features(spec.name, pitch, "test")]
            if method == "dds":
                required.append(ws.model(spec.name, pitch))
        required += [ws.piece_features(spec.name, piece) for piece in PIECES]
    missing = ws.missing(required)
    if missing:
        raise MissingInputError(missing)

    for spec in specs:
        train = {p: read_matrix(ws.note_features(spec.name, p, "train"))[0].T for p in notes}
        flows = [load_model(ws.model(spec.name, p)) for p in notes] if method == "dds" else []
        errors = []
        for k, pitch in enumerate(notes):
            S, meta = read_matrix(ws.note_features(spec.name, pitch, "test"))
            result = decompose(method, S, {pitch: train[pitch]}, flows[k:k + 1], run,
                               label=f"{method} {spec.name} нота {pitch}")
            write_matrix(ws.note_reconstruction(method, spec.name, pitch), result.reconstruction, meta)
            _write_loss(ws.note_loss(method, spec.name, pitch), result)
            if result.components is not None:
                write_matrix(ws.note_components(spec.name, pitch), result.components[:, 0, :], meta)
            errors.append(float(np.mean(result.residual)) if len(result.residual) else 0.0)
        log.info(f"decompose {method} {spec.name}: средняя невязка по нотам "
                 + ", ".join(f"{p}={e:.4g}" for p, e in zip(notes, errors)))

        for piece in PIECES:
            S, meta = read_matrix(ws.piece_features(spec.name, piece))
            result = decompose(method, S, train, flows, run, label=f"{method} {spec.name} пьеса {piece}")
            write_labeled_matrix(ws.piece_activations(method, spec.name, piece), result.activations, notes)
            write_matrix(ws.piece_reconstruction(method, spec.name, piece), result.reconstruction, meta)
            _write_loss(ws.piece_loss(method, spec.name, piece), result)

    run.echo(ws.decompositions(method))
    return ws.decompositions(method)


# ============================================================================
# EVAL
# ============================================================================

def _eval_inputs(ws: Workspace, specs: Sequence[SplitSpec], notes: Sequence[int], methods: Sequence[str]) -> List[Path]:
    paths = []
    for spec in specs:
        for pitch in notes:
            paths += [ws.note_features(spec.name, pitch, "train"), ws.note_features(spec.name, pitch, "test"),
                      ws.model(spec.name, pitch), ws.note_components(spec.name, pitch)]
            paths += [ws.note_reconstruction(m, spec.name, pitch) for m in methods]
        for piece in PIECES:
            paths += [ws.piece_features(spec.name, piece), ws.truth(spec.name, piece)]
            paths += [ws.piece_activations(m, spec.name, piece) for m in methods]
    return paths


def _activations(path: Path, notes: Sequence[int]) -> np.ndarray:
    labels, values = read_labeled_matrix(path)
    if [int(v) for v in labels] != list(notes):
        raise DatasetError(f"{path}: строки {labels}, ожидались ноты {list(notes)}")
    return values


def cmd_eval(run: RunConfig, ws: Workspace) -> Dict[str, Path]:
    """Отчёты: ошибки реконструкции, правдоподобие компонент, матрицы различимости, F1.

    Raises:
        MissingInputError: нет результатов декомпозиции или моделей (перечисляются все)
    """
    run.ensure_valid()
    _, specs, notes = _dataset(ws)
    methods = ["nmf", "dds"]
    missing = ws.missing(_eval_inputs(ws, specs, notes, methods))
    if missing:
        raise MissingInputError(missing)
    if not ws.missing(_eval_inputs(ws, specs, notes, ["mean"])):
        methods.append("mean")

    files = report_files(ws.reports)
    reconstruction_rows, tradeoff_rows, f1_rows = [], [], []
    error_points, tradeoff_points = [], []
    for spec in specs:
        flows = [load_model(ws.model(spec.name, p)) for p in notes]
        train_sets, test_sets = [], []
        for flow, pitch in zip(flows, notes):
            S_train, _ = read_matrix(ws.note_features(spec.name, pitch, "train"))
            S_test, _ = read_matrix(ws.note_features(spec.name, pitch, "test"))
            train_sets.append(S_train.T)
            test_sets.append(S_test.T)

            errors = {}
            for method in methods:
                recon, _ = read_matrix(ws.note_reconstruction(method, spec.name, pitch))
                errors[method] = reconstruction_error(S_test, recon)
                reconstruction_rows.append({"split": spec.name, "note": pitch, "method": method,
                                            "error": errors[method], "frames": S_test.shape[1]})
            error_points.append((errors["nmf"], errors["dds"], spec.name))

            comps, _ = read_matrix(ws.note_components(spec.name, pitch))
            data_ll, dds_ll = likelihood_tradeoff(flow, S_test.T, comps.T)
            for series, err, ll in (("data", 0.0, data_ll), ("dds", errors["dds"], dds_ll)):
                tradeoff_rows.append({"split": spec.name, "note": pitch, "series": series,
                                      "reconstruction_error": err, "loglik_per_dim": ll})
                tradeoff_points.append((err, ll, series))

        for frames, sets in (("test", test_sets), ("train", train_sets)):
            cm = confusion_matrix(flows, sets, labels=notes)
            write_confusion(ws.confusion(spec.name, frames), cm)
            log.info(f"eval {spec.name}: различимость на {frames}-кадрах, "
                     f"максимум вне диагонали {cm.max_off_diagonal:.4f}")

        truth = {piece: _activations(ws.truth(spec.name, piece), notes).astype(np.int64) for piece in PIECES}
        for method in methods:
            H = {piece: _activations(ws.piece_activations(method, spec.name, piece), notes) for piece in PIECES}
            calibrated = calibrate_threshold(H["train"], truth["train"])
            held = frame_f1(H["test"], truth["test"], calibrated.threshold)
            f1_rows += [(method, "train", spec.name, calibrated), (method, "test", spec.name, held)]
            for piece in PIECES:
                write_activation_map(ws.activation_map(spec.name, method, piece), H[piece], truth[piece],
                                     notes, calibrated.threshold)
            log.info(f"eval {spec.name} {method}: порог {calibrated.threshold:.4g}, F1 train {calibrated.f1:.3f}, "
                     f"F1 test {held.f1:.3f} (P={held.precision:.3f}, R={held.recall:.3f})")

    write_records(files["reconstruction"], RECONSTRUCTION_COLUMNS, reconstruction_rows)
    write_plot_data(files["reconstruction_plot"], error_points)
    write_records(files["tradeoff"], TRADEOFF_COLUMNS, tradeoff_rows)
    write_plot_data(files["tradeoff_plot"], tradeoff_points)
    write_f1_summary(files["f1"], f1_rows)
    run.echo(ws.reports)
    log.info(f"eval: отчёты записаны в {ws.reports}")
    return files
