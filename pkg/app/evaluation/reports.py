# Copyright (c) 2025 sprowii
"""CSV-отчёты eval.

Данные для графиков пишутся в длинном формате `x,y,series` и читаются
любым инструментом построения графиков.
"""
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from app.evaluation.metrics import ConfusionMatrix, F1Report, outcome_map
from app.storage.matrix_store import write_table

PathLike = Union[str, os.PathLike]

F1_COLUMNS = ["method", "piece", "split", "threshold", "precision", "recall", "f1", "tp", "fp", "fn"]
RECONSTRUCTION_COLUMNS = ["split", "note", "method", "error", "frames"]
TRADEOFF_COLUMNS = ["split", "note", "series", "reconstruction_error", "loglik_per_dim"]
PLOT_COLUMNS = ["x", "y", "series"]


def write_confusion(path: PathLike, cm: ConfusionMatrix) -> None:
    header = ["model"] + [str(label) for label in cm.labels]
    write_table(path, header, [[label] + row for label, row in zip(cm.labels, cm.values.tolist())])


def write_f1_summary(path: PathLike, rows: Iterable[Tuple[str, str, str, F1Report]]) -> None:
    """Строки (method, piece, split, отчёт)."""
    table = []
    for method, piece, split, report in rows:
        r = report.to_dict()
        table.append([method, piece, split] + [r[c] for c in F1_COLUMNS[3:]])
    write_table(path, F1_COLUMNS, table)


def write_records(path: PathLike, columns: Sequence[str], records: Iterable[Dict[str, Any]]) -> None:
    write_table(path, columns, [[rec[c] for c in columns] for rec in records])


def write_plot_data(path: PathLike, points: Iterable[Tuple[float, float, str]]) -> None:
    write_table(path, PLOT_COLUMNS, [list(p) for p in points])


def write_activation_map(path: PathLike, H_grouped: np.ndarray, truth: np.ndarray,
                         pitches: Sequence[int], threshold: float) -> None:
    """Длинный формат: pitch, frame, activation, truth, outcome."""
    outcomes = outcome_map(H_grouped, truth, threshold)
    truth = np.asarray(truth).astype(int)
    rows: List[List[Any]] = []
    for k, pitch in enumerate(pitches):
        for t in range(H_grouped.shape[1]):
            rows.append([int(pitch), t, float(H_grouped[k, t]), int(truth[k, t]), outcomes[k, t]])
    write_table(path, ["pitch", "frame", "activation", "truth", "outcome"], rows)


def report_files(reports_dir: PathLike) -> Dict[str, Path]:
    """Имена файлов отчёта относительно каталога reports/."""
    root = Path(reports_dir)
    return {
        "reconstruction": root / "reconstruction_errors.csv",
        "reconstruction_plot": root / "plot_reconstruction.csv",
        "tradeoff": root / "likelihood_tradeoff.csv",
        "tradeoff_plot": root / "plot_likelihood_tradeoff.csv",
        "f1": root / "f1_summary.csv",
    }
