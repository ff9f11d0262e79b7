# Copyright (c) 2025 sprowii
"""Хранение матриц: бинарный формат DDSS и CSV.

DDSS (little-endian):
- magic "DDSS", u32 D, u32 T
- D×T значений f64 построчно
- u8 has_meta; если 1: f64 reference, f64 floor_db, u32 keep_bins

CSV-матрицы: заголовок `<label>,0,1,...,T-1`, по строке на источник.
Вещественные числа пишутся кратчайшим точным представлением (repr),
так что чтение восстанавливает значения побитно.
"""
import csv
import os
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.dsp.spectrogram import NormMeta
from app.errors import MatrixFormatError, MissingInputError

MAGIC = b"DDSS"
_DIMS = struct.Struct("<II")
_META = struct.Struct("<ddI")

PathLike = Union[str, os.PathLike]


# ============================================================================
# DDSS
# ============================================================================

def matrix_to_bytes(values: np.ndarray, meta: Optional[NormMeta] = None) -> bytes:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise MatrixFormatError(f"ожидалась матрица, форма {values.shape}")
    parts = [MAGIC, _DIMS.pack(*values.shape), np.ascontiguousarray(values, dtype="<f8").tobytes()]
    if meta is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(_META.pack(meta.reference, meta.floor_db, meta.keep_bins))
    return b"".join(parts)


def matrix_from_bytes(blob: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, Optional[NormMeta]]:
    header = len(MAGIC) + _DIMS.size
    if len(blob) < header or blob[:len(MAGIC)] != MAGIC:
        raise MatrixFormatError(f"{source}: не файл DDSS")
    rows, cols = _DIMS.unpack_from(blob, len(MAGIC))
    data_end = header + 8 * rows * cols
    if len(blob) < data_end + 1:
        raise MatrixFormatError(f"{source}: файл обрезан ({len(blob)} байт, D={rows}, T={cols})")
    values = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=header).reshape(rows, cols).astype(np.float64)
    flag = blob[data_end]
    meta = None
    if flag == 1:
        if len(blob) != data_end + 1 + _META.size:
            raise MatrixFormatError(f"{source}: некорректный блок norm_meta")
        reference, floor_db, keep_bins = _META.unpack_from(blob, data_end + 1)
        meta = NormMeta(reference, floor_db, keep_bins)
    elif flag != 0 or len(blob) != data_end + 1:
        raise MatrixFormatError(f"{source}: некорректный хвост файла")
    return values, meta


def write_matrix(path: PathLike, values: np.ndarray, meta: Optional[NormMeta] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(matrix_to_bytes(values, meta))


def read_matrix(path: PathLike) -> Tuple[np.ndarray, Optional[NormMeta]]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError([path])
    return matrix_from_bytes(path.read_bytes(), str(path))


# ============================================================================
# CSV
# ============================================================================

def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise MatrixFormatError(f"{path}: строка из {len(row)} полей при заголовке из {len(header)}")
            writer.writerow([format_value(v) for v in row])


def read_table(path: PathLike) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError([path])
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_labeled_matrix(path: PathLike, matrix: np.ndarray, labels: Sequence[Any], label_name: str = "pitch") -> None:
    """Матрица (K, T) с меткой строки в первом столбце."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != len(labels):
        raise MatrixFormatError(f"{len(labels)} меток для матрицы формы {matrix.shape}")
    header = [label_name] + [str(t) for t in range(matrix.shape[1])]
    write_table(path, header, [[label] + list(row) for label, row in zip(labels, matrix.tolist())])


def read_labeled_matrix(path: PathLike, dtype=np.float64) -> Tuple[List[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError([path])
    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise MatrixFormatError(f"{path}: пустой файл")
    width = len(rows[0]) - 1
    labels, values = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise MatrixFormatError(f"{path}:{line_no}: {len(row) - 1} значений, ожидалось {width}")
        labels.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise MatrixFormatError(f"{path}:{line_no}: {exc}") from exc
    return labels, np.asarray(values, dtype=np.float64).reshape(len(labels), width).astype(dtype)
