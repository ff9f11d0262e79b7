# Copyright (c) 2025 sprowii
"""Файлы моделей NoteFlow.

Формат (little-endian):
- magic "DDSF"
- u32 version, u32 D, u32 n_coupling, u32 hidden_width, u32 n_hidden
- u32 длина метки + метка в UTF-8
- f64 scale_bound, u64 seed
- для каждой перестановки: u32 seed + D × u32 индексов
- параметры f64 в порядке FlowModel.parameters()
- sha256 всего предыдущего содержимого (32 байта)

Длина файла однозначно следует из заголовка, поэтому обрезанный файл
обнаруживается до проверки контрольной суммы.
"""
import hashlib
import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

from app.errors import (
    ChecksumError,
    ModelFormatError,
    ModelVersionError,
    NotAModelFileError,
    TruncatedModelError,
)
from app.flow.models import FlowModel, PermutationLayer
from app.logging_config import log

MAGIC = b"DDSF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<IIIIII")  # version, D, n_coupling, width, n_hidden, label_len
_TAIL = struct.Struct("<dQ")  # scale_bound, seed
_CHECKSUM_SIZE = 32
_MAX_LABEL = 4096

PathLike = Union[str, os.PathLike]


def model_to_bytes(model: FlowModel) -> bytes:
    label = model.source_label.encode("utf-8")
    if len(label) > _MAX_LABEL:
        raise ValueError(f"метка длиннее {_MAX_LABEL} байт")
    parts = [
        MAGIC,
        _HEADER.pack(FORMAT_VERSION, model.dim, model.n_coupling, model.hidden_width, model.n_hidden, len(label)),
        label,
        _TAIL.pack(model.scale_bound, model.seed),
    ]
    for perm in model.permutations:
        parts.append(struct.pack("<I", perm.seed))
        parts.append(np.asarray(perm.perm, dtype="<u4").tobytes())
    for value in model.parameters().values():
        parts.append(np.asarray(value, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def _expected_size(dim: int, n_coupling: int, width: int, n_hidden: int, label_len: int) -> int:
    shapes = FlowModel.parameter_shapes(dim, n_coupling, width, n_hidden)
    n_params = sum(int(np.prod(s)) for s in shapes.values())
    perms = (n_coupling - 1) * (4 + 4 * dim)
    return len(MAGIC) + _HEADER.size + label_len + _TAIL.size + perms + 8 * n_params + _CHECKSUM_SIZE


def model_from_bytes(blob: bytes, source: str = "<bytes>") -> FlowModel:
    """Разбирает файл модели.

    Raises:
        NotAModelFileError: нет magic "DDSF"
        ModelVersionError: неизвестная версия формата
        TruncatedModelError: файл короче, чем следует из заголовка
        ChecksumError: sha256 не совпадает
        ModelFormatError: прочие нарушения формата
    """
    if len(blob) < len(MAGIC):
        if MAGIC.startswith(blob) and blob:
            raise TruncatedModelError(f"{source}: файл обрезан ({len(blob)} байт)")
        raise NotAModelFileError(f"{source}: не файл модели")
    if blob[:len(MAGIC)] != MAGIC:
        raise NotAModelFileError(f"{source}: не файл модели (magic {blob[:4]!r})")
    if len(blob) < len(MAGIC) + 4:
        raise TruncatedModelError(f"{source}: заголовок обрезан")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{source}: версия формата {version}, поддерживается {FORMAT_VERSION}")
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise TruncatedModelError(f"{source}: заголовок обрезан")

    _, dim, n_coupling, width, n_hidden, label_len = _HEADER.unpack_from(blob, len(MAGIC))
    if dim < 1 or n_coupling < 1 or width < 1 or n_hidden < 1 or label_len > _MAX_LABEL:
        raise ModelFormatError(f"{source}: некорректный заголовок (D={dim}, couplings={n_coupling}, "
                               f"width={width}, hidden={n_hidden}, label={label_len})")
    expected = _expected_size(dim, n_coupling, width, n_hidden, label_len)
    if len(blob) < expected:
        raise TruncatedModelError(f"{source}: {len(blob)} байт, ожидалось {expected}")
    if len(blob) > expected:
        raise ModelFormatError(f"{source}: лишние данные после модели ({len(blob) - expected} байт)")
    body, checksum = blob[:-_CHECKSUM_SIZE], blob[-_CHECKSUM_SIZE:]
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumError(f"{source}: контрольная сумма не совпадает")

    offset = len(MAGIC) + _HEADER.size
    try:
        label = body[offset:offset + label_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{source}: метка не в UTF-8") from exc
    offset += label_len
    scale_bound, seed = _TAIL.unpack_from(body, offset)
    offset += _TAIL.size

    permutations = []
    for _ in range(n_coupling - 1):
        (perm_seed,) = struct.unpack_from("<I", body, offset)
        offset += 4
        perm = np.frombuffer(body, dtype="<u4", count=dim, offset=offset).astype(np.intp)
        offset += 4 * dim
        perm.setflags(write=False)
        permutations.append(PermutationLayer(perm, int(perm_seed)))

    params = {}
    for name, shape in FlowModel.parameter_shapes(dim, n_coupling, width, n_hidden).items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count

    model = FlowModel.assemble(dim, params, tuple(permutations), label, width, n_hidden,
                               float(scale_bound), int(seed))
    errors = model.validate()
    if errors:
        raise ModelFormatError(f"{source}: " + "; ".join(errors))
    return model


def save_model(model: FlowModel, path: PathLike) -> None:
    """Пишет модель атомарно: во временный файл, затем rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".tmp")
    tmp.write_bytes(model_to_bytes(model))
    os.replace(tmp, target)
    log.debug(f"Модель {model.source_label!r} сохранена в {target}")


def load_model(path: PathLike) -> FlowModel:
    target = Path(path)
    return model_from_bytes(target.read_bytes(), source=str(target))
