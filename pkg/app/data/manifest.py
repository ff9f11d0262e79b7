# Copyright (c) 2025 sprowii
"""Манифест датасета (JSON).

Манифест перечисляет пресеты, сплиты, пьесы и пути к файлам. Пути
относительные, ключи отсортированы, меток времени нет, поэтому повторный
synth с тем же конфигом даёт побайтно тот же файл.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Union

from app.data.models import NoteEvent, PresetParams, SplitSpec
from app.errors import DatasetError, MissingInputError

MANIFEST_VERSION = 1
PathLike = Union[str, os.PathLike]


def dump_manifest(manifest: Dict[str, Any]) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_manifest(path: PathLike, manifest: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_manifest(manifest), encoding="utf-8")


def read_manifest(path: PathLike) -> Dict[str, Any]:
    """Читает и проверяет манифест.

    Raises:
        MissingInputError: файла нет
        DatasetError: файл не JSON или в нём нет обязательных полей
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError([path])
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: манифест не разбирается ({exc})") from exc
    missing = [k for k in ("version", "presets", "splits", "notes") if k not in manifest]
    if missing:
        raise DatasetError(f"{path}: в манифесте нет полей {missing}")
    if manifest["version"] != MANIFEST_VERSION:
        raise DatasetError(f"{path}: версия манифеста {manifest['version']}, ожидалась {MANIFEST_VERSION}")
    return manifest


def presets_of(manifest: Dict[str, Any]) -> List[PresetParams]:
    return [PresetParams.from_dict(p) for p in manifest["presets"]]


def splits_of(manifest: Dict[str, Any]) -> List[SplitSpec]:
    return [SplitSpec.from_dict(s) for s in manifest["splits"]]


def events_of(piece: Dict[str, Any]) -> List[NoteEvent]:
    return [NoteEvent.from_dict(e) for e in piece["events"]]
