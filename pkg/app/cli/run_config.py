# Copyright (c) 2025 sprowii
"""Конфигурация запуска.

Источник: плоский файл KEY=VALUE (читается python-dotenv) и флаги
`--set KEY=VALUE`, `--seed`, `--c`, `--threads`. Флаги важнее файла, файл
важнее значений по умолчанию. Переменные окружения процесса в RunConfig
не попадают: запуск определяется только файлом и сидом.
"""
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values

from app import config
from app.data.models import SplitSpec
from app.data.splits import default_splits
from app.decomposition.schedule import SolverSchedule
from app.errors import ConfigError
from app.flow.models import TrainConfig

PathLike = Union[str, os.PathLike]
CONFIG_ECHO = "config.env"

NOTE_SETS = {"four": tuple(config.FOUR_NOTES), "octave": tuple(config.OCTAVE_NOTES)}


def _ints(text: str) -> Tuple[int, ...]:
    text = text.strip()
    if text.lower() in NOTE_SETS:
        return NOTE_SETS[text.lower()]
    return tuple(int(v) for v in text.split(",") if v.strip())


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip() == "" else int(text)


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip() == "" else float(text)


def _splits(text: str) -> Tuple[SplitSpec, ...]:
    """`train:test;train:test`, id через запятую, например `0,1,2:3;1,2,3:0`."""
    specs = []
    for i, part in enumerate(p for p in text.split(";") if p.strip()):
        if part.count(":") != 1:
            raise ValueError(f"сплит {part!r}: ожидалось train:test")
        train, test = part.split(":")
        specs.append(SplitSpec(f"split{i}", _ints(train), _ints(test)))
    return tuple(specs)


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and value and isinstance(value[0], SplitSpec):
        return ";".join(f"{','.join(map(str, s.train_presets))}:{','.join(map(str, s.test_presets))}" for s in value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


# KEY -> (поле RunConfig, разбор значения)
_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "SEED": ("seed", int),
    "DATA_SEED": ("data_seed", _optional_int),
    "MODEL_SEED": ("model_seed", _optional_int),
    "NOTES": ("notes", _ints),
    "N_PRESETS": ("n_presets", int),
    "N_SPLITS": ("n_splits", int),
    "TEST_PRESETS_PER_SPLIT": ("test_presets_per_split", int),
    "SPLITS": ("splits", _splits),
    "VELOCITIES": ("velocities", _ints),
    "NOTE_DURATION_S": ("note_duration_s", float),
    "KEEP_BINS": ("keep_bins", int),
    "FLOOR_DB": ("floor_db", float),
    "FLOW_COUPLINGS": ("flow_couplings", int),
    "FLOW_HIDDEN_WIDTH": ("flow_hidden_width", int),
    "FLOW_HIDDEN_LAYERS": ("flow_hidden_layers", int),
    "FLOW_SCALE_BOUND": ("flow_scale_bound", float),
    "FLOW_LR": ("flow_lr", float),
    "FLOW_MAX_EPOCHS": ("flow_max_epochs", int),
    "FLOW_BATCH_SIZE": ("flow_batch_size", int),
    "FLOW_PATIENCE": ("flow_patience", int),
    "FLOW_VAL_FRACTION": ("flow_val_fraction", float),
    "FLOW_DEQUANT_SIGMA": ("flow_dequant_sigma", float),
    "SOLVER_MAX_STEPS": ("solver_max_steps", int),
    "SOLVER_EPS": ("solver_eps", float),
    "SOLVER_LR": ("solver_lr", float),
    "SOLVER_LR_HALVE_PATIENCE": ("solver_lr_halve_patience", int),
    "SOLVER_LR_HALVE_FACTOR": ("solver_lr_halve_factor", float),
    "NMF_LR": ("nmf_lr", float),
    "DDS_C": ("c", float),
    "DDS_H_INIT": ("h_init", _optional_float),
    "FRAME_CHUNK": ("frame_chunk", int),
    "THREADS": ("threads", int),
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data_seed: Optional[int] = None
    model_seed: Optional[int] = None

    notes: Tuple[int, ...] = tuple(config.FOUR_NOTES)
    n_presets: int = config.N_PRESETS
    n_splits: int = config.N_SPLITS
    test_presets_per_split: int = config.TEST_PRESETS_PER_SPLIT
    # пусто = default_splits
    splits: Tuple[SplitSpec, ...] = ()
    velocities: Tuple[int, ...] = tuple(config.VELOCITIES)
    note_duration_s: float = config.NOTE_DURATION_S
    keep_bins: int = config.KEEP_BINS
    floor_db: float = config.FLOOR_DB

    flow_couplings: int = config.FLOW_COUPLINGS
    flow_hidden_width: int = config.FLOW_HIDDEN_WIDTH
    flow_hidden_layers: int = config.FLOW_HIDDEN_LAYERS
    flow_scale_bound: float = config.FLOW_SCALE_BOUND
    flow_lr: float = config.FLOW_LR
    flow_max_epochs: int = config.FLOW_MAX_EPOCHS
    flow_batch_size: int = config.FLOW_BATCH_SIZE
    flow_patience: int = config.FLOW_PATIENCE
    flow_val_fraction: float = config.FLOW_VAL_FRACTION
    flow_dequant_sigma: float = config.FLOW_DEQUANT_SIGMA

    solver_max_steps: int = config.SOLVER_MAX_STEPS
    solver_eps: float = config.SOLVER_EPS
    solver_lr: float = config.SOLVER_LR
    solver_lr_halve_patience: int = config.SOLVER_LR_HALVE_PATIENCE
    solver_lr_halve_factor: float = config.SOLVER_LR_HALVE_FACTOR
    nmf_lr: float = config.NMF_LR
    c: float = config.DDS_PENALTY_C
    # пусто = 1/K
    h_init: Optional[float] = None
    frame_chunk: int = config.FRAME_CHUNK
    threads: int = config.THREADS

    source: Optional[str] = field(default=None, compare=False)

    # ------------------------------------------------------------------------
    # загрузка
    # ------------------------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: Dict[str, Optional[str]], base: Optional["RunConfig"] = None) -> "RunConfig":
        """Применяет пары KEY=VALUE поверх base.

        Raises:
            ConfigError: неизвестный ключ или значение не разбирается
        """
        changes: Dict[str, Any] = {}
        for key, raw in values.items():
            name = key.strip().upper()
            if name not in _KEYS:
                raise ConfigError(f"неизвестный ключ конфигурации: {key}")
            attr, parse = _KEYS[name]
            try:
                changes[attr] = parse("" if raw is None else str(raw))
            except ValueError as exc:
                raise ConfigError(f"{name}={raw!r}: {exc}") from exc
        return replace(base or cls(), **changes)

    @classmethod
    def load(cls, path: Optional[PathLike] = None, overrides: Sequence[str] = (),
             seed: Optional[int] = None, c: Optional[float] = None, threads: Optional[int] = None) -> "RunConfig":
        run = cls()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"файл конфигурации не найден: {path}")
            run = cls.from_mapping(dotenv_values(path), run)
            run = replace(run, source=str(path))
        pairs: Dict[str, str] = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set ожидает KEY=VALUE, получено: {item!r}")
            key, value = item.split("=", 1)
            pairs[key] = value
        run = cls.from_mapping(pairs, run)
        flags = {"seed": seed, "c": c, "threads": threads}
        return replace(run, **{k: v for k, v in flags.items() if v is not None})

    # ------------------------------------------------------------------------
    # проверка и производные значения
    # ------------------------------------------------------------------------

    def validate(self) -> List[str]:
        errors = []
        if self.seed < 0:
            errors.append(f"SEED должен быть >= 0, получено: {self.seed}")
        if not self.notes:
            errors.append("NOTES: пустой список нот")
        if len(set(self.notes)) != len(self.notes):
            errors.append(f"NOTES: повторяющиеся ноты {list(self.notes)}")
        if not self.velocities or not set(self.velocities) <= set(config.VELOCITIES):
            errors.append(f"VELOCITIES должны быть из {config.VELOCITIES}, получено: {list(self.velocities)}")
        if self.n_presets < 2:
            errors.append(f"N_PRESETS должен быть >= 2, получено: {self.n_presets}")
        if not self.splits:
            if self.n_splits < 1:
                errors.append(f"N_SPLITS должен быть >= 1, получено: {self.n_splits}")
            if not (1 <= self.test_presets_per_split < self.n_presets):
                errors.append(f"TEST_PRESETS_PER_SPLIT должен быть от 1 до {self.n_presets - 1}, "
                              f"получено: {self.test_presets_per_split}")
        if not self.note_duration_s > 0:
            errors.append(f"NOTE_DURATION_S должен быть > 0, получено: {self.note_duration_s}")
        if not (1 <= self.keep_bins <= config.STFT_WINDOW // 2 + 1):
            errors.append(f"KEEP_BINS должен быть от 1 до {config.STFT_WINDOW // 2 + 1}, получено: {self.keep_bins}")
        if not self.floor_db < 0:
            errors.append(f"FLOOR_DB должен быть < 0, получено: {self.floor_db}")
        if self.c < 0:
            errors.append(f"DDS_C должен быть >= 0, получено: {self.c}")
        if self.h_init is not None and self.h_init < 0:
            errors.append(f"DDS_H_INIT должен быть >= 0, получено: {self.h_init}")
        if not self.nmf_lr > 0:
            errors.append(f"NMF_LR должен быть > 0, получено: {self.nmf_lr}")
        if self.frame_chunk < 1:
            errors.append(f"FRAME_CHUNK должен быть >= 1, получено: {self.frame_chunk}")
        if self.threads < 1:
            errors.append(f"THREADS должен быть >= 1, получено: {self.threads}")
        errors.extend(f"flow: {e}" for e in self.train_config().validate())
        errors.extend(f"solver: {e}" for e in self.schedule().validate())
        return errors

    def ensure_valid(self) -> "RunConfig":
        errors = self.validate()
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def seeds(self) -> Tuple[int, int]:
        """(DATA_SEED, MODEL_SEED); незаданные выводятся из SEED через SeedSequence."""
        data_seed, model_seed = (int(s) for s in np.random.SeedSequence(self.seed).generate_state(2))
        return (data_seed if self.data_seed is None else self.data_seed,
                model_seed if self.model_seed is None else self.model_seed)

    def model_seed_for(self, split_index: int, pitch: int) -> int:
        _, model_seed = self.seeds()
        return int(np.random.SeedSequence([model_seed, split_index, pitch]).generate_state(1)[0])

    def split_specs(self) -> List[SplitSpec]:
        if self.splits:
            return [replace(s, notes=tuple(self.notes)) for s in self.splits]
        return default_splits(self.n_presets, self.n_splits, self.test_presets_per_split, self.notes)

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(
            lr=self.flow_lr,
            max_epochs=self.flow_max_epochs,
            batch_size=self.flow_batch_size,
            patience=self.flow_patience,
            val_fraction=self.flow_val_fraction,
            seed=seed,
            dequant_noise_sigma=self.flow_dequant_sigma,
            n_coupling=self.flow_couplings,
            hidden_width=self.flow_hidden_width,
            n_hidden=self.flow_hidden_layers,
            scale_bound=self.flow_scale_bound,
        )

    def schedule(self, lr: Optional[float] = None) -> SolverSchedule:
        return SolverSchedule(
            max_steps=self.solver_max_steps,
            eps=self.solver_eps,
            lr=self.solver_lr if lr is None else lr,
            lr_halve_patience=self.solver_lr_halve_patience,
            lr_halve_factor=self.solver_lr_halve_factor,
        )

    # ------------------------------------------------------------------------
    # эхо
    # ------------------------------------------------------------------------

    def to_env(self) -> str:
        """Отсортированные строки KEY=VALUE; сиды записываются уже выведенными."""
        data_seed, model_seed = self.seeds()
        resolved = replace(self, data_seed=data_seed, model_seed=model_seed)
        lines = [f"{key}={_format(getattr(resolved, attr))}" for key, (attr, _) in sorted(_KEYS.items())]
        return "\n".join(lines) + "\n"

    def echo(self, directory: PathLike) -> Path:
        path = Path(directory) / CONFIG_ECHO
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_env(), encoding="utf-8")
        return path


def config_keys() -> List[str]:
    return sorted(_KEYS)

