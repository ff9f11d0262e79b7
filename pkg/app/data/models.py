# Copyright (c) 2025 sprowii
"""Модели данных синтетического корпуса: пресеты, ноты, сплиты."""
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from app.config import VELOCITIES

MIN_PITCH = 21
MAX_PITCH = 108


@dataclass(frozen=True)
class PresetParams:
    """Тембр синтетического «пианино».

    Частота n-го обертона f0·n·√(1 + B·n²), наклон спектра в дБ на октаву
    (≤ 0), затухание в 1/с для основного тона, у высших обертонов быстрее.
    """
    preset_id: int
    inharmonicity: float = 0.0
    n_partials: int = 20
    spectral_tilt: float = -6.0
    decay_rate: float = 1.5
    attack_ms: float = 5.0
    noise_floor_db: float = -60.0
    seed: int = 0

    def validate(self) -> List[str]:
        errors = []
        numeric = (self.inharmonicity, self.spectral_tilt, self.decay_rate, self.attack_ms, self.noise_floor_db)
        if not all(math.isfinite(v) for v in numeric):
            errors.append(f"пресет {self.preset_id}: NaN/Inf в параметрах")
            return errors
        if self.inharmonicity < 0:
            errors.append(f"пресет {self.preset_id}: B должен быть >= 0, получено: {self.inharmonicity}")
        if self.n_partials < 1:
            errors.append(f"пресет {self.preset_id}: n_partials должен быть >= 1, получено: {self.n_partials}")
        if self.spectral_tilt > 0:
            errors.append(f"пресет {self.preset_id}: spectral_tilt должен быть <= 0, получено: {self.spectral_tilt}")
        if self.decay_rate < 0:
            errors.append(f"пресет {self.preset_id}: decay_rate должен быть >= 0, получено: {self.decay_rate}")
        if self.attack_ms < 0:
            errors.append(f"пресет {self.preset_id}: attack_ms должен быть >= 0, получено: {self.attack_ms}")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PresetParams":
        return cls(
            preset_id=int(data["preset_id"]),
            inharmonicity=float(data["inharmonicity"]),
            n_partials=int(data["n_partials"]),
            spectral_tilt=float(data["spectral_tilt"]),
            decay_rate=float(data["decay_rate"]),
            attack_ms=float(data["attack_ms"]),
            noise_floor_db=float(data["noise_floor_db"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    velocity: int
    onset_s: float
    duration_s: float

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s

    def validate(self, velocities: Iterable[int] = VELOCITIES) -> List[str]:
        errors = []
        if not (MIN_PITCH <= self.pitch <= MAX_PITCH):
            errors.append(f"pitch должен быть от {MIN_PITCH} до {MAX_PITCH}, получено: {self.pitch}")
        if self.velocity not in set(velocities):
            errors.append(f"velocity {self.velocity} не из набора {sorted(velocities)}")
        if not self.duration_s > 0:
            errors.append(f"duration_s должен быть > 0, получено: {self.duration_s}")
        if self.onset_s < 0:
            errors.append(f"onset_s должен быть >= 0, получено: {self.onset_s}")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoteEvent":
        return cls(int(data["pitch"]), int(data["velocity"]), float(data["onset_s"]), float(data["duration_s"]))


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_presets: Tuple[int, ...]
    test_presets: Tuple[int, ...]
    notes: Tuple[int, ...] = field(default_factory=tuple)

    def validate(self, known_presets: Optional[Iterable[int]] = None) -> List[str]:
        errors = []
        if not self.train_presets:
            errors.append(f"{self.name}: пустой набор обучающих пресетов")
        if not self.test_presets:
            errors.append(f"{self.name}: пустой набор тестовых пресетов")
        overlap = sorted(set(self.train_presets) & set(self.test_presets))
        if overlap:
            errors.append(f"{self.name}: пресеты {overlap} одновременно в train и test")
        if not self.notes:
            errors.append(f"{self.name}: пустой список нот")
        if len(set(self.notes)) != len(self.notes):
            errors.append(f"{self.name}: повторяющиеся ноты {list(self.notes)}")
        for pitch in self.notes:
            if not (MIN_PITCH <= pitch <= MAX_PITCH):
                errors.append(f"{self.name}: нота {pitch} вне диапазона {MIN_PITCH}..{MAX_PITCH}")
        if known_presets is not None:
            known = set(known_presets)
            for preset_id in sorted(set(self.train_presets) | set(self.test_presets)):
                if preset_id not in known:
                    errors.append(f"{self.name}: неизвестный пресет {preset_id}")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "train_presets": list(self.train_presets),
            "test_presets": list(self.test_presets),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SplitSpec":
        return cls(
            str(data["name"]),
            tuple(int(p) for p in data["train_presets"]),
            tuple(int(p) for p in data["test_presets"]),
            tuple(int(p) for p in data["notes"]),
        )
