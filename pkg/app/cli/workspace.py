# Copyright (c) 2025 sprowii
"""Раскладка выходного каталога.

    <out>/dataset/manifest.json
    <out>/dataset/audio/p<preset>/<pitch>_v<velocity>.wav
    <out>/dataset/pieces/<split>/<piece>.wav
    <out>/dataset/truth/<split>/<piece>.csv
    <out>/dataset/features/<split>/<pitch>_<train|test>.ddss
    <out>/dataset/features/<split>/piece_<piece>.ddss
    <out>/models/<split>/<pitch>.ddsf, <pitch>_history.csv
    <out>/decompositions/<method>/<split>/...
    <out>/reports/...
"""
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

PathLike = Union[str, os.PathLike]

PIECES = ("train", "test")
METHODS = ("nmf", "dds", "mean")


@dataclass(frozen=True)
class Workspace:
    root: Path

    @classmethod
    def at(cls, root: PathLike) -> "Workspace":
        return cls(Path(root))

    # --- dataset ---

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def manifest(self) -> Path:
        return self.dataset / "manifest.json"

    def note_audio(self, preset_id: int, pitch: int, velocity: int) -> Path:
        return self.dataset / "audio" / f"p{preset_id}" / f"{pitch}_v{velocity}.wav"

    def piece_audio(self, split: str, piece: str) -> Path:
        return self.dataset / "pieces" / split / f"{piece}.wav"

    def truth(self, split: str, piece: str) -> Path:
        return self.dataset / "truth" / split / f"{piece}.csv"

    def note_features(self, split: str, pitch: int, part: str) -> Path:
        return self.dataset / "features" / split / f"{pitch}_{part}.ddss"

    def piece_features(self, split: str, piece: str) -> Path:
        return self.dataset / "features" / split / f"piece_{piece}.ddss"

    # --- models ---

    @property
    def models(self) -> Path:
        return self.root / "models"

    def model(self, split: str, pitch: int) -> Path:
        return self.models / split / f"{pitch}.ddsf"

    def history(self, split: str, pitch: int) -> Path:
        return self.models / split / f"{pitch}_history.csv"

    # --- decompositions ---

    def decompositions(self, method: str) -> Path:
        return self.root / "decompositions" / method

    def decomposition(self, method: str, split: str) -> Path:
        return self.decompositions(method) / split

    def note_reconstruction(self, method: str, split: str, pitch: int) -> Path:
        return self.decomposition(method, split) / f"note_{pitch}_reconstruction.ddss"

    def note_loss(self, method: str, split: str, pitch: int) -> Path:
        return self.decomposition(method, split) / f"note_{pitch}_loss.csv"

    def note_components(self, split: str, pitch: int) -> Path:
        return self.decomposition("dds", split) / f"note_{pitch}_components.ddss"

    def piece_activations(self, method: str, split: str, piece: str) -> Path:
        return self.decomposition(method, split) / f"piece_{piece}_H.csv"

    def piece_loss(self, method: str, split: str, piece: str) -> Path:
        return self.decomposition(method, split) / f"piece_{piece}_loss.csv"

    def piece_reconstruction(self, method: str, split: str, piece: str) -> Path:
        return self.decomposition(method, split) / f"piece_{piece}_reconstruction.ddss"

    # --- reports ---

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def confusion(self, split: str, frames: str) -> Path:
        return self.reports / split / f"confusion_{frames}.csv"

    def activation_map(self, split: str, method: str, piece: str) -> Path:
        return self.reports / split / f"activation_{method}_{piece}.csv"

    def relative(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    def missing(self, paths: List[Path]) -> List[str]:
        return [self.relative(p) for p in paths if not p.exists()]


def is_non_empty_dir(path: Path) -> bool:
    return path.is_dir() and any(path.iterdir())
