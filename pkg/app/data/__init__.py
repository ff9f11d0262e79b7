# Copyright (c) 2025 sprowii
"""Синтетический корпус нот, сплиты по пресетам, тестовые пьесы."""
from app.data.models import NoteEvent, PresetParams, SplitSpec
from app.data.splits import SplitData, build_split, check_split, default_splits, frames_from_waves, split_from_waves
from app.data.synth import default_piece, default_presets, render_piece, synth_note

__all__ = [
    "NoteEvent",
    "PresetParams",
    "SplitData",
    "SplitSpec",
    "build_split",
    "check_split",
    "default_piece",
    "default_presets",
    "default_splits",
    "frames_from_waves",
    "render_piece",
    "split_from_waves",
    "synth_note",
]
