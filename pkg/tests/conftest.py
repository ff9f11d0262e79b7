# Copyright (c) 2025 sprowii
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from app.cli.run_config import RunConfig
from app.cli.workspace import Workspace
from app.flow.models import FlowModel


def perturbed_flow(dim: int, n_coupling: int = 3, hidden_width: int = 8, n_hidden: int = 2,
                   seed: int = 0, scale: float = 0.1, label: str = "") -> FlowModel:
    """Поток со случайными выходными слоями (не тождественный)."""
    model = FlowModel.create(dim, label, n_coupling, hidden_width, n_hidden, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    params: Dict[str, np.ndarray] = {name: value + scale * rng.standard_normal(value.shape)
                                     for name, value in model.parameters().items()}
    return model.with_parameters(params)


def shifted_flow(dim: int = 2, shift: float = -0.5, label: str = "") -> FlowModel:
    """Один coupling с нулевыми сетями, кроме смещения выходного слоя shift-сети.

    inverse(0) = [0, ..., 0, -shift, ..., -shift] (вторая половина координат).
    """
    model = FlowModel.create(dim, label, n_coupling=1, hidden_width=4, n_hidden=1, seed=0)
    params = dict(model.parameters())
    params["c0.shift.1.b"] = np.full(dim - dim // 2, shift)
    return model.with_parameters(params)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def workspace(tmp_path: Path) -> Workspace:
    return Workspace.at(tmp_path / "run")


TINY_RUN = {
    "NOTES": "57,69",
    "N_PRESETS": "3",
    "N_SPLITS": "1",
    "TEST_PRESETS_PER_SPLIT": "1",
    "VELOCITIES": "64,127",
    "NOTE_DURATION_S": "0.5",
    "KEEP_BINS": "64",
    "FLOW_COUPLINGS": "2",
    "FLOW_HIDDEN_WIDTH": "8",
    "FLOW_HIDDEN_LAYERS": "1",
    "FLOW_MAX_EPOCHS": "3",
    "FLOW_PATIENCE": "3",
    "FLOW_BATCH_SIZE": "16",
    "SOLVER_MAX_STEPS": "30",
    "THREADS": "1",
}


@pytest.fixture
def tiny_run() -> RunConfig:
    return RunConfig.from_mapping(TINY_RUN).ensure_valid()


@pytest.fixture
def tiny_config_file(tmp_path: Path) -> Path:
    path = tmp_path / "tiny.env"
    path.write_text("".join(f"{k}={v}\n" for k, v in TINY_RUN.items()), encoding="utf-8")
    return path
