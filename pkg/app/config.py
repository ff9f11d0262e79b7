# Copyright (c) 2025 sprowii
"""Глобальные константы и настройки процесса.

Параметры конкретного эксперимента (сиды, сплиты, гиперпараметры) задаются
через RunConfig в app.cli.run_config; здесь только значения по умолчанию и
константы из постановки эксперимента.
"""
import math
import os
from typing import List

from dotenv import load_dotenv

load_dotenv()

from app.logging_config import log


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in {"1", "true", "yes"}


# ============================================================================
# ПРОЦЕСС
# ============================================================================

THREADS = int(os.getenv("DDS_THREADS", "1"))
if THREADS < 1:
    raise RuntimeError("DDS_THREADS должен быть >= 1")

OUT_DIR = os.getenv("DDS_OUT_DIR", "runs")

# Проверка NaN/Inf при создании Tensor
CHECKED_TENSORS = _env_bool("DDS_CHECKED_TENSORS", "true")

# ============================================================================
# АУДИО И STFT
# ============================================================================

SAMPLE_RATE = 16000
STFT_WINDOW = 2048
STFT_HOP = 512
KEEP_BINS = 512
FLOOR_DB = -80.0

# ============================================================================
# NOTEFLOW
# ============================================================================

FLOW_COUPLINGS = 16
FLOW_HIDDEN_WIDTH = 256
FLOW_HIDDEN_LAYERS = 4
FLOW_SCALE_BOUND = 2.0
FLOW_LR = 1e-3
FLOW_MAX_EPOCHS = 1000
FLOW_BATCH_SIZE = 512
FLOW_PATIENCE = 50
FLOW_VAL_FRACTION = 0.2
FLOW_DEQUANT_SIGMA = 1e-3

# SELU
SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

LOG_2PI = math.log(2.0 * math.pi)

# ============================================================================
# ДЕКОМПОЗИЦИЯ
# ============================================================================

SOLVER_MAX_STEPS = 10000
SOLVER_EPS = 1e-15
SOLVER_LR = 1e-3
SOLVER_LR_HALVE_PATIENCE = 10
SOLVER_LR_HALVE_FACTOR = 2.0
DDS_PENALTY_C = 1e-3
# Нижняя граница для суммы активаций в знаменателе штрафа
DDS_SIGMA_FLOOR = 1e-12
NMF_LR = 1e-3
# сколько кадров решается одной пачкой
FRAME_CHUNK = 256

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# ============================================================================
# ДАННЫЕ
# ============================================================================

# A1, A2, A3, A4
FOUR_NOTES: List[int] = [33, 45, 57, 69]
# A2..A3 включительно, 13 нот
OCTAVE_NOTES: List[int] = list(range(45, 58))
VELOCITIES: List[int] = [32, 64, 96, 127]
N_PRESETS = 8
N_SPLITS = 3
TEST_PRESETS_PER_SPLIT = 2
NOTE_DURATION_S = 2.0

log.debug(f"Threads: {THREADS}, out dir: {OUT_DIR}, checked tensors: {CHECKED_TENSORS}")
