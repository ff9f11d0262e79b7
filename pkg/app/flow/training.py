# Copyright (c) 2025 sprowii
"""Обучение NoteFlow максимизацией правдоподобия с ранней остановкой."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.autodiff import AdamState, ComputationRecord, adam_step
from app.errors import ConfigError, DatasetError, FlowTrainingError, GradientError
from app.flow.models import FlowModel, TrainConfig
from app.flow.transform import log_likelihood, mean_nll_graph, parameter_vars
from app.logging_config import log

MIN_FRAMES = 10


@dataclass
class FlowTrainResult:
    model: FlowModel
    # средний log p(x) на валидации после каждой эпохи
    history: List[float] = field(default_factory=list)
    train_nll: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    initial_val_loglik: float = float("nan")
    validation_indices: np.ndarray = None


def _split(n_frames: int, val_fraction: float, rng: np.random.Generator):
    order = rng.permutation(n_frames)
    n_val = min(max(1, int(round(val_fraction * n_frames))), n_frames - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_flow(frames, config: TrainConfig, source_label: str = "") -> FlowTrainResult:
    """Обучает NoteFlow на кадрах одной ноты.

    Args:
        frames: кадры (N, D), обычно в [0, 1] после нормализации
        config: гиперпараметры
        source_label: метка ноты, сохраняется в модели

    Returns:
        FlowTrainResult с моделью лучшей эпохи по валидационному правдоподобию

    Raises:
        DatasetError: меньше 10 кадров
        ConfigError: некорректный TrainConfig
        FlowTrainingError: NaN/Inf в функции потерь или градиентах
    """
    data = np.asarray(frames, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < MIN_FRAMES:
        raise DatasetError(f"для обучения нужно >= {MIN_FRAMES} кадров (N, D), получено: {data.shape}")
    errors = config.validate()
    if errors:
        raise ConfigError("; ".join(errors))

    n_frames, dim = data.shape
    if n_frames < 2 * config.batch_size:
        log.debug(f"[{source_label}] N={n_frames} меньше двух минибатчей ({config.batch_size})")

    init_seed, data_seed = np.random.SeedSequence(config.seed).generate_state(2)
    rng = np.random.default_rng(data_seed)
    model = FlowModel.create(dim, source_label, config.n_coupling, config.hidden_width,
                             config.n_hidden, config.scale_bound, seed=int(init_seed))
    train_idx, val_idx = _split(n_frames, config.val_fraction, rng)
    train, val = data[train_idx], data[val_idx]

    best_model = model
    best_ll = float(np.mean(log_likelihood(model, val)))
    result = FlowTrainResult(model=model, initial_val_loglik=best_ll, validation_indices=val_idx)
    log.info(f"[{source_label}] Обучение: N_train={len(train)}, N_val={len(val)}, D={dim}, "
             f"параметров={model.n_parameters()}, исходный val LL={best_ll / dim:.4f} нат/изм.")

    params = dict(model.parameters())
    state = AdamState.zeros_like(params)
    step = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        batch_losses = []
        for batch_index, start in enumerate(range(0, len(train), config.batch_size)):
            batch = train[order[start:start + config.batch_size]]
            if config.dequant_noise_sigma > 0:
                batch = batch + rng.normal(0.0, config.dequant_noise_sigma, size=batch.shape)

            rec = ComputationRecord()
            leaves = parameter_vars(rec, model)
            loss = mean_nll_graph(model, rec.constant(batch, "batch"), leaves)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise FlowTrainingError("non-finite training loss", epoch, batch_index)
            try:
                grads = rec.backward(loss)
            except GradientError as exc:
                raise FlowTrainingError(str(exc), epoch, batch_index) from exc

            step += 1
            params, state = adam_step(params, {name: grads[v.index] for name, v in leaves.items()},
                                      state, config.lr, t=step)
            model = model.with_parameters(params)
            batch_losses.append(loss_value)

        val_ll = float(np.mean(log_likelihood(model, val)))
        if not np.isfinite(val_ll):
            raise FlowTrainingError("non-finite validation log-likelihood", epoch, -1)
        result.history.append(val_ll)
        result.train_nll.append(float(np.mean(batch_losses)))

        if val_ll > best_ll:
            best_ll, best_model, result.best_epoch = val_ll, model, epoch
        if epoch % config.log_every == 0:
            log.info(f"[{source_label}] Эпоха {epoch}: train NLL={result.train_nll[-1]:.4f}, "
                     f"val LL={val_ll:.4f} (лучшая {best_ll:.4f} на эпохе {result.best_epoch})")
        if epoch - result.best_epoch >= config.patience:
            log.info(f"[{source_label}] Ранняя остановка на эпохе {epoch}: нет улучшения "
                     f"с эпохи {result.best_epoch} (patience {config.patience})")
            break

    result.model = best_model
    result.stopped_epoch = epoch
    log.info(f"[{source_label}] Готово: эпох {epoch}, лучшая {result.best_epoch}, "
             f"val LL={best_ll / dim:.4f} нат/изм.")
    return result
