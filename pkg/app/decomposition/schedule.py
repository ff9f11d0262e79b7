# Copyright (c) 2025 sprowii
"""Расписание и цикл проецированного Adam, общие для NMF и DDS.

Кадры решаются пачкой, но каждый кадр живёт по своему расписанию:
свои моменты Adam, lr, счётчик шагов, счётчик шагов без прогресса и флаги
остановки. Поэтому результат кадра не зависит от того, с какими кадрами он
попал в пачку.

Правила для кадра:
- остановка, если |loss − prev_loss| < eps;
- прогресс = loss < best − eps; после lr_halve_patience шагов без
  прогресса lr делится на lr_halve_factor;
- не больше max_steps шагов;
- NaN/Inf в loss: один рестарт из начальной точки с lr/10, при повторе
  кадр помечается как сбойный;
- возвращается лучшая точка (best-so-far).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from app.autodiff import AdamState, adam_step
from app.config import (
    SOLVER_EPS,
    SOLVER_LR,
    SOLVER_LR_HALVE_FACTOR,
    SOLVER_LR_HALVE_PATIENCE,
    SOLVER_MAX_STEPS,
)
from app.errors import ConfigError, GradientError
from app.logging_config import log

Params = Dict[str, np.ndarray]
# (params (n, ...), индексы кадров (n,)) -> (loss (n,), grads или None, если в loss есть NaN/Inf)
Objective = Callable[[Params, np.ndarray], Tuple[np.ndarray, Optional[Params]]]
Projection = Callable[[Params], Params]

STOP_EPS = "eps"
STOP_MAX_STEPS = "max_steps"
STOP_FAILED = "failed"

RESTART_LR_DIVISOR = 10.0


@dataclass(frozen=True)
class SolverSchedule:
    max_steps: int = SOLVER_MAX_STEPS
    eps: float = SOLVER_EPS
    lr: float = SOLVER_LR
    lr_halve_patience: int = SOLVER_LR_HALVE_PATIENCE
    lr_halve_factor: float = SOLVER_LR_HALVE_FACTOR

    def validate(self) -> List[str]:
        errors = []
        if self.max_steps < 1:
            errors.append(f"max_steps должен быть >= 1, получено: {self.max_steps}")
        if not self.eps > 0:
            errors.append(f"eps должен быть > 0, получено: {self.eps}")
        if not self.lr > 0:
            errors.append(f"lr должен быть > 0, получено: {self.lr}")
        if self.lr_halve_patience < 1:
            errors.append(f"lr_halve_patience должен быть >= 1, получено: {self.lr_halve_patience}")
        if not self.lr_halve_factor > 1:
            errors.append(f"lr_halve_factor должен быть > 1, получено: {self.lr_halve_factor}")
        return errors

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class SolverResult:
    params: Params
    loss: np.ndarray
    steps: np.ndarray
    stop_reason: np.ndarray
    lr_halvings: np.ndarray
    restarted: np.ndarray
    failed: np.ndarray
    # по шагам: loss и best-so-far по кадрам, lr
    trace: List[Dict[str, np.ndarray]] = field(default_factory=list)

    def summary(self) -> Dict[str, int]:
        return {
            "frames": int(len(self.loss)),
            "eps": int(np.sum(self.stop_reason == STOP_EPS)),
            "max_steps": int(np.sum(self.stop_reason == STOP_MAX_STEPS)),
            "failed": int(np.sum(self.failed)),
            "restarted": int(np.sum(self.restarted)),
            "lr_halvings": int(np.sum(self.lr_halvings)),
        }


def _take(params: Params, rows: np.ndarray) -> Params:
    return {k: v[rows] for k, v in params.items()}


def _per_row_evaluate(objective: Objective, params: Params, frames: np.ndarray) -> Tuple[np.ndarray, Params, np.ndarray]:
    loss = np.full(len(frames), np.nan)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for i in range(len(frames)):
        row = np.array([i])
        try:
            li, gi = objective(_take(params, row), frames[row])
        except GradientError:
            continue
        if gi is None or not np.isfinite(li[0]):
            continue
        loss[i] = li[0]
        for k in grads:
            grads[k][i] = gi[k][0]
    return loss, grads, ~np.isfinite(loss)


def _evaluate(objective: Objective, params: Params, frames: np.ndarray) -> Tuple[np.ndarray, Params, np.ndarray]:
    """(loss, grads, bad): строки с NaN/Inf помечены в bad, их градиенты нулевые."""
    n = len(frames)
    try:
        loss, grads = objective(params, frames)
    except GradientError:
        return _per_row_evaluate(objective, params, frames)
    loss = np.asarray(loss, dtype=np.float64)
    if grads is not None:
        return loss, grads, np.zeros(n, dtype=bool)

    bad = ~np.isfinite(loss)
    good = np.flatnonzero(~bad)
    full = {k: np.zeros_like(v) for k, v in params.items()}
    if good.size:
        try:
            sub_loss, sub_grads = objective(_take(params, good), frames[good])
        except GradientError:
            sub_grads = None
        if sub_grads is None:
            return _per_row_evaluate(objective, params, frames)
        loss[good] = sub_loss
        for k in full:
            full[k][good] = sub_grads[k]
    return loss, full, bad


def run_projected_adam(objective: Objective, init_params: Params, project: Projection,
                       schedule: SolverSchedule, label: str = "", keep_trace: bool = False) -> SolverResult:
    """Минимизирует сепарабельную по кадрам функцию проецированным Adam.

    Args:
        objective: потери и градиенты для пачки кадров по их индексам
        init_params: начальная точка, у всех массивов ведущая ось - кадр
        project: проекция после каждого шага (например max(h, 0))
        schedule: расписание
        label: метка для логов
        keep_trace: сохранять историю потерь по шагам

    Returns:
        SolverResult с лучшими точками по кадрам
    """
    errors = schedule.validate()
    if errors:
        raise ConfigError("; ".join(errors))
    init = {k: np.array(v, dtype=np.float64) for k, v in project(init_params).items()}
    n = len(next(iter(init.values())))

    init_loss, init_grads, bad = _evaluate(objective, init, np.arange(n))
    params = {k: v.copy() for k, v in init.items()}
    grads = {k: v.copy() for k, v in init_grads.items()}
    state = AdamState.zeros_like(params)
    best_params = {k: v.copy() for k, v in init.items()}
    best = init_loss.copy()
    prev = init_loss.copy()

    lr = np.full(n, schedule.lr)
    t_step = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    stall = np.zeros(n, dtype=np.int64)
    halvings = np.zeros(n, dtype=np.int64)
    restarted = np.zeros(n, dtype=bool)
    failed = bad.copy()
    stop_reason = np.full(n, "", dtype=object)
    stop_reason[failed] = STOP_FAILED
    active = ~failed
    if np.any(failed):
        log.warning(f"[{label}] {int(failed.sum())} кадров с NaN/Inf уже в начальной точке")
    trace: List[Dict[str, np.ndarray]] = []
    iteration = 0

    while np.any(active):
        iteration += 1
        rows = np.flatnonzero(active)
        sub_state = AdamState(_take(state.m, rows), _take(state.v, rows))
        stepped, sub_state = adam_step(_take(params, rows), _take(grads, rows), sub_state,
                                       lr[rows], t=t_step[rows] + 1)
        candidate = project(stepped)
        loss, new_grads, bad = _evaluate(objective, candidate, rows)

        steps[rows] += 1

        bad_rows = rows[bad]
        restart = bad_rows[~restarted[bad_rows]]
        give_up = bad_rows[restarted[bad_rows]]
        if restart.size:
            restarted[restart] = True
            lr[restart] = schedule.lr / RESTART_LR_DIVISOR
            t_step[restart] = 0
            stall[restart] = 0
            prev[restart] = init_loss[restart]
            for k in params:
                params[k][restart] = init[k][restart]
                grads[k][restart] = init_grads[k][restart]
                state.m[k][restart] = 0.0
                state.v[k][restart] = 0.0
            capped = restart[steps[restart] >= schedule.max_steps]
            active[capped] = False
            stop_reason[capped] = STOP_MAX_STEPS
            log.warning(f"[{label}] NaN/Inf у кадров {restart.tolist()}, рестарт с lr={schedule.lr / RESTART_LR_DIVISOR:.3g}")
        if give_up.size:
            failed[give_up] = True
            active[give_up] = False
            stop_reason[give_up] = STOP_FAILED
            for k in params:
                params[k][give_up] = best_params[k][give_up]
            log.warning(f"[{label}] повторный NaN/Inf у кадров {give_up.tolist()}, кадры пропущены")

        ok_local = ~bad
        ok = rows[ok_local]
        values = loss[ok_local]
        t_step[ok] += 1
        for k in params:
            params[k][ok] = candidate[k][ok_local]
            grads[k][ok] = new_grads[k][ok_local]
            state.m[k][ok] = sub_state.m[k][ok_local]
            state.v[k][ok] = sub_state.v[k][ok_local]

        improved = values < best[ok] - schedule.eps
        better = ok[improved]
        best[better] = values[improved]
        stall[better] = 0
        for k in params:
            best_params[k][better] = candidate[k][ok_local][improved]
        stalled = ok[~improved]
        stall[stalled] += 1
        halve = stalled[stall[stalled] >= schedule.lr_halve_patience]
        lr[halve] /= schedule.lr_halve_factor
        halvings[halve] += 1
        stall[halve] = 0
        if halve.size:
            log.debug(f"[{label}] шаг {iteration}: {schedule.lr_halve_patience} шагов без прогресса "
                      f"у кадров {halve.tolist()}, lr -> {lr[halve].tolist()}")

        converged = np.abs(values - prev[ok]) < schedule.eps
        done = ok[converged]
        active[done] = False
        stop_reason[done] = STOP_EPS
        capped = ok[~converged & (steps[ok] >= schedule.max_steps)]
        active[capped] = False
        stop_reason[capped] = STOP_MAX_STEPS
        prev[ok] = values

        if keep_trace:
            step_loss = np.full(n, np.nan)
            step_loss[rows] = loss
            trace.append({"loss": step_loss, "best": best.copy(), "lr": lr.copy()})
        if iteration % 1000 == 0:
            log.debug(f"[{label}] шаг {iteration}: активных кадров {int(active.sum())}, "
                      f"средний лучший loss {float(np.nanmean(best)):.6g}")

    result = SolverResult(best_params, best, steps, stop_reason, halvings, restarted, failed, trace)
    s = result.summary()
    log.info(f"[{label}] Решатель: кадров {s['frames']}, остановка по eps {s['eps']}, "
             f"по лимиту {schedule.max_steps} шагов {s['max_steps']}, сбоев {s['failed']}, "
             f"рестартов {s['restarted']}, уменьшений lr {s['lr_halvings']}")
    return result


R = TypeVar("R")


def frame_chunks(n_frames: int, chunk: int) -> List[np.ndarray]:
    if chunk < 1:
        raise ConfigError(f"размер пачки кадров должен быть >= 1, получено: {chunk}")
    return [np.arange(start, min(start + chunk, n_frames)) for start in range(0, n_frames, chunk)]


def map_chunks(solve: Callable[[np.ndarray], R], chunks: Sequence[np.ndarray], threads: int = 1) -> List[R]:
    """Решает пачки кадров, при threads > 1 в пуле потоков; порядок результатов сохраняется."""
    if threads <= 1 or len(chunks) <= 1:
        return [solve(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(solve, chunks))
