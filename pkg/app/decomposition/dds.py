# Copyright (c) 2025 sprowii
"""Differentiable Dictionary Search.

Для каждого кадра s_t совместно ищутся латентные коды z_t^k (по одному на
источник) и активации h_t ≥ 0. Компонента источника k - f_k⁻¹(z_t^k) через
замороженный NoteFlow. Функция потерь кадра:

    ‖s_t − Σ_k h_t^k·f_k⁻¹(z_t^k)‖₂ − c / (D·max(Σ_k h_t^k, σ)) · Σ_k h_t^k·log p_Z(z_t^k)

Штраф использует log p_Z латента, без log|det J|.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.autodiff import ComputationRecord, Var, concat, mul_rows
from app.config import DDS_PENALTY_C, DDS_SIGMA_FLOOR, FRAME_CHUNK
from app.decomposition.schedule import SolverResult, SolverSchedule, frame_chunks, map_chunks, run_projected_adam
from app.errors import ShapeError
from app.flow.models import FlowModel
from app.flow.transform import inverse, inverse_graph, log_prior_graph, parameter_vars
from app.logging_config import log


@dataclass
class DDSState:
    Z: np.ndarray  # (D, K, T)
    H: np.ndarray  # (K, T)
    c: float = DDS_PENALTY_C

    def validate(self) -> List[str]:
        errors = []
        if self.Z.ndim != 3 or self.H.ndim != 2:
            errors.append(f"ожидались Z (D, K, T) и H (K, T), формы {self.Z.shape}, {self.H.shape}")
        elif self.Z.shape[1:] != self.H.shape:
            errors.append(f"Z {self.Z.shape} не согласован с H {self.H.shape}")
        if np.any(self.H < 0):
            errors.append("H содержит отрицательные значения")
        if not np.all(np.isfinite(self.Z)):
            errors.append("NaN/Inf в Z")
        return errors


@dataclass
class DDSResult:
    H: np.ndarray  # (K, T)
    Z: np.ndarray  # (D, K, T)
    reconstruction: np.ndarray  # (D, T)
    loss: np.ndarray  # (T,)
    residual: np.ndarray  # (T,)
    failed: np.ndarray  # (T,)
    summary: Dict[str, int] = field(default_factory=dict)

    @property
    def state(self) -> DDSState:
        return DDSState(self.Z, self.H)


def _check_flows(flows: Sequence[FlowModel], dim: int) -> None:
    if not flows:
        raise ShapeError("нужен хотя бы один NoteFlow")
    for flow in flows:
        if flow.dim != dim:
            raise ShapeError(f"NoteFlow {flow.source_label!r}: D={flow.dim}, у спектрограммы D={dim}")


def dds_graph(s: Var, z: Var, h: Var, flows: Sequence[FlowModel], c: float,
              sigma_floor: float = DDS_SIGMA_FLOOR) -> Tuple[Var, Var, Var]:
    """Функция потерь для пачки кадров.

    Args:
        s: кадры (n, D)
        z: коды (n, K, D)
        h: активации (n, K)

    Returns:
        (loss (n,), невязка (n,), реконструкция (n, D))
    """
    rec = s.record
    n, dim = s.shape
    recon = None
    log_priors = []
    for k, flow in enumerate(flows):
        z_k = z.take([k], axis=1).reshape(n, dim)
        w_k = inverse_graph(flow, z_k, parameter_vars(rec, flow, differentiable=False))
        part = mul_rows(w_k, h.take([k], axis=1))
        recon = part if recon is None else recon + part
        if c != 0:
            log_priors.append(log_prior_graph(z_k).reshape(n, 1))
    residual = (s - recon).norm(axis=1)
    if c == 0:
        return residual, residual, recon
    weighted = (h * concat(log_priors, axis=1)).sum(axis=1)
    penalty = (weighted / h.sum(axis=1).clamp_min(sigma_floor)).scale(-c / dim)
    return residual + penalty, residual, recon


def dds_loss(s_t, z_t, h_t, flows: Sequence[FlowModel], c: float = DDS_PENALTY_C) -> float:
    """Потери одного кадра: s_t (D,), z_t (K, D), h_t (K,)."""
    s_arr = np.asarray(s_t, dtype=np.float64).reshape(1, -1)
    z_arr = np.asarray(z_t, dtype=np.float64)
    h_arr = np.asarray(h_t, dtype=np.float64).reshape(1, -1)
    _check_flows(flows, s_arr.shape[1])
    if z_arr.shape != (len(flows), s_arr.shape[1]) or h_arr.shape[1] != len(flows):
        raise ShapeError(f"z {z_arr.shape}, h {h_arr.shape} не согласованы с K={len(flows)}, D={s_arr.shape[1]}")
    rec = ComputationRecord()
    loss, _, _ = dds_graph(rec.constant(s_arr), rec.constant(z_arr.reshape(1, *z_arr.shape)),
                           rec.constant(h_arr), flows, c)
    return float(loss.value[0])


def dds_decompose(S, flows: Sequence[FlowModel], schedule: Optional[SolverSchedule] = None,
                  c: float = DDS_PENALTY_C, h_init: Optional[float] = None, chunk: int = FRAME_CHUNK,
                  threads: int = 1, label: str = "dds") -> DDSResult:
    """Декомпозиция S (Spectrogram или (D, T)) по K замороженным NoteFlow.

    Старт: z = 0, h = 1/K. После каждого шага h ← max(h, 0), z не
    ограничен. Параметры потоков не меняются.

    Raises:
        ShapeError: D спектрограммы и потоков различаются
    """
    schedule = schedule or SolverSchedule()
    values = np.asarray(S.values if hasattr(S, "values") else S, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"ожидалась спектрограмма D×T, форма {values.shape}")
    dim, n_frames = values.shape
    _check_flows(flows, dim)
    n_sources = len(flows)
    frames = np.ascontiguousarray(values.T)
    h0 = 1.0 / n_sources if h_init is None else float(h_init)

    def evaluate(chunk_frames, z, h, differentiable):
        rec = ComputationRecord()
        z_var = rec.leaf(z, "z", differentiable=differentiable)
        h_var = rec.leaf(h, "h", differentiable=differentiable)
        loss, residual, recon = dds_graph(rec.constant(chunk_frames, "s"), z_var, h_var, flows, c)
        return rec, z_var, h_var, loss, residual, recon

    def solve(rows: np.ndarray) -> Tuple[np.ndarray, SolverResult]:
        chunk_frames = frames[rows]

        def objective(params: Dict[str, np.ndarray], idx: np.ndarray):
            rec, z, h, loss, _, _ = evaluate(chunk_frames[idx], params["z"], params["h"], True)
            if not np.all(np.isfinite(loss.value)):
                return loss.value.copy(), None
            grads = rec.backward(loss.sum())
            return loss.value.copy(), {"z": grads[z.index], "h": grads[h.index]}

        init = {"z": np.zeros((len(rows), n_sources, dim)), "h": np.full((len(rows), n_sources), h0)}
        result = run_projected_adam(objective, init, lambda p: {"z": p["z"], "h": np.maximum(p["h"], 0.0)},
                                    schedule, label=f"{label} кадры {rows[0]}..{rows[-1]}")
        return rows, result

    Z = np.zeros((n_frames, n_sources, dim))
    H = np.zeros((n_frames, n_sources))
    failed = np.zeros(n_frames, dtype=bool)
    totals: Dict[str, int] = {}
    for rows, result in map_chunks(solve, frame_chunks(n_frames, chunk), threads):
        Z[rows] = result.params["z"]
        H[rows] = result.params["h"]
        failed[rows] = result.failed
        for key, value in result.summary().items():
            totals[key] = totals.get(key, 0) + value

    _, _, _, loss, residual, recon = evaluate(frames, Z, H, False)
    log.info(f"[{label}] K={n_sources}, T={n_frames}, c={c}, средняя невязка {float(np.mean(residual.value)):.6g}")
    return DDSResult(
        H=H.T.copy(),
        Z=np.transpose(Z, (2, 1, 0)).copy(),
        reconstruction=recon.value.T.copy(),
        loss=loss.value.copy(),
        residual=residual.value.copy(),
        failed=failed,
        summary=totals,
    )


def components(state: DDSState, flows: Sequence[FlowModel]) -> np.ndarray:
    """w_t^k = f_k⁻¹(z_t^k), форма (D, K, T)."""
    dim, n_sources, n_frames = state.Z.shape
    if n_sources != len(flows):
        raise ShapeError(f"в Z {n_sources} источников, потоков {len(flows)}")
    out = np.zeros_like(state.Z)
    for k, flow in enumerate(flows):
        if n_frames:
            out[:, k, :] = inverse(flow, state.Z[:, k, :].T).T
    return out


def reconstruct(state: DDSState, flows: Sequence[FlowModel]) -> np.ndarray:
    """ŝ_t = Σ_k h_t^k·f_k⁻¹(z_t^k), форма (D, T)."""
    errors = state.validate()
    if errors:
        raise ShapeError("; ".join(errors))
    w = components(state, flows)
    recon = np.zeros((state.Z.shape[0], state.Z.shape[2]))
    for k in range(len(flows)):
        recon = recon + w[:, k, :] * state.H[k]
    return recon
