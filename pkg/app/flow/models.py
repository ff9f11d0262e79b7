# Copyright (c) 2025 sprowii
"""Модели данных NoteFlow: слои, модель потока, настройки обучения."""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from app.config import (
    FLOW_BATCH_SIZE,
    FLOW_COUPLINGS,
    FLOW_DEQUANT_SIGMA,
    FLOW_HIDDEN_LAYERS,
    FLOW_HIDDEN_WIDTH,
    FLOW_LR,
    FLOW_MAX_EPOCHS,
    FLOW_PATIENCE,
    FLOW_SCALE_BOUND,
    FLOW_VAL_FRACTION,
)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)

    @classmethod
    def lecun_normal(cls, rng: np.random.Generator, n_in: int, n_out: int) -> "DenseLayer":
        """Гауссова инициализация с дисперсией 1/fan_in (самонормализация SELU)."""
        std = 1.0 / np.sqrt(max(n_in, 1))
        return cls(_frozen(rng.normal(0.0, std, size=(n_in, n_out))), _frozen(np.zeros(n_out)))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "DenseLayer":
        return cls(_frozen(np.zeros((n_in, n_out))), _frozen(np.zeros(n_out)))


@dataclass(frozen=True, eq=False)
class CouplingLayer:
    """Аффинный coupling: первые dim // 2 координат проходят без изменений.

    Остальные преобразуются как x_b * exp(s(x_a)) + t(x_a). Последний слой
    обеих сетей (scale_net, shift_net) линейный, скрытые слои с SELU.
    """
    dim: int
    scale_net: Tuple[DenseLayer, ...]
    shift_net: Tuple[DenseLayer, ...]

    @property
    def n_pass(self) -> int:
        return self.dim // 2

    @property
    def n_transformed(self) -> int:
        return self.dim - self.n_pass

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, hidden_width: int, n_hidden: int) -> "CouplingLayer":
        n_pass = dim // 2

        def mlp() -> Tuple[DenseLayer, ...]:
            widths = [n_pass] + [hidden_width] * n_hidden
            hidden = [DenseLayer.lecun_normal(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
            # нулевой выходной слой: поток стартует с тождественного отображения
            return tuple(hidden + [DenseLayer.zeros(widths[-1], dim - n_pass)])

        return cls(dim, mlp(), mlp())

    def validate(self) -> List[str]:
        errors = []
        for net_name, net in (("scale", self.scale_net), ("shift", self.shift_net)):
            if not net:
                errors.append(f"{net_name}_net пуст")
                continue
            if net[0].weight.shape[0] != self.n_pass:
                errors.append(f"{net_name}_net: вход {net[0].weight.shape[0]}, ожидалось {self.n_pass}")
            if net[-1].weight.shape[1] != self.n_transformed:
                errors.append(f"{net_name}_net: выход {net[-1].weight.shape[1]}, ожидалось {self.n_transformed}")
            for a, b in zip(net[:-1], net[1:]):
                if a.weight.shape[1] != b.weight.shape[0]:
                    errors.append(f"{net_name}_net: несовместимые слои {a.weight.shape} -> {b.weight.shape}")
            for layer in net:
                if layer.bias.shape != (layer.weight.shape[1],):
                    errors.append(f"{net_name}_net: bias {layer.bias.shape} для веса {layer.weight.shape}")
        return errors


@dataclass(frozen=True, eq=False)
class PermutationLayer:
    perm: np.ndarray
    seed: int

    @classmethod
    def draw(cls, dim: int, seed: int) -> "PermutationLayer":
        perm = np.random.default_rng(seed).permutation(dim).astype(np.intp)
        perm.setflags(write=False)
        return cls(perm, seed)

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.perm)

    def validate(self) -> List[str]:
        if sorted(self.perm.tolist()) != list(range(len(self.perm))):
            return [f"перестановка с seed={self.seed} не является биекцией"]
        return []


@dataclass(frozen=True, eq=False)
class FlowModel:
    """NoteFlow: couplings, между соседними стоят фиксированные перестановки.

    Модель неизменяема: обучение возвращает новые экземпляры через
    with_parameters, поэтому её можно читать из нескольких потоков.
    """
    dim: int
    couplings: Tuple[CouplingLayer, ...]
    permutations: Tuple[PermutationLayer, ...]
    source_label: str = ""
    hidden_width: int = FLOW_HIDDEN_WIDTH
    n_hidden: int = FLOW_HIDDEN_LAYERS
    scale_bound: float = FLOW_SCALE_BOUND
    seed: int = 0
    _tensors: Dict[str, np.ndarray] = field(default=None, repr=False, compare=False)

    @classmethod
    def create(cls, dim: int, source_label: str = "", n_coupling: int = FLOW_COUPLINGS,
               hidden_width: int = FLOW_HIDDEN_WIDTH, n_hidden: int = FLOW_HIDDEN_LAYERS,
               scale_bound: float = FLOW_SCALE_BOUND, seed: int = 0) -> "FlowModel":
        """Новая модель; выходные слои нулевые, так что поток равен перестановке."""
        if dim < 1 or n_coupling < 1 or hidden_width < 1 or n_hidden < 1:
            raise ValueError(f"Некорректная архитектура: D={dim}, couplings={n_coupling}, "
                             f"width={hidden_width}, hidden={n_hidden}")
        rng = np.random.default_rng(seed)
        couplings, permutations = [], []
        for i in range(n_coupling):
            couplings.append(CouplingLayer.create(rng, dim, hidden_width, n_hidden))
            if i < n_coupling - 1:
                permutations.append(PermutationLayer.draw(dim, int(rng.integers(0, 2**31 - 1))))
        return cls(dim, tuple(couplings), tuple(permutations), source_label,
                   hidden_width, n_hidden, float(scale_bound), int(seed))

    @property
    def n_coupling(self) -> int:
        return len(self.couplings)

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """Все параметры в каноническом порядке (он же порядок в файле модели)."""
        if self._tensors is not None:
            return self._tensors
        params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for i, layer in enumerate(self.couplings):
            for net_name, net in (("scale", layer.scale_net), ("shift", layer.shift_net)):
                for j, dense in enumerate(net):
                    params[f"c{i}.{net_name}.{j}.w"] = dense.weight
                    params[f"c{i}.{net_name}.{j}.b"] = dense.bias
        object.__setattr__(self, "_tensors", params)
        return params

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    @staticmethod
    def parameter_shapes(dim: int, n_coupling: int, hidden_width: int, n_hidden: int) -> "OrderedDict[str, Tuple[int, ...]]":
        """Имена и формы параметров архитектуры в каноническом порядке."""
        n_pass = dim // 2
        widths = [n_pass] + [hidden_width] * n_hidden + [dim - n_pass]
        shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
        for i in range(n_coupling):
            for net_name in ("scale", "shift"):
                for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
                    shapes[f"c{i}.{net_name}.{j}.w"] = (a, b)
                    shapes[f"c{i}.{net_name}.{j}.b"] = (b,)
        return shapes

    @classmethod
    def assemble(cls, dim: int, params: Dict[str, np.ndarray], permutations: Tuple[PermutationLayer, ...],
                 source_label: str = "", hidden_width: int = FLOW_HIDDEN_WIDTH, n_hidden: int = FLOW_HIDDEN_LAYERS,
                 scale_bound: float = FLOW_SCALE_BOUND, seed: int = 0) -> "FlowModel":
        """Собирает модель из готовых параметров (загрузка, шаг оптимизатора)."""
        n_coupling = len(permutations) + 1
        shapes = cls.parameter_shapes(dim, n_coupling, hidden_width, n_hidden)
        if set(params) != set(shapes):
            raise ValueError("Набор параметров не совпадает с архитектурой модели")
        couplings = []
        for i in range(n_coupling):
            nets = {}
            for net_name in ("scale", "shift"):
                dense_layers = []
                for j in range(n_hidden + 1):
                    w = np.asarray(params[f"c{i}.{net_name}.{j}.w"])
                    b = np.asarray(params[f"c{i}.{net_name}.{j}.b"])
                    if w.shape != shapes[f"c{i}.{net_name}.{j}.w"] or b.shape != shapes[f"c{i}.{net_name}.{j}.b"]:
                        raise ValueError(f"c{i}.{net_name}.{j}: форма {w.shape}/{b.shape}, "
                                         f"ожидалось {shapes[f'c{i}.{net_name}.{j}.w']}")
                    dense_layers.append(DenseLayer(_frozen(w), _frozen(b)))
                nets[net_name] = tuple(dense_layers)
            couplings.append(CouplingLayer(dim, nets["scale"], nets["shift"]))
        return cls(dim, tuple(couplings), tuple(permutations), source_label,
                   hidden_width, n_hidden, float(scale_bound), int(seed))

    def with_parameters(self, params: Dict[str, np.ndarray]) -> "FlowModel":
        return self.assemble(self.dim, params, self.permutations, self.source_label,
                             self.hidden_width, self.n_hidden, self.scale_bound, self.seed)

    def validate(self) -> List[str]:
        errors = []
        if self.dim < 1:
            errors.append(f"D должно быть >= 1, получено: {self.dim}")
        if not self.couplings:
            errors.append("модель без coupling-слоёв")
        if len(self.permutations) != max(len(self.couplings) - 1, 0):
            errors.append(f"перестановок {len(self.permutations)}, ожидалось {len(self.couplings) - 1}")
        if not self.scale_bound > 0:
            errors.append(f"scale_bound должен быть > 0, получено: {self.scale_bound}")
        for i, layer in enumerate(self.couplings):
            if layer.dim != self.dim:
                errors.append(f"coupling {i}: D={layer.dim}, ожидалось {self.dim}")
            errors.extend(f"coupling {i}: {e}" for e in layer.validate())
        for i, perm in enumerate(self.permutations):
            if len(perm.perm) != self.dim:
                errors.append(f"перестановка {i}: длина {len(perm.perm)}, ожидалось {self.dim}")
            errors.extend(perm.validate())
        for name, p in self.parameters().items():
            if not np.all(np.isfinite(p)):
                errors.append(f"{name}: NaN/Inf в параметрах")
        return errors


@dataclass
class TrainConfig:
    """Гиперпараметры обучения NoteFlow."""
    lr: float = FLOW_LR
    max_epochs: int = FLOW_MAX_EPOCHS
    batch_size: int = FLOW_BATCH_SIZE
    patience: int = FLOW_PATIENCE
    val_fraction: float = FLOW_VAL_FRACTION
    seed: int = 0
    dequant_noise_sigma: float = FLOW_DEQUANT_SIGMA
    n_coupling: int = FLOW_COUPLINGS
    hidden_width: int = FLOW_HIDDEN_WIDTH
    n_hidden: int = FLOW_HIDDEN_LAYERS
    scale_bound: float = FLOW_SCALE_BOUND
    # как часто писать сводку эпохи в INFO
    log_every: int = 10

    def validate(self) -> List[str]:
        errors = []
        if not self.lr > 0:
            errors.append(f"lr должен быть > 0, получено: {self.lr}")
        if self.max_epochs < 1:
            errors.append(f"max_epochs должен быть >= 1, получено: {self.max_epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size должен быть >= 1, получено: {self.batch_size}")
        if not (1 <= self.patience <= self.max_epochs):
            errors.append(f"patience должен быть от 1 до max_epochs ({self.max_epochs}), получено: {self.patience}")
        if not (0 < self.val_fraction < 1):
            errors.append(f"val_fraction должен быть в (0, 1), получено: {self.val_fraction}")
        if self.dequant_noise_sigma < 0:
            errors.append(f"dequant_noise_sigma должен быть >= 0, получено: {self.dequant_noise_sigma}")
        if self.n_coupling < 1 or self.hidden_width < 1 or self.n_hidden < 1:
            errors.append("n_coupling, hidden_width и n_hidden должны быть >= 1")
        if not self.scale_bound > 0:
            errors.append(f"scale_bound должен быть > 0, получено: {self.scale_bound}")
        if self.log_every < 1:
            errors.append(f"log_every должен быть >= 1, получено: {self.log_every}")
        return errors
