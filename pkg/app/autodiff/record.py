# Copyright (c) 2025 sprowii
"""Запись вычислений и обратный проход.

Граф строится энергично: каждая операция сразу считает значение и
дописывается в конец записи, поэтому порядок записи уже топологический.
Каждая операция описывается парой (forward, backward) в реестре _OPS,
по тому же принципу, что и таблица команд в app.main.

Набор примитивов закрытый: только то, что нужно потокам и функции потерь
декомпозиции. Общего broadcasting нет, формы проверяются явно.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.autodiff.tensor import Tensor
from app.config import SELU_ALPHA, SELU_LAMBDA
from app.errors import GradientError, ShapeError


@dataclass(frozen=True)
class Operation:
    kind: str
    inputs: Tuple[int, ...]
    attrs: Dict[str, Any] = field(default_factory=dict)


# ============================================================================
# РЕЕСТР ПРИМИТИВОВ
# ============================================================================

ForwardFn = Callable[[List[np.ndarray], Dict[str, Any]], np.ndarray]
BackwardFn = Callable[[List[np.ndarray], np.ndarray, np.ndarray, Dict[str, Any]], List[np.ndarray]]

_OPS: Dict[str, Tuple[ForwardFn, BackwardFn]] = {}


def _register(kind: str, forward: ForwardFn, backward: BackwardFn) -> None:
    _OPS[kind] = (forward, backward)


def _unreduce(grad: np.ndarray, shape: Tuple[int, ...], axis: Optional[int], keepdims: bool) -> np.ndarray:
    """Растягивает градиент свёртки обратно до формы входа."""
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def _selu_forward(xs, attrs):
    x = xs[0]
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def _selu_backward(xs, y, g, attrs):
    x = xs[0]
    return [g * SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))]


def _matmul_backward(xs, y, g, attrs):
    a, b = xs
    if b.ndim == 1:
        return [np.outer(g, b), a.T @ g]
    return [g @ b.T, a.T @ g]


def _norm_backward(xs, y, g, attrs):
    axis = attrs["axis"]
    n = _unreduce(y, xs[0].shape, axis, False)
    gn = _unreduce(g, xs[0].shape, axis, False)
    safe = np.where(n > 0, n, 1.0)
    # в нуле берём субградиент 0
    return [np.where(n > 0, gn * xs[0] / safe, 0.0)]


def _take_backward(xs, y, g, attrs):
    axis = attrs["axis"]
    out = np.zeros_like(xs[0])
    index = (slice(None),) * axis + (attrs["indices"],)
    np.add.at(out, index, g)
    return [out]


def _concat_backward(xs, y, g, attrs):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return list(np.split(g, bounds, axis=axis))


def _mul_rows_backward(xs, y, g, attrs):
    a, col = xs
    c = col.reshape(-1, 1)
    return [g * c, np.sum(g * a, axis=1).reshape(col.shape)]


_register("add", lambda xs, a: xs[0] + xs[1], lambda xs, y, g, a: [g, g])
_register("sub", lambda xs, a: xs[0] - xs[1], lambda xs, y, g, a: [g, -g])
_register("mul", lambda xs, a: xs[0] * xs[1], lambda xs, y, g, a: [g * xs[1], g * xs[0]])
_register("div", lambda xs, a: xs[0] / xs[1],
          lambda xs, y, g, a: [g / xs[1], -g * xs[0] / (xs[1] * xs[1])])
_register("matmul", lambda xs, a: xs[0] @ xs[1], _matmul_backward)
_register("scale", lambda xs, a: xs[0] * a["k"], lambda xs, y, g, a: [g * a["k"]])
_register("offset", lambda xs, a: xs[0] + a["k"], lambda xs, y, g, a: [g])
_register("selu", _selu_forward, _selu_backward)
_register("tanh", lambda xs, a: np.tanh(xs[0]), lambda xs, y, g, a: [g * (1.0 - y * y)])
_register("exp", lambda xs, a: np.exp(xs[0]), lambda xs, y, g, a: [g * y])
_register("log", lambda xs, a: np.log(xs[0]), lambda xs, y, g, a: [g / xs[0]])
_register("sum", lambda xs, a: np.sum(xs[0], axis=a["axis"], keepdims=a["keepdims"]),
          lambda xs, y, g, a: [_unreduce(g, xs[0].shape, a["axis"], a["keepdims"])])
_register("sumsq", lambda xs, a: np.sum(xs[0] * xs[0], axis=a["axis"]),
          lambda xs, y, g, a: [2.0 * xs[0] * _unreduce(g, xs[0].shape, a["axis"], False)])
_register("norm", lambda xs, a: np.sqrt(np.sum(xs[0] * xs[0], axis=a["axis"])), _norm_backward)
_register("take", lambda xs, a: np.take(xs[0], a["indices"], axis=a["axis"]), _take_backward)
_register("reshape", lambda xs, a: np.reshape(xs[0], a["shape"]),
          lambda xs, y, g, a: [np.reshape(g, xs[0].shape)])
_register("clamp_min", lambda xs, a: np.maximum(xs[0], a["floor"]),
          lambda xs, y, g, a: [np.where(xs[0] > a["floor"], g, 0.0)])
_register("concat", lambda xs, a: np.concatenate(xs, axis=a["axis"]), _concat_backward)
_register("add_row", lambda xs, a: xs[0] + xs[1], lambda xs, y, g, a: [g, np.sum(g, axis=0)])
_register("mul_rows", lambda xs, a: xs[0] * xs[1].reshape(-1, 1), _mul_rows_backward)


# ============================================================================
# ПРОВЕРКИ ФОРМ
# ============================================================================

def _check_same(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def _check_shapes(kind: str, xs: List[np.ndarray], attrs: Dict[str, Any]) -> None:
    if kind in {"add", "sub", "mul", "div"}:
        _check_same(kind, xs[0], xs[1])
    elif kind == "matmul":
        a, b = xs
        if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    elif kind == "add_row":
        a, row = xs
        if a.ndim != 2 or row.shape != (a.shape[1],):
            raise ShapeError(f"add_row: row {row.shape} does not fit matrix {a.shape}")
    elif kind == "mul_rows":
        a, col = xs
        if a.ndim != 2 or col.size != a.shape[0] or col.ndim > 2:
            raise ShapeError(f"mul_rows: column {col.shape} does not fit matrix {a.shape}")
    elif kind == "concat":
        axis = attrs["axis"]
        ref = xs[0]
        for x in xs[1:]:
            if x.ndim != ref.ndim or any(x.shape[d] != ref.shape[d] for d in range(ref.ndim) if d != axis):
                raise ShapeError(f"concat: shapes {ref.shape} and {x.shape} differ off axis {axis}")
    elif kind == "reshape":
        if int(np.prod(attrs["shape"])) != xs[0].size:
            raise ShapeError(f"reshape: {xs[0].shape} -> {attrs['shape']}")


# ============================================================================
# ЗАПИСЬ
# ============================================================================

class Var:
    """Ссылка на узел записи. Арифметика порождает новые узлы."""

    __slots__ = ("record", "index")

    def __init__(self, record: "ComputationRecord", index: int):
        self.record = record
        self.index = index

    def __hash__(self) -> int:
        return hash((id(self.record), self.index))

    def __eq__(self, other) -> bool:
        return isinstance(other, Var) and other.record is self.record and other.index == self.index

    def __repr__(self) -> str:
        return f"Var(#{self.index}, shape={self.shape})"

    @property
    def value(self) -> np.ndarray:
        return self.record.value_of(self)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def _op(self, kind: str, *others: "Var", **attrs) -> "Var":
        return self.record.apply(kind, [self, *others], **attrs)

    def __add__(self, other):
        if isinstance(other, Var):
            return self._op("add", other)
        return self.offset(float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._op("sub", other)
        return self.offset(-float(other))

    def __rsub__(self, other):
        return self.scale(-1.0).offset(float(other))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self._op("mul", other)
        return self.scale(float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self._op("div", other)
        return self.scale(1.0 / float(other))

    def __neg__(self):
        return self.scale(-1.0)

    def __matmul__(self, other: "Var"):
        return self._op("matmul", other)

    def scale(self, k: float) -> "Var":
        return self._op("scale", k=float(k))

    def offset(self, k: float) -> "Var":
        return self._op("offset", k=float(k))

    def selu(self) -> "Var":
        return self._op("selu")

    def tanh(self) -> "Var":
        return self._op("tanh")

    def exp(self) -> "Var":
        return self._op("exp")

    def log(self) -> "Var":
        return self._op("log")

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Var":
        return self._op("sum", axis=axis, keepdims=keepdims)

    def sumsq(self, axis: Optional[int] = None) -> "Var":
        return self._op("sumsq", axis=axis)

    def norm(self, axis: Optional[int] = None) -> "Var":
        """Евклидова норма (не квадрат)."""
        return self._op("norm", axis=axis)

    def take(self, indices: Sequence[int], axis: int = 0) -> "Var":
        return self._op("take", indices=np.asarray(indices, dtype=np.intp), axis=axis)

    def reshape(self, *shape) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self._op("reshape", shape=tuple(int(s) for s in shape))

    def clamp_min(self, floor: float) -> "Var":
        return self._op("clamp_min", floor=float(floor))


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    if not parts:
        raise ShapeError("concat: empty input")
    return parts[0].record.apply("concat", list(parts), axis=axis)


def add_row(matrix: Var, row: Var) -> Var:
    """matrix + row для каждой строки (смещение плотного слоя)."""
    return matrix.record.apply("add_row", [matrix, row])


def mul_rows(matrix: Var, column: Var) -> Var:
    """Умножает i-ю строку matrix на column[i]."""
    return matrix.record.apply("mul_rows", [matrix, column])


class ComputationRecord:
    """Упорядоченная запись примитивных операций.

    Листья бывают дифференцируемыми и константами. Градиенты считаются
    только там, где от дифференцируемого листа есть путь.
    """

    def __init__(self):
        self._values: List[np.ndarray] = []
        self._ops: List[Optional[Operation]] = []
        self._differentiable: List[bool] = []
        self._needs_grad: List[bool] = []
        self._names: List[str] = []

    def __len__(self) -> int:
        return len(self._values)

    def _append(self, value: np.ndarray, op: Optional[Operation], differentiable: bool,
                needs_grad: bool, name: str) -> Var:
        value.setflags(write=False)
        self._values.append(value)
        self._ops.append(op)
        self._differentiable.append(differentiable)
        self._needs_grad.append(needs_grad)
        self._names.append(name)
        return Var(self, len(self._values) - 1)

    def leaf(self, value, name: str = "", differentiable: bool = True) -> Var:
        tensor = value if isinstance(value, Tensor) else Tensor(value, copy=False)
        return self._append(tensor.values, None, differentiable, differentiable, name)

    def constant(self, value, name: str = "") -> Var:
        return self.leaf(value, name=name, differentiable=False)

    def leaves(self) -> List[Var]:
        return [Var(self, i) for i, op in enumerate(self._ops) if op is None and self._differentiable[i]]

    def name_of(self, var: Var) -> str:
        return self._names[var.index]

    def value_of(self, var: Var) -> np.ndarray:
        self._own(var)
        return self._values[var.index]

    def _own(self, var: Var) -> None:
        if var.record is not self:
            raise ValueError("Var принадлежит другой записи")

    def apply(self, kind: str, inputs: Sequence[Var], **attrs) -> Var:
        if kind not in _OPS:
            raise ValueError(f"Неизвестная операция: {kind}")
        for v in inputs:
            self._own(v)
        xs = [self._values[v.index] for v in inputs]
        _check_shapes(kind, xs, attrs)
        forward, _ = _OPS[kind]
        with np.errstate(all="ignore"):
            out = np.asarray(forward(xs, attrs), dtype=np.float64)
        if not out.flags.owndata or not out.flags.writeable:
            out = out.copy()
        op = Operation(kind, tuple(v.index for v in inputs), attrs)
        needs_grad = any(self._needs_grad[v.index] for v in inputs)
        return self._append(out, op, False, needs_grad, kind)

    # ------------------------------------------------------------------------
    # повтор и обратный проход
    # ------------------------------------------------------------------------

    def replay(self, overrides: Optional[Dict[Var, np.ndarray]] = None, output: Optional[Var] = None) -> np.ndarray:
        """Пересчитывает запись, подменяя значения листьев из overrides."""
        end = len(self._values) - 1 if output is None else output.index
        subst = {}
        for var, value in (overrides or {}).items():
            self._own(var)
            if self._ops[var.index] is not None:
                raise ValueError("Подменять можно только листья")
            arr = np.asarray(value, dtype=np.float64)
            if arr.shape != self._values[var.index].shape:
                raise ShapeError(f"override for #{var.index}: {arr.shape} != {self._values[var.index].shape}")
            subst[var.index] = arr
        values: List[np.ndarray] = []
        with np.errstate(all="ignore"):
            for i in range(end + 1):
                op = self._ops[i]
                if op is None:
                    values.append(subst.get(i, self._values[i]))
                    continue
                forward, _ = _OPS[op.kind]
                values.append(np.asarray(forward([values[j] for j in op.inputs], op.attrs), dtype=np.float64))
        return values[end]

    def backward(self, output: Optional[Var] = None) -> Dict[int, np.ndarray]:
        """Градиенты скалярного выхода по дифференцируемым листьям.

        Raises:
            ShapeError: выход не скалярный
            GradientError: в обратном проходе появился NaN/Inf
        """
        end = len(self._values) - 1 if output is None else output.index
        if output is not None:
            self._own(output)
        if end < 0:
            raise ShapeError("пустая запись")
        if self._values[end].size != 1:
            raise ShapeError(f"backward требует скалярный выход, форма {self._values[end].shape}")

        grads: List[Optional[np.ndarray]] = [None] * (end + 1)
        grads[end] = np.ones_like(self._values[end])
        with np.errstate(all="ignore"):
            for i in range(end, -1, -1):
                g = grads[i]
                op = self._ops[i]
                if g is None or op is None or not self._needs_grad[i]:
                    continue
                _, backward = _OPS[op.kind]
                xs = [self._values[j] for j in op.inputs]
                partials = backward(xs, self._values[i], g, op.attrs)
                for j, partial in zip(op.inputs, partials):
                    if not self._needs_grad[j]:
                        continue
                    if not np.all(np.isfinite(partial)):
                        raise GradientError(i, op.kind)
                    grads[j] = partial if grads[j] is None else grads[j] + partial
                grads[i] = None

        result = {}
        for i in range(end + 1):
            if self._ops[i] is None and self._differentiable[i]:
                g = grads[i]
                result[i] = np.zeros_like(self._values[i]) if g is None else np.array(g, dtype=np.float64)
        return result
