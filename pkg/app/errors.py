# Copyright (c) 2025 sprowii
"""Иерархия ошибок.

Все ошибки пакета наследуются от DDSError, чтобы CLI мог выдать одну
машиночитаемую строку. Ошибки «плохих данных» дополнительно наследуют
ValueError.
"""


class DDSError(Exception):
    """Базовая ошибка пакета."""

    @property
    def kind(self) -> str:
        return type(self).__name__


# --- autodiff ---

class NonFiniteError(DDSError, ValueError):
    """NaN/Inf в значениях тензора."""


class ShapeError(DDSError, ValueError):
    """Несовпадение размерностей."""


class GradientError(DDSError, RuntimeError):
    """Ошибка обратного прохода; сообщение называет операцию."""

    def __init__(self, op_index: int, op_kind: str, detail: str = "NaN in backward pass"):
        self.op_index = op_index
        self.op_kind = op_kind
        super().__init__(f"{detail} at op #{op_index} ({op_kind})")


# --- flow ---

class FlowOverflowError(DDSError, ArithmeticError):
    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(f"overflow in inverse at coupling layer {layer_index}")


class FlowTrainingError(DDSError, RuntimeError):
    def __init__(self, message: str, epoch: int = -1, batch: int = -1):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")


class ModelFormatError(DDSError, ValueError):
    """Файл модели не читается."""


class NotAModelFileError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


# --- dsp / storage ---

class AudioFormatError(DDSError, ValueError):
    pass


class UnsupportedCodecError(AudioFormatError):
    pass


class MalformedWavError(AudioFormatError):
    pass


class MatrixFormatError(DDSError, ValueError):
    pass


# --- data / cli ---

class DatasetError(DDSError, ValueError):
    pass


class SplitError(DatasetError):
    pass


class ConfigError(DDSError, ValueError):
    pass


class MissingInputError(DDSError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"missing inputs: {', '.join(str(m) for m in self.missing)}")
