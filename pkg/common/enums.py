"""Shared enums for the binary-weighted crossbar simulator.

This module defines every categorical value used across the codebase.
Using enums instead of string literals keeps config files, JSON documents
and CLI flags in sync and prevents typos.
"""

from enum import IntEnum, StrEnum

__all__ = [
    "ActivationKind",
    "CellCode",
    "CostComponent",
    "DatasetName",
    "EvalMode",
    "ExitCode",
    "SweepParameter",
    "TransferMode",
    "VoltageShiftPolicy",
]


class ActivationKind(StrEnum):
    """Activation function applied by a non-input layer."""

    SIGMOID = "sigmoid"
    TANH = "tanh"
    APPROX_SIGMOID = "approx_sigmoid"
    APPROX_TANH = "approx_tanh"

    @property
    def is_tanh_family(self) -> bool:
        return self in (ActivationKind.TANH, ActivationKind.APPROX_TANH)

    @property
    def is_approximate(self) -> bool:
        return self in (ActivationKind.APPROX_SIGMOID, ActivationKind.APPROX_TANH)

    @property
    def output_range(self) -> tuple[float, float]:
        """Mathematical output span of the activation."""
        return (-1.0, 1.0) if self.is_tanh_family else (0.0, 1.0)


class CellCode(StrEnum):
    """Serialized code of one binarized cell: sign plus level."""

    POS_HIGH = "+H"
    POS_LOW = "+L"
    NEG_LOW = "-L"
    NEG_HIGH = "-H"

    @classmethod
    def from_cell(cls, sign: int, is_high: bool) -> "CellCode":
        if sign > 0:
            return cls.POS_HIGH if is_high else cls.POS_LOW
        return cls.NEG_HIGH if is_high else cls.NEG_LOW

    @property
    def sign(self) -> int:
        return 1 if self.value.startswith("+") else -1

    @property
    def is_high(self) -> bool:
        return self.value.endswith("H")


class TransferMode(StrEnum):
    """How analog inference shapes a column current into an activation."""

    CIRCUIT = "circuit"
    IDEAL = "ideal"


class EvalMode(StrEnum):
    """Inference path used by ``bnnsim eval``."""

    DIGITAL = "digital"
    ANALOG = "analog"


class DatasetName(StrEnum):
    MNIST = "mnist"
    IRIS = "iris"


class SweepParameter(StrEnum):
    """Device non-ideality parameters that a fault sweep may vary."""

    P_SWITCH_FAIL = "p_switch_fail"
    SIGMA_R = "sigma_r"
    P_STUCK_ON = "p_stuck_on"
    P_STUCK_OFF = "p_stuck_off"


class CostComponent(StrEnum):
    """Circuit components with itemized power/area data."""

    CROSSBAR_4X10 = "crossbar_4x10"
    WEIGHT_CONTROL = "weight_control"
    SIGMOID = "sigmoid"
    CURRENT_BUFFER = "current_buffer"
    VOLTAGE_BUFFER = "voltage_buffer"
    VOLTAGE_SHIFT = "voltage_shift"
    APPROX_SIGMOID_TANH = "approx_sigmoid_tanh"

    @classmethod
    def from_str(cls, value: str) -> "CostComponent":
        """Parse from string, raising a configuration error for unknown names."""
        try:
            return cls(value)
        except ValueError as exc:
            from common.exceptions import ConfigurationError

            raise ConfigurationError(f"Unknown cost component '{value}'") from exc


class VoltageShiftPolicy(StrEnum):
    """How many difference-amplifier voltage shifts a cost estimate counts."""

    NONE = "none"
    PER_TANH_NEURON = "per_tanh_neuron"
    PER_OUTPUT_NEURON = "per_output_neuron"
    PER_LAYER = "per_layer"


class ExitCode(IntEnum):
    """Process exit codes of the CLI, one per error category."""

    OK = 0
    USAGE = 1
    DATA = 2
    CONSTRAINT = 3
    NUMERIC = 4
