"""Encoding circuits, the CRZ+RY parametric layer and QNN assembly."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .qsim import CircuitSpec, Gate, data_ref, theta_ref

TWO_PI = 2.0 * np.pi


class EncoderKind(enum.Enum):
    ANGLE_ONE_TO_ONE = "angle-1:1"
    ANGLE_FOUR_TO_ONE = "angle-4:1"

    @property
    def features_per_qubit(self) -> int:
        return 1 if self is EncoderKind.ANGLE_ONE_TO_ONE else 4


@dataclass(frozen=True)
class QnnSpec:
    num_qubits: int
    encoder: EncoderKind = EncoderKind.ANGLE_ONE_TO_ONE
    num_layers: int = 3

    def __post_init__(self):
        if self.num_qubits < 2:
            raise ConfigurationError("a QNN needs at least 2 qubits for the CRZ ring")
        if self.num_layers < 1:
            raise ConfigurationError("num_layers must be >= 1")

    @property
    def num_params(self) -> int:
        return self.num_layers * 2 * self.num_qubits

    @property
    def num_features(self) -> int:
        return self.encoder.features_per_qubit * self.num_qubits


def build_encoder(kind: EncoderKind, num_qubits: int) -> CircuitSpec:
    """H on every qubit followed by RZ (1:1) or RZ, RX, RZ, RX (4:1) angle rotations.

    Under 4:1 encoding qubit ``q`` consumes data slots ``4q .. 4q+3``.
    """
    kind = EncoderKind(kind)
    gates = []
    for q in range(num_qubits):
        gates.append(Gate("H", (q,)))
        if kind is EncoderKind.ANGLE_ONE_TO_ONE:
            gates.append(Gate("RZ", (q,), (data_ref(q),)))
        else:
            for slot, axis in enumerate(("RZ", "RX", "RZ", "RX")):
                gates.append(Gate(axis, (q,), (data_ref(4 * q + slot),)))
    return CircuitSpec(num_qubits, gates, num_data=kind.features_per_qubit * num_qubits)


def build_parametric_layer(num_qubits: int, layer_index: int = 0) -> CircuitSpec:
    """Ring of CRZ(q -> q+1 mod n) entanglers, then RY on every qubit.

    Uses theta slots ``offset .. offset+2n-1`` with ``offset = layer_index * 2n``:
    the first ``n`` feed the CRZ gates, the next ``n`` the RY gates.
    """
    if num_qubits < 2:
        raise ConfigurationError("parametric layer needs at least 2 qubits")
    offset = layer_index * 2 * num_qubits
    gates = [
        Gate("CRZ", (q, (q + 1) % num_qubits), (theta_ref(offset + q),))
        for q in range(num_qubits)
    ]
    gates += [Gate("RY", (q,), (theta_ref(offset + num_qubits + q),)) for q in range(num_qubits)]
    return CircuitSpec(num_qubits, gates, num_params=offset + 2 * num_qubits)


def build_qnn(spec: QnnSpec) -> CircuitSpec:
    circuit = build_encoder(spec.encoder, spec.num_qubits)
    for layer in range(spec.num_layers):
        circuit = circuit + build_parametric_layer(spec.num_qubits, layer)
    return circuit


def scale_features(x, lo, hi):
    """Min-max map ``[lo, hi]`` onto ``[0, 2pi]``; values outside the range are clamped.

    ``lo``/``hi`` may be scalars or per-feature arrays broadcastable to ``x``.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        raise ConfigurationError("scale_features needs hi > lo")
    x = np.asarray(x, dtype=np.float64)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0) * TWO_PI


def init_params(num_params: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw in (-pi, pi)."""
    return rng.uniform(-np.pi, np.pi, size=num_params)
