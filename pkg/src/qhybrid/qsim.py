"""Dense statevector simulator.

Qubit 0 is the most significant bit of the basis index, so ``|01>`` is
index 1 and qubit 1 is the one flipped.  Rotation conventions::

    RX(t) = exp(-i t X / 2)      RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]
    RZ(t) = diag(e^{-it/2}, e^{+it/2})
    CRZ(t) = diag(1, 1, e^{-it/2}, e^{+it/2})   on (control, target)
    ROT(a, b, c) = RZ(c) RY(b) RZ(a)

Every kernel works on a *batch* of statevectors stored as a C-contiguous
``(batch, 2**n)`` complex128 array and updates it in place.  Gate angles may
be scalars or one angle per batch row, which is what lets the quanvolution
and gradient code push thousands of small circuits through one numpy call.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .errors import BindingError, ConfigurationError, WireError

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

MAX_QUBITS = 20

# kind -> (number of wires, number of angles)
GATE_SIGNATURES = {
    "H": (1, 0),
    "X": (1, 0),
    "RX": (1, 1),
    "RY": (1, 1),
    "RZ": (1, 1),
    "ROT": (1, 3),
    "CNOT": (2, 0),
    "CRZ": (2, 1),
}

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class ParamRef:
    """Angle read from the data-feature vector or the trainable vector at run time."""

    source: str
    index: int

    def __post_init__(self):
        if self.source not in ("data", "theta"):
            raise ConfigurationError(f"unknown parameter source {self.source!r}")
        if self.index < 0:
            raise BindingError(f"negative parameter index {self.index}")


def data_ref(index: int) -> ParamRef:
    return ParamRef("data", int(index))


def theta_ref(index: int) -> ParamRef:
    return ParamRef("theta", int(index))


Angle = Union[float, ParamRef]


@dataclass(frozen=True)
class Gate:
    kind: str
    wires: tuple
    params: tuple = ()

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        object.__setattr__(
            self,
            "params",
            tuple(p if isinstance(p, ParamRef) else float(p) for p in self.params),
        )
        if kind not in GATE_SIGNATURES:
            raise ConfigurationError(f"unsupported gate kind {kind!r}")
        n_wires, n_params = GATE_SIGNATURES[kind]
        if len(self.wires) != n_wires:
            raise WireError(f"{kind} acts on {n_wires} wire(s), got {self.wires}")
        if len(set(self.wires)) != len(self.wires):
            raise WireError(f"{kind} wires must be distinct, got {self.wires}")
        if any(w < 0 for w in self.wires):
            raise WireError(f"negative wire in {self.wires}")
        if len(self.params) != n_params:
            raise ConfigurationError(f"{kind} takes {n_params} angle(s), got {len(self.params)}")

    @property
    def is_parametrized(self) -> bool:
        return any(isinstance(p, ParamRef) for p in self.params)

    def inverse(self) -> "Gate":
        if self.is_parametrized:
            raise BindingError("inverse needs literal angles")
        if self.kind == "ROT":
            a, b, c = self.params
            return Gate("ROT", self.wires, (-c, -b, -a))
        return Gate(self.kind, self.wires, tuple(-p for p in self.params))


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered gate list plus the sizes of the vectors its references index into.

    ``num_data`` / ``num_params`` default to one past the largest reference
    seen; pass them explicitly to reserve unused slots.
    """

    num_qubits: int
    gates: tuple = ()
    num_data: int = None
    num_params: int = None

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        need = {"data": 0, "theta": 0}
        for g in gates:
            if max(g.wires) >= self.num_qubits:
                raise WireError(f"{g.kind} wires {g.wires} outside {self.num_qubits}-qubit register")
            for p in g.params:
                if isinstance(p, ParamRef):
                    need[p.source] = max(need[p.source], p.index + 1)
        for attr, source in (("num_data", "data"), ("num_params", "theta")):
            declared = getattr(self, attr)
            if declared is None:
                object.__setattr__(self, attr, need[source])
            elif declared < need[source]:
                raise BindingError(
                    f"{source} reference index {need[source] - 1} out of bounds for length {declared}"
                )

    def __add__(self, other: "CircuitSpec") -> "CircuitSpec":
        if other.num_qubits != self.num_qubits:
            raise ConfigurationError("cannot concatenate circuits of different widths")
        return CircuitSpec(
            self.num_qubits,
            self.gates + other.gates,
            max(self.num_data, other.num_data),
            max(self.num_params, other.num_params),
        )

    def __len__(self):
        return len(self.gates)


class StateVector:
    """Amplitudes of one ``num_qubits`` register (complex128, length ``2**n``)."""

    def __init__(self, amplitudes, num_qubits: int | None = None):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128).reshape(-1)
        if num_qubits is None:
            num_qubits = int(round(np.log2(amps.size)))
        _check_num_qubits(num_qubits)
        if amps.size != 1 << num_qubits:
            raise ConfigurationError(f"{amps.size} amplitudes do not describe {num_qubits} qubits")
        self.num_qubits = num_qubits
        self.amplitudes = amps

    def __repr__(self):
        return f"StateVector(num_qubits={self.num_qubits})"

    def __len__(self):
        return self.amplitudes.size

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.num_qubits)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def _batch(self) -> np.ndarray:
        return self.amplitudes.reshape(1, -1)


def _check_num_qubits(n):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"num_qubits must be in 1..{MAX_QUBITS}, got {n!r}")


def init_zero_state(num_qubits: int) -> StateVector:
    _check_num_qubits(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, num_qubits)


def zero_states(batch: int, num_qubits: int) -> np.ndarray:
    _check_num_qubits(num_qubits)
    amps = np.zeros((batch, 1 << num_qubits), dtype=np.complex128)
    amps[:, 0] = 1.0
    return amps


# ---------------------------------------------------------------------------
# batched kernels

def _col(angle, ndim):
    """Shape a scalar or per-row angle array so it broadcasts over a view of rank ``ndim``."""
    a = np.asarray(angle)
    if a.ndim == 0:
        return a
    return a.reshape((-1,) + (1,) * (ndim - 1))


def _pair_view(amps, n, q):
    return amps.reshape(amps.shape[0], 1 << q, 2, 1 << (n - q - 1))


def _two_wire_view(amps, n, a, b):
    lo, hi = (a, b) if a < b else (b, a)
    return amps.reshape(amps.shape[0], 1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - hi - 1))


def _sub(view, a, b, va, vb):
    """Slice of a two-wire view where wire ``a`` has value ``va`` and ``b`` has ``vb``."""
    if a < b:
        return view[:, :, va, :, vb, :]
    return view[:, :, vb, :, va, :]


def apply_h(amps, n, q):
    v = _pair_view(amps, n, q)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] += a1
    v[:, :, 1, :] *= -1.0
    v[:, :, 1, :] += a0
    v *= _INV_SQRT2


def apply_x(amps, n, q):
    v = _pair_view(amps, n, q)
    a0 = v[:, :, 0, :].copy()
    v[:, :, 0, :] = v[:, :, 1, :]
    v[:, :, 1, :] = a0


def apply_rx(amps, n, q, theta):
    v = _pair_view(amps, n, q)
    c = _col(np.cos(np.multiply(theta, 0.5)), 3)
    ms = _col(-1j * np.sin(np.multiply(theta, 0.5)), 3)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    v[:, :, 0, :] = c * a0 + ms * a1
    v[:, :, 1, :] = ms * a0 + c * a1


def apply_ry(amps, n, q, theta):
    v = _pair_view(amps, n, q)
    c = _col(np.cos(np.multiply(theta, 0.5)), 3)
    s = _col(np.sin(np.multiply(theta, 0.5)), 3)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    v[:, :, 0, :] = c * a0 - s * a1
    v[:, :, 1, :] = s * a0 + c * a1


def apply_rz(amps, n, q, theta):
    v = _pair_view(amps, n, q)
    half = np.multiply(theta, 0.5)
    v[:, :, 0, :] *= _col(np.exp(-1j * half), 3)
    v[:, :, 1, :] *= _col(np.exp(1j * half), 3)


def apply_crz(amps, n, control, target, theta):
    v = _two_wire_view(amps, n, control, target)
    half = np.multiply(theta, 0.5)
    _sub(v, control, target, 1, 0)[...] *= _col(np.exp(-1j * half), 4)
    _sub(v, control, target, 1, 1)[...] *= _col(np.exp(1j * half), 4)


def apply_cnot(amps, n, control, target):
    v = _two_wire_view(amps, n, control, target)
    s10 = _sub(v, control, target, 1, 0)
    s11 = _sub(v, control, target, 1, 1)
    tmp = s10.copy()
    s10[...] = s11
    s11[...] = tmp


def apply_matrix_1q(amps, n, q, matrix):
    """Generic 2x2 unitary; ``matrix`` is (2, 2) or (batch, 2, 2)."""
    m = np.asarray(matrix, dtype=np.complex128)
    v = _pair_view(amps, n, q)
    if m.ndim == 2:
        m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    else:
        m00, m01, m10, m11 = (_col(m[:, i, j], 3) for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    v[:, :, 0, :] = m00 * a0 + m01 * a1
    v[:, :, 1, :] = m10 * a0 + m11 * a1


def _apply_resolved_numpy(amps, n, kind, wires, angles):
    if kind == "H":
        apply_h(amps, n, wires[0])
    elif kind == "X":
        apply_x(amps, n, wires[0])
    elif kind == "RX":
        apply_rx(amps, n, wires[0], angles[0])
    elif kind == "RY":
        apply_ry(amps, n, wires[0], angles[0])
    elif kind == "RZ":
        apply_rz(amps, n, wires[0], angles[0])
    elif kind == "ROT":
        apply_rz(amps, n, wires[0], angles[0])
        apply_ry(amps, n, wires[0], angles[1])
        apply_rz(amps, n, wires[0], angles[2])
    elif kind == "CNOT":
        apply_cnot(amps, n, wires[0], wires[1])
    elif kind == "CRZ":
        apply_crz(amps, n, wires[0], wires[1], angles[0])
    else:  # pragma: no cover - Gate validates kinds
        raise ConfigurationError(kind)


def _per_row(angle, batch):
    return np.ascontiguousarray(np.broadcast_to(np.asarray(angle, dtype=np.float64), (batch,)))


_OPCODES = {"H": 0, "X": 1, "RX": 2, "RY": 3, "RZ": 4, "CNOT": 5, "CRZ": 6}


def _apply_resolved_numba(amps, n, kind, wires, angles):
    batch = amps.shape[0]
    if kind == "ROT":
        for axis, angle in zip(("RZ", "RY", "RZ"), angles):
            _apply_resolved_numba(amps, n, axis, wires, [angle])
        return
    w1 = wires[1] if len(wires) == 2 else 0
    ops = np.array([[_OPCODES[kind], wires[0], w1]], dtype=np.int64)
    col = _per_row(angles[0] if angles else 0.0, batch).reshape(batch, 1)
    _kernels.run_program(amps, n, ops, col, 0)


_BACKENDS = {"numpy": _apply_resolved_numpy}
if _kernels is not None:
    _BACKENDS["numba"] = _apply_resolved_numba
_backend = "numba" if _kernels is not None else "numpy"


def set_backend(name: str) -> None:
    """Select the gate kernels: ``"numba"`` (compiled loops) or ``"numpy"`` (strided views)."""
    global _backend
    if name not in _BACKENDS:
        raise ConfigurationError(f"unknown or unavailable backend {name!r}; have {sorted(_BACKENDS)}")
    _backend = name


def get_backend() -> str:
    return _backend


def apply_resolved(amps, n, kind, wires, angles):
    """Apply one gate whose angles are already numbers (scalars or per-row arrays)."""
    _BACKENDS[_backend](amps, n, kind, wires, angles)


def resolve_angle(p, data, theta):
    """Numeric value of one gate angle for a batch.

    ``data`` is (batch, num_data); ``theta`` is (num_params,) shared by all
    rows or (batch, num_params).
    """
    if not isinstance(p, ParamRef):
        return p
    if p.source == "data":
        if data is None or p.index >= data.shape[1]:
            raise BindingError(f"unresolved data reference {p.index}")
        return data[:, p.index]
    if theta is None or p.index >= theta.shape[-1]:
        raise BindingError(f"unresolved theta reference {p.index}")
    return theta[..., p.index]


def _as_batch_inputs(circuit, data, theta, batch=None):
    if data is None:
        data = np.zeros((batch or 1, 0))
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(1, -1)
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=np.float64)
    if data.shape[1] < circuit.num_data:
        raise BindingError(f"circuit needs {circuit.num_data} data features, got {data.shape[1]}")
    if theta.shape[-1] < circuit.num_params:
        raise BindingError(f"circuit needs {circuit.num_params} parameters, got {theta.shape[-1]}")
    if theta.ndim == 2 and theta.shape[0] != data.shape[0]:
        if data.shape[0] == 1:
            data = np.repeat(data, theta.shape[0], axis=0)
        else:
            raise BindingError("per-row theta must match the data batch size")
    return data, theta


def apply_gates(amps, n, gates: Sequence[Gate], data, theta):
    for g in gates:
        apply_resolved(amps, n, g.kind, g.wires, [resolve_angle(p, data, theta) for p in g.params])
    return amps


class Program:
    """Flattened form of a circuit for the compiled kernels (ROT split into RZ, RY, RZ)."""

    def __init__(self, circuit: CircuitSpec):
        ops, source, index, literal, gate_of_op = [], [], [], [], []
        for pos, g in enumerate(circuit.gates):
            if g.kind == "ROT":
                parts = list(zip(("RZ", "RY", "RZ"), g.params))
            else:
                parts = [(g.kind, g.params[0] if g.params else 0.0)]
            for kind, p in parts:
                ops.append((_OPCODES[kind], g.wires[0], g.wires[1] if len(g.wires) == 2 else 0))
                if isinstance(p, ParamRef):
                    source.append(1 if p.source == "data" else 2)
                    index.append(p.index)
                    literal.append(0.0)
                else:
                    source.append(0)
                    index.append(0)
                    literal.append(p)
                gate_of_op.append(pos)
        self.circuit = circuit
        self.num_qubits = circuit.num_qubits
        self.ops = np.array(ops, dtype=np.int64).reshape(-1, 3)
        self.source = np.array(source, dtype=np.int64)
        self.index = np.array(index, dtype=np.int64)
        self.literal = np.array(literal, dtype=np.float64)
        self.gate_of_op = np.array(gate_of_op, dtype=np.int64)

    def angles(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """(batch, num_ops) angle table for validated batch inputs."""
        batch = data.shape[0] if theta.ndim == 1 else theta.shape[0]
        out = np.empty((batch, self.ops.shape[0]))
        out[:] = self.literal
        is_data = self.source == 1
        is_theta = self.source == 2
        out[:, is_data] = data[:, self.index[is_data]]
        out[:, is_theta] = theta[..., self.index[is_theta]]
        return out


_PROGRAMS = {}


def compile_program(circuit: CircuitSpec) -> Program:
    prog = _PROGRAMS.get(circuit)
    if prog is None:
        if len(_PROGRAMS) > 256:
            _PROGRAMS.clear()
        prog = _PROGRAMS[circuit] = Program(circuit)
    return prog


def simulate(circuit: CircuitSpec, data=None, theta=None) -> np.ndarray:
    """Run ``circuit`` from ``|0...0>`` for every data row; returns (batch, 2**n) amplitudes."""
    data, theta = _as_batch_inputs(circuit, data, theta)
    amps = zero_states(data.shape[0], circuit.num_qubits)
    if _backend == "numba" and circuit.gates:
        prog = compile_program(circuit)
        _kernels.run_program(amps, circuit.num_qubits, prog.ops, prog.angles(data, theta), 0)
        return amps
    return apply_gates(amps, circuit.num_qubits, circuit.gates, data, theta)


@lru_cache(maxsize=None)
def z_signs(n):
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


def batch_z_expectations(amps: np.ndarray, n: int) -> np.ndarray:
    """Pauli-Z expectation of every qubit for every row: (batch, n)."""
    probs = amps.real ** 2 + amps.imag ** 2
    if n <= 12:
        return probs @ z_signs(n)
    out = np.empty((amps.shape[0], n))
    for q in range(n):
        p = probs.reshape(amps.shape[0], 1 << q, 2, -1).sum(axis=(1, 3))
        out[:, q] = p[:, 0] - p[:, 1]
    return out


# ---------------------------------------------------------------------------
# single-state API

def _check_wires(state, gate):
    if max(gate.wires) >= state.num_qubits:
        raise WireError(f"{gate.kind} wires {gate.wires} invalid for {state.num_qubits} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` (literal angles only) to ``state`` in place and return it."""
    _check_wires(state, gate)
    if gate.is_parametrized:
        raise BindingError("apply_gate needs literal angles; use run_circuit for references")
    apply_resolved(state._batch(), state.num_qubits, gate.kind, gate.wires, gate.params)
    return state


def run_circuit(spec: CircuitSpec, data=(), theta=()) -> StateVector:
    data = np.asarray(data, dtype=np.float64).reshape(1, -1)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    amps = simulate(spec, data, theta)
    return StateVector(amps[0], spec.num_qubits)


def z_expectation(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.num_qubits:
        raise WireError(f"qubit {qubit} outside {state.num_qubits}-qubit register")
    p = state.probabilities().reshape(1 << qubit, 2, -1).sum(axis=(0, 2))
    return float(p[0] - p[1])


def all_z_expectations(state: StateVector) -> np.ndarray:
    return batch_z_expectations(state._batch(), state.num_qubits)[0]


# ---------------------------------------------------------------------------
# dense local matrices

def gate_matrix(gate: Gate) -> np.ndarray:
    """Local unitary of a literal gate: 2x2, or 4x4 in (wire0, wire1) order."""
    if gate.is_parametrized:
        raise BindingError("gate_matrix needs literal angles")
    k, p = gate.kind, gate.params
    if k == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2
    if k == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if k == "RX":
        c, s = np.cos(p[0] / 2), np.sin(p[0] / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if k == "RY":
        c, s = np.cos(p[0] / 2), np.sin(p[0] / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if k == "RZ":
        return np.diag([np.exp(-0.5j * p[0]), np.exp(0.5j * p[0])])
    if k == "ROT":
        rz = lambda t: gate_matrix(Gate("RZ", gate.wires, (t,)))
        ry = gate_matrix(Gate("RY", gate.wires, (p[1],)))
        return rz(p[2]) @ ry @ rz(p[0])
    if k == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if k == "CRZ":
        return np.diag([1, 1, np.exp(-0.5j * p[0]), np.exp(0.5j * p[0])])
    raise ConfigurationError(k)  # pragma: no cover
