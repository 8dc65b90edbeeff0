"""Parameter-shift and finite-difference Jacobians of all-qubit Z readouts.

Single-qubit rotations (generator eigenvalues +-1/2) use the two-term rule

    df/dt = [f(t + pi/2) - f(t - pi/2)] / 2

and CRZ (generator eigenvalues {0, +-1/2}) the four-term rule

    df/dt = c+ [f(t + pi/2) - f(t - pi/2)] - c- [f(t + 3pi/2) - f(t - 3pi/2)]
    c+- = (sqrt(2) +- 1) / (4 sqrt(2))

The shift evaluations reuse the state reached just before the shifted gate,
so each shifted copy only re-simulates the gates that follow it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BindingError, ConfigurationError
from concurrent.futures import ThreadPoolExecutor

from . import qsim
from .qsim import _kernels
from .qsim import (
    CircuitSpec,
    ParamRef,
    apply_gates,
    apply_resolved,
    batch_z_expectations,
    compile_program,
    resolve_angle,
    simulate,
    z_signs,
    zero_states,
    _as_batch_inputs,
)

_SQRT2 = np.sqrt(2.0)
C_PLUS = (_SQRT2 + 1.0) / (4.0 * _SQRT2)
C_MINUS = (_SQRT2 - 1.0) / (4.0 * _SQRT2)

TWO_TERM = (np.array([np.pi / 2, -np.pi / 2]), np.array([0.5, -0.5]))
FOUR_TERM = (
    np.array([np.pi / 2, -np.pi / 2, 3 * np.pi / 2, -3 * np.pi / 2]),
    np.array([C_PLUS, -C_PLUS, -C_MINUS, C_MINUS]),
)
SHIFT_RULES = {"RX": TWO_TERM, "RY": TWO_TERM, "RZ": TWO_TERM, "CRZ": FOUR_TERM}


@dataclass(frozen=True)
class ExpectationFn:
    """theta -> per-qubit <Z> of ``circuit`` with the data features held fixed.

    ``data`` may hold a single feature vector or a (batch, num_data) matrix;
    in the batched case every evaluation returns one row per sample.
    """

    circuit: CircuitSpec
    data: np.ndarray = None

    def __post_init__(self):
        data = np.zeros(0) if self.data is None else np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)

    @property
    def batched(self) -> bool:
        return self.data.ndim == 2

    def _rows(self):
        return self.data if self.batched else self.data.reshape(1, -1)

    def __call__(self, theta) -> np.ndarray:
        out = batch_z_expectations(simulate(self.circuit, self._rows(), theta), self.circuit.num_qubits)
        return out if self.batched else out[0]


def trainable_gates(circuit: CircuitSpec) -> dict:
    """Map theta index -> gate position; rejects bindings the shift rules cannot handle."""
    owner = {}
    for pos, g in enumerate(circuit.gates):
        for p in g.params:
            if isinstance(p, ParamRef) and p.source == "theta":
                if g.kind not in SHIFT_RULES:
                    raise BindingError(f"no shift rule for trainable {g.kind} gate at position {pos}")
                if p.index in owner:
                    raise BindingError(f"theta[{p.index}] is shared by several gates")
                owner[p.index] = pos
    return owner


def forward_and_jacobian(circuit: CircuitSpec, data, theta, threads: int = 1):
    """Readout and parameter-shift Jacobian for a batch of data rows.

    Returns ``(values, jac)`` with shapes (batch, n) and (batch, n, num_params).
    ``theta`` is shared across the batch.  Rows are independent, so splitting
    them over ``threads`` workers gives bit-identical results.
    """
    owner = trainable_gates(circuit)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    data, theta = _as_batch_inputs(circuit, data, theta)
    if qsim.get_backend() == "numba" and circuit.gates:
        return _fused_jacobian(circuit, owner, data, theta, threads)
    return _stepwise_jacobian(circuit, owner, data, theta)


def _fused_jacobian(circuit, owner, data, theta, threads):
    n = circuit.num_qubits
    prog = compile_program(circuit)
    angles = prog.angles(data, theta)
    by_pos = {pos: idx for idx, pos in owner.items()}
    param_of_op = np.array([by_pos.get(int(pos), -1) for pos in prog.gate_of_op], dtype=np.int64)
    batch = data.shape[0]
    values = np.zeros((batch, n))
    jac = np.zeros((batch, n, theta.shape[0]))
    signs = np.ascontiguousarray(z_signs(n))
    args = (n, prog.ops, angles, param_of_op, signs, *TWO_TERM, *FOUR_TERM)

    def work(lo, hi):
        _kernels.program_jacobian(*args[:2], angles[lo:hi], *args[3:], values[lo:hi], jac[lo:hi])

    bounds = np.linspace(0, batch, max(1, min(threads, batch)) + 1).astype(int)
    if len(bounds) == 2:
        work(0, batch)
    else:
        with ThreadPoolExecutor(len(bounds) - 1) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    return values, jac


def _stepwise_jacobian(circuit, owner, data, theta):
    n = circuit.num_qubits
    batch = data.shape[0]
    jac = np.zeros((batch, n, theta.shape[0]))
    by_pos = {pos: idx for idx, pos in owner.items()}
    amps = zero_states(batch, n)
    gates = circuit.gates
    for pos, g in enumerate(gates):
        idx = by_pos.get(pos)
        if idx is not None:
            shifts, coeffs = SHIFT_RULES[g.kind]
            s = shifts.size
            branch = np.tile(amps, (s, 1))
            rows = np.tile(data, (s, 1))
            angle = np.repeat(theta[idx] + shifts, batch)
            apply_resolved(branch, n, g.kind, g.wires, [angle])
            apply_gates(branch, n, gates[pos + 1:], rows, theta)
            z = batch_z_expectations(branch, n).reshape(s, batch, n)
            jac[:, :, idx] = np.tensordot(coeffs, z, axes=(0, 0))
        apply_resolved(amps, n, g.kind, g.wires, [resolve_angle(p, data, theta) for p in g.params])
    return batch_z_expectations(amps, n), jac


def shift_rule_grad(f: ExpectationFn, theta) -> np.ndarray:
    """Jacobian (num_outputs x num_params); batched ``f`` gives (batch, outputs, params)."""
    _, jac = forward_and_jacobian(f.circuit, f._rows(), theta)
    return jac if f.batched else jac[0]


def finite_diff_grad(f, theta, step: float = 1e-4) -> np.ndarray:
    """Central differences ``[f(t + h e_k) - f(t - h e_k)] / 2h``, column by column.

    ``f`` is any callable returning an array; the result has shape
    ``f(theta).shape + (len(theta),)``.
    """
    if not step > 0:
        raise ConfigurationError("finite-difference step must be positive")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        cols.append((np.asarray(f(theta + e)) - np.asarray(f(theta - e))) / (2.0 * step))
    if not cols:
        return np.zeros(np.shape(f(theta)) + (0,))
    return np.stack(cols, axis=-1)


def shift_eval_count(num_params_single: int, num_params_crz: int) -> int:
    """Extra circuit executions the shift rules need for one forward pass."""
    if num_params_single < 0 or num_params_crz < 0:
        raise ConfigurationError("parameter counts must be non-negative")
    return 2 * num_params_single + 4 * num_params_crz


def count_params_by_rule(circuit: CircuitSpec) -> tuple:
    """(two-term params, four-term params) of a circuit."""
    owner = trainable_gates(circuit)
    crz = sum(1 for pos in owner.values() if circuit.gates[pos].kind == "CRZ")
    return len(owner) - crz, crz
