import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhybrid import qsim
from qhybrid.errors import BindingError, ConfigurationError, WireError
from qhybrid.qsim import (
    CircuitSpec,
    Gate,
    StateVector,
    all_z_expectations,
    apply_gate,
    data_ref,
    init_zero_state,
    run_circuit,
    theta_ref,
    z_expectation,
)

import oracle
from conftest import random_circuit, random_gate

S2 = 1 / np.sqrt(2)


@pytest.mark.parametrize("n, expected", [(1, [1, 0]), (2, [1, 0, 0, 0])])
def test_init_zero_state(n, expected):
    np.testing.assert_array_equal(init_zero_state(n).amplitudes, expected)


def test_init_zero_state_four_qubits():
    psi = init_zero_state(4)
    assert len(psi) == 16
    assert psi.amplitudes[0] == 1 and np.count_nonzero(psi.amplitudes) == 1


@pytest.mark.parametrize("n", [0, 21, -1])
def test_init_zero_state_range(n):
    with pytest.raises(ConfigurationError):
        init_zero_state(n)


def test_hadamard(backend):
    psi = apply_gate(init_zero_state(1), Gate("H", (0,)))
    np.testing.assert_allclose(psi.amplitudes, [S2, S2], atol=1e-15)


def test_ry_pi(backend):
    psi = apply_gate(init_zero_state(1), Gate("RY", (0,), (np.pi,)))
    np.testing.assert_allclose(psi.amplitudes, [0, 1], atol=1e-15)


@pytest.mark.parametrize("theta", [0.3, np.pi, -2.0])
def test_crz_on_zero_control_is_identity(backend, theta):
    psi = apply_gate(init_zero_state(2), Gate("CRZ", (0, 1), (theta,)))
    np.testing.assert_array_equal(psi.amplitudes, [1, 0, 0, 0])


def test_crz_phases_follow_control_target_order(backend):
    # |11> picks up e^{+i t/2}; |10> (control=1, target=0) picks up e^{-i t/2}
    t = 0.7
    for wires in ((0, 1), (1, 0)):
        psi = init_zero_state(2)
        apply_gate(psi, Gate("X", (0,)))
        apply_gate(psi, Gate("X", (1,)))
        apply_gate(psi, Gate("CRZ", wires, (t,)))
        assert psi.amplitudes[3] == pytest.approx(np.exp(0.5j * t))
    psi = apply_gate(init_zero_state(2), Gate("X", (0,)))
    apply_gate(psi, Gate("CRZ", (0, 1), (t,)))
    assert psi.amplitudes[2] == pytest.approx(np.exp(-0.5j * t))
    psi = apply_gate(init_zero_state(2), Gate("X", (0,)))
    apply_gate(psi, Gate("CRZ", (1, 0), (t,)))
    assert psi.amplitudes[2] == pytest.approx(1.0)


def test_random_two_qubit_circuit_matches_dense_product(backend):
    rng = np.random.default_rng(11)
    circuit = random_circuit(rng, 2, 10)
    np.testing.assert_allclose(run_circuit(circuit).amplitudes, oracle.final_state(circuit), atol=1e-10)


def test_invalid_wires():
    with pytest.raises(WireError):
        apply_gate(init_zero_state(2), Gate("H", (2,)))
    with pytest.raises(WireError):
        Gate("CNOT", (1, 1))
    with pytest.raises(WireError):
        CircuitSpec(2, [Gate("CRZ", (0, 3), (0.1,))])


def test_gate_arity_validation():
    with pytest.raises(ConfigurationError):
        Gate("RY", (0,))
    with pytest.raises(ConfigurationError):
        Gate("H", (0,), (1.0,))
    with pytest.raises(ConfigurationError):
        Gate("SWAP", (0, 1))


def test_run_circuit_empty(backend):
    np.testing.assert_array_equal(run_circuit(CircuitSpec(3)).amplitudes, np.eye(8)[0])


def test_run_circuit_rz_zero_is_phase_identity(backend):
    spec = CircuitSpec(1, [Gate("H", (0,)), Gate("RZ", (0,), (data_ref(0),))])
    np.testing.assert_allclose(run_circuit(spec, data=[0.0]).amplitudes, [S2, S2], atol=1e-15)


def test_one_to_one_encoder_on_two_qubits(backend):
    gates = []
    for q in range(2):
        gates += [Gate("H", (q,)), Gate("RZ", (q,), (data_ref(q),))]
    spec = CircuitSpec(2, gates)
    data = [np.pi, np.pi]
    np.testing.assert_allclose(
        run_circuit(spec, data).amplitudes, oracle.final_state(spec, data), atol=1e-10
    )


def test_unresolved_reference():
    spec = CircuitSpec(1, [Gate("RY", (0,), (theta_ref(2),))])
    with pytest.raises(BindingError):
        run_circuit(spec, theta=[0.1])
    with pytest.raises(BindingError):
        CircuitSpec(1, [Gate("RY", (0,), (theta_ref(2),))], num_params=2)
    with pytest.raises(BindingError):
        run_circuit(CircuitSpec(1, [Gate("RZ", (0,), (data_ref(0),))]))


def test_z_expectation_examples(backend):
    assert z_expectation(init_zero_state(1), 0) == 1.0
    assert z_expectation(apply_gate(init_zero_state(1), Gate("H", (0,))), 0) == pytest.approx(0, abs=1e-15)
    psi = apply_gate(init_zero_state(1), Gate("RY", (0,), (np.pi / 3,)))
    assert z_expectation(psi, 0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(WireError):
        z_expectation(psi, 1)


def test_all_z_expectations_bit_order(backend):
    # |01>: qubit 0 is the left bit
    psi = StateVector([0, 1, 0, 0])
    np.testing.assert_array_equal(all_z_expectations(psi), [1, -1])
    hh = init_zero_state(2)
    apply_gate(hh, Gate("H", (0,)))
    apply_gate(hh, Gate("H", (1,)))
    np.testing.assert_allclose(all_z_expectations(hh), [0, 0], atol=1e-15)


def test_all_z_expectations_random_three_qubits(backend):
    rng = np.random.default_rng(5)
    for _ in range(5):
        circuit = random_circuit(rng, 3, 15)
        psi = oracle.final_state(circuit)
        ours = run_circuit(circuit)
        np.testing.assert_allclose(all_z_expectations(ours), oracle.z_expectations(psi, 3), atol=1e-10)
        for q in range(3):
            assert z_expectation(ours, q) == pytest.approx(all_z_expectations(ours)[q], abs=1e-14)


def test_norm_preserved_thousand_gates(backend):
    rng = np.random.default_rng(1)
    psi = run_circuit(random_circuit(rng, 6, 1000))
    assert abs(psi.norm_squared() - 1) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), depth=st.integers(0, 25))
def test_oracle_equivalence_property(seed, n, depth):
    circuit = random_circuit(np.random.default_rng(seed), n, depth)
    np.testing.assert_allclose(run_circuit(circuit).amplitudes, oracle.final_state(circuit), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_gate_then_inverse_restores_state(seed, n):
    rng = np.random.default_rng(seed)
    psi = run_circuit(random_circuit(rng, n, 8))
    before = psi.amplitudes.copy()
    g = random_gate(rng, n)
    apply_gate(psi, g)
    apply_gate(psi, g.inverse())
    np.testing.assert_allclose(psi.amplitudes, before, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_expectations_within_bounds(seed, n):
    z = all_z_expectations(run_circuit(random_circuit(np.random.default_rng(seed), n, 20)))
    assert np.all(np.abs(z) <= 1 + 1e-10)


def test_backends_agree_on_batched_simulation():
    rng = np.random.default_rng(3)
    spec = CircuitSpec(
        5,
        [Gate("H", (q,)) for q in range(5)]
        + [Gate("RX", (q,), (data_ref(q),)) for q in range(5)]
        + [Gate("CRZ", (q, (q + 2) % 5), (theta_ref(q),)) for q in range(5)]
        + [Gate("ROT", (q,), (theta_ref(5 + q), 0.3, data_ref(q))) for q in range(5)]
        + [Gate("CNOT", (4, 0))],
    )
    data = rng.uniform(0, 6, size=(7, 5))
    theta = rng.uniform(-3, 3, size=10)
    out = {}
    for name in ("numba", "numpy"):
        qsim.set_backend(name)
        out[name] = qsim.simulate(spec, data, theta)
    qsim.set_backend("numba")
    np.testing.assert_allclose(out["numba"], out["numpy"], atol=1e-12)
    np.testing.assert_allclose(out["numpy"][2], oracle.final_state(spec, data[2], theta), atol=1e-10)


def test_per_row_theta():
    spec = CircuitSpec(1, [Gate("RY", (0,), (theta_ref(0),))])
    thetas = np.array([[0.0], [np.pi]])
    amps = qsim.simulate(spec, np.zeros((2, 0)), thetas)
    np.testing.assert_allclose(np.abs(amps) ** 2, [[1, 0], [0, 1]], atol=1e-15)
