import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhybrid.circuits import (
    EncoderKind,
    QnnSpec,
    build_encoder,
    build_parametric_layer,
    build_qnn,
    init_params,
    scale_features,
)
from qhybrid.errors import ConfigurationError
from qhybrid.qsim import ParamRef, all_z_expectations, run_circuit, simulate

import oracle

ONE, FOUR = EncoderKind.ANGLE_ONE_TO_ONE, EncoderKind.ANGLE_FOUR_TO_ONE


def data_refs(circuit):
    return [p for g in circuit.gates for p in g.params if isinstance(p, ParamRef) and p.source == "data"]


def test_one_to_one_encoder_structure():
    enc = build_encoder(ONE, 3)
    assert len(enc) == 6 and len(data_refs(enc)) == 3
    assert [g.kind for g in enc.gates[:2]] == ["H", "RZ"]


def test_four_to_one_encoder_structure():
    enc = build_encoder(FOUR, 4)
    assert len(enc) == 20 and len(data_refs(enc)) == 16
    assert [g.kind for g in enc.gates[:5]] == ["H", "RZ", "RX", "RZ", "RX"]
    # qubit q reads slots 4q .. 4q+3
    assert [p.index for p in data_refs(enc)[4:8]] == [4, 5, 6, 7]
    assert all(g.wires == (1,) for g in enc.gates[5:10])


def test_four_to_one_zero_data_is_hadamard():
    psi = run_circuit(build_encoder(FOUR, 1), data=[0, 0, 0, 0])
    np.testing.assert_allclose(np.abs(psi.amplitudes), [2 ** -0.5] * 2, atol=1e-15)


def test_parametric_layer_structure():
    layer = build_parametric_layer(4, 0)
    kinds = [g.kind for g in layer.gates]
    assert kinds == ["CRZ"] * 4 + ["RY"] * 4
    assert layer.num_params == 8
    assert [g.wires for g in layer.gates[:4]] == [(0, 1), (1, 2), (2, 3), (3, 0)]
    later = build_parametric_layer(4, 2)
    assert sorted(g.params[0].index for g in later.gates) == list(range(16, 24))


def test_parametric_layer_needs_two_qubits():
    with pytest.raises(ConfigurationError):
        build_parametric_layer(1, 0)


def test_three_layers_on_four_qubits_have_24_params():
    assert build_qnn(QnnSpec(4, FOUR, 3)).num_params == 24


def test_zero_layer_is_identity():
    rng = np.random.default_rng(0)
    layer = build_parametric_layer(2, 0)
    u = oracle.circuit_unitary(layer, theta=np.zeros(4))
    np.testing.assert_allclose(u, np.eye(4), atol=1e-15)
    assert rng is not None


@pytest.mark.parametrize(
    "n, kind, layers, params, refs",
    [(10, ONE, 3, 60, 10), (5, ONE, 6, 60, 5), (4, FOUR, 3, 24, 16)],
)
def test_build_qnn_counts(n, kind, layers, params, refs):
    spec = QnnSpec(n, kind, layers)
    circuit = build_qnn(spec)
    assert circuit.num_params == spec.num_params == params
    assert len(data_refs(circuit)) == refs == spec.num_features


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 8), layers=st.integers(1, 6), four=st.booleans())
def test_parameter_count_law(n, layers, four):
    spec = QnnSpec(n, FOUR if four else ONE, layers)
    circuit = build_qnn(spec)
    thetas = {p.index for g in circuit.gates for p in g.params if isinstance(p, ParamRef) and p.source == "theta"}
    assert circuit.num_params == len(thetas) == layers * 2 * n


def test_qnn_matches_oracle():
    rng = np.random.default_rng(2)
    circuit = build_qnn(QnnSpec(4, FOUR, 3))
    data = rng.uniform(0, 2 * np.pi, 16)
    theta = init_params(24, rng)
    psi = oracle.final_state(circuit, data, theta)
    np.testing.assert_allclose(run_circuit(circuit, data, theta).amplitudes, psi, atol=1e-10)


def test_zero_parameter_pqc_matches_encoder_readout():
    rng = np.random.default_rng(4)
    for spec in (QnnSpec(4, FOUR, 3), QnnSpec(5, ONE, 2)):
        data = rng.uniform(0, 2 * np.pi, size=(6, spec.num_features))
        full = simulate(build_qnn(spec), data, np.zeros(spec.num_params))
        enc = simulate(build_encoder(spec.encoder, spec.num_qubits), data)
        from qhybrid.qsim import batch_z_expectations

        np.testing.assert_allclose(
            batch_z_expectations(full, spec.num_qubits), batch_z_expectations(enc, spec.num_qubits), atol=1e-10
        )


def test_four_to_one_encoding_distinguishes_probes():
    rng = np.random.default_rng(9)
    enc = build_encoder(FOUR, 4)
    for _ in range(50):
        a, b = rng.uniform(0, 2 * np.pi, size=(2, 16))
        sa, sb = simulate(enc, np.stack([a, b]))
        assert abs(np.vdot(sa, sb)) < 1 - 1e-6


def test_scale_features_examples():
    assert scale_features(0.5, 0, 1) == pytest.approx(np.pi)
    np.testing.assert_allclose(scale_features([0.0, 1.0], 0, 1), [0, 2 * np.pi])
    assert scale_features(1.2, 0, 1) == pytest.approx(2 * np.pi)
    assert scale_features(-3, 0, 1) == 0
    np.testing.assert_allclose(scale_features([[1, 5]], [0, 4], [2, 6]), [[np.pi, np.pi]])


def test_scale_features_requires_hi_above_lo():
    with pytest.raises(ConfigurationError):
        scale_features([0.1], 1.0, 1.0)


def test_init_params_range_and_seed():
    a = init_params(1000, np.random.default_rng(7))
    assert np.all((a > -np.pi) & (a < np.pi))
    np.testing.assert_array_equal(a, init_params(1000, np.random.default_rng(7)))
