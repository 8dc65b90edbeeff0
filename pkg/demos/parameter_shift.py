"""Parameter-shift gradients of a small variational circuit.

Builds the 4-qubit, 2-layer QNN used throughout the package, then compares
the exact shift-rule gradient with central finite differences and with a
hand-rolled two-term shift on one parameter.
"""
import numpy as np

from qhybrid.circuits import EncoderKind, QnnSpec, build_qnn, init_params, scale_features
from qhybrid.qgrad import ExpectationFn, count_params_by_rule, finite_diff_grad, shift_rule_grad, trainable_gates

rng = np.random.default_rng(3)

spec = QnnSpec(4, EncoderKind.ANGLE_ONE_TO_ONE, num_layers=2)
circuit = build_qnn(spec)
print(f"{spec.num_qubits} qubits, {spec.num_layers} layers, {spec.num_params} parameters, {len(circuit)} gates")

# raw features go to rotation angles in [0, 2pi]
features = rng.normal(size=spec.num_features)
angles = scale_features(features, features.min(), features.max())
f = ExpectationFn(circuit, angles)
theta = init_params(spec.num_params, rng)

print("<Z> per qubit:", np.round(f(theta), 4))

jac = shift_rule_grad(f, theta)
fd = finite_diff_grad(f, theta, 1e-4)
print("jacobian shape:", jac.shape)
print(f"max |shift - finite diff| = {np.max(np.abs(jac - fd)):.2e}")

# the two-term rule by hand for an RX/RY/RZ parameter (CRZ needs four terms)
owner = trainable_gates(circuit)
j = min(i for i, pos in owner.items() if circuit.gates[pos].kind != "CRZ")
e = np.zeros_like(theta)
e[j] = np.pi / 2
manual = 0.5 * (f(theta + e) - f(theta - e))
print(f"param {j}: manual shift {np.round(manual, 6)}, library {np.round(jac[:, j], 6)}")

single, crz = count_params_by_rule(circuit)
print(f"{single} two-term parameters, {crz} four-term (CRZ) parameters")
