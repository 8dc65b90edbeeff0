import numpy as np
import pytest

from qhybrid import qsim
from qhybrid.qsim import Gate


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    previous = qsim.get_backend()
    qsim.set_backend(request.param)
    yield request.param
    qsim.set_backend(previous)


def random_gate(rng, n, literal=True):
    kinds = ["H", "X", "RX", "RY", "RZ", "ROT"] + (["CNOT", "CRZ"] if n > 1 else [])
    kind = kinds[rng.integers(len(kinds))]
    nw, np_ = qsim.GATE_SIGNATURES[kind]
    wires = tuple(int(w) for w in rng.choice(n, size=nw, replace=False))
    params = tuple(rng.uniform(-2 * np.pi, 2 * np.pi, size=np_))
    return Gate(kind, wires, params)


def random_circuit(rng, n, num_gates):
    return qsim.CircuitSpec(n, [random_gate(rng, n) for _ in range(num_gates)])


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
