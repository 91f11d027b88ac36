import numpy as np
import pytest

from pqcexpr.gnn.model import ModelConfig
from pqcexpr.graph import encode
from pqcexpr.models.circuit import GateKind
from pqcexpr.sources import RandomCircuitSource
from pqcexpr.sources.random_layered import CircuitBuilder


def circuit_of(num_qubits, *ops):
    """Build a circuit from ("RX", 0) / ("CX", 0, 1) tuples, numbering rotations in order."""
    builder = CircuitBuilder(num_qubits)
    for op in ops:
        kind = GateKind(op[0])
        if kind is GateKind.CX:
            builder.cx(op[1], op[2])
        else:
            builder.single(kind, op[1])
    return builder.build()


@pytest.fixture
def build():
    return circuit_of


@pytest.fixture
def bell_like():
    return circuit_of(2, ("RY", 0), ("CX", 0, 1))


@pytest.fixture
def small_config():
    return ModelConfig(d_hidden=8, d_global_hidden=4, d_head_hidden=4, init_seed=3)


@pytest.fixture
def random_graphs():
    """Twenty random circuits with a smooth synthetic label."""
    graphs = []
    for item in RandomCircuitSource(count=20, max_qubits=3, max_depth=12, seed=11).generate():
        label = 0.05 * item.circuit.num_params + 0.3 / item.circuit.num_qubits
        graphs.append(encode(item.circuit, label=label, circuit_id=item.circuit_id))
    return graphs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
