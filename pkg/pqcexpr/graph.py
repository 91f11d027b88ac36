"""
Circuit to graph encoding.

Nodes are ordered [input 0..n-1, gates in list order, output 0..n-1].
Each qubit wire is a directed path input -> gates on that qubit -> output,
so a CX node sits on two wires. Node features are a one-hot node type
followed by a qubit multi-hot; CX control and target are not told apart.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from pqcexpr.core.errors import SchemaError
from pqcexpr.models.circuit import GateKind, ParameterizedCircuit, ensure_valid, stats

GRAPH_SCHEMA_VERSION = "1"
NODE_TYPES = ("INPUT", "OUTPUT", "X", "SX", "RX", "RY", "RZ", "CX")
FEATURE_MAX_QUBITS = 4
D_NODE = len(NODE_TYPES) + FEATURE_MAX_QUBITS
GLOBAL_FEATURES = (
    "depth", "width", "num_param_gates", "num_qubits",
    "count_X", "count_SX", "count_RX", "count_RY", "count_RZ", "count_CX",
)
D_GLOBAL = len(GLOBAL_FEATURES)
STD_FLOOR = 1e-8

_TYPE_SLOT = {name: i for i, name in enumerate(NODE_TYPES)}


@dataclass(frozen=True)
class CircuitGraph:
    node_features: np.ndarray
    edges: np.ndarray
    global_features: np.ndarray
    label: Optional[float] = None
    circuit_id: str = ""

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]


@dataclass(frozen=True)
class NormStats:
    """Per-dimension studentization statistics fitted on a training split."""

    node_mean: np.ndarray
    node_std: np.ndarray
    global_mean: np.ndarray
    global_std: np.ndarray
    std_floor: float = STD_FLOOR
    applies_to: tuple[str, ...] = field(default=("node", "global"))

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(np.zeros(D_NODE), np.ones(D_NODE), np.zeros(D_GLOBAL), np.ones(D_GLOBAL))

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_mean": self.node_mean.tolist(),
            "node_std": self.node_std.tolist(),
            "global_mean": self.global_mean.tolist(),
            "global_std": self.global_std.tolist(),
            "std_floor": self.std_floor,
            "applies_to": list(self.applies_to),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NormStats":
        stats_ = cls(
            node_mean=np.asarray(data["node_mean"], dtype=float),
            node_std=np.asarray(data["node_std"], dtype=float),
            global_mean=np.asarray(data["global_mean"], dtype=float),
            global_std=np.asarray(data["global_std"], dtype=float),
            std_floor=float(data.get("std_floor", STD_FLOOR)),
            applies_to=tuple(data.get("applies_to", ("node", "global"))),
        )
        if stats_.node_mean.shape != (D_NODE,) or stats_.global_mean.shape != (D_GLOBAL,):
            raise SchemaError("normalization statistics do not match the feature schema")
        return stats_


def _check_width(circuit: ParameterizedCircuit) -> None:
    if circuit.num_qubits > FEATURE_MAX_QUBITS:
        raise SchemaError(
            f"circuit has {circuit.num_qubits} qubits; the feature schema holds at most {FEATURE_MAX_QUBITS}"
        )


def global_features(circuit: ParameterizedCircuit) -> np.ndarray:
    """[depth, width, num_param_gates, num_qubits, count per kind X..CX]."""
    _check_width(circuit)
    s = stats(circuit)
    counts = [s.gate_counts.get(kind, 0) for kind in GateKind]
    return np.array([s.depth, s.width, s.num_params, s.num_qubits] + counts, dtype=float)


def _node_row(node_type: str, qubits: Sequence[int]) -> np.ndarray:
    row = np.zeros(D_NODE)
    row[_TYPE_SLOT[node_type]] = 1.0
    for q in qubits:
        row[len(NODE_TYPES) + q] = 1.0
    return row


def encode(circuit: ParameterizedCircuit, label: Optional[float] = None, circuit_id: str = "") -> CircuitGraph:
    """
    Build the wire-flow graph of a circuit.

    Raises:
        SchemaError: If the circuit is wider than the feature schema
    """
    _check_width(circuit)
    ensure_valid(circuit, max_qubits=FEATURE_MAX_QUBITS)
    n, g = circuit.num_qubits, len(circuit.gates)

    rows = [_node_row("INPUT", (q,)) for q in range(n)]
    edges: list[tuple[int, int]] = []
    frontier = list(range(n))
    for i, gate in enumerate(circuit.gates):
        node = n + i
        rows.append(_node_row(gate.kind.value, gate.qubits))
        for q in gate.qubits:
            edges.append((frontier[q], node))
            frontier[q] = node
    for q in range(n):
        rows.append(_node_row("OUTPUT", (q,)))
        edges.append((frontier[q], n + g + q))

    return CircuitGraph(
        node_features=np.vstack(rows),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        global_features=global_features(circuit),
        label=label,
        circuit_id=circuit_id,
    )


def fit_normalizer(graphs: Sequence[CircuitGraph]) -> NormStats:
    """
    Fit mean and population std over all node rows and all global vectors.

    Raises:
        ValueError: If `graphs` is empty
    """
    if not graphs:
        raise ValueError("cannot fit normalization on an empty training set")
    nodes = np.vstack([graph.node_features for graph in graphs])
    glob = np.vstack([graph.global_features for graph in graphs])
    return NormStats(
        node_mean=nodes.mean(axis=0),
        node_std=np.maximum(nodes.std(axis=0), STD_FLOOR),
        global_mean=glob.mean(axis=0),
        global_std=np.maximum(glob.std(axis=0), STD_FLOOR),
    )


def apply_normalizer(graph: CircuitGraph, norm: NormStats) -> CircuitGraph:
    if graph.node_features.shape[1] != norm.node_mean.shape[0] or graph.global_features.shape[0] != norm.global_mean.shape[0]:
        raise SchemaError("graph features do not match the normalization statistics")
    return replace(
        graph,
        node_features=(graph.node_features - norm.node_mean) / norm.node_std,
        global_features=(graph.global_features - norm.global_mean) / norm.global_std,
    )


def graph_document(graph: CircuitGraph) -> dict[str, Any]:
    """Debug dump of a graph."""
    nodes = []
    for row in graph.node_features:
        type_slot = int(np.argmax(row[:len(NODE_TYPES)]))
        nodes.append({
            "type": NODE_TYPES[type_slot],
            "qubits": [q for q in range(FEATURE_MAX_QUBITS) if row[len(NODE_TYPES) + q] > 0.5],
            "features": row.tolist(),
        })
    return {
        "schema_version": GRAPH_SCHEMA_VERSION,
        "circuit_id": graph.circuit_id,
        "nodes": nodes,
        "edges": graph.edges.tolist(),
        "global": dict(zip(GLOBAL_FEATURES, graph.global_features.tolist())),
        "label": graph.label,
    }
