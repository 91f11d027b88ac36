"""
Parameterized quantum circuit model.

Circuits are immutable pydantic models over the six-gate set
X, SX, RX, RY, RZ, CX. Structural invariants are checked by `validate`,
which returns violations instead of raising so callers can report all of
them at once.
"""

import json
from collections import Counter
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from pqcexpr.core.errors import CircuitParseError, CircuitValidationError
from pqcexpr.core.settings import settings

SCHEMA_VERSION = "1"


class GateKind(str, Enum):
    X = "X"
    SX = "SX"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CX = "CX"

    @property
    def is_parameterized(self) -> bool:
        return self in PARAMETERIZED_KINDS

    @property
    def num_qubits(self) -> int:
        return 2 if self is GateKind.CX else 1


PARAMETERIZED_KINDS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ})
SINGLE_QUBIT_KINDS = (GateKind.X, GateKind.SX, GateKind.RX, GateKind.RY, GateKind.RZ)


class Gate(BaseModel):
    """
    One gate application.

    For CX, qubits[0] is the control and qubits[1] the target.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GateKind
    qubits: tuple[int, ...]
    param_index: Optional[int] = None


class ParameterizedCircuit(BaseModel):
    """Ordered gate list over `num_qubits` qubits with one parameter slot per rotation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_qubits: int
    gates: tuple[Gate, ...] = ()

    @property
    def num_params(self) -> int:
        return sum(1 for gate in self.gates if gate.param_index is not None)

    def __len__(self) -> int:
        return len(self.gates)


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    gate_index: Optional[int] = None
    reason: str

    def __str__(self) -> str:
        return self.reason


class CircuitStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    depth: int
    width: int
    num_params: int
    num_qubits: int
    gate_counts: dict[GateKind, int]


def validate(circuit: ParameterizedCircuit, max_qubits: Optional[int] = None) -> list[Violation]:
    """
    Check every structural invariant of a circuit.

    Args:
        circuit: Circuit to check
        max_qubits: Qubit cap, defaults to the configured maximum

    Returns:
        All violations found; an empty list means the circuit is valid
    """
    cap = settings.max_qubits if max_qubits is None else max_qubits
    violations: list[Violation] = []
    n = circuit.num_qubits
    if n < 1 or n > cap:
        violations.append(Violation(reason=f"num_qubits {n} outside [1, {cap}]"))

    param_sequence: list[int] = []
    for i, gate in enumerate(circuit.gates):
        if len(gate.qubits) != gate.kind.num_qubits:
            violations.append(Violation(
                gate_index=i,
                reason=f"gate {i} ({gate.kind.value}) needs {gate.kind.num_qubits} qubit(s), got {len(gate.qubits)}",
            ))
        for q in gate.qubits:
            if q < 0 or q >= n:
                violations.append(Violation(gate_index=i, reason=f"qubit {q} out of range in gate {i}"))
        if len(set(gate.qubits)) != len(gate.qubits):
            violations.append(Violation(gate_index=i, reason=f"duplicate qubit in gate {i}"))

        if gate.kind.is_parameterized and gate.param_index is None:
            violations.append(Violation(gate_index=i, reason=f"missing parameter index in gate {i}"))
        elif not gate.kind.is_parameterized and gate.param_index is not None:
            violations.append(Violation(gate_index=i, reason=f"unexpected parameter index in gate {i}"))
        if gate.param_index is not None:
            param_sequence.append(gate.param_index)

    if param_sequence != list(range(len(param_sequence))):
        if len(set(param_sequence)) != len(param_sequence):
            violations.append(Violation(reason="duplicate parameter index"))
        elif sorted(param_sequence) == list(range(len(param_sequence))):
            violations.append(Violation(reason="parameter indices not in first-appearance order"))
        else:
            violations.append(Violation(reason="parameter indices not contiguous"))
    return violations


def ensure_valid(circuit: ParameterizedCircuit, max_qubits: Optional[int] = None) -> ParameterizedCircuit:
    """Raise CircuitValidationError unless the circuit is valid."""
    violations = validate(circuit, max_qubits=max_qubits)
    if violations:
        raise CircuitValidationError(violations)
    return circuit


def stats(circuit: ParameterizedCircuit) -> CircuitStats:
    """
    Compute depth, width, parameter count and per-kind gate counts.

    Depth is the longest chain of gates sharing qubits, each gate one layer.
    """
    ensure_valid(circuit, max_qubits=max(circuit.num_qubits, 1))
    level = [0] * circuit.num_qubits
    for gate in circuit.gates:
        layer = max(level[q] for q in gate.qubits) + 1
        for q in gate.qubits:
            level[q] = layer
    counts = Counter(gate.kind for gate in circuit.gates)
    return CircuitStats(
        depth=max(level, default=0),
        width=circuit.num_qubits,
        num_params=circuit.num_params,
        num_qubits=circuit.num_qubits,
        gate_counts={kind: counts[kind] for kind in GateKind if counts[kind]},
    )


def to_document(circuit: ParameterizedCircuit) -> dict[str, Any]:
    """Circuit as a plain JSON-compatible document."""
    gates = []
    for gate in circuit.gates:
        record: dict[str, Any] = {"kind": gate.kind.value, "qubits": list(gate.qubits)}
        if gate.param_index is not None:
            record["param_index"] = gate.param_index
        gates.append(record)
    return {"schema_version": SCHEMA_VERSION, "num_qubits": circuit.num_qubits, "gates": gates}


def from_document(document: Any, max_qubits: Optional[int] = None) -> ParameterizedCircuit:
    """
    Build and validate a circuit from a parsed document.

    Raises:
        CircuitParseError: On schema problems, unknown gate kinds or invariant violations
    """
    if not isinstance(document, dict):
        raise CircuitParseError("circuit document must be an object", location="$")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CircuitParseError(f"unsupported schema_version {version!r}", location="schema_version")

    gates = document.get("gates")
    if not isinstance(gates, list):
        raise CircuitParseError("gates must be a list", location="gates")
    known = {kind.value for kind in GateKind}
    for i, gate in enumerate(gates):
        if not isinstance(gate, dict):
            raise CircuitParseError("gate record must be an object", location=f"gates[{i}]")
        kind = gate.get("kind")
        if not isinstance(kind, str):
            raise CircuitParseError(f"gate kind must be a string, got {kind!r}", location=f"gates[{i}].kind")
        if kind not in known:
            raise CircuitParseError(f"unknown gate kind {kind!r}", location=f"gates[{i}].kind")

    body = {key: value for key, value in document.items() if key != "schema_version"}
    try:
        circuit = ParameterizedCircuit.model_validate(body)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise CircuitParseError(first["msg"], location=location) from e

    violations = validate(circuit, max_qubits=max_qubits)
    if violations:
        first_gate = next((v.gate_index for v in violations if v.gate_index is not None), None)
        raise CircuitParseError(
            "; ".join(str(v) for v in violations),
            location=f"gates[{first_gate}]" if first_gate is not None else None,
        )
    return circuit


def serialize(circuit: ParameterizedCircuit) -> str:
    ensure_valid(circuit, max_qubits=max(circuit.num_qubits, 1))
    return json.dumps(to_document(circuit), indent=2) + "\n"


def deserialize(text: str, max_qubits: Optional[int] = None) -> ParameterizedCircuit:
    """
    Parse a circuit document.

    Raises:
        CircuitParseError: With a line/column or field location
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise CircuitParseError(f"malformed document: {e.msg}", location=f"line {e.lineno} column {e.colno}") from e
    return from_document(document, max_qubits=max_qubits)
