from .circuit import (
    CircuitStats,
    Gate,
    GateKind,
    ParameterizedCircuit,
    Violation,
    deserialize,
    ensure_valid,
    serialize,
    stats,
    validate,
)
from .records import DatasetRecord, EvalReport, EvalRow
