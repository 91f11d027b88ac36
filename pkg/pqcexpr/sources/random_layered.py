"""
Random layered circuits: a single-qubit layer, then repetitions of a CX
block followed by another single-qubit layer.
"""

from collections import Counter
from typing import Any, Iterator, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pqcexpr.models.circuit import (
    SINGLE_QUBIT_KINDS,
    Gate,
    GateKind,
    ParameterizedCircuit,
    stats,
)
from pqcexpr.seeding import derive_seed
from pqcexpr.sources.base import CircuitSource, SourcedCircuit

logger = structlog.get_logger()

MAX_RETRIES = 100


class RandomGenConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_qubits: int = Field(ge=1)
    max_depth: int = 40
    num_reps: int = Field(default=1, ge=1)
    seed: int = 0
    single_qubit_kinds: tuple[GateKind, ...] = SINGLE_QUBIT_KINDS
    cx_block_max: Optional[int] = Field(default=None, ge=1, description="Longest CX block, defaults to num_qubits")

    @model_validator(mode="after")
    def _check_kinds(self) -> "RandomGenConfig":
        if not self.single_qubit_kinds or GateKind.CX in self.single_qubit_kinds:
            raise ValueError("single_qubit_kinds must be a non-empty subset of X, SX, RX, RY, RZ")
        return self

    @property
    def block_limit(self) -> int:
        if self.num_qubits < 2:
            return 0
        return self.cx_block_max or self.num_qubits


class CircuitBuilder:
    """Appends gates, giving each rotation the next parameter slot."""

    def __init__(self, num_qubits: int):
        self.num_qubits = num_qubits
        self.gates: list[Gate] = []
        self.next_param = 0

    def single(self, kind: GateKind, qubit: int) -> None:
        param = None
        if kind.is_parameterized:
            param = self.next_param
            self.next_param += 1
        self.gates.append(Gate(kind=kind, qubits=(qubit,), param_index=param))

    def cx(self, control: int, target: int) -> None:
        self.gates.append(Gate(kind=GateKind.CX, qubits=(control, target)))

    def build(self) -> ParameterizedCircuit:
        return ParameterizedCircuit(num_qubits=self.num_qubits, gates=tuple(self.gates))


def _draw(config: RandomGenConfig, rng: np.random.Generator) -> ParameterizedCircuit:
    n = config.num_qubits
    kinds = config.single_qubit_kinds
    builder = CircuitBuilder(n)

    def single_layer():
        for qubit in range(n):
            builder.single(kinds[rng.integers(len(kinds))], qubit)

    single_layer()
    for _ in range(config.num_reps):
        if config.block_limit:
            for _ in range(rng.integers(1, config.block_limit + 1)):
                # uniform over the n(n-1) ordered pairs
                pair = rng.integers(n * (n - 1))
                control, target = divmod(int(pair), n - 1)
                if target >= control:
                    target += 1
                builder.cx(control, target)
        single_layer()
    return builder.build()


def random_circuit(config: RandomGenConfig, rng: Optional[np.random.Generator] = None) -> ParameterizedCircuit:
    """
    Draw one random layered circuit with depth at most `config.max_depth`.

    Circuits deeper than the cap are redrawn from the same stream.

    Raises:
        ValueError: If max_depth < 2 or no draw fits after MAX_RETRIES attempts
    """
    if config.max_depth < 2:
        raise ValueError(f"max_depth {config.max_depth} cannot hold two single-qubit layers")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    for attempt in range(MAX_RETRIES):
        circuit = _draw(config, rng)
        if stats(circuit).depth <= config.max_depth:
            return circuit
        logger.debug("Circuit over depth cap, redrawing", attempt=attempt, max_depth=config.max_depth)
    raise ValueError(f"no circuit within depth {config.max_depth} after {MAX_RETRIES} attempts")


class RandomCircuitSource(CircuitSource):
    """
    The random training family.

    Each circuit has its own stream derived from (seed, circuit_id). Qubit
    count is uniform in [1, max_qubits]; the repetition count is uniform
    in [1, R] with R chosen so even a fully serialized circuit fits the cap.
    """

    name = "random"

    def __init__(self, count: int, max_qubits: int = 4, max_depth: int = 40, seed: int = 0):
        if count < 1:
            raise ValueError("count must be >= 1")
        if max_depth < 2:
            raise ValueError(f"max_depth {max_depth} cannot hold two single-qubit layers")
        self.count = count
        self.max_qubits = max_qubits
        self.max_depth = max_depth
        self.seed = seed

    @staticmethod
    def circuit_id(index: int) -> str:
        return f"rand-{index:05d}"

    def config_for(self, index: int, rng: np.random.Generator) -> RandomGenConfig:
        num_qubits = int(rng.integers(1, self.max_qubits + 1))
        block = num_qubits if num_qubits >= 2 else 0
        max_reps = max(1, (self.max_depth - 1) // (block + 1))
        return RandomGenConfig(
            num_qubits=num_qubits,
            max_depth=self.max_depth,
            num_reps=int(rng.integers(1, max_reps + 1)),
            seed=self.seed,
        )

    def generate(self) -> Iterator[SourcedCircuit]:
        for index in range(self.count):
            circuit_id = self.circuit_id(index)
            circuit_seed = derive_seed(self.seed, circuit_id)
            rng = np.random.default_rng(circuit_seed)
            config = self.config_for(index, rng)
            circuit = random_circuit(config, rng)
            yield SourcedCircuit(
                circuit_id=circuit_id,
                circuit=circuit,
                descriptor={
                    "family": self.name,
                    "num_qubits": config.num_qubits,
                    "num_reps": config.num_reps,
                    "depth": stats(circuit).depth,
                },
                seed_lineage={"master_seed": self.seed, "circuit_seed": circuit_seed, "index": index},
            )

    def describe(self, items: Sequence[SourcedCircuit]) -> dict[str, Any]:
        return {
            **super().describe(items),
            "max_qubits": self.max_qubits,
            "max_depth": self.max_depth,
            "seed": self.seed,
            "depth_histogram": depth_histogram(item.descriptor["depth"] for item in items),
        }


def depth_histogram(depths) -> dict[str, int]:
    """Circuit count per depth, keyed by the depth as a string, ascending."""
    counts = Counter(int(depth) for depth in depths)
    return {str(depth): counts[depth] for depth in sorted(counts)}


def generate_dataset(count: int, max_qubits: int = 4, max_depth: int = 40, seed: int = 0) -> list[ParameterizedCircuit]:
    source = RandomCircuitSource(count, max_qubits=max_qubits, max_depth=max_depth, seed=seed)
    return [item.circuit for item in source.generate()]
