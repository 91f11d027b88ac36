"""
RealAmplitudes hardware-efficient circuits: RY layers alternating with CX
entanglement blocks.

Pair conventions follow the widely used reference implementation and are
written next to every suite manifest (see PAIR_CONVENTIONS).
"""

from enum import Enum
from typing import Any, Iterator, Sequence

from pydantic import BaseModel, ConfigDict

from pqcexpr.models.circuit import GateKind, ParameterizedCircuit
from pqcexpr.sources.base import CircuitSource, SourcedCircuit
from pqcexpr.sources.random_layered import CircuitBuilder


class EntanglementPattern(str, Enum):
    FULL = "full"
    LINEAR = "linear"
    CIRCULAR = "circular"
    SCA = "sca"


def entangler_pairs(num_qubits: int, pattern: EntanglementPattern, offset: int = 0) -> list[tuple[int, int]]:
    """Ordered (control, target) pairs of one entanglement block."""
    pattern = EntanglementPattern(pattern)
    linear = [(i, i + 1) for i in range(num_qubits - 1)]
    if pattern is EntanglementPattern.LINEAR:
        return linear
    if pattern is EntanglementPattern.FULL:
        return [(i, j) for i in range(num_qubits) for j in range(i + 1, num_qubits)]
    circular = linear if len(linear) == 1 else [(num_qubits - 1, 0)] + linear
    if pattern is EntanglementPattern.CIRCULAR:
        return circular
    shift = offset % len(circular)
    shifted = circular[len(circular) - shift:] + circular[:len(circular) - shift]
    if offset % 2 == 1:
        return [(target, control) for control, target in shifted]
    return shifted


def real_amplitudes(
    num_qubits: int,
    reps: int,
    pattern: EntanglementPattern = EntanglementPattern.LINEAR,
    skip_final_rotation_layer: bool = False,
) -> ParameterizedCircuit:
    """
    RY layer, then `reps` times [CX block, RY layer].

    Without skipping, num_params = num_qubits * (reps + 1).
    """
    if num_qubits < 2:
        raise ValueError("RealAmplitudes needs at least 2 qubits")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    builder = CircuitBuilder(num_qubits)
    for qubit in range(num_qubits):
        builder.single(GateKind.RY, qubit)
    for rep in range(reps):
        for control, target in entangler_pairs(num_qubits, pattern, offset=rep):
            builder.cx(control, target)
        if rep < reps - 1 or not skip_final_rotation_layer:
            for qubit in range(num_qubits):
                builder.single(GateKind.RY, qubit)
    return builder.build()


class RealAmplitudesDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_qubits: int
    reps: int
    pattern: EntanglementPattern
    skip_final_rotation_layer: bool = False

    @property
    def name(self) -> str:
        suffix = "-nofinal" if self.skip_final_rotation_layer else ""
        return f"ra-q{self.num_qubits}-r{self.reps}-{self.pattern.value}{suffix}"

    def build(self) -> ParameterizedCircuit:
        return real_amplitudes(self.num_qubits, self.reps, self.pattern, self.skip_final_rotation_layer)


SUITE_REPS = (1, 2, 3, 4)
PAIR_CONVENTIONS = {
    "linear": "(i, i+1) for i = 0..n-2",
    "full": "(i, j) for all i < j, control i",
    "circular": "(n-1, 0) first, then linear; equal to linear when n = 2",
    "sca": "circular rotated right by the repetition index, every pair reversed on odd repetitions",
}
SUITE_RULE = (
    "qubits {2,3,4} x reps {1,2,3,4} x patterns {full,linear,circular,sca} with the final RY layer, "
    "plus qubits 4 x reps {1,2,3,4} x patterns {full,linear,circular,sca} without it"
)


def suite_descriptors() -> list[RealAmplitudesDescriptor]:
    descriptors = [
        RealAmplitudesDescriptor(num_qubits=n, reps=r, pattern=p)
        for n in (2, 3, 4) for r in SUITE_REPS for p in EntanglementPattern
    ]
    descriptors += [
        RealAmplitudesDescriptor(num_qubits=4, reps=r, pattern=p, skip_final_rotation_layer=True)
        for r in SUITE_REPS for p in EntanglementPattern
    ]
    return descriptors


def real_amplitudes_suite() -> list[tuple[ParameterizedCircuit, RealAmplitudesDescriptor]]:
    """The 64-circuit validation suite, in a fixed order."""
    return [(descriptor.build(), descriptor) for descriptor in suite_descriptors()]


class RealAmplitudesSource(CircuitSource):

    name = "realamp"

    def generate(self) -> Iterator[SourcedCircuit]:
        for circuit, descriptor in real_amplitudes_suite():
            yield SourcedCircuit(
                circuit_id=descriptor.name,
                circuit=circuit,
                descriptor={"family": self.name, **descriptor.model_dump(mode="json")},
                seed_lineage={},
            )

    def describe(self, items: Sequence[SourcedCircuit]) -> dict[str, Any]:
        return {
            **super().describe(items),
            "suite_rule": SUITE_RULE,
            "pair_conventions": PAIR_CONVENTIONS,
            "four_qubit_pairs": {
                pattern.value: [entangler_pairs(4, pattern, offset=rep) for rep in range(max(SUITE_REPS))]
                for pattern in EntanglementPattern
            },
            "circuits": {item.circuit_id: f"circuits/{item.circuit_id}.json" for item in items},
        }
