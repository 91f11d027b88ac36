"""
Circuit sources: the random training family and the RealAmplitudes suite.
"""

from .base import CircuitSource, SourcedCircuit
from .random_layered import RandomCircuitSource, RandomGenConfig, generate_dataset, random_circuit
from .real_amplitudes import (
    EntanglementPattern,
    RealAmplitudesDescriptor,
    RealAmplitudesSource,
    entangler_pairs,
    real_amplitudes,
    real_amplitudes_suite,
)


def get_source(src_name: str, **kwargs) -> CircuitSource:
    if src_name == "random":
        return RandomCircuitSource(**kwargs)
    elif src_name == "realamp":
        return RealAmplitudesSource()
    else:
        raise NotImplementedError(f"unknown circuit source {src_name!r}")
