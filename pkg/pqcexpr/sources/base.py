"""
Base class of all circuit sources.
"""

from abc import ABC, abstractmethod
from typing import Any, Iterator, Sequence

from pydantic import BaseModel, ConfigDict, Field

from pqcexpr.models.circuit import ParameterizedCircuit


class SourcedCircuit(BaseModel):
    """A generated circuit with its identifier and how it was produced."""

    model_config = ConfigDict(frozen=True)

    circuit_id: str
    circuit: ParameterizedCircuit
    descriptor: dict[str, Any] = Field(default_factory=dict)
    seed_lineage: dict[str, Any] = Field(default_factory=dict)


class CircuitSource(ABC):

    name: str = "base"

    @abstractmethod
    def generate(self) -> Iterator[SourcedCircuit]:
        """
        Yield circuits in a deterministic order.
        """

    def generate_all(self) -> list[SourcedCircuit]:
        return list(self.generate())

    def describe(self, items: Sequence[SourcedCircuit]) -> dict[str, Any]:
        """Set-level metadata written beside the manifest."""
        return {"source": self.name, "count": len(items)}
