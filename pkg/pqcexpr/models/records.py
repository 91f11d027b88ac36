"""
Dataset and evaluation records.
"""

from typing import Any, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from pqcexpr.models.circuit import ParameterizedCircuit, from_document


class DatasetRecord(BaseModel):
    """One manifest line: a circuit, its label once computed, and provenance."""

    model_config = ConfigDict(extra="forbid")

    circuit_id: str
    circuit: dict[str, Any]
    label: Optional[float] = None
    estimator: Optional[dict[str, Any]] = None
    seed_lineage: dict[str, Any] = Field(default_factory=dict)
    descriptor: dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None

    @field_validator("label")
    @classmethod
    def _non_negative(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0:
            raise ValueError("expressibility label must be >= 0")
        return value

    @property
    def is_labeled(self) -> bool:
        return self.label is not None and self.estimator is not None

    def parsed_circuit(self) -> ParameterizedCircuit:
        return from_document(self.circuit)

    def to_line(self) -> str:
        return self.model_dump_json(exclude_none=True)


class EvalRow(BaseModel):
    circuit_id: str
    true: float
    predicted: float

    @property
    def error(self) -> float:
        return self.predicted - self.true


class EvalReport(BaseModel):
    rows: list[EvalRow]
    rmse: float
    spearman: Optional[float] = None
    dataset: dict[str, Any] = Field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(row.circuit_id, row.true, row.predicted, row.error) for row in self.rows],
            columns=["circuit_id", "true", "predicted", "error"],
        )
