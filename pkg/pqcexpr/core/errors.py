"""
Exception hierarchy. Every error carries the process exit code the CLI maps it to.
"""

from typing import Optional, Sequence


class PqcExprError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 2


class DataError(PqcExprError):
    """Manifest, dataset, or file contents are unusable."""


class SchemaError(PqcExprError):
    """Feature schema, checkpoint version, or array shape mismatch."""


class CircuitValidationError(PqcExprError):
    """A circuit breaks one or more structural invariants."""

    def __init__(self, violations: Sequence["object"]):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid circuit: {summary}")


class CircuitParseError(PqcExprError):
    """A circuit document could not be parsed."""

    def __init__(self, reason: str, location: Optional[str] = None):
        self.reason = reason
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"{reason}{where}")


class NumericalError(PqcExprError):
    """Non-finite or out-of-range numbers in simulation or training."""

    exit_code = 3

    def __init__(self, message: str, stage: Optional[str] = None):
        self.stage = stage
        prefix = f"[{stage}] " if stage else ""
        super().__init__(prefix + message)
