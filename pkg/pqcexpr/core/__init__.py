from .errors import (
    CircuitParseError,
    CircuitValidationError,
    DataError,
    NumericalError,
    PqcExprError,
    SchemaError,
)
from .settings import Settings, settings
