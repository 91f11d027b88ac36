"""
Checkpoint documents: schema version, configs, normalization statistics
and every weight array as nested lists. Float64 values survive the JSON
round trip exactly, so a reloaded model predicts bit-identically.
"""

import json
from pathlib import Path
from typing import Union

import structlog
import torch
from pydantic import ValidationError

from pqcexpr.core.errors import DataError, SchemaError
from pqcexpr.gnn.model import DTYPE, GnnModel, GnnRegressor, ModelConfig
from pqcexpr.graph import GRAPH_SCHEMA_VERSION, NormStats

logger = structlog.get_logger()

CHECKPOINT_SCHEMA_VERSION = "2"


def checkpoint_document(model: GnnModel) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "graph_schema_version": GRAPH_SCHEMA_VERSION,
        "model_config": model.config.model_dump(mode="json"),
        "train_config": model.train_config,
        "norm_stats": model.norm_stats.to_dict(),
        "weights": {name: tensor.tolist() for name, tensor in model.network.state_dict().items()},
    }


def save_checkpoint(model: GnnModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_document(model), sort_keys=True) + "\n")
    logger.info("Checkpoint saved", path=str(path))
    return path


def model_from_document(document: dict) -> GnnModel:
    """
    Rebuild a model from a checkpoint document.

    Raises:
        SchemaError: On version, config, or weight shape mismatch
    """
    version = document.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaError(f"checkpoint schema_version {version!r}, expected {CHECKPOINT_SCHEMA_VERSION!r}")
    if document.get("graph_schema_version") != GRAPH_SCHEMA_VERSION:
        raise SchemaError(f"checkpoint graph_schema_version {document.get('graph_schema_version')!r} is not supported")
    try:
        config = ModelConfig.model_validate(document["model_config"])
        norm_stats = NormStats.from_dict(document["norm_stats"])
        weights = document["weights"]
    except (KeyError, TypeError, ValidationError) as e:
        raise SchemaError(f"checkpoint is missing or has malformed fields: {e}") from e

    network = GnnRegressor(config)
    expected = network.state_dict()
    if set(weights) != set(expected):
        missing = sorted(set(expected) - set(weights))
        extra = sorted(set(weights) - set(expected))
        raise SchemaError(f"weight names differ from the architecture (missing {missing}, unexpected {extra})")
    state = {}
    for name, reference in expected.items():
        tensor = torch.tensor(weights[name], dtype=DTYPE)
        if tensor.shape != reference.shape:
            raise SchemaError(f"weight {name} has shape {tuple(tensor.shape)}, expected {tuple(reference.shape)}")
        state[name] = tensor
    network.load_state_dict(state)
    network.eval()
    return GnnModel(network, norm_stats, config, document.get("train_config"))


def load_checkpoint(path: Union[str, Path]) -> GnnModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt checkpoint {path}: {e.msg} at line {e.lineno}") from e
    if not isinstance(document, dict):
        raise DataError(f"corrupt checkpoint {path}: not an object")
    return model_from_document(document)
