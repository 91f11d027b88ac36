"""
Pipeline steps behind the command-line interface.

Each step reads and writes plain files: circuit documents under
`<out>/circuits/`, a JSON-lines manifest, JSON checkpoints and CSV tables.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import structlog
from scipy.stats import spearmanr

from pqcexpr.core.errors import DataError, PqcExprError
from pqcexpr.expressibility import EstimatorConfig, expressibility
from pqcexpr.gnn.model import GnnModel
from pqcexpr.gnn.train import split_dataset
from pqcexpr.graph import CircuitGraph, encode
from pqcexpr.manifest import MANIFEST_NAME, manifest_scope, write_manifest, write_manifest_meta
from pqcexpr.models.circuit import ParameterizedCircuit, deserialize, from_document, serialize, to_document
from pqcexpr.models.records import DatasetRecord, EvalReport, EvalRow
from pqcexpr.simulator import StatevectorSimulator
from pqcexpr.sources.base import CircuitSource

logger = structlog.get_logger()

CIRCUIT_DIR = "circuits"
LABEL_CHUNK = 256
# Widest document accepted on read; narrower-than-this circuits reach the
# simulator or feature-schema checks and fail there with a precise error.
READ_QUBIT_CAP = 30


def rmse(pairs: Iterable[tuple[float, float]]) -> float:
    """
    Root mean squared error over (true, predicted) pairs.

    Raises:
        ValueError: If `pairs` is empty
    """
    array = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    if array.shape[0] == 0:
        raise ValueError("rmse needs at least one pair")
    return math.sqrt(float(np.mean((array[:, 1] - array[:, 0]) ** 2)))


def read_circuit(path: Union[str, Path]) -> ParameterizedCircuit:
    path = Path(path)
    if not path.exists():
        raise DataError(f"circuit file not found: {path}")
    return deserialize(path.read_text(), max_qubits=READ_QUBIT_CAP)


def write_circuit_set(source: CircuitSource, out_dir: Union[str, Path]) -> Path:
    """
    Write one document per circuit, a label-free manifest and the source's
    set-level metadata beside it.

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    circuit_dir = out_dir / CIRCUIT_DIR
    circuit_dir.mkdir(parents=True, exist_ok=True)
    items = source.generate_all()
    records = []
    for item in items:
        (circuit_dir / f"{item.circuit_id}.json").write_text(serialize(item.circuit))
        records.append(DatasetRecord(
            circuit_id=item.circuit_id,
            circuit=to_document(item.circuit),
            seed_lineage=item.seed_lineage,
            descriptor=item.descriptor,
        ))
    manifest_path = write_manifest(out_dir / MANIFEST_NAME, records)
    write_manifest_meta(manifest_path, source.describe(items))
    logger.info("Circuit set written", out=str(out_dir), circuits=len(records))
    return manifest_path


def _label_record(task: tuple[str, dict[str, Any], dict[str, Any]]) -> tuple[str, Optional[float], Optional[str]]:
    """Worker: label one circuit; failures come back as a message."""
    circuit_id, document, config_data = task
    try:
        circuit = from_document(document)
        estimate = expressibility(circuit, EstimatorConfig(**config_data), StatevectorSimulator(), circuit_id=circuit_id)
        return circuit_id, estimate.value, None
    except (PqcExprError, ValueError) as e:
        return circuit_id, None, str(e)


@dataclass
class LabelSummary:
    labeled: int = 0
    skipped: int = 0
    failed: int = 0


def label_manifest(
    manifest_path: Union[str, Path],
    config: EstimatorConfig,
    jobs: int = 1,
    chunk_size: int = LABEL_CHUNK,
) -> LabelSummary:
    """
    Label every unlabeled record of a manifest in place.

    Records already carrying a label are skipped, so an interrupted run
    resumes where its last committed chunk ended. Per-circuit seeds come
    from (config.seed, circuit_id), which makes labels independent of `jobs`.
    """
    summary = LabelSummary()
    config_data = config.model_dump()
    with manifest_scope(manifest_path) as session:
        pending = []
        for index, record in enumerate(session.records):
            if record.is_labeled:
                summary.skipped += 1
            else:
                pending.append(index)
        logger.info("Labeling started", pending=len(pending), skipped=summary.skipped, jobs=jobs)

        executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
        try:
            for start in range(0, len(pending), chunk_size):
                chunk = pending[start:start + chunk_size]
                tasks = [(session.records[i].circuit_id, session.records[i].circuit, config_data) for i in chunk]
                results = executor.map(_label_record, tasks) if executor else map(_label_record, tasks)
                for index, (circuit_id, value, error) in zip(chunk, results):
                    record = session.records[index]
                    if error is None:
                        session.records[index] = record.model_copy(
                            update={"label": value, "estimator": config.echo(), "error": None}
                        )
                        summary.labeled += 1
                    else:
                        session.records[index] = record.model_copy(update={"error": error})
                        summary.failed += 1
                        logger.error("Labeling failed", circuit_id=circuit_id, error=error)
                session.commit()
                logger.info("Chunk labeled", done=min(start + chunk_size, len(pending)), total=len(pending))
        finally:
            if executor:
                executor.shutdown()
    return summary


def labeled_graphs(records: Sequence[DatasetRecord]) -> list[CircuitGraph]:
    """
    Encode labeled records in manifest order.

    Raises:
        DataError: Listing the records that have no label
    """
    unlabeled = [record.circuit_id for record in records if not record.is_labeled]
    if unlabeled:
        shown = ", ".join(unlabeled[:10])
        more = f" and {len(unlabeled) - 10} more" if len(unlabeled) > 10 else ""
        raise DataError(f"{len(unlabeled)} unlabeled record(s): {shown}{more}")
    return [encode(record.parsed_circuit(), label=record.label, circuit_id=record.circuit_id) for record in records]


def select_subset(graphs: list[CircuitGraph], model: GnnModel, subset: str) -> list[CircuitGraph]:
    """
    Pick "all" graphs or re-derive the model's "train" / "val" split.

    The split replays the training shuffle, so the manifest must list the
    same records in the same order as when the model was trained.
    """
    if subset == "all":
        return graphs
    train_config = model.train_config or {}
    if "train_fraction" not in train_config or "seed" not in train_config:
        raise DataError("checkpoint has no training split settings")
    train_part, val_part = split_dataset(graphs, train_config["train_fraction"], train_config["seed"])
    return train_part if subset == "train" else val_part


def evaluate(model: GnnModel, graphs: Sequence[CircuitGraph], batch_size: int = 2048, dataset: Optional[dict] = None) -> EvalReport:
    """Predict every graph and compare with its label, rows in input order."""
    if not graphs:
        raise DataError("nothing to evaluate")
    predictions = np.concatenate([
        model.predict_graphs(graphs[i:i + batch_size]) for i in range(0, len(graphs), batch_size)
    ])
    rows = [
        EvalRow(circuit_id=graph.circuit_id, true=float(graph.label), predicted=float(pred))
        for graph, pred in zip(graphs, predictions)
    ]
    truth = [row.true for row in rows]
    correlation = None
    if len(rows) > 1 and np.ptp(truth) > 0 and np.ptp(predictions) > 0:
        correlation = float(spearmanr(truth, predictions).statistic)
    return EvalReport(
        rows=rows,
        rmse=rmse((row.true, row.predicted) for row in rows),
        spearman=correlation,
        dataset=dataset or {},
    )


@dataclass
class BenchmarkResult:
    circuits: int
    label_seconds: float
    predict_seconds: float

    @property
    def speedup(self) -> float:
        return self.label_seconds / self.predict_seconds if self.predict_seconds > 0 else math.inf


def benchmark(model: GnnModel, records: Sequence[DatasetRecord], config: EstimatorConfig) -> BenchmarkResult:
    """Wall time of ground-truth labeling against surrogate prediction on the same circuits."""
    if not records:
        raise DataError("nothing to benchmark")
    circuits = [record.parsed_circuit() for record in records]
    simulator = StatevectorSimulator()

    started = time.perf_counter()
    for record, circuit in zip(records, circuits):
        expressibility(circuit, config, simulator, circuit_id=record.circuit_id)
    label_seconds = time.perf_counter() - started

    started = time.perf_counter()
    model.predict_graphs([encode(circuit, circuit_id=record.circuit_id) for record, circuit in zip(records, circuits)])
    predict_seconds = time.perf_counter() - started

    result = BenchmarkResult(len(records), label_seconds, predict_seconds)
    logger.info("Benchmark finished", circuits=result.circuits, label_seconds=label_seconds, predict_seconds=predict_seconds)
    return result
