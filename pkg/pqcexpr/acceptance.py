"""
Desk-scale end-to-end acceptance run.

Generates and labels a random training set, trains the regressor, then
scores it on the held-out split and on the RealAmplitudes suite. The report
also carries the label noise floor: the RMSE between the held-out labels and
a relabeling of the same circuits under another seed. No model can score
below that floor, so a miss above it points at the model and a floor above
the threshold points at the labeling budget.
"""

import json
import time
from pathlib import Path
from typing import Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from pqcexpr.expressibility import EstimatorConfig, expressibility
from pqcexpr.gnn.checkpoint import save_checkpoint
from pqcexpr.gnn.model import ModelConfig
from pqcexpr.gnn.train import TrainConfig, train
from pqcexpr.manifest import read_manifest
from pqcexpr.models.records import EvalReport
from pqcexpr.pipeline import evaluate, label_manifest, labeled_graphs, rmse, select_subset, write_circuit_set
from pqcexpr.simulator import StatevectorSimulator
from pqcexpr.sources import get_source

logger = structlog.get_logger()


class AcceptanceRecipe(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    count: int = Field(default=1500, ge=2)
    max_qubits: int = Field(default=4, ge=1)
    max_depth: int = Field(default=40, ge=2)
    num_samples: int = Field(default=1000, ge=1)
    num_bins: int = Field(default=75, ge=2)
    epochs: int = Field(default=150, ge=1)
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    seed: int = 0
    jobs: int = Field(default=1, ge=1)
    val_rmse_max: float = 0.10
    suite_rmse_max: float = 0.15
    suite_spearman_min: float = 0.8


class AcceptanceReport(BaseModel):
    recipe: AcceptanceRecipe
    val_rmse: float
    val_spearman: Optional[float]
    suite_rmse: float
    suite_spearman: Optional[float]
    label_noise_rmse: float
    label_quantiles: dict[str, float]
    seconds: dict[str, float]

    @property
    def val_passed(self) -> bool:
        return self.val_rmse <= self.recipe.val_rmse_max

    @property
    def suite_passed(self) -> bool:
        return (
            self.suite_rmse <= self.recipe.suite_rmse_max
            and self.suite_spearman is not None
            and self.suite_spearman >= self.recipe.suite_spearman_min
        )

    @property
    def passed(self) -> bool:
        return self.val_passed and self.suite_passed

    def summary(self) -> dict:
        return {
            **self.model_dump(mode="json"),
            "val_passed": self.val_passed,
            "suite_passed": self.suite_passed,
            "passed": self.passed,
        }


def label_noise_rmse(report: EvalReport, records: dict, config: EstimatorConfig) -> float:
    """RMSE between stored labels and labels recomputed under seed + 1."""
    reseeded = config.model_copy(update={"seed": config.seed + 1})
    simulator = StatevectorSimulator()
    pairs = []
    for row in report.rows:
        record = records[row.circuit_id]
        again = expressibility(record.parsed_circuit(), reseeded, simulator, circuit_id=row.circuit_id).value
        pairs.append((row.true, again))
    return rmse(pairs)


def run_acceptance(recipe: AcceptanceRecipe, workdir: Union[str, Path]) -> AcceptanceReport:
    """Run the full recipe under `workdir` and write `acceptance.json` there."""
    workdir = Path(workdir)
    seconds = {}
    estimator = EstimatorConfig(num_samples=recipe.num_samples, num_bins=recipe.num_bins, seed=recipe.seed)

    started = time.perf_counter()
    source = get_source(
        "random", count=recipe.count, max_qubits=recipe.max_qubits, max_depth=recipe.max_depth, seed=recipe.seed
    )
    random_manifest = write_circuit_set(source, workdir / "random")
    suite_manifest = write_circuit_set(get_source("realamp"), workdir / "realamp")
    label_manifest(random_manifest, estimator, jobs=recipe.jobs)
    label_manifest(suite_manifest, estimator, jobs=recipe.jobs)
    seconds["label"] = time.perf_counter() - started

    started = time.perf_counter()
    records = read_manifest(random_manifest)
    graphs = labeled_graphs(records)
    train_config = TrainConfig(
        epochs=recipe.epochs, learning_rate=recipe.learning_rate, batch_size=recipe.batch_size, seed=recipe.seed
    )
    model, history = train(graphs, train_config, ModelConfig(init_seed=recipe.seed))
    save_checkpoint(model, workdir / "model.json")
    history.to_frame().to_csv(workdir / "history.csv", index=False)
    seconds["train"] = time.perf_counter() - started

    started = time.perf_counter()
    val_report = evaluate(model, select_subset(graphs, model, "val"))
    suite_report = evaluate(model, labeled_graphs(read_manifest(suite_manifest)))
    val_report.to_frame().to_csv(workdir / "eval_val.csv", index=False)
    suite_report.to_frame().to_csv(workdir / "eval_realamp.csv", index=False)
    noise = label_noise_rmse(val_report, {record.circuit_id: record for record in records}, estimator)
    seconds["evaluate"] = time.perf_counter() - started

    labels = np.array([record.label for record in records], dtype=float)
    quantiles = dict(zip(("median", "p90", "p99", "max"), np.quantile(labels, (0.5, 0.9, 0.99, 1.0)).tolist()))
    report = AcceptanceReport(
        recipe=recipe,
        val_rmse=val_report.rmse,
        val_spearman=val_report.spearman,
        suite_rmse=suite_report.rmse,
        suite_spearman=suite_report.spearman,
        label_noise_rmse=noise,
        label_quantiles=quantiles,
        seconds=seconds,
    )
    (workdir / "acceptance.json").write_text(json.dumps(report.summary(), indent=2) + "\n")
    logger.info(
        "Acceptance run finished",
        val_rmse=report.val_rmse,
        suite_rmse=report.suite_rmse,
        suite_spearman=report.suite_spearman,
        label_noise_rmse=noise,
        passed=report.passed,
    )
    return report
