"""
Training loop for the expressibility regressor.

Adam with L2 weight decay folded into the gradient, a reduce-on-plateau
scheduler driven by validation loss, and best-validation checkpointing.
"""

import copy
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import structlog
import torch
from pydantic import BaseModel, ConfigDict, Field

from pqcexpr.core.errors import DataError, NumericalError
from pqcexpr.gnn.model import GnnModel, GnnRegressor, ModelConfig, adam_step, collate, huber_loss, loss_and_gradients
from pqcexpr.graph import CircuitGraph, apply_normalizer, fit_normalizer
from pqcexpr.seeding import derive_seed

logger = structlog.get_logger()

# Labels spread over less than this many nats are fitted unscaled.
TARGET_SCALE_FLOOR = 1.0


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    weight_decay: float = Field(default=1e-6, ge=0)
    batch_size: int = Field(default=2048, ge=1)
    scheduler_factor: float = Field(default=0.1, gt=0, lt=1)
    scheduler_patience: int = Field(default=10, ge=0)
    min_lr: float = Field(default=1e-7, ge=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(default=1e-8, gt=0)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    standardize_target: bool = True
    seed: int = 0

    @property
    def val_fraction(self) -> float:
        return 1.0 - self.train_fraction


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    val_rmse: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def learning_rates(self) -> list[float]:
        return [record.lr for record in self.records]

    def to_frame(self) -> pd.DataFrame:
        """History table with columns epoch, train_loss, val_loss, lr."""
        return pd.DataFrame(
            [(r.epoch, r.train_loss, r.val_loss, r.lr) for r in self.records],
            columns=["epoch", "train_loss", "val_loss", "lr"],
        )


def split_dataset(graphs: Sequence[CircuitGraph], train_fraction: float, seed: int) -> tuple[list[CircuitGraph], list[CircuitGraph]]:
    """Seeded shuffle, then the first fraction trains and the rest validates."""
    if len(graphs) < 2:
        raise DataError("training needs at least 2 labeled circuits")
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(graphs))
    n_train = min(max(1, round(train_fraction * len(graphs))), len(graphs) - 1)
    return [graphs[i] for i in order[:n_train]], [graphs[i] for i in order[n_train:]]


def target_scaling(graphs: Sequence[CircuitGraph]) -> tuple[float, float]:
    """Mean and floored population std of the labels."""
    labels = np.array([graph.label for graph in graphs], dtype=float)
    return float(labels.mean()), max(float(labels.std()), TARGET_SCALE_FLOOR)


def _batches(items: Sequence[CircuitGraph], batch_size: int) -> list[Sequence[CircuitGraph]]:
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


def evaluate_loss(network: GnnRegressor, graphs: Sequence[CircuitGraph], batch_size: int) -> tuple[float, float]:
    """Mean Huber loss and RMSE over normalized, labeled graphs."""
    network.eval()
    total_loss, total_sq = 0.0, 0.0
    with torch.no_grad():
        for chunk in _batches(graphs, batch_size):
            batch = collate(chunk, network.config.neighborhood)
            pred = network(batch)
            total_loss += huber_loss(pred, batch.y, network.config.huber_delta).item() * len(chunk)
            total_sq += torch.sum((pred - batch.y) ** 2).item()
    return total_loss / len(graphs), math.sqrt(total_sq / len(graphs))


def train(
    dataset: Sequence[CircuitGraph],
    train_config: Optional[TrainConfig] = None,
    model_config: Optional[ModelConfig] = None,
) -> tuple[GnnModel, TrainHistory]:
    """
    Fit the regressor on labeled graphs and return the best-validation model.

    Normalization is fitted on the training split only and stored in the model.

    Raises:
        DataError: If the dataset is too small or has unlabeled graphs
        NumericalError: If a loss or gradient becomes non-finite
    """
    train_config = train_config or TrainConfig()
    model_config = model_config or ModelConfig()
    unlabeled = [graph.circuit_id for graph in dataset if graph.label is None]
    if unlabeled:
        raise DataError(f"unlabeled graphs: {', '.join(unlabeled[:10])}")

    train_raw, val_raw = split_dataset(dataset, train_config.train_fraction, train_config.seed)
    norm_stats = fit_normalizer(train_raw)
    train_set = [apply_normalizer(graph, norm_stats) for graph in train_raw]
    val_set = [apply_normalizer(graph, norm_stats) for graph in val_raw]

    network = GnnRegressor(model_config)
    if train_config.standardize_target:
        shift, scale = target_scaling(train_raw)
        network.set_output_scaling(shift, scale)
        logger.info("Target scaling fitted", shift=shift, scale=scale)
    optimizer = torch.optim.Adam(
        network.parameters(),
        lr=train_config.learning_rate,
        betas=train_config.adam_betas,
        eps=train_config.adam_eps,
        weight_decay=train_config.weight_decay,
    )
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer,
        mode="min",
        factor=train_config.scheduler_factor,
        patience=train_config.scheduler_patience,
        threshold=0.0,
        min_lr=train_config.min_lr,
    )
    batch_rng = np.random.default_rng(derive_seed(train_config.seed, "batches"))

    logger.info(
        "Training started",
        train_size=len(train_set),
        val_size=len(val_set),
        epochs=train_config.epochs,
        batch_size=train_config.batch_size,
    )
    history = TrainHistory()
    best_loss, best_state = math.inf, copy.deepcopy(network.state_dict())
    for epoch in range(1, train_config.epochs + 1):
        lr = optimizer.param_groups[0]["lr"]
        network.train()
        order = batch_rng.permutation(len(train_set))
        running = 0.0
        for chunk in _batches([train_set[i] for i in order], train_config.batch_size):
            batch = collate(chunk, model_config.neighborhood)
            batch_loss, gradients = loss_and_gradients(batch, network)
            adam_step(optimizer, network, gradients)
            running += batch_loss * len(chunk)
        train_loss = running / len(train_set)
        val_loss, val_rmse = evaluate_loss(network, val_set, train_config.batch_size)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise NumericalError(f"loss became non-finite at epoch {epoch}", stage="train")

        history.records.append(EpochRecord(epoch, train_loss, val_loss, lr, val_rmse))
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(network.state_dict())
        scheduler.step(val_loss)
        logger.debug("Epoch finished", epoch=epoch, train_loss=train_loss, val_loss=val_loss, val_rmse=val_rmse, lr=lr)

    network.load_state_dict(best_state)
    network.eval()
    logger.info("Training finished", best_val_loss=best_loss, final_lr=optimizer.param_groups[0]["lr"])
    return GnnModel(network, norm_stats, model_config, train_config.model_dump(mode="json")), history
