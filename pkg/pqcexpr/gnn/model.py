"""
GraphSAGE-style expressibility regressor.

Three mean-aggregation message-passing layers feed a mean-pooled graph
embedding; three fully connected layers embed the global circuit features;
the two are concatenated and passed through a small regression head whose
output is mapped to label units by a shift and scale fitted on the training
labels. Everything runs in float64.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from pqcexpr.core.errors import NumericalError
from pqcexpr.graph import D_GLOBAL, D_NODE, CircuitGraph, NormStats, apply_normalizer, encode
from pqcexpr.models.circuit import ParameterizedCircuit

DTYPE = torch.float64


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    d_node_in: int = Field(default=D_NODE, ge=1)
    d_hidden: int = Field(default=64, ge=1)
    d_global_in: int = Field(default=D_GLOBAL, ge=1)
    d_global_hidden: int = Field(default=32, ge=1)
    d_head_hidden: int = Field(default=32, ge=1)
    layers_mp: int = Field(default=3, ge=1)
    layers_global: int = Field(default=3, ge=1)
    neighborhood: Literal["symmetric", "in"] = "symmetric"
    huber_delta: float = Field(default=1.0, gt=0)
    init_seed: int = 0

    @property
    def d_fused(self) -> int:
        return self.d_hidden + self.d_global_hidden


@dataclass
class GraphBatch:
    """Disjoint union of graphs. Messages flow src[k] -> dst[k]."""

    x: torch.Tensor
    src: torch.Tensor
    dst: torch.Tensor
    node_graph: torch.Tensor
    globals_: torch.Tensor
    y: Optional[torch.Tensor]
    circuit_ids: list[str]

    @property
    def num_graphs(self) -> int:
        return self.globals_.shape[0]


def collate(graphs: Sequence[CircuitGraph], neighborhood: str = "symmetric") -> GraphBatch:
    """
    Stack graphs into one batch, offsetting node indices.

    With the symmetric neighborhood every wire edge carries a message both
    ways; with "in" a node hears only its predecessors.
    """
    offsets = np.cumsum([0] + [graph.num_nodes for graph in graphs[:-1]])
    edges = np.concatenate([graph.edges + offset for graph, offset in zip(graphs, offsets)]) if graphs else np.zeros((0, 2))
    src, dst = edges[:, 0], edges[:, 1]
    if neighborhood == "symmetric":
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    labels = [graph.label for graph in graphs]
    return GraphBatch(
        x=torch.from_numpy(np.vstack([graph.node_features for graph in graphs])).to(DTYPE),
        src=torch.from_numpy(src.astype(np.int64)),
        dst=torch.from_numpy(dst.astype(np.int64)),
        node_graph=torch.from_numpy(np.repeat(np.arange(len(graphs)), [graph.num_nodes for graph in graphs])),
        globals_=torch.from_numpy(np.vstack([graph.global_features for graph in graphs])).to(DTYPE),
        y=None if any(label is None for label in labels) else torch.tensor(labels, dtype=DTYPE),
        circuit_ids=[graph.circuit_id for graph in graphs],
    )


def scatter_mean(values: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    """Row-wise mean of `values` grouped by `index`; empty groups give zeros."""
    total = torch.zeros((size, values.shape[1]), dtype=values.dtype).index_add_(0, index, values)
    count = torch.zeros(size, dtype=values.dtype).index_add_(0, index, torch.ones_like(index, dtype=values.dtype))
    return total / count.clamp(min=1).unsqueeze(1)


class SageLayer(nn.Module):
    """h'_v = relu(W_root h_v + W_neigh mean_{u in N(v)} h_u + b)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.lin_root = nn.Linear(in_channels, out_channels, bias=True, dtype=DTYPE)
        self.lin_neigh = nn.Linear(in_channels, out_channels, bias=False, dtype=DTYPE)

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        neighbor_mean = scatter_mean(x[src], dst, x.shape[0])
        return F.relu(self.lin_root(x) + self.lin_neigh(neighbor_mean))


class GnnRegressor(nn.Module):

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = [config.d_node_in] + [config.d_hidden] * config.layers_mp
        self.convs = nn.ModuleList(SageLayer(a, b) for a, b in zip(widths[:-1], widths[1:]))
        global_layers: list[nn.Module] = []
        width = config.d_global_in
        for _ in range(config.layers_global):
            global_layers += [nn.Linear(width, config.d_global_hidden, dtype=DTYPE), nn.ReLU()]
            width = config.d_global_hidden
        self.global_mlp = nn.Sequential(*global_layers)
        self.head = nn.Sequential(
            nn.Linear(config.d_fused, config.d_head_hidden, dtype=DTYPE),
            nn.ReLU(),
            nn.Linear(config.d_head_hidden, 1, dtype=DTYPE),
        )
        # prediction = output_shift + output_scale * head; identity until training sets them
        self.register_buffer("output_shift", torch.zeros((), dtype=DTYPE))
        self.register_buffer("output_scale", torch.ones((), dtype=DTYPE))
        self.reset_parameters(config.init_seed)

    def reset_parameters(self, seed: int) -> None:
        """Glorot-uniform weights and zero biases, drawn from `seed`."""
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for name, param in self.named_parameters():
                if name.endswith("bias"):
                    nn.init.zeros_(param)
                else:
                    nn.init.xavier_uniform_(param)

    def set_output_scaling(self, shift: float, scale: float) -> None:
        if not scale > 0:
            raise ValueError(f"output scale must be positive, got {scale}")
        self.output_shift.fill_(shift)
        self.output_scale.fill_(scale)

    def embed_nodes(self, batch: GraphBatch) -> torch.Tensor:
        h = batch.x
        for conv in self.convs:
            h = conv(h, batch.src, batch.dst)
        return scatter_mean(h, batch.node_graph, batch.num_graphs)

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        fused = torch.cat([self.embed_nodes(batch), self.global_mlp(batch.globals_)], dim=1)
        return self.output_shift + self.output_scale * self.head(fused).squeeze(1)


@dataclass
class GnnModel:
    """Trained network plus the normalization it expects."""

    network: GnnRegressor
    norm_stats: NormStats
    config: ModelConfig
    train_config: Optional[dict] = None

    def prepare(self, graphs: Sequence[CircuitGraph]) -> GraphBatch:
        return collate([apply_normalizer(graph, self.norm_stats) for graph in graphs], self.config.neighborhood)

    def predict_graphs(self, graphs: Sequence[CircuitGraph]) -> np.ndarray:
        self.network.eval()
        with torch.no_grad():
            return self.network(self.prepare(graphs)).numpy().copy()


def mp_layer_forward(graph: CircuitGraph, h: torch.Tensor, layer: SageLayer, neighborhood: str = "symmetric") -> torch.Tensor:
    """Run one message-passing layer over a single graph's node matrix."""
    if h.shape[0] != graph.num_nodes:
        raise ValueError(f"node matrix has {h.shape[0]} rows for {graph.num_nodes} nodes")
    batch = collate([graph], neighborhood)
    return layer(h, batch.src, batch.dst)


def model_forward(model: GnnModel, graph: CircuitGraph) -> float:
    """Prediction for a graph already normalized with `model.norm_stats`."""
    model.network.eval()
    with torch.no_grad():
        return float(model.network(collate([graph], model.config.neighborhood))[0])


def huber_loss(pred: torch.Tensor, target: torch.Tensor, delta: float = 1.0) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return F.huber_loss(pred, target, reduction="mean", delta=delta)


def loss_and_gradients(
    batch: GraphBatch, network: GnnRegressor, weight_decay: float = 0.0
) -> tuple[float, "OrderedDict[str, torch.Tensor]"]:
    """
    Mean Huber loss and its exact gradient for every parameter.

    Args:
        batch: Labeled, normalized batch
        network: Network to differentiate
        weight_decay: L2 coefficient; adds weight_decay * w to each gradient

    Raises:
        NumericalError: Naming the first parameter with a non-finite gradient
    """
    named = list(network.named_parameters())
    loss = huber_loss(network(batch), batch.y, network.config.huber_delta)
    if not torch.isfinite(loss):
        raise NumericalError(f"loss is {loss.item()}", stage="loss")
    grads = torch.autograd.grad(loss, [param for _, param in named])
    result: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for (name, param), grad in zip(named, grads):
        if not torch.all(torch.isfinite(grad)):
            raise NumericalError("non-finite gradient", stage=name)
        result[name] = grad + weight_decay * param.detach() if weight_decay else grad
    return loss.item(), result


def backward(batch: GraphBatch, network: GnnRegressor, weight_decay: float = 0.0) -> "OrderedDict[str, torch.Tensor]":
    """Exact reverse-mode gradients of the mean Huber loss, keyed by parameter name."""
    return loss_and_gradients(batch, network, weight_decay)[1]


def adam_step(optimizer: torch.optim.Optimizer, network: GnnRegressor, gradients: "OrderedDict[str, torch.Tensor]") -> None:
    """Load `gradients` into the parameters and take one optimizer step."""
    for name, param in network.named_parameters():
        param.grad = gradients[name].clone()
    optimizer.step()


def predict(model: GnnModel, circuit: ParameterizedCircuit) -> float:
    """
    Encode, normalize, and run the model on one circuit.

    Raises:
        SchemaError: If the circuit is wider than the feature schema
    """
    return float(model.predict_graphs([encode(circuit)])[0])
