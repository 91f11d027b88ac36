"""
Expressibility as the KL divergence between a circuit's sampled fidelity
distribution and the Haar-random fidelity distribution.

Labels use the natural log. Empty empirical bins contribute nothing, and
every Haar bin has strictly positive mass, so the divergence is finite.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import rel_entr

from pqcexpr.core.settings import settings
from pqcexpr.models.circuit import ParameterizedCircuit, ensure_valid
from pqcexpr.seeding import derive_seed
from pqcexpr.simulator import TWO_PI, StatevectorSimulator

logger = structlog.get_logger()

LOG_BASE = "e"
SUM_TOLERANCE = 1e-9


class EstimatorConfig(BaseModel):
    """Fidelity sampling and binning settings; echoed next to every label."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_samples: int = Field(default_factory=lambda: settings.num_samples, ge=1)
    num_bins: int = Field(default_factory=lambda: settings.num_bins, ge=2)
    mode: Literal["exact", "shots"] = "exact"
    shots: int = Field(default_factory=lambda: settings.shots, ge=1)
    seed: int = Field(default_factory=lambda: settings.seed)

    @model_validator(mode="after")
    def _warn_sparse_histogram(self) -> "EstimatorConfig":
        if self.num_samples < self.num_bins:
            logger.warning("Fewer samples than bins", num_samples=self.num_samples, num_bins=self.num_bins)
        return self

    def echo(self) -> dict:
        """Config as recorded beside a label."""
        return {**self.model_dump(), "log_base": LOG_BASE}


def bin_edges(num_bins: int) -> np.ndarray:
    return np.arange(num_bins + 1) / num_bins


@dataclass(frozen=True)
class FidelityHistogram:
    """Empirical fidelity distribution; the last bin is closed at F = 1."""

    bin_edges: np.ndarray
    probabilities: np.ndarray
    num_samples: int

    @classmethod
    def from_samples(cls, fidelities: np.ndarray, num_bins: int) -> "FidelityHistogram":
        edges = bin_edges(num_bins)
        counts, _ = np.histogram(np.asarray(fidelities, dtype=float), bins=edges)
        return cls(bin_edges=edges, probabilities=counts / len(fidelities), num_samples=len(fidelities))


@dataclass(frozen=True)
class HaarReference:
    num_qubits: int
    bin_probs: np.ndarray


@dataclass(frozen=True)
class ExpressibilityEstimate:
    value: float
    histogram: FidelityHistogram
    config: EstimatorConfig
    circuit_id: str


def haar_density(fidelity, num_qubits: int):
    """Haar fidelity density (N-1)(1-F)^(N-2), N = 2**num_qubits."""
    dim = 2 ** num_qubits
    return (dim - 1) * (1 - np.asarray(fidelity, dtype=float)) ** (dim - 2)


def haar_bin_probs(num_bins: int, num_qubits: int) -> HaarReference:
    """
    Exact Haar bin masses from the CDF 1 - (1-F)^(N-1).

    q_i = (1 - F_i)^(N-1) - (1 - F_{i+1})^(N-1), F_i = i / num_bins.
    """
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    if num_qubits < 1:
        raise ValueError("num_qubits must be >= 1")
    survival = (1 - bin_edges(num_bins)) ** (2 ** num_qubits - 1)
    return HaarReference(num_qubits=num_qubits, bin_probs=survival[:-1] - survival[1:])


def haar_fidelity_samples(num_samples: int, num_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Draw Haar-random fidelities by inverse transform, F = 1 - U^(1/(N-1))."""
    u = rng.random(num_samples)
    return 1 - u ** (1 / (2 ** num_qubits - 1))


def kl_divergence(p, q) -> float:
    """
    D_KL(p || q) in nats; bins with p_i = 0 contribute 0.

    Raises:
        ValueError: On length mismatch, unnormalized inputs, or q_i <= 0
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise ValueError("reference distribution has non-positive mass")
    if abs(p.sum() - 1) > SUM_TOLERANCE or abs(q.sum() - 1) > SUM_TOLERANCE:
        raise ValueError("distributions must sum to 1")
    return max(float(np.sum(rel_entr(p, q))), 0.0)


def sample_fidelities(
    circuit: ParameterizedCircuit,
    config: EstimatorConfig,
    simulator: Optional[StatevectorSimulator] = None,
    circuit_id: str = "",
) -> np.ndarray:
    """
    Sample `config.num_samples` fidelities between independent parameter draws.

    Parameters are uniform on [0, 2*pi), drawn sample by sample from a stream
    seeded by (config.seed, circuit_id), so sample i depends only on the seed,
    the circuit id and i.
    """
    simulator = simulator or StatevectorSimulator()
    ensure_valid(circuit, max_qubits=simulator.max_qubits)
    if circuit.num_params == 0:
        return np.ones(config.num_samples)

    seed = derive_seed(config.seed, circuit_id)
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, TWO_PI, size=(config.num_samples, 2, circuit.num_params))
    if config.mode == "exact":
        return simulator.fidelity_exact_batch(circuit, thetas[:, 0], thetas[:, 1])
    shot_rng = np.random.default_rng([seed, 1])
    return simulator.fidelity_kernel_shots_batch(circuit, thetas[:, 0], thetas[:, 1], config.shots, shot_rng)


def expressibility(
    circuit: ParameterizedCircuit,
    config: Optional[EstimatorConfig] = None,
    simulator: Optional[StatevectorSimulator] = None,
    circuit_id: str = "",
) -> ExpressibilityEstimate:
    """Sample fidelities, bin them, and take the KL divergence to the Haar bins."""
    config = config or EstimatorConfig()
    fidelities = sample_fidelities(circuit, config, simulator, circuit_id=circuit_id)
    histogram = FidelityHistogram.from_samples(fidelities, config.num_bins)
    haar = haar_bin_probs(config.num_bins, circuit.num_qubits)
    value = kl_divergence(histogram.probabilities, haar.bin_probs)
    logger.debug("Expressibility estimated", circuit_id=circuit_id, value=value, mode=config.mode)
    return ExpressibilityEstimate(value=value, histogram=histogram, config=config, circuit_id=circuit_id)
