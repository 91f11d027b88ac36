"""
Statevector simulator for the six-gate set.

Qubit 0 is the most significant bit of a basis index, so |10> means
qubit 0 in state 1. Gates act in place on strided views of the amplitude
buffer: amplitude pairs for single-qubit gates, the control-1 half of the
target pairs for CX. The same kernels run on a batch of states stacked
along a leading axis, which is how fidelity sampling simulates thousands
of parameter draws per circuit.
"""

from dataclasses import dataclass
from math import cos, pi, sin
from typing import Optional, Sequence

import numpy as np

from pqcexpr.core.errors import NumericalError
from pqcexpr.core.settings import settings
from pqcexpr.models.circuit import Gate, GateKind, ParameterizedCircuit, ensure_valid

NORM_TOLERANCE = 1e-10
FIDELITY_SLACK = 1e-9
TWO_PI = 2 * pi

_FIXED_MATRICES = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.SX: 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
}


def gate_matrix(kind: GateKind, angle: Optional[float] = None) -> np.ndarray:
    """
    Unitary of a gate kind: 2x2 for single-qubit kinds, 4x4 for CX.

    The CX matrix is written in the (control, target) basis order.
    """
    if kind is GateKind.CX:
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if kind in _FIXED_MATRICES:
        return _FIXED_MATRICES[kind]
    if angle is None:
        raise ValueError(f"{kind.value} needs an angle")
    c, s = cos(angle / 2), sin(angle / 2)
    if kind is GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind is GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex)


def _rotation_entries(kind: GateKind, angles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (u00, u01, u10, u11) for a batch of rotation angles."""
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    if kind is GateKind.RX:
        return c + 0j, -1j * s, -1j * s, c + 0j
    if kind is GateKind.RY:
        return c + 0j, -s + 0j, s + 0j, c + 0j
    zero = np.zeros_like(angles, dtype=complex)
    return np.exp(-0.5j * angles), zero, zero, np.exp(0.5j * angles)


def _pair_view(amplitudes: np.ndarray, num_qubits: int, qubit: int) -> np.ndarray:
    """View (batch, high, 2, low) where axis 2 is the bit of `qubit`."""
    batch = amplitudes.shape[0]
    return amplitudes.reshape(batch, 2 ** qubit, 2, 2 ** (num_qubits - qubit - 1))


def _apply_single(amplitudes: np.ndarray, num_qubits: int, qubit: int, u00, u01, u10, u11) -> None:
    view = _pair_view(amplitudes, num_qubits, qubit)
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    view[:, :, 0, :] = u00 * a0 + u01 * a1
    view[:, :, 1, :] = u10 * a0 + u11 * a1


def _apply_cx(amplitudes: np.ndarray, num_qubits: int, control: int, target: int) -> None:
    batch = amplitudes.shape[0]
    tensor = amplitudes.reshape((batch,) + (2,) * num_qubits)
    index0: list = [slice(None)] * (num_qubits + 1)
    index0[1 + control] = 1
    index1 = list(index0)
    index0[1 + target] = 0
    index1[1 + target] = 1
    flipped = tensor[tuple(index0)].copy()
    tensor[tuple(index0)] = tensor[tuple(index1)]
    tensor[tuple(index1)] = flipped


def _broadcast(entries):
    """Shape per-sample matrix entries to broadcast over (batch, high, low)."""
    return tuple(np.asarray(e).reshape(-1, 1, 1) if np.ndim(e) else e for e in entries)


def apply_gate_batch(
    amplitudes: np.ndarray,
    num_qubits: int,
    gate: Gate,
    angles: Optional[np.ndarray] = None,
    inverse: bool = False,
) -> None:
    """
    Apply one gate in place to a (batch, 2**n) amplitude buffer.

    Args:
        amplitudes: Complex buffer, modified in place
        num_qubits: Qubit count of the buffer
        gate: Gate to apply
        angles: One angle per batch row for parameterized kinds
        inverse: Apply the adjoint instead
    """
    if gate.kind is GateKind.CX:
        _apply_cx(amplitudes, num_qubits, gate.qubits[0], gate.qubits[1])
        return
    qubit = gate.qubits[0]
    if gate.kind.is_parameterized:
        values = -angles if inverse else angles
        entries = _rotation_entries(gate.kind, np.asarray(values, dtype=float))
    else:
        matrix = gate_matrix(gate.kind)
        if inverse:
            matrix = matrix.conj().T
        entries = (matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1])
    _apply_single(amplitudes, num_qubits, qubit, *_broadcast(entries))


@dataclass
class StateVector:
    """Dense statevector of `num_qubits` qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


def init_state(num_qubits: int, max_qubits: Optional[int] = None) -> StateVector:
    cap = settings.max_qubits if max_qubits is None else max_qubits
    if num_qubits < 1 or num_qubits > cap:
        raise ValueError(f"num_qubits {num_qubits} outside [1, {cap}]")
    amplitudes = np.zeros(2 ** num_qubits, dtype=complex)
    amplitudes[0] = 1.0
    return StateVector(num_qubits, amplitudes)


def _check_norm(amplitudes: np.ndarray, stage: str) -> None:
    norms = np.linalg.norm(amplitudes, axis=-1)
    if not np.all(np.abs(norms - 1.0) < NORM_TOLERANCE):
        raise NumericalError(f"statevector norm drifted to {norms.max():.3e}", stage=stage)


def apply_gate(state: StateVector, gate: Gate, angle: Optional[float] = None) -> StateVector:
    """
    Apply a gate to a copy of `state`.

    Raises:
        ValueError: If the angle is missing or extra, or a qubit is out of range
    """
    if gate.kind.is_parameterized != (angle is not None):
        raise ValueError(f"{gate.kind.value} takes {'one angle' if gate.kind.is_parameterized else 'no angle'}")
    if len(gate.qubits) != gate.kind.num_qubits or len(set(gate.qubits)) != len(gate.qubits):
        raise ValueError(f"bad qubit list {gate.qubits} for {gate.kind.value}")
    if any(q < 0 or q >= state.num_qubits for q in gate.qubits):
        raise ValueError(f"qubits {gate.qubits} out of range for {state.num_qubits} qubits")
    result = state.copy()
    buffer = result.amplitudes.reshape(1, -1)
    apply_gate_batch(buffer, state.num_qubits, gate, None if angle is None else np.array([angle]))
    _check_norm(buffer, stage=f"apply_gate {gate.kind.value}")
    return result


class StatevectorSimulator:
    """
    Exact simulator with exact and shot-sampled kernel fidelities.

    All batch methods take parameter arrays of shape (batch, num_params).
    """

    def __init__(self, max_qubits: Optional[int] = None):
        self.max_qubits = settings.max_qubits if max_qubits is None else max_qubits

    def _thetas(self, circuit: ParameterizedCircuit, thetas) -> np.ndarray:
        array = np.asarray(thetas, dtype=float)
        if array.ndim == 1:
            array = array.reshape(1, -1)
        if array.shape[1] != circuit.num_params:
            raise ValueError(f"expected {circuit.num_params} parameters, got {array.shape[1]}")
        return array

    def run_batch(self, circuit: ParameterizedCircuit, thetas) -> np.ndarray:
        """Simulate the circuit once per parameter row; returns (batch, 2**n) amplitudes."""
        thetas = self._thetas(circuit, thetas)
        amplitudes = np.zeros((thetas.shape[0], 2 ** circuit.num_qubits), dtype=complex)
        amplitudes[:, 0] = 1.0
        for gate in circuit.gates:
            angles = thetas[:, gate.param_index] if gate.param_index is not None else None
            apply_gate_batch(amplitudes, circuit.num_qubits, gate, angles)
        _check_norm(amplitudes, stage="run")
        return amplitudes

    def run(self, circuit: ParameterizedCircuit, theta: Sequence[float]) -> StateVector:
        ensure_valid(circuit, max_qubits=self.max_qubits)
        return StateVector(circuit.num_qubits, self.run_batch(circuit, theta)[0])

    def kernel_batch(self, circuit: ParameterizedCircuit, thetas1, thetas2) -> np.ndarray:
        """
        Run U(theta2)^dagger U(theta1) on |0...0> for every row pair.

        Returns:
            Probability of the all-zeros outcome per row
        """
        thetas1 = self._thetas(circuit, thetas1)
        thetas2 = self._thetas(circuit, thetas2)
        amplitudes = np.zeros((thetas1.shape[0], 2 ** circuit.num_qubits), dtype=complex)
        amplitudes[:, 0] = 1.0
        for gate in circuit.gates:
            angles = thetas1[:, gate.param_index] if gate.param_index is not None else None
            apply_gate_batch(amplitudes, circuit.num_qubits, gate, angles)
        for gate in reversed(circuit.gates):
            angles = thetas2[:, gate.param_index] if gate.param_index is not None else None
            apply_gate_batch(amplitudes, circuit.num_qubits, gate, angles, inverse=True)
        _check_norm(amplitudes, stage="kernel")
        return _clamp_fidelity(np.abs(amplitudes[:, 0]) ** 2)

    def fidelity_exact_batch(self, circuit: ParameterizedCircuit, thetas1, thetas2) -> np.ndarray:
        psi1 = self.run_batch(circuit, thetas1)
        psi2 = self.run_batch(circuit, thetas2)
        overlaps = np.einsum("bi,bi->b", psi1.conj(), psi2)
        return _clamp_fidelity(np.abs(overlaps) ** 2)

    def fidelity_exact(self, circuit: ParameterizedCircuit, theta1, theta2) -> float:
        """|<psi(theta1)|psi(theta2)>|^2, clamped to [0, 1]."""
        ensure_valid(circuit, max_qubits=self.max_qubits)
        return float(self.fidelity_exact_batch(circuit, theta1, theta2)[0])

    def fidelity_kernel_shots_batch(
        self, circuit: ParameterizedCircuit, thetas1, thetas2, shots: int, rng: np.random.Generator
    ) -> np.ndarray:
        if shots < 1:
            raise ValueError("shots must be >= 1")
        p = self.kernel_batch(circuit, thetas1, thetas2)
        return rng.binomial(shots, p) / shots

    def fidelity_kernel_shots(
        self, circuit: ParameterizedCircuit, theta1, theta2, shots: int, rng: np.random.Generator
    ) -> float:
        """
        Shot-sampled kernel estimate of the fidelity.

        The all-zeros count is Binomial(shots, p) with p the exact kernel
        probability, so the estimate is unbiased.
        """
        ensure_valid(circuit, max_qubits=self.max_qubits)
        return float(self.fidelity_kernel_shots_batch(circuit, theta1, theta2, shots, rng)[0])


def _clamp_fidelity(values: np.ndarray) -> np.ndarray:
    if np.any(values > 1.0 + FIDELITY_SLACK) or np.any(values < -FIDELITY_SLACK) or not np.all(np.isfinite(values)):
        raise NumericalError("fidelity outside [0, 1]", stage="fidelity")
    return np.clip(values, 0.0, 1.0)


