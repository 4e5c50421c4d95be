"""Dense statevector register.

Qubit ordering: qubit 0 is the most significant bit of the amplitude index,
so basis label ``|q0 q1 ... q_{n-1}>`` maps to index ``int("q0q1...", 2)``.
Every module in the package shares this convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 24
UNITARY_ATOL = 1e-9
DEGENERATE_PROBABILITY = 1e-15


class QubitIndexError(ValueError):
    """Target qubit out of range or repeated."""


class NotUnitaryError(ValueError):
    pass


class DegenerateMeasurementError(ArithmeticError):
    """Collapse onto an outcome whose probability is numerically zero."""


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class ClassicalRegister:
    width: int
    bits: list = field(default_factory=list)

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("register width must be nonnegative")
        if not self.bits:
            self.bits = [0] * self.width
        if len(self.bits) != self.width:
            raise ValueError(f"expected {self.width} bits, got {len(self.bits)}")

    def __getitem__(self, i: int) -> int:
        return self.bits[i]

    def __setitem__(self, i: int, value: int):
        self.bits[i] = int(value)


def new_state(num_qubits: int, basis_index: int = 0) -> StateVector:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in 1..{MAX_QUBITS}, got {num_qubits}")
    dim = 1 << num_qubits
    if not 0 <= basis_index < dim:
        raise ValueError(f"basis_index {basis_index} out of range for {num_qubits} qubits")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[basis_index] = 1.0
    return StateVector(num_qubits, amps)


def check_targets(targets, num_qubits: int) -> tuple:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise QubitIndexError(f"duplicate targets {targets}")
    for t in targets:
        if not 0 <= t < num_qubits:
            raise QubitIndexError(f"qubit {t} out of range for {num_qubits} qubits")
    return targets


def unitarity_error(matrix: np.ndarray) -> float:
    """Max-norm of U^dagger U - I."""
    m = np.asarray(matrix)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def apply_matrix(amps: np.ndarray, targets, matrix: np.ndarray, num_qubits: int) -> np.ndarray:
    """Apply ``matrix`` to ``targets`` of a batch of amplitude vectors.

    ``amps`` has shape ``(2**num_qubits, ...)``; trailing axes are carried
    along untouched, which lets the same routine compose dense operators
    column by column. No validation is done here.
    """
    k = len(targets)
    batch = amps.shape[1:]
    psi = amps.reshape((2,) * num_qubits + batch)
    gate = np.asarray(matrix, dtype=np.complex128).reshape((2,) * (2 * k))
    out = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), list(targets)))
    # tensordot puts the k new axes first; move them back into place
    out = np.moveaxis(out, list(range(k)), list(targets))
    return out.reshape(amps.shape)


def apply_unitary(state: StateVector, targets, matrix, check: bool = True) -> StateVector:
    targets = check_targets(targets, state.num_qubits)
    matrix = np.asarray(matrix, dtype=np.complex128)
    k = len(targets)
    if not 1 <= k <= 3:
        raise QubitIndexError(f"gates act on 1 to 3 qubits, got {k}")
    if matrix.shape != (1 << k, 1 << k):
        raise ValueError(f"matrix shape {matrix.shape} does not match {k} targets")
    if check and unitarity_error(matrix) > UNITARY_ATOL:
        raise NotUnitaryError(f"matrix is not unitary (error {unitarity_error(matrix):.3e})")
    amps = apply_matrix(state.amplitudes, targets, matrix, state.num_qubits)
    return StateVector(state.num_qubits, amps)


def _bit_mask(num_qubits: int, q: int) -> np.ndarray:
    idx = np.arange(1 << num_qubits)
    return ((idx >> (num_qubits - 1 - q)) & 1).astype(bool)


def excited_population(state: StateVector, q: int) -> float:
    (q,) = check_targets([q], state.num_qubits)
    psi = state.amplitudes.reshape((2,) * state.num_qubits)
    upper = np.take(psi, 1, axis=q)
    return float(np.vdot(upper, upper).real)


def measure_qubit(state: StateVector, q: int, rng: np.random.Generator):
    """Projective Z measurement of qubit ``q``.

    Draws exactly one uniform from ``rng``; outcome 1 iff the draw is below
    the outcome-1 probability. Returns ``(outcome, collapsed_state)``.
    """
    (q,) = check_targets([q], state.num_qubits)
    ones = _bit_mask(state.num_qubits, q)
    probs = state.probabilities()
    p1 = float(probs[ones].sum())
    outcome = 1 if rng.random() < p1 else 0
    p = p1 if outcome else float(probs[~ones].sum())
    if p < DEGENERATE_PROBABILITY:
        raise DegenerateMeasurementError(
            f"outcome {outcome} on qubit {q} has probability {p:.3e}"
        )
    amps = np.where(ones if outcome else ~ones, state.amplitudes, 0.0) / np.sqrt(p)
    return outcome, StateVector(state.num_qubits, amps)


_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def reset_qubit(state: StateVector, q: int, rng: np.random.Generator) -> StateVector:
    # measure, then flip when the qubit was found occupied
    outcome, state = measure_qubit(state, q, rng)
    if outcome:
        state = apply_unitary(state, [q], _X, check=False)
    return state
