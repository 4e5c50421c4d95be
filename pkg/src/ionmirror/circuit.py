"""Circuit IR with measurement, classical control and reset, plus the
ion-mirror time-step builder and gate census.

Register layout used by the experiment (see :func:`register_layout`)::

    0          ion
    1          laser slice
    2 .. N+2   field loop q_0 .. q_N

where ``N`` is the number of time slices per mirror round trip.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import gates as g
from .state import (
    ClassicalRegister,
    StateVector,
    apply_unitary,
    check_targets,
    measure_qubit,
    reset_qubit,
    unitarity_error,
    UNITARY_ATOL,
)

DETECTOR_BIT = 0


class OpKind(enum.Enum):
    UNITARY = "unitary"
    MEASURE = "measure"
    CONTROLLED = "c_if"
    RESET = "reset"


@dataclass(frozen=True, eq=False)
class GateOp:
    kind: OpKind
    targets: tuple
    matrix: np.ndarray | None = None
    bit: int | None = None
    name: str = ""
    params: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.targets)

    def describe(self) -> str:
        parts = [self.kind.value, self.name or "-", ",".join(map(str, self.targets))]
        if self.bit is not None:
            parts.append(f"c{self.bit}")
        if self.params:
            parts.append(",".join(f"{p:.17g}" for p in self.params))
        return " ".join(parts)


def unitary(name: str, targets, matrix, *params) -> GateOp:
    return GateOp(OpKind.UNITARY, tuple(targets), np.asarray(matrix, dtype=np.complex128),
                  name=name, params=tuple(params))


def measure(target: int, bit: int) -> GateOp:
    return GateOp(OpKind.MEASURE, (target,), bit=bit, name="measure")


def c_if(bit: int, name: str, targets, matrix) -> GateOp:
    return GateOp(OpKind.CONTROLLED, tuple(targets), np.asarray(matrix, dtype=np.complex128),
                  bit=bit, name=name)


def reset(target: int) -> GateOp:
    return GateOp(OpKind.RESET, (target,), name="reset")


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    classical_width: int
    ops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        self.validate()

    def validate(self):
        for i, op in enumerate(self.ops):
            try:
                check_targets(op.targets, self.num_qubits)
            except ValueError as exc:
                raise CircuitError(f"op {i} ({op.describe()}): {exc}") from exc
            if op.kind in (OpKind.MEASURE, OpKind.RESET) and op.arity != 1:
                raise CircuitError(f"op {i}: {op.kind.value} takes one target")
            if op.kind in (OpKind.MEASURE, OpKind.CONTROLLED):
                if op.bit is None or not 0 <= op.bit < self.classical_width:
                    raise CircuitError(f"op {i}: classical bit {op.bit} out of range")
            if op.kind in (OpKind.UNITARY, OpKind.CONTROLLED):
                dim = 1 << op.arity
                if op.matrix is None or op.matrix.shape != (dim, dim):
                    raise CircuitError(f"op {i}: matrix does not match {op.arity} targets")
                if unitarity_error(op.matrix) > UNITARY_ATOL:
                    raise CircuitError(f"op {i}: matrix is not unitary")

    def __len__(self):
        return len(self.ops)

    def dump(self) -> str:
        """One line per op: kind, name, targets, classical bit, parameters."""
        return "\n".join(op.describe() for op in self.ops)


def execute(circuit: Circuit, state: StateVector, classical: ClassicalRegister,
            rng: np.random.Generator):
    if state.num_qubits != circuit.num_qubits:
        raise CircuitError(
            f"state has {state.num_qubits} qubits, circuit expects {circuit.num_qubits}"
        )
    if classical.width != circuit.classical_width:
        raise CircuitError(
            f"register has {classical.width} bits, circuit expects {circuit.classical_width}"
        )
    classical = ClassicalRegister(classical.width, list(classical.bits))
    for op in circuit.ops:
        if op.kind is OpKind.UNITARY:
            state = apply_unitary(state, op.targets, op.matrix, check=False)
        elif op.kind is OpKind.MEASURE:
            outcome, state = measure_qubit(state, op.targets[0], rng)
            classical[op.bit] = outcome
        elif op.kind is OpKind.CONTROLLED:
            if classical[op.bit]:
                state = apply_unitary(state, op.targets, op.matrix, check=False)
        else:
            state = reset_qubit(state, op.targets[0], rng)
    return state, classical


# -- the ion-mirror time step --------------------------------------------------

@dataclass(frozen=True)
class RegisterLayout:
    ion: int
    laser: int
    field: tuple

    @property
    def outgoing(self) -> int:
        return self.field[0]

    @property
    def returning(self) -> int:
        return self.field[-1]

    @property
    def num_qubits(self) -> int:
        return 2 + len(self.field)


def register_layout(slices: int) -> RegisterLayout:
    """Qubit roles for a loop of ``slices + 1`` field qubits."""
    if slices < 2:
        raise CircuitError(f"need at least 2 time slices per round trip, got {slices}")
    return RegisterLayout(ion=0, laser=1, field=tuple(range(2, slices + 3)))


def shift_ops(layout: RegisterLayout) -> list:
    """SWAP chain q_0<->q_1, q_0<->q_2, ..., q_0<->q_N.

    Net effect: q_k -> q_{k+1} for k < N and q_N -> q_0, i.e. the slice just
    written at q_0 travels toward the mirror, returns at q_N after N steps,
    and the (reset) q_N comes back as the fresh slice at q_0.
    """
    q0 = layout.field[0]
    return [unitary("SWAP", (q0, q), g.SWAP) for q in layout.field[1:]]


def build_time_step(config, step: int, mode: str = "dense") -> Circuit:
    """Circuit for time step ``step``.

    ``mode="dense"`` applies Q and R as dense 4x4 / 8x8 unitaries;
    ``mode="full"`` uses the elementary-gate decompositions (with a
    numerically synthesized V), which is what the resource census counts.
    """
    if step < 0:
        raise ValueError("step index must be nonnegative")
    layout = register_layout(config.field_qubits)
    c = config.couplings
    ion, laser, q0, qn = layout.ion, layout.laser, layout.outgoing, layout.returning
    prep_ry, prep_rz = g.laser_prep_sequence(c, step)
    ops = [
        unitary("Ry", (laser,), prep_ry, 2 * c.drive_angle),
        unitary("Rz", (laser,), prep_rz, -c.phase_per_step * step),
    ]
    if mode == "dense":
        ops.append(unitary("Q", (ion, laser), g.q_interaction(c)))
        ops.append(unitary("R", (ion, q0, qn), g.r_interaction(c)))
    elif mode == "full":
        ops.extend(_from_pairs(g.q_decomposition(c, ion, laser),
                               ["CNOT", "CRy", "CNOT"]))
        v = g.synthesize_v(c)
        ops.extend(_from_pairs(g.r_decomposition(c, v, ion, q0, qn), _R_NAMES))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ops += [
        unitary("Rz", (ion,), g.l_evolution(c), -c.phase_per_step),
        measure(qn, DETECTOR_BIT),
        c_if(DETECTOR_BIT, "X", (qn,), g.X),
        reset(laser),
    ]
    ops += shift_ops(layout)
    return Circuit(layout.num_qubits, 1, ops)


_R_NAMES = ["CNOT", "CNOT", "CNOT", "CH", "V", "S", "CNOT", "CNOT", "CRy", "CRy",
            "CNOT", "Sdg", "CNOT", "CH", "Vdg", "CNOT", "CNOT", "CNOT"]


def _from_pairs(pairs, names):
    return [unitary(name, targets, m) for (m, targets), name in zip(pairs, names)]


@dataclass(frozen=True)
class Census:
    single_qubit: int = 0
    two_qubit: int = 0
    three_qubit: int = 0
    classically_controlled: int = 0
    measurements: int = 0
    resets: int = 0

    def as_tuple(self):
        return (self.single_qubit, self.two_qubit, self.three_qubit,
                self.measurements, self.resets)


def gate_census(circuit: Circuit) -> Census:
    """Count operations by arity.

    SWAPs and controlled rotations are single two-qubit operations. A reset
    is counted both as a measurement and under ``resets``; classically
    controlled corrections belong to their measurement and are tallied
    separately, not as gates.
    """
    counts = {1: 0, 2: 0, 3: 0}
    cc = meas = resets = 0
    for op in circuit.ops:
        if op.kind is OpKind.UNITARY:
            counts[op.arity] += 1
        elif op.kind is OpKind.CONTROLLED:
            cc += 1
        elif op.kind is OpKind.MEASURE:
            meas += 1
        else:
            meas += 1
            resets += 1
    return Census(counts[1], counts[2], counts[3], cc, meas, resets)
