"""Backend selection and the circuit-to-tape compiler for the trajectory loop.

The compiled extension ``_ckernel`` is used when it imports; otherwise the
numpy interpreter in ``_pykernel`` runs the same tape. Set
``IONMIRROR_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernel
from .circuit import Circuit, OpKind
from .gates import SWAP, X
from .state import apply_matrix

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

OP_UNITARY = _pykernel.OP_UNITARY
OP_UNITARY_STEP = _pykernel.OP_UNITARY_STEP
OP_MEASURE = _pykernel.OP_MEASURE
OP_CONTROLLED = _pykernel.OP_CONTROLLED
OP_RESET = _pykernel.OP_RESET
OP_PERMUTE = _pykernel.OP_PERMUTE
OP_PROBE = _pykernel.OP_PROBE

BACKENDS = ("cython", "python")


def available_backends() -> list:
    return [b for b in BACKENDS if b == "python" or _ckernel is not None]


def default_backend() -> str:
    forced = os.environ.get("IONMIRROR_BACKEND", "").strip().lower()
    if forced and forced != "auto":
        return resolve_backend(forced)
    return "cython" if _ckernel is not None else "python"


def resolve_backend(name: str | None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "cython" and _ckernel is None:
        raise RuntimeError("compiled kernel is not built; reinstall the package or use 'python'")
    return name


def run_tape_fn(backend: str | None):
    backend = resolve_backend(backend)
    return _ckernel.run_tape if backend == "cython" else _pykernel.run_tape


@dataclass(frozen=True)
class Tape:
    """Flat encoding of a per-step circuit.

    ``ops`` rows are ``[kind, ntargets, t0, t1, t2, offset, bit, aux]``.
    An ``OP_UNITARY_STEP`` row stores two matrices ``A, B`` at ``offset`` and
    applies ``A . Rz(rates[i] * step) . B`` with the Rz on target ``aux``; an
    ``OP_MEASURE`` row with ``aux = 1`` returns the qubit to 0 after reading.
    """

    num_qubits: int
    ops: np.ndarray
    rates: np.ndarray
    mats: np.ndarray
    perms: np.ndarray
    draws_per_step: int

    def run(self, amps, uniforms, step0, steps, pops, bits, creg, backend=None):
        fn = run_tape_fn(backend)
        return fn(amps, self.num_qubits, self.ops, self.rates, self.mats, self.perms,
                  uniforms, step0, steps, pops, bits, creg)


def _is_swap(op) -> bool:
    return op.kind is OpKind.UNITARY and op.arity == 2 and np.array_equal(op.matrix, SWAP)


def _permutation(swaps, n) -> np.ndarray:
    # new[i] = old[perm[i]]: push the index vector itself through the swaps
    idx = np.arange(1 << n).astype(np.complex128)
    for op in swaps:
        idx = apply_matrix(idx, op.targets, op.matrix, n)
    return np.rint(idx.real).astype(np.int64)


def _step_rate(a, b):
    """Per-step angle of an op pair, or None if it does not depend on the step."""
    if np.array_equal(a.matrix, b.matrix):
        return None
    if a.name != "Rz" or a.arity != 1 or not a.params:
        raise ValueError(f"step-dependent op {a.describe()} is not an Rz")
    if a.params[0] != 0.0:
        raise ValueError("compile_tape expects the step-0 circuit first")
    return b.params[0] - a.params[0]


def _fusable(pair) -> bool:
    a, b = pair
    return (a.kind is OpKind.UNITARY and b.kind is OpKind.UNITARY
            and not _is_swap(a) and a.targets == b.targets)


def _product(ops, union) -> np.ndarray:
    k = len(union)
    acc = np.eye(1 << k, dtype=np.complex128)
    for op in ops:
        local = tuple(union.index(t) for t in op.targets)
        acc = apply_matrix(acc, local, op.matrix, k)
    return acc


def _unitary_run(ops, i):
    """Greedy run of fusable unitaries from ``i``: at most 3 qubits, one step Rz."""
    union, rz_at, rate = [], None, 0.0
    j = i
    while j < len(ops) and _fusable(ops[j]):
        a, b = ops[j]
        grown = union + [t for t in a.targets if t not in union]
        r = _step_rate(a, b)
        if len(grown) > 3 or (r is not None and rz_at is not None):
            break
        union = grown
        if r is not None:
            rz_at, rate = j, r
        j += 1
    return j, union, rz_at, rate


def compile_tape(first: Circuit, second: Circuit, probe: int | None = None) -> Tape:
    """Compile a step circuit whose only step dependence is a linear Rz angle.

    ``first`` and ``second`` are the circuits of steps 0 and 1. Any op that
    differs between them must be a single-qubit ``Rz`` whose angle advances
    by a constant per step. Adjacent unitaries on at most three qubits are
    multiplied into one matrix, runs of SWAPs become one permutation, and a
    measurement followed by a classically controlled X on the same qubit
    becomes a measure-and-reset. With ``probe`` set, the excited population
    of that qubit is recorded just before the first measurement.
    """
    if len(first.ops) != len(second.ops) or first.num_qubits != second.num_qubits:
        raise ValueError("step circuits differ in shape")
    n = first.num_qubits
    rows, rates, mats, perms = [], [], [], []
    mat_off = perm_off = 0
    draws = 0
    probed = probe is None
    ops = list(zip(first.ops, second.ops))

    def emit(row, rate=0.0, *matrices):
        nonlocal mat_off
        row = list(row) + [0] * (8 - len(row))
        if matrices:
            row[5] = mat_off
            for m in matrices:
                mats.append(np.asarray(m, dtype=np.complex128).ravel())
                mat_off += m.size
        rows.append(row)
        rates.append(rate)

    def targets(ts):
        return [len(ts)] + list(ts) + [0] * (3 - len(ts))

    i = 0
    while i < len(ops):
        a, b = ops[i]
        if a.kind in (OpKind.MEASURE, OpKind.RESET) and not probed:
            emit([OP_PROBE, 1, probe])
            probed = True
        if _is_swap(a) and _is_swap(b):
            j = i
            while j < len(ops) and _is_swap(ops[j][0]) and _is_swap(ops[j][1]):
                j += 1
            perms.append(_permutation([op for op, _ in ops[i:j]], n))
            emit([OP_PERMUTE, 0, 0, 0, 0, perm_off])
            perm_off += 1 << n
            i = j
            continue
        if _fusable((a, b)):
            j, union, rz_at, rate = _unitary_run(ops, i)
            run = [op for op, _ in ops[i:j]]
            if rz_at is None:
                emit([OP_UNITARY] + targets(union), 0.0, _product(run, union))
            else:
                before = _product(run[:rz_at - i], union)
                after = _product(run[rz_at - i + 1:], union)
                row = [OP_UNITARY_STEP] + targets(union) + [0, 0, union.index(run[rz_at - i].targets[0])]
                emit(row, rate, after, before)
            i = j
            continue
        if a.kind is OpKind.CONTROLLED:
            if _step_rate(a, b) is not None:
                raise ValueError(f"classically controlled op {a.describe()} varies per step")
            emit([OP_CONTROLLED] + targets(a.targets) + [0, a.bit], 0.0, a.matrix)
        elif a.kind is OpKind.MEASURE:
            nxt = ops[i + 1][0] if i + 1 < len(ops) else None
            fold = (nxt is not None and nxt.kind is OpKind.CONTROLLED and nxt.bit == a.bit
                    and nxt.targets == a.targets and np.array_equal(nxt.matrix, X))
            emit([OP_MEASURE] + targets(a.targets) + [0, a.bit, int(fold)])
            draws += 1
            if fold:
                i += 1
        elif a.kind is OpKind.RESET:
            emit([OP_RESET] + targets(a.targets))
            draws += 1
        else:
            raise ValueError(f"cannot compile op {a.describe()}")
        i += 1
    return Tape(
        num_qubits=n,
        ops=np.array(rows, dtype=np.int64).reshape(-1, 8),
        rates=np.array(rates, dtype=np.float64),
        mats=np.concatenate(mats) if mats else np.zeros(1, np.complex128),
        perms=np.concatenate(perms) if perms else np.zeros(1, np.int64),
        draws_per_step=draws,
    )
