"""Pure-numpy tape interpreter, used when the compiled kernel is unavailable."""
from __future__ import annotations

import numpy as np

from .state import DEGENERATE_PROBABILITY, apply_matrix

OP_UNITARY = 0
OP_UNITARY_STEP = 1
OP_MEASURE = 2
OP_CONTROLLED = 3
OP_RESET = 4
OP_PERMUTE = 5
OP_PROBE = 6


def _decode(n, ops, mats, perms):
    dim = 1 << n
    idx = np.arange(dim)
    decoded = []
    for row in ops:
        kind, k = int(row[0]), int(row[1])
        targets = tuple(int(t) for t in row[2:2 + k])
        entry = {"kind": kind, "targets": targets, "bit": int(row[6]), "aux": int(row[7])}
        d = 1 << k
        off = int(row[5])
        if kind in (OP_UNITARY, OP_CONTROLLED):
            entry["matrix"] = mats[off:off + d * d].reshape(d, d)
        elif kind == OP_UNITARY_STEP:
            entry["after"] = mats[off:off + d * d].reshape(d, d)
            entry["before"] = mats[off + d * d:off + 2 * d * d].reshape(d, d)
            # sign of the Rz phase on each local basis state
            entry["signs"] = np.where((np.arange(d) >> (k - 1 - int(row[7]))) & 1, 1.0, -1.0)
        elif kind == OP_PERMUTE:
            entry["perm"] = perms[off:off + dim]
        if kind in (OP_MEASURE, OP_RESET, OP_PROBE):
            entry["ones"] = ((idx >> (n - 1 - targets[0])) & 1).astype(bool)
            entry["flip"] = idx ^ (1 << (n - 1 - targets[0]))
        decoded.append(entry)
    return decoded


def run_tape(amps, n, ops, rates, mats, perms, uniforms, step0, steps, pops, bits, creg):
    tape = _decode(n, ops, mats, perms)
    a = np.asarray(amps)
    used = 0
    max_err = 0.0
    for s in range(steps):
        for o, op in enumerate(tape):
            kind = op["kind"]
            if kind == OP_UNITARY or (kind == OP_CONTROLLED and creg[op["bit"]]):
                a[:] = apply_matrix(a, op["targets"], op["matrix"], n)
            elif kind == OP_UNITARY_STEP:
                theta = rates[o] * (step0 + s)
                phase = np.exp(0.5j * theta * op["signs"])
                m = (op["after"] * phase) @ op["before"]
                a[:] = apply_matrix(a, op["targets"], m, n)
            elif kind in (OP_MEASURE, OP_RESET):
                probs = a.real ** 2 + a.imag ** 2
                ones = op["ones"]
                p1 = probs[ones].sum()
                outcome = 1 if uniforms[used] < p1 else 0
                used += 1
                p = p1 if outcome else probs[~ones].sum()
                if p < DEGENERATE_PROBABILITY:
                    return 1, s, used, max_err
                keep = ones if outcome else ~ones
                a[:] = np.where(keep, a, 0.0) / np.sqrt(p)
                if kind == OP_MEASURE:
                    creg[op["bit"]] = outcome
                if outcome and (kind == OP_RESET or op["aux"]):
                    a[:] = a[op["flip"]]
            elif kind == OP_PERMUTE:
                a[:] = a[op["perm"]]
            elif kind == OP_PROBE:
                pops[s] = np.sum(np.abs(a[op["ones"]]) ** 2)
        bits[s] = creg[0]
        err = abs(np.sqrt(np.vdot(a, a).real) - 1.0)
        max_err = max(max_err, err)
    return 0, steps, used, max_err
