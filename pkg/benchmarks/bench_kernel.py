"""Time the compiled and the numpy trajectory kernels on the same tape.

    python benchmarks/bench_kernel.py [--steps 3000] [--mode dense|full]

Both backends consume the same uniform stream, so besides timing the script
checks that they agree on the detector log and the final state.
"""
import argparse
import time

import numpy as np

from ionmirror.experiment import ExperimentConfig, step_tape
from ionmirror.kernel import available_backends


def run(tape, backend, steps, uniforms):
    amps = np.zeros(1 << tape.num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    pops = np.zeros(steps)
    bits = np.zeros(steps, dtype=np.uint8)
    creg = np.zeros(1, dtype=np.int64)
    t0 = time.perf_counter()
    tape.run(amps, uniforms, 0, steps, pops, bits, creg, backend=backend)
    return time.perf_counter() - t0, amps, bits


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--distance", type=float, default=246.5, help="nm")
    p.add_argument("--mode", choices=("dense", "full"), default="dense")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    cfg = ExperimentConfig.from_factors(args.distance * 1e-9, mode=args.mode)
    tape = step_tape(cfg)
    uniforms = np.random.default_rng(1).random(args.steps * tape.draws_per_step)
    print(f"{tape.num_qubits} qubits, {len(tape.ops)} tape ops per step, {args.steps} steps")

    results = {}
    for backend in available_backends():
        best = min(run(tape, backend, args.steps, uniforms)[0] for _ in range(args.repeat))
        _, amps, bits = run(tape, backend, args.steps, uniforms)
        results[backend] = (best, amps, bits)
        print(f"{backend:7s} {best * 1e6 / args.steps:9.2f} us/step")
    if len(results) == 2:
        (tc, ac, bc), (tp, ap, bp) = results["cython"], results["python"]
        print(f"speedup {tp / tc:.1f}x; max |state diff| {np.max(np.abs(ac - ap)):.2e}; "
              f"detector logs {'match' if np.array_equal(bc, bp) else 'DIFFER'}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
