"""Ion-before-a-mirror experiment driver: configuration, trajectories, sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .circuit import build_time_step, register_layout
from .gates import PhysicalCouplings
from .kernel import Tape, compile_tape, resolve_backend
from .state import DegenerateMeasurementError

SPEED_OF_LIGHT = 299_792_458.0
TRANSITION_WAVELENGTH = 493e-9
# angular transition frequency of the Ba+ S1/2 - P1/2 line
TRANSITION_FREQUENCY = 2 * math.pi * SPEED_OF_LIGHT / TRANSITION_WAVELENGTH

DEFAULT_KAPPA = 6e12
DEFAULT_KAPPA_S = 3e13
DEFAULT_RABI_FACTOR = 0.01
DEFAULT_SLICES = 5

DEFAULT_STEP_CAP = 10_000_000
STEP_CAP_ENV = "IONMIRROR_STEP_CAP"
_CHUNK = 1 << 16


class SizingError(ValueError):
    pass


def step_cap() -> int:
    raw = os.environ.get(STEP_CAP_ENV)
    return int(float(raw)) if raw else DEFAULT_STEP_CAP


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical and numerical parameters of one mirror distance.

    ``field_qubits`` is the number of time slices per mirror round trip;
    the field loop holds ``field_qubits + 1`` qubits q_0 .. q_N, and one
    slice lasts ``lam**2 = 2 d / (c * field_qubits)`` seconds.
    """

    distance: float
    field_qubits: int = DEFAULT_SLICES
    omega: float = TRANSITION_FREQUENCY
    kappa: float = DEFAULT_KAPPA
    kappa_s: float = DEFAULT_KAPPA_S
    alpha_mod: float = 0.0
    sim_time: float = 100e-15
    runs: int = 1
    master_seed: int = 0
    mode: str = "dense"

    def __post_init__(self):
        if not (math.isfinite(self.distance) and self.distance > 0):
            raise ValueError(f"distance must be positive, got {self.distance}")
        if self.field_qubits < 2:
            raise ValueError(f"field_qubits must be at least 2, got {self.field_qubits}")
        if not (math.isfinite(self.sim_time) and self.sim_time > 0):
            raise ValueError(f"sim_time must be positive, got {self.sim_time}")
        if self.runs < 1:
            raise ValueError(f"runs must be at least 1, got {self.runs}")
        if self.mode not in ("dense", "full"):
            raise ValueError(f"mode must be 'dense' or 'full', got {self.mode!r}")

    @classmethod
    def from_factors(cls, distance: float, omega_factor: float = 1.0,
                     rabi_factor: float = DEFAULT_RABI_FACTOR, **kwargs) -> "ExperimentConfig":
        """Build a config with omega and the Rabi frequency given in units of f."""
        kappa_s = kwargs.get("kappa_s", DEFAULT_KAPPA_S)
        rabi = rabi_factor * TRANSITION_FREQUENCY
        alpha = rabi / math.sqrt(kappa_s) if kappa_s > 0 else 0.0
        return cls(distance=distance, omega=omega_factor * TRANSITION_FREQUENCY,
                   alpha_mod=alpha, **kwargs)

    @property
    def round_trip_time(self) -> float:
        return 2 * self.distance / SPEED_OF_LIGHT

    @property
    def slice_time(self) -> float:
        return self.round_trip_time / self.field_qubits

    @property
    def lam(self) -> float:
        return math.sqrt(self.slice_time)

    @property
    def steps_per_run(self) -> int:
        steps = round(self.sim_time / self.slice_time)
        if steps < 1:
            raise SizingError(f"sim_time {self.sim_time:.3g} s is shorter than one time slice")
        return steps

    @property
    def rabi_frequency(self) -> float:
        return self.alpha_mod * math.sqrt(self.kappa_s)

    @property
    def couplings(self) -> PhysicalCouplings:
        return PhysicalCouplings(self.kappa, self.kappa_s, self.omega, self.alpha_mod, self.lam)

    @property
    def layout(self):
        return register_layout(self.field_qubits)

    @property
    def num_qubits(self) -> int:
        return self.layout.num_qubits


@lru_cache(maxsize=256)
def step_tape(config: ExperimentConfig) -> Tape:
    # runs, seed and sim_time do not change the circuit
    key = replace(config, runs=1, master_seed=0, sim_time=1.0)
    return _step_tape(key)


@lru_cache(maxsize=256)
def _step_tape(config: ExperimentConfig) -> Tape:
    first = build_time_step(config, 0, mode=config.mode)
    second = build_time_step(config, 1, mode=config.mode)
    return compile_tape(first, second, probe=config.layout.ion)


@dataclass
class TrajectoryRecord:
    photon_count: int
    population_trace: np.ndarray
    detector_log: np.ndarray
    max_norm_error: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.population_trace)


def derive_run_seed(master_seed: int, distance_index: int, run_index: int) -> int:
    """Stable 64-bit seed for one trajectory of a sweep.

    numpy ``SeedSequence`` hashing of ``master_seed`` with spawn key
    ``(distance_index, run_index)``; independent of scheduling.
    """
    seq = np.random.SeedSequence(master_seed & 0xFFFF_FFFF_FFFF_FFFF,
                                 spawn_key=(distance_index, run_index))
    return int(seq.generate_state(1, np.uint64)[0])


def run_trajectory(config: ExperimentConfig, run_seed: int, backend: str | None = None,
                   max_steps: int | None = None) -> TrajectoryRecord:
    steps = config.steps_per_run
    cap = step_cap() if max_steps is None else max_steps
    if steps > cap:
        raise SizingError(
            f"{steps} steps exceed the cap of {cap} (set {STEP_CAP_ENV} to raise it)"
        )
    backend = resolve_backend(backend)
    tape = step_tape(config)
    rng = np.random.default_rng(run_seed)
    amps = np.zeros(1 << tape.num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    pops = np.zeros(steps, dtype=np.float64)
    bits = np.zeros(steps, dtype=np.uint8)
    creg = np.zeros(1, dtype=np.int64)
    max_err = 0.0
    for start in range(0, steps, _CHUNK):
        count = min(_CHUNK, steps - start)
        uniforms = rng.random(count * tape.draws_per_step)
        status, done, _, err = tape.run(amps, uniforms, start, count, pops[start:],
                                        bits[start:], creg, backend=backend)
        max_err = max(max_err, err)
        if status:
            raise DegenerateMeasurementError(
                f"measurement collapsed onto a zero-probability outcome at step {start + done}"
            )
    return TrajectoryRecord(int(bits.sum()), pops, bits, max_err)


def time_averaged_population(record: TrajectoryRecord) -> float:
    trace = np.asarray(record.population_trace, dtype=np.float64)
    if trace.size == 0:
        raise ValueError("empty population trace")
    return math.fsum(trace) / trace.size


@dataclass(frozen=True)
class SweepRow:
    distance: float
    mean_photon_count: float
    std_error: float
    mean_population: float
    runs: int
    steps: int

    @property
    def distance_nm(self) -> float:
        return self.distance * 1e9


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    max_norm_error: float = 0.0

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)


def _mean_and_stderr(values) -> tuple:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


def _run_block(config, distance_index, run_start, run_stop, backend):
    counts = np.zeros(run_stop - run_start, dtype=np.int64)
    avg_pops = np.zeros(run_stop - run_start, dtype=np.float64)
    max_err = 0.0
    for i, r in enumerate(range(run_start, run_stop)):
        seed = derive_run_seed(config.master_seed, distance_index, r)
        rec = run_trajectory(config, seed, backend=backend)
        counts[i] = rec.photon_count
        avg_pops[i] = time_averaged_population(rec)
        max_err = max(max_err, rec.max_norm_error)
    return distance_index, run_start, counts, avg_pops, max_err


def sweep_distance(config: ExperimentConfig, distances, jobs: int = 1,
                   backend: str | None = None, progress=None,
                   block_size: int = 50) -> SweepResult:
    """Run ``config.runs`` trajectories at every distance and aggregate.

    Results depend only on ``config`` and ``distances``: seeds come from
    :func:`derive_run_seed` and the reductions are exactly rounded, so the
    number of worker processes does not change a single bit.
    """
    distances = [float(d) for d in distances]
    for d in distances:
        if not (math.isfinite(d) and d > 0):
            raise ValueError(f"distances must be positive and finite, got {d}")
    backend = resolve_backend(backend)
    configs = [replace(config, distance=d) for d in distances]
    for d, cfg in zip(distances, configs):
        try:
            steps = cfg.steps_per_run
        except SizingError as exc:
            raise SizingError(f"at d = {d:.6g} m: {exc}") from exc
        if steps > step_cap():
            raise SizingError(
                f"at d = {d:.6g} m: {steps} steps exceed the cap of {step_cap()} "
                f"(set {STEP_CAP_ENV} to raise it)"
            )
    runs = config.runs
    counts = np.zeros((len(distances), runs), dtype=np.int64)
    avg_pops = np.zeros((len(distances), runs), dtype=np.float64)
    blocks = [(cfg, di, r0, min(r0 + block_size, runs), backend)
              for di, cfg in enumerate(configs) for r0 in range(0, runs, block_size)]
    max_err = 0.0
    done = 0

    def collect(result):
        nonlocal max_err, done
        di, r0, c, p, err = result
        counts[di, r0:r0 + len(c)] = c
        avg_pops[di, r0:r0 + len(p)] = p
        max_err = max(max_err, err)
        done += len(c)
        if progress is not None:
            progress(done, len(distances) * runs)

    if jobs <= 1:
        for block in blocks:
            collect(_run_block(*block))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(_run_block, *zip(*blocks)):
                collect(result)

    rows = []
    for di, cfg in enumerate(configs):
        mean_count, stderr = _mean_and_stderr(counts[di].tolist())
        mean_pop = math.fsum(avg_pops[di].tolist()) / runs
        rows.append(SweepRow(cfg.distance, mean_count, stderr, mean_pop, runs,
                             cfg.steps_per_run))
    rows.sort(key=lambda r: r.distance)
    return SweepResult(rows, max_err)
