"""Command-line front end.

Modes:

    sweep    distance sweep, CSV output, fringe fit and anticorrelation
    single   one trajectory with its per-step trace
    verify   gate-factory oracle checks
    census   gate counts of one time step

Distances are given in nm and times in fs on the command line; everything
inside the package is SI. Options can also come from a ``key = value`` file
passed with ``--config``; explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from . import gates as g
from .analysis import AnalysisError, FitResult, fit_sinusoid, pearson
from .circuit import build_time_step, gate_census
from .experiment import (
    DEFAULT_KAPPA,
    DEFAULT_KAPPA_S,
    DEFAULT_RABI_FACTOR,
    DEFAULT_SLICES,
    ExperimentConfig,
    SweepResult,
    SweepRow,
    derive_run_seed,
    run_trajectory,
    sweep_distance,
    time_averaged_population,
)
from .kernel import BACKENDS, available_backends

CSV_COLUMNS = ("distance_nm", "mean_photon_count", "std_error", "mean_population",
               "runs", "steps")
ORACLE_ATOL = 1e-10
MODES = ("sweep", "single", "verify", "census")
# execution details that do not affect results stay out of the CSV footer,
# so serial and parallel runs of one sweep produce identical files
_FOOTER_EXCLUDED = ("output_path", "jobs")


@dataclass(frozen=True)
class CliConfig:
    mode: str = "sweep"
    distance_min: float = 50.0
    distance_max: float = 550.0
    distance_steps: int = 51
    distance: float = 246.5
    field_qubits: int = DEFAULT_SLICES
    omega_factor: float = 1.0
    rabi_factor: float = DEFAULT_RABI_FACTOR
    kappa: float = DEFAULT_KAPPA
    kappa_s: float = DEFAULT_KAPPA_S
    sim_time: float = 100.0
    runs: int = 1000
    seed: int = 0
    output_path: str | None = None
    jobs: int = 1
    backend: str | None = None
    decomposition: str = "dense"

    def experiment(self, distance_nm: float | None = None) -> ExperimentConfig:
        d = self.distance if distance_nm is None else distance_nm
        return ExperimentConfig.from_factors(
            d / 1e9, omega_factor=self.omega_factor, rabi_factor=self.rabi_factor,
            field_qubits=self.field_qubits, kappa=self.kappa, kappa_s=self.kappa_s,
            sim_time=self.sim_time * 1e-15, runs=self.runs, master_seed=self.seed,
            mode=self.decomposition,
        )

    def distances_nm(self) -> np.ndarray:
        return np.linspace(self.distance_min, self.distance_max, self.distance_steps)


# -- CSV -----------------------------------------------------------------------

def _fmt(x) -> str:
    return format(x, ".17g") if isinstance(x, float) else str(x)


def write_csv(result: SweepResult, fit: FitResult | None, path, config: CliConfig | None = None,
              extra: dict | None = None):
    """Write sweep rows, then ``#`` footer lines with the fit and the configuration."""
    lines = [",".join(CSV_COLUMNS)]
    for r in result.rows:
        lines.append(",".join(_fmt(v) for v in (r.distance_nm, r.mean_photon_count,
                                                 r.std_error, r.mean_population,
                                                 r.runs, r.steps)))
    footer = []
    if fit is not None:
        footer += [f"fit.wavelength_nm={_fmt(fit.wavelength * 1e9)}",
                   f"fit.offset={_fmt(fit.offset)}",
                   f"fit.amplitude={_fmt(fit.amplitude)}",
                   f"fit.phase={_fmt(fit.phase)}",
                   f"fit.rms_residual={_fmt(fit.rms_residual)}"]
    for key, value in (extra or {}).items():
        footer.append(f"{key}={_fmt(value)}")
    footer.append(f"max_norm_error={_fmt(float(result.max_norm_error))}")
    if result.rows:
        footer.append("distances_m=" + " ".join(_fmt(r.distance) for r in result.rows))
    if config is not None:
        footer += [f"config.{k}={_fmt(v)}" for k, v in asdict(config).items()
                   if k not in _FOOTER_EXCLUDED]
    lines += ["# " + f for f in footer]
    try:
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _distance_from_nm(nm: float) -> float:
    # the SI distance whose nm rendering is ``nm``; nearest candidate first
    d = nm / 1e9
    if d * 1e9 == nm:
        return d
    lo = hi = d
    for _ in range(8):
        lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
        for c in (float(lo), float(hi)):
            if c * 1e9 == nm:
                return c
    return d


def read_csv(path):
    """Parse a file from :func:`write_csv`; returns ``(SweepResult, footer dict)``."""
    rows, footer = [], {}
    with open(path, encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        if tuple(header.split(",")) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                footer[key] = value
            elif line:
                f = line.split(",")
                rows.append(SweepRow(_distance_from_nm(float(f[0])), float(f[1]), float(f[2]),
                                     float(f[3]), int(f[4]), int(f[5])))
    exact = footer.get("distances_m", "").split()
    if len(exact) == len(rows):
        rows = [SweepRow(float(d), *[getattr(r, k) for k in
                                     ("mean_photon_count", "std_error", "mean_population",
                                      "runs", "steps")])
                for d, r in zip(exact, rows)]
    return SweepResult(rows, float(footer.get("max_norm_error", 0.0))), footer


# -- modes ---------------------------------------------------------------------

def _progress_printer(stream):
    last = [0.0]

    def report(done, total):
        now = time.monotonic()
        if done == total or now - last[0] > 1.0:
            last[0] = now
            stream.write(f"\r{done}/{total} trajectories")
            if done == total:
                stream.write("\n")
            stream.flush()
    return report


def run_sweep(cfg: CliConfig, out, err, progress: bool = False) -> int:
    base = cfg.experiment()
    distances = [nm / 1e9 for nm in cfg.distances_nm()]
    result = sweep_distance(base, distances, jobs=cfg.jobs, backend=cfg.backend,
                            progress=_progress_printer(err) if progress else None)
    xs = result.column("distance")
    counts = result.column("mean_photon_count")
    pops = result.column("mean_population")
    fit = None
    extra = {}
    try:
        fit = fit_sinusoid(xs, counts)
    except AnalysisError as exc:
        print(f"fit skipped: {exc}", file=out)
    try:
        extra["pearson_photons_population"] = pearson(counts, pops)
    except AnalysisError as exc:
        print(f"correlation skipped: {exc}", file=out)
    if cfg.output_path:
        write_csv(result, fit, cfg.output_path, cfg, extra)
    else:
        for r in result.rows:
            print(f"{r.distance_nm:10.4f} nm  photons {r.mean_photon_count:.6g} "
                  f"+- {r.std_error:.3g}  population {r.mean_population:.6g}", file=out)
    if fit is not None:
        print(f"fit: wavelength {fit.wavelength * 1e9:.4f} nm  amplitude {fit.amplitude:.6g}  "
              f"offset {fit.offset:.6g}  phase {fit.phase:.4f}  rms {fit.rms_residual:.3g}",
              file=out)
    if "pearson_photons_population" in extra:
        print(f"pearson(photons, population) = {extra['pearson_photons_population']:.4f}",
              file=out)
    print(f"max norm error {result.max_norm_error:.3g}", file=out)
    return 0


def run_single(cfg: CliConfig, out) -> int:
    config = cfg.experiment()
    rec = run_trajectory(config, derive_run_seed(cfg.seed, 0, 0), backend=cfg.backend)
    dt = config.slice_time * 1e15
    lines = ["step,time_fs,ion_population,detector"]
    lines += [f"{s},{_fmt(s * dt)},{_fmt(float(p))},{int(b)}"
              for s, (p, b) in enumerate(zip(rec.population_trace, rec.detector_log))]
    if cfg.output_path:
        with open(cfg.output_path, "w", newline="\n", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines), file=out)
    print(f"# photons {rec.photon_count} in {rec.steps} steps, time-averaged population "
          f"{time_averaged_population(rec):.6g}, max norm error {rec.max_norm_error:.3g}",
          file=out)
    return 0


def oracle_checks(couplings: g.PhysicalCouplings) -> list:
    """``(name, deviation, passed)`` for each gate-factory oracle."""
    checks = []
    q = g.q_interaction(couplings)
    r = g.r_interaction(couplings)
    checks.append(("Q expm vs scipy", float(np.max(np.abs(
        q - _scipy_expm(g.q_generator(couplings))))), None))
    checks.append(("R expm vs scipy", float(np.max(np.abs(
        r - _scipy_expm(g.r_generator(couplings))))), None))
    checks.append(("Q decomposition", g.verify_decomposition(
        g.q_decomposition(couplings, 0, 1), q), None))
    try:
        v = g.synthesize_v(couplings)
        checks.append(("R decomposition (synthesized V)", g.verify_decomposition(
            g.r_decomposition(couplings, v, 0, 1, 2), r), None))
    except g.SynthesisError as exc:
        checks.append((f"R decomposition ({exc})", math.inf, None))
    dark = np.zeros(8, dtype=np.complex128)
    dark[0b010], dark[0b001] = 1 / math.sqrt(2), -1 / math.sqrt(2)
    checks.append(("R dark state", float(np.max(np.abs(r @ dark - dark))), None))
    for name, u in (("Q", q), ("R", r), ("L", g.l_evolution(couplings)),
                    ("laser prep", g.laser_prep_sequence(couplings, 1)[1]
                     @ g.laser_prep_sequence(couplings, 1)[0])):
        checks.append((f"{name} unitarity", float(np.max(np.abs(
            u.conj().T @ u - np.eye(u.shape[0])))), None))
    return [(name, dev, dev < ORACLE_ATOL) for name, dev, _ in checks]


def _scipy_expm(generator):
    from scipy.linalg import expm
    return expm(generator)


def run_verify(cfg: CliConfig, out) -> int:
    checks = oracle_checks(cfg.experiment().couplings)
    width = max(len(c[0]) for c in checks)
    for name, dev, ok in checks:
        print(f"{name:<{width}}  {dev:10.3e}  {'PASS' if ok else 'FAIL'}", file=out)
    failed = sum(not ok for _, _, ok in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed", file=out)
    return 0 if failed == 0 else 1


def run_census(cfg: CliConfig, out) -> int:
    config = cfg.experiment()
    n = config.field_qubits
    ok = True
    for mode in ("dense", "full"):
        c = gate_census(build_time_step(config, 0, mode=mode))
        print(f"{mode:5s}: {c.single_qubit} single-qubit, {c.two_qubit} two-qubit, "
              f"{c.three_qubit} three-qubit, {c.measurements} measurements "
              f"({c.resets} reset), {c.classically_controlled} classically controlled",
              file=out)
        if mode == "full":
            ok = (c.single_qubit, c.two_qubit, c.three_qubit, c.measurements) == (7, 17 + n, 0, 2)
    print(f"full decomposition vs 7 / 17+N = {17 + n} / 2: {'PASS' if ok else 'FAIL'}",
          file=out)
    return 0 if ok else 1


# -- argument handling ---------------------------------------------------------

def _positive(kind):
    def parse(text):
        value = kind(text)
        if not (value > 0 and math.isfinite(value)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _jobs(text):
    if text in ("max", "0"):
        return os.cpu_count() or 1
    return _positive(int)(text)


def build_parser() -> argparse.ArgumentParser:
    d = CliConfig()
    p = argparse.ArgumentParser(
        prog="ionmirror",
        description="Quantum-circuit simulation of an ion in front of a mirror.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", metavar="FILE", help="key = value file with option defaults")
    p.add_argument("--mode", choices=MODES, default=d.mode)
    p.add_argument("--distance-min", type=_positive(float), default=d.distance_min,
                   help="sweep start, nm")
    p.add_argument("--distance-max", type=_positive(float), default=d.distance_max,
                   help="sweep end, nm")
    p.add_argument("--distance-steps", type=_positive(int), default=d.distance_steps)
    p.add_argument("--distance", type=_positive(float), default=d.distance,
                   help="mirror distance for single/verify/census, nm")
    p.add_argument("--field-qubits", type=_positive(int), default=d.field_qubits,
                   help="time slices per round trip N (the loop holds N+1 qubits)")
    p.add_argument("--omega-factor", type=_positive(float), default=d.omega_factor,
                   help="transition frequency in units of f")
    p.add_argument("--rabi-factor", type=_positive(float), default=d.rabi_factor,
                   help="laser Rabi frequency in units of f")
    p.add_argument("--kappa", type=_positive(float), default=d.kappa, help="1/s")
    p.add_argument("--kappa-s", type=_positive(float), default=d.kappa_s, help="1/s")
    p.add_argument("--sim-time", type=_positive(float), default=d.sim_time, help="fs")
    p.add_argument("--runs", type=_positive(int), default=d.runs)
    p.add_argument("--seed", type=_seed, default=d.seed)
    p.add_argument("--output", "-o", dest="output_path", default=None)
    p.add_argument("--jobs", type=_jobs, default=d.jobs, help="worker processes, or 'max'")
    p.add_argument("--backend", choices=BACKENDS, default=None)
    p.add_argument("--decomposition", choices=("dense", "full"), default=d.decomposition)
    p.add_argument("--progress", action="store_true", help="progress line on stderr")
    return p


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def parse_args(argv):
    parser = build_parser()
    known, _ = parser.parse_known_args(argv)
    if known.config:
        try:
            file_values = read_config_file(known.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        flags = []
        for key, value in file_values.items():
            flags += [f"--{key}", value]
        # file first, so explicit flags override it
        argv = flags + list(argv)
    args = parser.parse_args(argv)
    if args.mode == "sweep" and not args.distance_min < args.distance_max:
        parser.error("--distance-min must be below --distance-max")
    fields = {k: v for k, v in vars(args).items() if k in CliConfig.__dataclass_fields__}
    return CliConfig(**fields), args


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg, args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if cfg.backend is not None and cfg.backend not in available_backends():
            raise RuntimeError(f"backend {cfg.backend!r} is not available")
        if cfg.mode == "sweep":
            return run_sweep(cfg, out, err, progress=args.progress)
        if cfg.mode == "single":
            return run_single(cfg, out)
        if cfg.mode == "verify":
            return run_verify(cfg, out)
        return run_census(cfg, out)
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(f"ionmirror: error: {exc}", file=err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
