import math

import numpy as np
import pytest

from ionmirror import gates as g
from ionmirror.experiment import (
    ExperimentConfig,
    SizingError,
    SweepResult,
    TrajectoryRecord,
    derive_run_seed,
    run_trajectory,
    sweep_distance,
    time_averaged_population,
)
from ionmirror.state import DegenerateMeasurementError


def nominal(distance=246.5e-9, **kw):
    return ExperimentConfig.from_factors(distance, **kw)


class TestConfig:
    def test_nominal_step_count(self):
        assert nominal().steps_per_run == 304

    def test_ten_nm_order_of_magnitude(self):
        cfg = nominal(10e-9)
        assert cfg.slice_time == pytest.approx(1.334e-17, rel=1e-3)
        assert 5_000 < cfg.steps_per_run < 10_000

    def test_rabi_frequency(self):
        cfg = nominal()
        assert cfg.rabi_frequency == pytest.approx(0.01 * 2 * math.pi * 299792458 / 493e-9)

    def test_register(self):
        assert nominal().num_qubits == 8

    @pytest.mark.parametrize("kw", [dict(distance=0.0), dict(distance=-1e-9),
                                    dict(distance=1e-7, field_qubits=1),
                                    dict(distance=1e-7, runs=0),
                                    dict(distance=1e-7, sim_time=0.0),
                                    dict(distance=1e-7, mode="sparse")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_sim_time_below_one_slice(self):
        with pytest.raises(SizingError):
            nominal(sim_time=1e-18).steps_per_run


class TestSeeds:
    def test_stable_values(self):
        assert derive_run_seed(0, 0, 0) == derive_run_seed(0, 0, 0)
        seeds = {derive_run_seed(42, d, r) for d in range(5) for r in range(5)}
        assert len(seeds) == 25

    def test_wide_master_seed(self):
        assert derive_run_seed(2**64 - 1, 0, 0) != derive_run_seed(2**64 - 2, 0, 0)


class TestTrajectory:
    def test_record_invariants(self):
        rec = run_trajectory(nominal(), 7)
        assert rec.photon_count == int(rec.detector_log.sum())
        assert rec.steps == nominal().steps_per_run == len(rec.detector_log)
        assert np.all((rec.population_trace >= 0) & (rec.population_trace <= 1))
        assert rec.max_norm_error < 1e-9

    def test_no_drive(self):
        for seed in range(5):
            rec = run_trajectory(nominal(rabi_factor=0.0), seed)
            assert rec.photon_count == 0
            assert np.max(rec.population_trace) < 1e-12

    def test_no_field_coupling_matches_two_qubit_oracle(self):
        cfg = nominal(kappa=0.0, sim_time=30e-15)
        run_seed = 3
        rec = run_trajectory(cfg, run_seed)
        assert rec.photon_count == 0
        # dense (ion, laser) statevector replaying the trajectory's uniform
        # stream: draw 2s measures the idle q_N, draw 2s+1 resets the laser
        c = cfg.couplings
        u = np.random.default_rng(run_seed).random(2 * cfg.steps_per_run)
        q = g.q_interaction(c)
        lev = np.kron(g.l_evolution(c), g.I2)
        ion = np.array([1, 0], dtype=complex)
        for step in range(cfg.steps_per_run):
            laser = g.rz(-c.phase_per_step * step) @ g.ry(2 * c.drive_angle) @ [1, 0]
            psi = lev @ q @ np.kron(ion, laser)
            m = psi.reshape(2, 2)
            assert np.sum(np.abs(m[1]) ** 2) == pytest.approx(rec.population_trace[step], abs=1e-9)
            p1 = np.sum(np.abs(m[:, 1]) ** 2)
            ion = m[:, 1] if u[2 * step + 1] < p1 else m[:, 0]
            ion = ion / np.linalg.norm(ion)
        assert np.ptp(rec.population_trace) > 1e-3

    def test_deterministic(self):
        a, b = run_trajectory(nominal(), 99), run_trajectory(nominal(), 99)
        assert np.array_equal(a.population_trace, b.population_trace)
        assert np.array_equal(a.detector_log, b.detector_log)

    def test_step_cap(self, monkeypatch):
        with pytest.raises(SizingError):
            run_trajectory(nominal(), 0, max_steps=100)
        monkeypatch.setenv("IONMIRROR_STEP_CAP", "200")
        with pytest.raises(SizingError, match="IONMIRROR_STEP_CAP"):
            run_trajectory(nominal(), 0)

    def test_chunked_equals_single_chunk(self, monkeypatch):
        import ionmirror.experiment as ex
        cfg = nominal(sim_time=50e-15)
        whole = run_trajectory(cfg, 4)
        monkeypatch.setattr(ex, "_CHUNK", 17)
        pieces = run_trajectory(cfg, 4)
        assert np.array_equal(whole.population_trace, pieces.population_trace)

    def test_backends_agree(self):
        from ionmirror.kernel import available_backends
        if len(available_backends()) < 2:
            pytest.skip("compiled kernel not built")
        a = run_trajectory(nominal(sim_time=30e-15), 5, backend="cython")
        b = run_trajectory(nominal(sim_time=30e-15), 5, backend="python")
        assert np.array_equal(a.detector_log, b.detector_log)
        assert np.max(np.abs(a.population_trace - b.population_trace)) < 1e-12


class TestTimeAverage:
    def test_constant(self):
        rec = TrajectoryRecord(0, np.full(7, 0.3), np.zeros(7))
        assert time_averaged_population(rec) == pytest.approx(0.3, abs=1e-16)

    def test_two_values(self):
        assert time_averaged_population(TrajectoryRecord(0, np.array([0.0, 1.0]), None)) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            time_averaged_population(TrajectoryRecord(0, np.array([]), None))


class TestSweep:
    def test_single_distance_single_run(self):
        cfg = nominal(master_seed=3)
        res = sweep_distance(cfg, [246.5e-9])
        rec = run_trajectory(cfg, derive_run_seed(3, 0, 0))
        row = res.rows[0]
        assert row.mean_photon_count == rec.photon_count
        assert row.mean_population == time_averaged_population(rec)
        assert math.isnan(row.std_error) and row.runs == 1 and row.steps == rec.steps

    def test_sorted_and_stderr(self):
        cfg = nominal(runs=6, master_seed=1, sim_time=40e-15)
        res = sweep_distance(cfg, [300e-9, 150e-9, 200e-9], block_size=4)
        assert [r.distance for r in res.rows] == [150e-9, 200e-9, 300e-9]
        for r in res.rows:
            assert r.std_error >= 0 and 0 <= r.mean_photon_count <= r.steps

    def test_parallel_identical(self):
        cfg = nominal(runs=4, master_seed=8, sim_time=40e-15)
        ds = [120e-9, 240e-9, 360e-9]
        a = sweep_distance(cfg, ds, jobs=1, block_size=2)
        b = sweep_distance(cfg, ds, jobs=2, block_size=3)
        assert a.rows == b.rows

    def test_run_order_independent(self):
        cfg = nominal(runs=5, master_seed=8, sim_time=40e-15)
        a = sweep_distance(cfg, [200e-9], block_size=1)
        b = sweep_distance(cfg, [200e-9], block_size=5)
        assert a.rows == b.rows

    def test_sizing_error_names_distance(self):
        with pytest.raises(SizingError, match="d = 1e-12"):
            sweep_distance(nominal(), [1e-12, 200e-9])

    @pytest.mark.parametrize("bad", [0.0, -1e-9, math.inf, math.nan])
    def test_invalid_distance(self, bad):
        with pytest.raises(ValueError):
            sweep_distance(nominal(), [bad])

    def test_result_helpers(self):
        res = sweep_distance(nominal(sim_time=20e-15), [100e-9, 200e-9])
        assert len(res) == 2
        assert np.allclose(res.column("distance"), [100e-9, 200e-9])
        assert res.rows[0].distance_nm == pytest.approx(100)
        assert isinstance(res, SweepResult)
