import numpy as np
import pytest

from ionmirror import gates as g
from ionmirror.circuit import (
    Circuit,
    CircuitError,
    OpKind,
    build_time_step,
    c_if,
    execute,
    gate_census,
    measure,
    register_layout,
    reset,
    shift_ops,
    unitary,
)
from ionmirror.experiment import ExperimentConfig
from ionmirror.state import ClassicalRegister, new_state


def nominal_config(**kw):
    return ExperimentConfig.from_factors(246.5e-9, **kw)


class TestCircuitValidation:
    def test_out_of_range_target(self):
        with pytest.raises(CircuitError):
            Circuit(2, 1, [unitary("X", (2,), g.X)])

    def test_bad_classical_bit(self):
        with pytest.raises(CircuitError):
            Circuit(1, 1, [measure(0, 1)])

    def test_non_unitary(self):
        with pytest.raises(CircuitError):
            Circuit(1, 0, [unitary("bad", (0,), np.diag([1.0, 0.5]))])

    def test_matrix_shape(self):
        with pytest.raises(CircuitError):
            Circuit(2, 0, [unitary("X", (0, 1), g.X)])

    def test_validation_precedes_mutation(self):
        state = new_state(2)
        before = state.amplitudes.copy()
        with pytest.raises(CircuitError):
            c = Circuit(3, 1, [unitary("X", (0,), g.X)])
            execute(c, state, ClassicalRegister(1), np.random.default_rng(0))
        assert np.array_equal(state.amplitudes, before)


class TestExecute:
    def test_measure_and_flip(self):
        c = Circuit(1, 1, [measure(0, 0), c_if(0, "X", (0,), g.X)])
        s, reg = execute(c, new_state(1, 1), ClassicalRegister(1), np.random.default_rng(0))
        assert np.allclose(s.amplitudes, [1, 0]) and reg[0] == 1

    def test_empty(self):
        s0 = new_state(2, 3)
        s, reg = execute(Circuit(2, 1, []), s0, ClassicalRegister(1), np.random.default_rng(0))
        assert np.array_equal(s.amplitudes, s0.amplitudes) and reg.bits == [0]

    def test_control_off(self):
        c = Circuit(1, 1, [c_if(0, "X", (0,), g.X)])
        s, _ = execute(c, new_state(1), ClassicalRegister(1), np.random.default_rng(0))
        assert s.amplitudes[0] == 1

    def test_reset(self):
        c = Circuit(2, 0, [unitary("H", (1,), g.H), reset(1)])
        s, _ = execute(c, new_state(2), ClassicalRegister(0), np.random.default_rng(3))
        assert np.allclose(s.amplitudes, new_state(2).amplitudes)

    def test_dimension_mismatch(self):
        with pytest.raises(CircuitError):
            execute(Circuit(2, 1, []), new_state(3), ClassicalRegister(1), np.random.default_rng(0))
        with pytest.raises(CircuitError):
            execute(Circuit(2, 1, []), new_state(2), ClassicalRegister(2), np.random.default_rng(0))

    def test_undriven_steps_never_click(self):
        cfg = nominal_config(rabi_factor=0.0)
        state, reg = new_state(cfg.num_qubits), ClassicalRegister(1)
        rng = np.random.default_rng(0)
        for step in range(100):
            state, reg = execute(build_time_step(cfg, step), state, reg, rng)
            assert reg[0] == 0
        assert abs(state.amplitudes[0]) == pytest.approx(1.0, abs=1e-12)

    def test_trivial_physics_preserves_vacuum(self):
        cfg = ExperimentConfig(246.5e-9, omega=0.0, kappa=0.0, kappa_s=0.0)
        state, reg = new_state(cfg.num_qubits), ClassicalRegister(1)
        rng = np.random.default_rng(1)
        for step in range(20):
            state, reg = execute(build_time_step(cfg, step), state, reg, rng)
        assert state.amplitudes[0] == pytest.approx(1.0, abs=1e-15)


class TestShift:
    @pytest.mark.parametrize("slices", [2, 3, 4, 5])
    def test_permutation_matrix(self, slices):
        layout = register_layout(slices)
        field = len(layout.field)
        local = [(op.matrix, tuple(t - layout.field[0] for t in op.targets))
                 for op in shift_ops(layout)]
        p = g.compose(local, field)
        assert np.array_equal(np.abs(p), np.abs(p).round())
        assert np.all(np.abs(p).sum(axis=0) == 1) and np.all(np.abs(p).sum(axis=1) == 1)

    def test_slice_travels_to_return_position(self):
        slices = 5
        layout = register_layout(slices)
        n = len(layout.field)
        local = [(op.matrix, tuple(t - layout.field[0] for t in op.targets))
                 for op in shift_ops(layout)]
        p = g.compose(local, n)
        state = np.zeros(1 << n)
        state[1 << (n - 1)] = 1  # excitation written at q_0
        for k in range(1, n):
            state = p @ state
            # after k steps the slice sits at q_k; q_N is reached after N steps
            assert state[1 << (n - 1 - k)] == 1
        state = p @ state
        assert state[1 << (n - 1)] == 1

    def test_too_few_slices(self):
        with pytest.raises(CircuitError):
            register_layout(1)


class TestBuildTimeStep:
    def test_dense_op_order(self):
        ops = build_time_step(nominal_config(), 3).ops
        names = [op.name for op in ops]
        assert names[:5] == ["Ry", "Rz", "Q", "R", "Rz"]
        assert names[5:8] == ["measure", "X", "reset"]
        assert all(n == "SWAP" for n in names[8:]) and len(names) == 8 + 5

    def test_targets(self):
        cfg = nominal_config()
        layout = cfg.layout
        ops = build_time_step(cfg, 0).ops
        assert ops[3].targets == (layout.ion, layout.outgoing, layout.returning)
        assert ops[5].targets == (layout.returning,) and ops[5].bit == 0
        assert ops[6].kind is OpKind.CONTROLLED and ops[7].targets == (layout.laser,)

    def test_laser_phase_advances(self):
        cfg = nominal_config()
        phi = cfg.couplings.phase_per_step
        for step in (0, 1, 9):
            op = build_time_step(cfg, step).ops[1]
            assert op.params[0] == pytest.approx(-phi * step)

    @pytest.mark.parametrize("slices", range(2, 9))
    def test_validates_for_all_sizes(self, slices):
        cfg = nominal_config(field_qubits=slices)
        for step in (0, 1, 10_000):
            c = build_time_step(cfg, step)
            assert c.num_qubits == slices + 3 and c.classical_width == 1

    def test_full_mode_matches_dense_unitary_part(self):
        cfg = nominal_config()
        dense = build_time_step(cfg, 2, mode="dense")
        full = build_time_step(cfg, 2, mode="full")
        n = cfg.num_qubits

        def unitary_prefix(c):
            ops = []
            for op in c.ops:
                if op.kind is not OpKind.UNITARY:
                    break
                ops.append((op.matrix, op.targets))
            return g.compose(ops, n)

        assert g.phase_aligned_deviation(unitary_prefix(full), unitary_prefix(dense)) < 1e-10

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            build_time_step(nominal_config(), -1)
        with pytest.raises(ValueError):
            build_time_step(nominal_config(), 0, mode="sparse")

    def test_dump(self):
        text = build_time_step(nominal_config(), 1).dump()
        lines = text.splitlines()
        assert len(lines) == 13
        assert lines[0].startswith("unitary Ry 1 ")
        assert lines[5] == "measure measure 7 c0"
        assert lines[6] == "c_if X 7 c0"


class TestCensus:
    def test_small(self):
        c = Circuit(2, 1, [unitary("H", (0,), g.H), unitary("CNOT", (0, 1), g.CNOT), measure(1, 0)])
        assert gate_census(c).as_tuple() == (1, 1, 0, 1, 0)

    def test_empty(self):
        assert gate_census(Circuit(1, 0, [])).as_tuple() == (0, 0, 0, 0, 0)

    @pytest.mark.parametrize("slices", [2, 5, 7])
    def test_full_decomposition_counts(self, slices):
        c = gate_census(build_time_step(nominal_config(field_qubits=slices), 0, mode="full"))
        assert (c.single_qubit, c.two_qubit, c.three_qubit, c.measurements) == (7, 17 + slices, 0, 2)
        assert c.resets == 1 and c.classically_controlled == 1

    def test_dense_counts(self):
        c = gate_census(build_time_step(nominal_config(), 0))
        assert (c.single_qubit, c.two_qubit, c.three_qubit, c.measurements) == (3, 6, 1, 2)

    def test_identity(self):
        c = build_time_step(nominal_config(), 0, mode="full")
        census = gate_census(c)
        unitary_like = sum(op.kind in (OpKind.UNITARY, OpKind.CONTROLLED) for op in c.ops)
        assert (census.single_qubit + census.two_qubit + census.three_qubit
                + census.classically_controlled) == unitary_like
