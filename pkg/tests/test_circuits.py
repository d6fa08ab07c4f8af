"""Gate constructors, circuit containers, and transform circuit structure."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svsim import (
    Circuit,
    GateOp,
    build_iqft,
    build_qft,
    hadamard,
    oracle_run,
    pauli_x,
    pauli_y,
    pauli_z,
    phase_r,
    phase_shift,
    random_circuit,
    random_unitary,
    rotation_x,
    rotation_y,
    rotation_z,
)

from conftest import serial_state


class TestConstructors:
    def test_all_unitary(self, rng):
        gates = [
            hadamard(), pauli_x(), pauli_y(), pauli_z(),
            phase_shift(0.7), phase_r(3),
            rotation_x(1.1), rotation_y(0.3), rotation_z(2.2),
            random_unitary(rng),
        ]
        for g in gates:
            assert np.max(np.abs(g.mat.conj().T @ g.mat - np.eye(2))) < 1e-15

    def test_phase_r_values(self):
        assert np.allclose(phase_r(1).mat, pauli_z().mat, atol=1e-15)
        g = phase_r(3)
        assert g.mat[0, 0] == 1.0
        assert g.mat[1, 1] == pytest.approx(np.exp(2j * np.pi / 8), abs=1e-15)
        with pytest.raises(ValueError):
            phase_r(0)

    def test_random_unitary_seeded(self):
        a = random_unitary(np.random.default_rng(9)).mat
        b = random_unitary(np.random.default_rng(9)).mat
        assert np.array_equal(a, b)


class TestGateOp:
    def test_qubit_accessors(self, rng):
        op = GateOp(random_unitary(rng), 2, control=5)
        assert op.qubits() == (5, 2)
        assert op.max_qubit() == 5
        assert GateOp(hadamard(), 3).qubits() == (3,)

    def test_rejects_bad_operands(self, rng):
        with pytest.raises(ValueError):
            GateOp(hadamard(), 1, control=1)
        with pytest.raises(ValueError):
            GateOp(hadamard(), -1)

    def test_dagger_round_trip(self, rng):
        op = GateOp(random_unitary(rng), 0)
        v = np.zeros(2, complex)
        v[0] = 1.0
        w = op.gate.mat @ v
        assert np.allclose(op.dagger().gate.mat @ w, v, atol=1e-14)


class TestCircuit:
    def test_append_validates_fit(self):
        circ = Circuit(3)
        circ.append(GateOp(hadamard(), 2))
        with pytest.raises(ValueError):
            circ.append(GateOp(hadamard(), 3))
        assert circ.gate_count == 1
        assert len(circ) == 1

    def test_inverse_undoes(self, rng):
        circ = random_circuit(5, 30, rng)
        v = oracle_run(circ)
        back = oracle_run(circ.inverse(), v)
        expect = np.zeros(32, complex)
        expect[0] = 1.0
        assert np.max(np.abs(back - expect)) < 1e-12


class TestTransformCircuits:
    @given(st.integers(1, 40))
    @settings(max_examples=40, deadline=None)
    def test_gate_count_formula(self, n):
        assert build_qft(n).gate_count == n * (n + 1) // 2
        assert build_iqft(n).gate_count == n * (n + 1) // 2

    def test_single_qubit_case(self):
        circ = build_qft(1)
        assert circ.gate_count == 1
        assert np.allclose(circ.gates[0].gate.mat, hadamard().mat)
        assert circ.gates[0].control is None

    def test_iqft_stage_prefix_stays_low(self):
        # gates of stages 0..j-1 touch only qubits < j, so any leading
        # stage prefix is one fusable run
        n = 12
        circ = build_iqft(n)
        pos = 0
        for stage in range(n):
            stage_len = stage + 1
            for op in circ.gates[pos:pos + stage_len]:
                assert op.max_qubit() <= stage
            pos += stage_len
        assert pos == circ.gate_count

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_qft_iqft_mutual_inverse_oracle(self, n):
        both = Circuit(n)
        both.extend(build_qft(n).gates)
        both.extend(build_iqft(n).gates)
        for basis in range(1 << n):
            out = oracle_run(both, basis)
            expect = np.zeros(1 << n, complex)
            expect[basis] = 1.0
            assert np.max(np.abs(out - expect)) < 1e-12

    def test_qft_iqft_mutual_inverse_exhaustive_n8(self):
        n = 8
        both = Circuit(n)
        both.extend(build_qft(n).gates)
        both.extend(build_iqft(n).gates)
        for basis in range(1 << n):
            out = serial_state(both, initial=basis)
            expect = np.zeros(1 << n, complex)
            expect[basis] = 1.0
            assert np.max(np.abs(out - expect)) < 1e-10

    def test_iqft_is_exact_dagger_of_qft(self):
        n = 6
        fwd = build_qft(n)
        inv = build_iqft(n)
        dagger = fwd.inverse()
        assert inv.gate_count == dagger.gate_count
        for a, b in zip(inv.gates, dagger.gates):
            assert a.qubits() == b.qubits()
            assert np.allclose(a.gate.mat, b.gate.mat, atol=1e-15)


class TestRandomCircuit:
    def test_shape_and_determinism(self):
        a = random_circuit(6, 40, np.random.default_rng(3))
        b = random_circuit(6, 40, np.random.default_rng(3))
        assert a.n == 6 and a.gate_count == 40
        assert any(op.control is not None for op in a.gates)
        assert any(op.control is None for op in a.gates)
        for x, y in zip(a.gates, b.gates):
            assert x.qubits() == y.qubits()
            assert np.array_equal(x.gate.mat, y.gate.mat)
