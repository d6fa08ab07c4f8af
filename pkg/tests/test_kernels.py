"""Strided gate kernels against the dense oracle; threading determinism."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svsim import (
    SERIAL,
    FusionContractError,
    GateMatrix,
    GateOp,
    Layout,
    LayoutError,
    ParallelLevel,
    ThreadPolicy,
    apply_block,
    apply_controlled_local,
    apply_single_local,
    full_controlled_unitary,
    full_single_unitary,
    hadamard,
    pauli_x,
    random_unitary,
    state_from_global,
)
from svsim.kernels import apply_controlled_raw, apply_single_raw


def random_state(rng, n):
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return (v / np.linalg.norm(v)).astype(np.complex128)


class TestGateMatrix:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            GateMatrix(np.array([[1, 0], [0, 2]], dtype=complex))

    def test_unchecked_bypasses_validation(self):
        g = GateMatrix.unchecked(np.array([[1, 0], [0, 2]], dtype=complex))
        assert g.mat[1, 1] == 2

    def test_dagger_inverts(self, rng):
        q = random_unitary(rng)
        prod = q.mat @ q.dagger().mat
        assert np.allclose(prod, np.eye(2), atol=1e-13)


class TestAgainstOracle:
    def test_single_all_positions(self, rng):
        n = 5
        for _ in range(5):
            q = random_unitary(rng)
            for k in range(n):
                v = random_state(rng, n)
                got = v.copy()
                apply_single_raw(got, k, q)
                want = full_single_unitary(n, k, q) @ v
                assert np.max(np.abs(got - want)) < 1e-13

    def test_controlled_all_pairs(self, rng):
        n = 5
        for _ in range(3):
            q = random_unitary(rng)
            for c in range(n):
                for t in range(n):
                    if c == t:
                        continue
                    v = random_state(rng, n)
                    got = v.copy()
                    apply_controlled_raw(got, c, t, q)
                    want = full_controlled_unitary(n, c, t, q) @ v
                    assert np.max(np.abs(got - want)) < 1e-13

    def test_cnot_truth_table(self):
        # control bit 0 flips bit 1: |01> -> |11>, |11> -> |01>, rest fixed
        for g in range(4):
            v = np.zeros(4, complex)
            v[g] = 1.0
            apply_controlled_raw(v, 0, 1, pauli_x())
            expect = g ^ 2 if g & 1 else g
            assert v[expect] == 1.0


class TestLocalGuards:
    def test_single_rejects_boundary_qubit(self):
        state = state_from_global(Layout(6, 2, 1), np.zeros(64, complex))
        with pytest.raises(LayoutError):
            apply_single_local(state, 4, hadamard())

    def test_controlled_rejects_boundary_and_equal(self):
        state = state_from_global(Layout(6, 2, 0), np.zeros(64, complex))
        with pytest.raises(ValueError):
            apply_controlled_local(state, 2, 2, pauli_x())
        with pytest.raises(LayoutError):
            apply_controlled_local(state, 5, 0, pauli_x())
        with pytest.raises(LayoutError):
            apply_controlled_local(state, 0, 4, pauli_x())


class TestThreadingDeterminism:
    @pytest.mark.parametrize("k", [0, 3, 9])
    def test_single_bitwise_identical_across_policies(self, k, rng):
        n = 10
        v = random_state(rng, n)
        q = random_unitary(rng)
        reference = v.copy()
        apply_single_raw(reference, k, q, SERIAL)
        for threads in (2, 3, 4):
            for level in ParallelLevel:
                got = v.copy()
                apply_single_raw(got, k, q, ThreadPolicy(threads, level))
                assert np.array_equal(got, reference), (threads, level)

    def test_controlled_bitwise_identical_across_policies(self, rng):
        n = 10
        v = random_state(rng, n)
        q = random_unitary(rng)
        for c, t in [(0, 9), (9, 0), (4, 5)]:
            reference = v.copy()
            apply_controlled_raw(reference, c, t, q, SERIAL)
            for threads in (2, 5):
                got = v.copy()
                apply_controlled_raw(got, c, t, q, ThreadPolicy(threads))
                assert np.array_equal(got, reference)


class TestAlgebraicProperties:
    @given(st.integers(0, 5), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_unitary_preserves_norm(self, k, seed):
        rng = np.random.default_rng(seed)
        v = random_state(rng, 6)
        apply_single_raw(v, k, random_unitary(rng))
        assert abs(np.vdot(v, v).real - 1.0) < 1e-13

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_gate_then_dagger_restores(self, seed):
        rng = np.random.default_rng(seed)
        v = random_state(rng, 6)
        q = random_unitary(rng)
        k = int(rng.integers(0, 6))
        got = v.copy()
        apply_single_raw(got, k, q)
        apply_single_raw(got, k, q.dagger())
        assert np.max(np.abs(got - v)) < 1e-13

    def test_involutions(self, rng):
        v = random_state(rng, 6)
        for q in (pauli_x(), hadamard()):
            got = v.copy()
            apply_single_raw(got, 2, q)
            apply_single_raw(got, 2, q)
            assert np.max(np.abs(got - v)) < 1e-13

    def test_disjoint_gates_commute(self, rng):
        v = random_state(rng, 6)
        a, b = random_unitary(rng), random_unitary(rng)
        ab = v.copy()
        apply_single_raw(ab, 1, a)
        apply_controlled_raw(ab, 3, 5, b)
        ba = v.copy()
        apply_controlled_raw(ba, 3, 5, b)
        apply_single_raw(ba, 1, a)
        assert np.max(np.abs(ab - ba)) < 1e-14


class TestBlockKernel:
    def test_applies_within_each_block(self, rng):
        n, b = 8, 3
        v = random_state(rng, n)
        ops = [GateOp(random_unitary(rng), 1), GateOp(random_unitary(rng), 0, control=2)]
        got = v.copy()
        blocks = got.reshape(-1, 1 << b)
        for i in range(blocks.shape[0]):
            apply_block(blocks[i], ops)
        want = v.copy()
        apply_single_raw(want, 1, ops[0].gate)
        apply_controlled_raw(want, 2, 0, ops[1].gate)
        assert np.array_equal(got, want)

    def test_rejects_gate_crossing_block(self, rng):
        block = random_state(rng, 3)
        with pytest.raises(FusionContractError):
            apply_block(block, [GateOp(random_unitary(rng), 3)])
        with pytest.raises(FusionContractError):
            apply_block(block, [GateOp(random_unitary(rng), 0, control=4)])
