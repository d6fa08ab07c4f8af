"""Cache-block gate grouping: plan shape and execution transparency."""

from __future__ import annotations

import numpy as np
import pytest

from svsim import (
    Circuit,
    FusedBlockRun,
    FusionConfig,
    FusionContractError,
    GateOp,
    Layout,
    PassThrough,
    apply_op,
    build_iqft,
    default_block_exponent,
    execute_plan,
    hadamard,
    init_basis_state,
    plan_fusion,
    random_circuit,
    state_from_global,
)

from conftest import max_abs_diff, serial_state, spmd_state


class TestPlanShape:
    def test_single_gate_is_one_run(self):
        circ = Circuit(6)
        circ.append(GateOp(hadamard(), 0))
        plan = plan_fusion(circ, FusionConfig(l_c=5))
        assert len(plan.segments) == 1
        assert isinstance(plan.segments[0], FusedBlockRun)
        assert len(plan.segments[0].gates) == 1

    def test_high_gate_splits_runs(self):
        circ = Circuit(8)
        for k in (0, 7, 1):
            circ.append(GateOp(hadamard(), k))
        plan = plan_fusion(circ, FusionConfig(l_c=4))
        kinds = [type(seg) for seg in plan.segments]
        assert kinds == [FusedBlockRun, PassThrough, FusedBlockRun]

    def test_controlled_gate_joins_when_both_low(self, rng):
        circ = random_circuit(4, 20, rng)
        plan = plan_fusion(circ, FusionConfig(l_c=4))
        assert len(plan.segments) == 1
        assert isinstance(plan.segments[0], FusedBlockRun)

    def test_disabled_config_passes_everything_through(self, rng):
        circ = random_circuit(6, 10, rng)
        plan = plan_fusion(circ, FusionConfig(l_c=6, enabled=False))
        assert all(isinstance(seg, PassThrough) for seg in plan.segments)

    def test_flatten_preserves_order(self, rng):
        circ = random_circuit(10, 60, rng)
        plan = plan_fusion(circ, FusionConfig(l_c=5))
        assert plan.flatten() == list(circ.gates)

    def test_iqft_leading_stages_form_one_run(self):
        n, l_c = 12, 8
        plan = plan_fusion(build_iqft(n), FusionConfig(l_c=l_c))
        first = plan.segments[0]
        assert isinstance(first, FusedBlockRun)
        assert len(first.gates) == l_c * (l_c + 1) // 2
        for seg in plan.segments[1:]:
            if isinstance(seg, FusedBlockRun):
                assert all(op.max_qubit() < l_c for op in seg.gates)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(l_c=0)


class TestDefaultBlockExponent:
    def test_block_fits_half_llc(self):
        l_c = default_block_exponent(32 << 20, m=30)
        assert (1 << (l_c + 4)) <= (32 << 20) // 2
        assert (1 << (l_c + 5)) > (32 << 20) // 2
        assert default_block_exponent(32 << 20, m=10) == 10
        assert default_block_exponent(64, m=10) >= 1


class TestExecutionTransparency:
    @pytest.mark.parametrize("l_c", [2, 4, 6])
    def test_matches_unfused_serial(self, l_c):
        for seed in range(6):
            circ = random_circuit(8, 50, np.random.default_rng(seed))
            plain = serial_state(circ)
            fused = serial_state(circ, fusion=FusionConfig(l_c=l_c))
            assert max_abs_diff(plain, fused) < 1e-13

    def test_matches_unfused_distributed(self):
        circ = random_circuit(9, 60, np.random.default_rng(17))
        plain = spmd_state(circ, 2)
        fused = spmd_state(circ, 2, fusion=FusionConfig(l_c=5))
        assert max_abs_diff(plain, fused) < 1e-13

    def test_threaded_blocks_match_serial_blocks(self):
        from svsim import ThreadPolicy

        circ = random_circuit(10, 40, np.random.default_rng(23))
        base = serial_state(circ, fusion=FusionConfig(l_c=4))
        threaded = serial_state(circ, fusion=FusionConfig(l_c=4),
                                policy=ThreadPolicy(4))
        assert np.array_equal(base, threaded)

    def test_transform_circuit_near_capacity(self):
        # one qubit above the block exponent leaves two blocks per sweep
        n, l_c = 21, 20
        circ = build_iqft(n)
        plain = serial_state(circ)
        fused = serial_state(circ, fusion=FusionConfig(l_c=l_c))
        assert max_abs_diff(plain, fused) < 1e-13


class TestContract:
    def test_block_exponent_above_m_refused(self):
        circ = Circuit(6)
        circ.append(GateOp(hadamard(), 0))
        plan = plan_fusion(circ, FusionConfig(l_c=5))
        state = init_basis_state(Layout(6, 2, 0))
        with pytest.raises(FusionContractError):
            execute_plan(state, plan)

    def test_plan_execution_direct(self, rng):
        full = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        full /= np.linalg.norm(full)
        circ = random_circuit(6, 25, rng)

        plain = state_from_global(Layout(6, 0, 0), full)
        for op in circ.gates:
            apply_op(plain, op)

        fused = state_from_global(Layout(6, 0, 0), full)
        execute_plan(fused, plan_fusion(circ, FusionConfig(l_c=3)))
        assert max_abs_diff(fused.amps, plain.amps) < 1e-13
