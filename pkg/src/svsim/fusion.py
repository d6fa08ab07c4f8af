"""Cache blocking through gate fusion.

Consecutive gates whose qubit indices all sit below a block exponent l_c
commute with the block decomposition of the slice: a gate on qubit k < l_c
never pairs amplitudes across a 2^l_c boundary. Such runs are executed
block by block, applying every gate of the run while the block is
cache-resident, instead of streaming the whole slice once per gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuits import Circuit, GateOp
from .core import LocalState
from .distributed import ScratchPool, Transport, apply_op
from .errors import FusionContractError
from .kernels import SERIAL, ThreadPolicy, _pool, apply_block


@dataclass(frozen=True)
class FusionConfig:
    """l_c is the block exponent: blocks hold 2^l_c amplitudes (2^(l_c+4) bytes)."""

    l_c: int
    enabled: bool = True

    def __post_init__(self):
        if self.l_c < 1:
            raise ValueError("block exponent must be >= 1")


def default_block_exponent(llc_bytes: int, m: int) -> int:
    """Largest l_c whose block fills at most half the cache, capped at m.

    Half the cache leaves room for the block's read and write streams to
    coexist with whatever else is resident.
    """
    if llc_bytes < 64:
        raise ValueError("cache size implausibly small")
    exponent = max(1, (llc_bytes // 32).bit_length() - 1)
    return min(m, exponent)


@dataclass(frozen=True)
class FusedBlockRun:
    gates: tuple[GateOp, ...]


@dataclass(frozen=True)
class PassThrough:
    gate: GateOp


@dataclass
class FusionPlan:
    l_c: int
    segments: list[FusedBlockRun | PassThrough] = field(default_factory=list)

    def flatten(self) -> list[GateOp]:
        """The original gate order; planning never reorders or drops gates."""
        out: list[GateOp] = []
        for seg in self.segments:
            if isinstance(seg, FusedBlockRun):
                out.extend(seg.gates)
            else:
                out.append(seg.gate)
        return out


def plan_fusion(circuit: Circuit, config: FusionConfig) -> FusionPlan:
    """Greedy maximal grouping in circuit order, no lookahead or reordering.

    A gate joins the open run iff every index it touches (target, and
    control if present) is below l_c; any other gate closes the run and
    passes through on its own. Controlled gates with both indices below
    l_c are fusable: their strides and control masks stay inside a block.
    """
    plan = FusionPlan(config.l_c)
    run: list[GateOp] = []

    def close_run() -> None:
        if run:
            plan.segments.append(FusedBlockRun(tuple(run)))
            run.clear()

    for op in circuit:
        if config.enabled and op.max_qubit() < config.l_c:
            run.append(op)
        else:
            close_run()
            plan.segments.append(PassThrough(op))
    close_run()
    return plan


def execute_plan(
    state: LocalState,
    plan: FusionPlan,
    policy: ThreadPolicy = SERIAL,
    transport: Transport | None = None,
    *,
    chunk_amps: int | None = None,
    scratch: ScratchPool | None = None,
) -> None:
    """Run the plan: fused runs block by block, pass-throughs as plain gates.

    Blocks are independent (gates in a run never cross block boundaries),
    so the block loop fans out across threads; gates within a block stay
    sequential. Pass-through gates take the ordinary local or distributed
    path.
    """
    if plan.l_c > state.layout.m:
        raise FusionContractError(
            f"block exponent {plan.l_c} exceeds local qubit count m={state.layout.m}"
        )
    for seg in plan.segments:
        if isinstance(seg, PassThrough):
            apply_op(
                state, seg.gate, transport,
                policy=policy, chunk_amps=chunk_amps, scratch=scratch,
            )
            continue
        blocks = state.amps.reshape(-1, 1 << plan.l_c)
        nblocks = blocks.shape[0]
        if policy.num_threads > 1 and nblocks > 1:
            futures = [
                _pool(policy.num_threads).submit(apply_block, blocks[b], seg.gates, SERIAL)
                for b in range(nblocks)
            ]
            for f in futures:
                f.result()
        else:
            for b in range(nblocks):
                apply_block(blocks[b], seg.gates, policy)
