"""Circuit execution over a local or distributed state."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .circuits import Circuit
from .core import LocalState
from .distributed import ScratchPool, Transport, apply_op
from .errors import LayoutError
from .fusion import FusionConfig, FusedBlockRun, FusionPlan, execute_plan, plan_fusion
from .kernels import SERIAL, ThreadPolicy
from .perfmodel import BoundCase, classify_case, traffic_bytes


@dataclass(frozen=True)
class GateRecord:
    """One timed execution step: a single gate, or one fused block run."""

    index: int
    kind: str  # "single", "controlled", or "fused_run"
    qubits: tuple[int, ...]
    case: BoundCase
    seconds: float
    bytes_moved: int
    gate_count: int = 1


def run_circuit(
    state: LocalState,
    circuit: Circuit,
    transport: Transport | None = None,
    *,
    policy: ThreadPolicy = SERIAL,
    fusion: FusionConfig | None = None,
    chunk_amps: int | None = None,
    scratch: ScratchPool | None = None,
    record: bool = False,
) -> list[GateRecord] | None:
    """Apply the circuit in order, optionally fused and optionally timed.

    With fusion enabled each fused run produces one record (its blocks
    sweep the slice once, so it is charged one full-slice read+write);
    every other gate is recorded individually.
    """
    lay = state.layout
    if circuit.n != lay.n:
        raise LayoutError(f"circuit has {circuit.n} qubits, state has {lay.n}")
    if scratch is None:
        scratch = ScratchPool()
    records: list[GateRecord] = [] if record else None

    def timed(fn, index: int, kind: str, qubits: tuple[int, ...], case: BoundCase,
              bytes_moved: int, gate_count: int) -> None:
        if records is None:
            fn()
            return
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        records.append(GateRecord(index, kind, qubits, case, dt, bytes_moved, gate_count))

    if fusion is not None and fusion.enabled:
        plan = plan_fusion(circuit, fusion)
        step = 0
        for seg in plan.segments:
            sub = FusionPlan(plan.l_c, [seg])
            if isinstance(seg, FusedBlockRun):
                timed(
                    lambda: execute_plan(state, sub, policy, transport,
                                         chunk_amps=chunk_amps, scratch=scratch),
                    step, "fused_run", (), BoundCase.SINGLE_LOCAL,
                    traffic_bytes(BoundCase.SINGLE_LOCAL, lay.m), len(seg.gates),
                )
            else:
                op = seg.gate
                case = classify_case(op.target, op.control, lay.m)
                timed(
                    lambda: apply_op(state, op, transport, policy=policy,
                                     chunk_amps=chunk_amps, scratch=scratch),
                    step, "single" if op.control is None else "controlled",
                    op.qubits(), case, traffic_bytes(case, lay.m), 1,
                )
            step += 1
        return records

    for index, op in enumerate(circuit):
        case = classify_case(op.target, op.control, lay.m)
        timed(
            lambda: apply_op(state, op, transport, policy=policy,
                             chunk_amps=chunk_amps, scratch=scratch),
            index, "single" if op.control is None else "controlled",
            op.qubits(), case, traffic_bytes(case, lay.m), 1,
        )
    return records
