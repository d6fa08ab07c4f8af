"""Gate application across rank boundaries.

A gate on qubit k >= m pairs each local element j on rank r with local
element j on partner = r XOR 2^(k-m): bit k of the global index is bit
(k-m) of the rank id, so the pairing preserves local offsets. The rank
whose bit is 0 holds the alpha...0... element of every pair (the
"zero side"); its partner holds the alpha...1... element.

The update runs as a half exchange in two phases. The zero side computes
the pair updates for local indices in [0, 2^(m-1)) while the one side
streams that half over; then roles swap for [2^(m-1), 2^m). Whoever
computes a chunk updates its own element in place and returns the
partner's updated element. Each phase is pipelined in chunks with double
buffering so chunk i's compute overlaps chunk i+1's transfer.
"""

from __future__ import annotations

import enum
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import AMP_BYTES, LocalState, aligned_zeros
from .errors import LayoutError, TransportError
from .kernels import (
    SERIAL,
    GateMatrix,
    ThreadPolicy,
    apply_controlled_raw,
    apply_single_raw,
    mix,
)

DEFAULT_CHUNK_BYTES = 4 << 20  # saturation floor: below this, transports may not reach steady bandwidth
GATHER_MAX_QUBITS = 26
CONTROL_TAG = 0  # reserved for barriers; data tags start at 1

_KIND_DATA = 0
_KIND_RET = 1


def _wire_phase(stage: int, chunk: int, kind: int) -> int:
    return (stage << 30) | (chunk << 1) | kind


class CompletionHandle(ABC):
    """Handle for a nonblocking transfer; wait() returns the payload for receives."""

    @abstractmethod
    def wait(self, timeout: float | None = None) -> bytes | None: ...

    @abstractmethod
    def done(self) -> bool: ...


class Transport(ABC):
    """Ordered, reliable, bit-exact message channel between ranks.

    Messages between a fixed (src, dest) pair with the same tag arrive in
    send order. The wire `phase` word identifies the protocol step within a
    tag epoch; receivers state the phase they expect and a mismatch is a
    protocol error. fresh_tag() advances a per-rank epoch counter; ranks
    stay in agreement by calling it once per collective operation.
    """

    rank: int
    num_ranks: int

    @abstractmethod
    def fresh_tag(self) -> int: ...

    @abstractmethod
    def send(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> None: ...

    @abstractmethod
    def receive(self, src: int, tag: int, phase: int = 0) -> bytes: ...

    @abstractmethod
    def isend(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> CompletionHandle: ...

    @abstractmethod
    def irecv(self, src: int, tag: int, phase: int = 0) -> CompletionHandle: ...

    @abstractmethod
    def barrier(self) -> None: ...

    def close(self) -> None:
        pass


class ComputesHalf(enum.Enum):
    FIRST_HALF = 0
    SECOND_HALF = 1


@dataclass(frozen=True)
class ExchangePlan:
    """Shape of one half exchange: who faces whom and how traffic is chunked."""

    partner: int
    this_rank_computes: ComputesHalf
    chunk_amps: int
    temp_capacity: int
    half_amps: int

    def __post_init__(self):
        if self.chunk_amps < 1:
            raise ValueError("chunk_amps must be >= 1")
        if self.half_amps % self.chunk_amps != 0:
            raise ValueError(
                f"chunk_amps {self.chunk_amps} must divide the half length {self.half_amps}"
            )
        steps = self.half_amps // self.chunk_amps
        needed = self.chunk_amps * min(2, steps)
        if not needed <= self.temp_capacity <= self.half_amps:
            raise ValueError(
                f"temp_capacity {self.temp_capacity} outside [{needed}, {self.half_amps}]"
            )


def make_exchange_plan(
    layout,
    k: int,
    *,
    chunk_amps: int | None = None,
    chunk_bytes: int | None = None,
    temp_capacity: int | None = None,
) -> ExchangePlan:
    """Plan the exchange for a gate whose pairing bit is k >= m.

    The default chunk is the largest power of two at or below the
    saturation floor (so it divides the half); a whole half smaller than
    the floor becomes a single chunk.
    """
    m = layout.m
    if not layout.m <= k < layout.n:
        raise LayoutError(f"qubit {k} is local (m={m}); no exchange needed")
    half_amps = 1 << (m - 1)
    if chunk_amps is None:
        want = (chunk_bytes or DEFAULT_CHUNK_BYTES) // AMP_BYTES
        want = max(1, want)
        chunk_amps = 1 << (want.bit_length() - 1)
        chunk_amps = min(chunk_amps, half_amps)
    steps = max(1, half_amps // max(1, chunk_amps))
    if temp_capacity is None:
        temp_capacity = chunk_amps * min(2, steps)
    bit = (layout.rank >> (k - m)) & 1
    return ExchangePlan(
        partner=layout.rank ^ (1 << (k - m)),
        this_rank_computes=ComputesHalf.FIRST_HALF if bit == 0 else ComputesHalf.SECOND_HALF,
        chunk_amps=chunk_amps,
        temp_capacity=temp_capacity,
        half_amps=half_amps,
    )


class ScratchPool:
    """Recycles pipeline temp buffers and records the high-water footprint."""

    def __init__(self):
        self._free: dict[int, list[np.ndarray]] = {}
        self._lock = threading.Lock()
        self.outstanding_bytes = 0
        self.high_water_bytes = 0

    def take(self, num_amps: int) -> np.ndarray:
        with self._lock:
            stack = self._free.get(num_amps)
            buf = stack.pop() if stack else aligned_zeros(num_amps)
            self.outstanding_bytes += num_amps * AMP_BYTES
            self.high_water_bytes = max(self.high_water_bytes, self.outstanding_bytes)
            return buf

    def give(self, buf: np.ndarray) -> None:
        with self._lock:
            self._free.setdefault(buf.shape[0], []).append(buf)
            self.outstanding_bytes -= buf.shape[0] * AMP_BYTES


PairKernel = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _pair_kernel(q: GateMatrix, own_is_zero: bool) -> PairKernel:
    """Per-chunk kernel: (mine, theirs) -> (value kept locally, value returned).

    Uses the same mix() arithmetic as the local kernels, so results are
    bitwise independent of chunk boundaries.
    """
    q11, q12, q21, q22 = q.q11, q.q12, q.q21, q.q22

    if own_is_zero:
        def kernel(mine: np.ndarray, theirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return mix(mine, theirs, q11, q12), mix(mine, theirs, q21, q22)
    else:
        def kernel(mine: np.ndarray, theirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return mix(theirs, mine, q21, q22), mix(theirs, mine, q11, q12)

    return kernel


def chunked_exchange_pipeline(
    half: np.ndarray,
    plan: ExchangePlan,
    compute: PairKernel | None,
    transport: Transport,
    tag: int,
    stage: int,
    scratch: ScratchPool | None = None,
) -> None:
    """Stream one half through the partner link in chunks of plan.chunk_amps.

    With `compute` set, this rank receives partner chunks into scratch,
    applies the pair kernel against its own chunk, keeps one output in
    place and returns the other. With compute=None it is the passive side:
    it streams its half out (at most two chunks in flight) and overwrites
    it with the returned values.
    """
    total = half.shape[0]
    if total == 0:
        return
    chunk = min(plan.chunk_amps, total)
    steps = -(-total // chunk)
    if compute is None:
        in_flight = 0
        for ci in range(min(2, steps)):
            lo = ci * chunk
            hi = min(total, lo + chunk)
            transport.isend(
                plan.partner, tag, half[lo:hi].tobytes(), phase=_wire_phase(stage, ci, _KIND_DATA)
            )
            in_flight += 1
        for ci in range(steps):
            lo = ci * chunk
            hi = min(total, lo + chunk)
            data = transport.receive(plan.partner, tag, phase=_wire_phase(stage, ci, _KIND_RET))
            if len(data) != (hi - lo) * AMP_BYTES:
                raise TransportError(
                    f"returned chunk {ci} has {len(data)} bytes, expected {(hi - lo) * AMP_BYTES}"
                )
            half[lo:hi] = np.frombuffer(data, dtype=np.complex128)
            if in_flight < steps:
                lo = in_flight * chunk
                hi = min(total, lo + chunk)
                transport.isend(
                    plan.partner,
                    tag,
                    half[lo:hi].tobytes(),
                    phase=_wire_phase(stage, in_flight, _KIND_DATA),
                )
                in_flight += 1
        return

    pool = scratch if scratch is not None else ScratchPool()
    nbuf = min(2, steps)
    if plan.temp_capacity < nbuf * chunk:
        raise ValueError(
            f"temp_capacity {plan.temp_capacity} cannot double-buffer chunks of {chunk}"
        )
    bufs = [pool.take(chunk) for _ in range(nbuf)]
    try:
        pending: list = [None] * nbuf
        pending[0] = transport.irecv(plan.partner, tag, phase=_wire_phase(stage, 0, _KIND_DATA))
        for ci in range(steps):
            nxt = ci + 1
            if nxt < steps:
                pending[nxt % nbuf] = transport.irecv(
                    plan.partner, tag, phase=_wire_phase(stage, nxt, _KIND_DATA)
                )
            data = pending[ci % nbuf].wait()
            lo = ci * chunk
            hi = min(total, lo + chunk)
            if len(data) != (hi - lo) * AMP_BYTES:
                raise TransportError(
                    f"incoming chunk {ci} has {len(data)} bytes, expected {(hi - lo) * AMP_BYTES}"
                )
            temp = bufs[ci % nbuf][: hi - lo]
            temp[:] = np.frombuffer(data, dtype=np.complex128)
            mine = half[lo:hi]
            keep, ret = compute(mine, temp)
            mine[:] = keep
            transport.isend(
                plan.partner, tag, ret.tobytes(), phase=_wire_phase(stage, ci, _KIND_RET)
            )
    finally:
        for buf in bufs:
            pool.give(buf)


def _run_exchange(
    amps: np.ndarray,
    plan: ExchangePlan,
    q: GateMatrix,
    transport: Transport,
    tag: int,
    scratch: ScratchPool | None,
) -> None:
    """Both phases of the half exchange over a full local slice view."""
    own_is_zero = plan.this_rank_computes is ComputesHalf.FIRST_HALF
    kernel = _pair_kernel(q, own_is_zero)
    h = plan.half_amps
    first, second = amps[:h], amps[h:]
    if own_is_zero:
        chunked_exchange_pipeline(first, plan, kernel, transport, tag, stage=0, scratch=scratch)
        chunked_exchange_pipeline(second, plan, None, transport, tag, stage=1, scratch=scratch)
    else:
        chunked_exchange_pipeline(first, plan, None, transport, tag, stage=0, scratch=scratch)
        chunked_exchange_pipeline(second, plan, kernel, transport, tag, stage=1, scratch=scratch)


def apply_single_distributed(
    state: LocalState,
    k: int,
    q: GateMatrix,
    transport: Transport,
    *,
    plan: ExchangePlan | None = None,
    chunk_amps: int | None = None,
    scratch: ScratchPool | None = None,
    policy: ThreadPolicy = SERIAL,
) -> None:
    """Apply a single-qubit gate on qubit k >= m via the half exchange."""
    lay = state.layout
    if lay.p < 1:
        raise LayoutError("distributed gate application needs at least 2 ranks")
    if not lay.m <= k < lay.n:
        raise LayoutError(f"qubit {k} is local (m={lay.m}); use the local kernel")
    tag = transport.fresh_tag()
    if plan is None:
        plan = make_exchange_plan(lay, k, chunk_amps=chunk_amps)
    try:
        _run_exchange(state.amps, plan, q, transport, tag, scratch)
    except BaseException:
        state.corrupt = True
        raise


def _packed_control_slice(half: np.ndarray, half_index: int, c: int, m: int) -> np.ndarray | None:
    """Strided view of this half's local-bit-c = 1 elements, or None if empty.

    The half is contiguous and 2^(m-1) long, so for c < m-1 the selection is
    a clean (groups, 2^c) reshape slice; c = m-1 selects all of the second
    half and none of the first.
    """
    if c == m - 1:
        return half.reshape(-1) if half_index == 1 else None
    return half.reshape(-1, 2, 1 << c)[:, 1, :]


def apply_controlled_distributed(
    state: LocalState,
    c: int,
    t: int,
    q: GateMatrix,
    transport: Transport,
    *,
    plan: ExchangePlan | None = None,
    chunk_amps: int | None = None,
    scratch: ScratchPool | None = None,
    policy: ThreadPolicy = SERIAL,
) -> None:
    """Apply a controlled gate when either qubit lives in the rank bits.

    Four cases: both qubits local (plain kernel everywhere); remote control
    with local target (control-set ranks apply the single-qubit kernel);
    remote target with local control (half exchange over packed bit-c = 1
    elements, halving the wire traffic); both remote (control-set ranks run
    the full exchange keyed on the target bit).
    """
    lay = state.layout
    if c == t:
        raise ValueError(f"control and target must differ, both are {c}")
    if not (0 <= c < lay.n and 0 <= t < lay.n):
        raise ValueError(f"qubits ({c},{t}) out of range for n={lay.n}")
    if lay.p < 1:
        raise LayoutError("distributed gate application needs at least 2 ranks")
    m = lay.m
    if c < m and t < m:
        apply_controlled_raw(state.amps, c, t, q, policy)
        return

    tag = transport.fresh_tag()
    if t < m:  # remote control, local target
        if (lay.rank >> (c - m)) & 1:
            apply_single_raw(state.amps, t, q, policy)
        return

    if plan is None:
        plan = make_exchange_plan(lay, t, chunk_amps=chunk_amps)

    if c >= m:  # both remote: only control-set ranks exchange
        if not (lay.rank >> (c - m)) & 1:
            return
        try:
            _run_exchange(state.amps, plan, q, transport, tag, scratch)
        except BaseException:
            state.corrupt = True
            raise
        return

    # remote target, local control: pack bit-c = 1 elements of each half
    own_is_zero = plan.this_rank_computes is ComputesHalf.FIRST_HALF
    kernel = _pair_kernel(q, own_is_zero)
    h = plan.half_amps
    try:
        for half_index, stage_kernel in ((0, kernel if own_is_zero else None),
                                         (1, None if own_is_zero else kernel)):
            half = state.amps[half_index * h:(half_index + 1) * h]
            sel = _packed_control_slice(half, half_index, c, m)
            if sel is None:
                continue
            packed = np.ascontiguousarray(sel).reshape(-1)
            chunked_exchange_pipeline(
                packed, plan, stage_kernel, transport, tag, stage=half_index, scratch=scratch
            )
            sel[...] = packed.reshape(sel.shape)
    except BaseException:
        state.corrupt = True
        raise


def apply_op(
    state: LocalState,
    op,
    transport: Transport | None = None,
    *,
    policy: ThreadPolicy = SERIAL,
    chunk_amps: int | None = None,
    scratch: ScratchPool | None = None,
) -> None:
    """Route one GateOp to the local kernel or the distributed protocol."""
    from .kernels import apply_controlled_local, apply_single_local

    m = state.layout.m
    if op.control is None:
        if op.target < m:
            apply_single_local(state, op.target, op.gate, policy)
        else:
            if transport is None:
                raise LayoutError(f"gate on qubit {op.target} >= m={m} requires a transport")
            apply_single_distributed(
                state, op.target, op.gate, transport,
                chunk_amps=chunk_amps, scratch=scratch, policy=policy,
            )
    else:
        if op.control < m and op.target < m:
            apply_controlled_local(state, op.control, op.target, op.gate, policy)
        else:
            if transport is None:
                raise LayoutError(
                    f"gate on qubits ({op.control},{op.target}) crosses m={m}; requires a transport"
                )
            apply_controlled_distributed(
                state, op.control, op.target, op.gate, transport,
                chunk_amps=chunk_amps, scratch=scratch, policy=policy,
            )


def gather_full_state(
    state: LocalState, transport: Transport | None = None, cap: int = GATHER_MAX_QUBITS
) -> np.ndarray | None:
    """Rank-order concatenation of all slices, returned on rank 0 (None elsewhere)."""
    lay = state.layout
    if lay.n > cap:
        raise LayoutError(f"gather of 2^{lay.n} amplitudes exceeds the n <= {cap} guard")
    if lay.p == 0:
        return state.amps.copy()
    if transport is None:
        raise LayoutError("gather requires a transport when p > 0")
    tag = transport.fresh_tag()
    if lay.rank == 0:
        full = np.empty(1 << lay.n, dtype=np.complex128)
        full[: lay.local_len] = state.amps
        for src in range(1, lay.num_ranks):
            data = transport.receive(src, tag, phase=src)
            full[src << lay.m:(src + 1) << lay.m] = np.frombuffer(data, dtype=np.complex128)
        return full
    transport.send(0, tag, state.amps.tobytes(), phase=lay.rank)
    return None
