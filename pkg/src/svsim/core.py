"""State-vector storage and layout conventions.

A global n-qubit state of 2^n complex amplitudes is split across 2^p ranks;
each rank owns a contiguous slice of 2^m amplitudes (m = n - p).  Qubit k
corresponds to bit k of the global amplitude index (little-endian), so the
two amplitudes touched by a gate on qubit k sit 2^k apart.  The global index
of local element j on rank r is r * 2^m + j.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import LayoutError

if TYPE_CHECKING:
    from .distributed import Transport

AMP_BYTES = 16  # complex double: 8-byte real + 8-byte imaginary
ALIGNMENT = 64


@dataclass(frozen=True)
class Layout:
    """Placement of one rank's slice within the global state vector.

    n: total qubit count, p: log2 of the rank count, rank: this rank's id.
    The local qubit count m = n - p; qubits m..n-1 are encoded in the rank id.
    """

    n: int
    p: int = 0
    rank: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one qubit, got n={self.n}")
        if not 0 <= self.p < self.n:
            raise LayoutError(f"rank exponent p={self.p} must satisfy 0 <= p < n={self.n}")
        if not 0 <= self.rank < self.num_ranks:
            raise LayoutError(f"rank {self.rank} out of range for {self.num_ranks} ranks")

    @property
    def m(self) -> int:
        return self.n - self.p

    @property
    def num_ranks(self) -> int:
        return 1 << self.p

    @property
    def local_len(self) -> int:
        return 1 << self.m

    def global_index(self, local: int) -> int:
        return (self.rank << self.m) + local

    def split_global(self, g: int) -> tuple[int, int]:
        """Return (rank, local index) holding global amplitude index g."""
        return g >> self.m, g & (self.local_len - 1)


def aligned_zeros(num_amps: int, alignment: int = ALIGNMENT) -> np.ndarray:
    """Zeroed complex128 array whose base address is `alignment`-byte aligned.

    complex128 storage is interleaved (re, im) float64 pairs, which together
    with the alignment is the layout contract the kernels rely on.
    """
    raw = np.zeros(num_amps * AMP_BYTES + alignment, dtype=np.uint8)
    offset = (-raw.ctypes.data) % alignment
    return raw[offset:offset + num_amps * AMP_BYTES].view(np.complex128)


@dataclass
class LocalState:
    """One rank's slice of the state vector plus its layout metadata.

    `corrupt` is set when a distributed update aborted mid-gate and the
    amplitudes can no longer be trusted.
    """

    layout: Layout
    amps: np.ndarray
    corrupt: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.amps.dtype != np.complex128:
            raise TypeError("amplitudes must be complex128")
        if self.amps.shape != (self.layout.local_len,):
            raise LayoutError(
                f"slice length {self.amps.shape} does not match 2^m = {self.layout.local_len}"
            )

    def copy(self) -> "LocalState":
        out = aligned_zeros(self.layout.local_len)
        np.copyto(out, self.amps)
        return LocalState(self.layout, out, self.corrupt)


def init_basis_state(layout: Layout, basis_index: int = 0) -> LocalState:
    """Computational-basis state |basis_index>, sliced for this rank."""
    if not 0 <= basis_index < (1 << layout.n):
        raise ValueError(f"basis index {basis_index} out of range for n={layout.n}")
    amps = aligned_zeros(layout.local_len)
    owner, local = layout.split_global(basis_index)
    if owner == layout.rank:
        amps[local] = 1.0
    return LocalState(layout, amps)


def state_from_global(layout: Layout, full: np.ndarray) -> LocalState:
    """This rank's slice of a full 2^n vector (test/CLI plumbing)."""
    if full.shape != (1 << layout.n,):
        raise LayoutError(f"full vector must have 2^n = {1 << layout.n} entries")
    amps = aligned_zeros(layout.local_len)
    start = layout.rank << layout.m
    np.copyto(amps, full[start:start + layout.local_len])
    return LocalState(layout, amps)


def _reduce_sum(partial: float, layout: Layout, transport: "Transport | None") -> float:
    """Sum per-rank partials in rank order; every rank returns the total."""
    if layout.p == 0:
        return partial
    if transport is None:
        raise LayoutError("cross-rank reduction requires a transport when p > 0")
    tag = transport.fresh_tag()
    if layout.rank == 0:
        total = partial
        for src in range(1, layout.num_ranks):
            (value,) = struct.unpack("<d", transport.receive(src, tag, phase=src))
            total += value
        for dst in range(1, layout.num_ranks):
            transport.send(dst, tag, phase=layout.num_ranks + dst, payload=struct.pack("<d", total))
        return total
    transport.send(0, tag, phase=layout.rank, payload=struct.pack("<d", partial))
    (total,) = struct.unpack(
        "<d", transport.receive(0, tag, phase=layout.num_ranks + layout.rank)
    )
    return total


def global_norm_sq(state: LocalState, transport: "Transport | None" = None) -> float:
    """Sum of |amplitude|^2 over the whole (possibly distributed) state."""
    partial = float(np.sum(np.abs(state.amps) ** 2))
    return _reduce_sum(partial, state.layout, transport)


def probability_of_bit(
    state: LocalState, qubit: int, transport: "Transport | None" = None
) -> float:
    """Probability that `qubit` reads 1, reduced across ranks."""
    lay = state.layout
    if not 0 <= qubit < lay.n:
        raise ValueError(f"qubit {qubit} out of range for n={lay.n}")
    if qubit < lay.m:
        sel = state.amps.reshape(-1, 2, 1 << qubit)[:, 1, :]
        partial = float(np.sum(np.abs(sel) ** 2))
    elif (lay.rank >> (qubit - lay.m)) & 1:
        partial = float(np.sum(np.abs(state.amps) ** 2))
    else:
        partial = 0.0
    return _reduce_sum(partial, lay, transport)
