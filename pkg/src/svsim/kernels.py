"""Local gate kernels: communication-free single-qubit and controlled updates.

The pair update for a gate on qubit k follows the strided loop nest

    for g in range(0, 2^m, 2^{k+1}):        # groups of 2^{k+1} amplitudes
        for i in range(g, g + 2^k):         # pairs 2^k apart within a group
            a'[i]       = q11*a[i] + q12*a[i + 2^k]
            a'[i + 2^k] = q21*a[i] + q22*a[i + 2^k]

realized here as elementwise updates on reshaped views, so the arithmetic
per amplitude is independent of how the work is partitioned across threads.
Controlled gates add an outer level that skips the control-bit-0 half; when
the control sits below the target the skip and group levels swap roles.
"""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import FusionContractError, LayoutError

if TYPE_CHECKING:
    from .circuits import GateOp
    from .core import LocalState

UNITARITY_TOL = 1e-12
_INNER_ROUND = 4  # inner-split chunks rounded to 4 complex numbers per lane group


class GateMatrix:
    """A 2x2 unitary, validated at construction unless built `unchecked`."""

    __slots__ = ("mat",)

    def __init__(self, mat: np.ndarray | list, check: bool = True):
        m = np.asarray(mat, dtype=np.complex128).reshape(2, 2).copy()
        if check:
            err = np.max(np.abs(m.conj().T @ m - np.eye(2)))
            if err > UNITARITY_TOL:
                raise ValueError(f"matrix is not unitary (deviation {err:.2e})")
        m.flags.writeable = False
        self.mat = m

    @classmethod
    def unchecked(cls, mat: np.ndarray | list) -> "GateMatrix":
        return cls(mat, check=False)

    @property
    def q11(self) -> complex:
        return complex(self.mat[0, 0])

    @property
    def q12(self) -> complex:
        return complex(self.mat[0, 1])

    @property
    def q21(self) -> complex:
        return complex(self.mat[1, 0])

    @property
    def q22(self) -> complex:
        return complex(self.mat[1, 1])

    def dagger(self) -> "GateMatrix":
        return GateMatrix.unchecked(self.mat.conj().T)

    def __repr__(self) -> str:
        return f"GateMatrix({self.mat.tolist()})"


class ParallelLevel(enum.Enum):
    OUTER = "outer"
    INNER = "inner"
    AUTO = "auto"


@dataclass(frozen=True)
class ThreadPolicy:
    """How a kernel splits its loop nest across threads.

    AUTO parallelizes the level with the most work: OUTER when the outer
    iteration count is at least num_threads, INNER otherwise (ties to OUTER,
    whose chunks are contiguous).
    """

    num_threads: int = 1
    parallel_level: ParallelLevel = ParallelLevel.AUTO

    def __post_init__(self):
        if self.num_threads < 1:
            raise ValueError("num_threads must be >= 1")

    def resolve(self, outer_iters: int) -> ParallelLevel:
        if self.parallel_level is not ParallelLevel.AUTO:
            return self.parallel_level
        return ParallelLevel.OUTER if outer_iters >= self.num_threads else ParallelLevel.INNER


SERIAL = ThreadPolicy(1)

_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(num_threads: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(num_threads)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=num_threads, thread_name_prefix="svsim-kernel")
            _pools[num_threads] = pool
        return pool


def mix(a0: np.ndarray, a1: np.ndarray, r0: complex, r1: complex) -> np.ndarray:
    """r0*a0 + r1*a1 with a fixed evaluation order (shared by all kernels)."""
    out = r0 * a0
    out += r1 * a1
    return out


def _update_pair_views(a0: np.ndarray, a1: np.ndarray, q: GateMatrix) -> None:
    new0 = mix(a0, a1, q.q11, q.q12)
    new1 = mix(a0, a1, q.q21, q.q22)
    a0[...] = new0
    a1[...] = new1


def _inner_bounds(length: int, parts: int) -> list[tuple[int, int]]:
    bounds = []
    prev = 0
    for i in range(1, parts + 1):
        cut = (length * i) // parts
        cut -= cut % _INNER_ROUND
        if i == parts:
            cut = length
        if cut > prev:
            bounds.append((prev, cut))
            prev = cut
    return bounds


def _apply_pairs(a0: np.ndarray, a1: np.ndarray, q: GateMatrix, policy: ThreadPolicy) -> None:
    """Apply the 2x2 update to paired views of equal shape (outer axis 0, inner axis -1)."""
    nt = policy.num_threads
    if nt == 1 or a0.size < 2 * nt:
        _update_pair_views(a0, a1, q)
        return
    outer = a0.shape[0]
    if policy.resolve(outer) is ParallelLevel.OUTER:
        tasks = [
            (a0[lo:hi], a1[lo:hi])
            for lo, hi in _inner_bounds(outer, min(nt, outer))
        ]
    else:
        inner = a0.shape[-1]
        tasks = [
            (a0[..., lo:hi], a1[..., lo:hi])
            for lo, hi in _inner_bounds(inner, min(nt, max(1, inner // _INNER_ROUND)))
        ]
    if len(tasks) == 1:
        _update_pair_views(a0, a1, q)
        return
    futures = [_pool(nt).submit(_update_pair_views, t0, t1, q) for t0, t1 in tasks]
    for f in futures:
        f.result()


def _single_views(amps: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    v = amps.reshape(-1, 2, 1 << k)
    return v[:, 0, :], v[:, 1, :]


def _controlled_views(amps: np.ndarray, c: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    hi, lo = (c, t) if c > t else (t, c)
    v = amps.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)
    if c > t:
        return v[:, 1, :, 0, :], v[:, 1, :, 1, :]
    return v[:, 0, :, 1, :], v[:, 1, :, 1, :]


def apply_single_raw(amps: np.ndarray, k: int, q: GateMatrix, policy: ThreadPolicy = SERIAL) -> None:
    a0, a1 = _single_views(amps, k)
    _apply_pairs(a0, a1, q, policy)


def apply_controlled_raw(
    amps: np.ndarray, c: int, t: int, q: GateMatrix, policy: ThreadPolicy = SERIAL
) -> None:
    a0, a1 = _controlled_views(amps, c, t)
    _apply_pairs(a0, a1, q, policy)


def apply_single_local(
    state: "LocalState", k: int, q: GateMatrix, policy: ThreadPolicy = SERIAL
) -> None:
    """Apply a single-qubit gate on local qubit k (k < m) in place."""
    m = state.layout.m
    if not 0 <= k < m:
        raise LayoutError(
            f"qubit {k} is not local (m={m}); gates on qubits >= m need the distributed path"
        )
    apply_single_raw(state.amps, k, q, policy)


def apply_controlled_local(
    state: "LocalState", c: int, t: int, q: GateMatrix, policy: ThreadPolicy = SERIAL
) -> None:
    """Apply a controlled gate with both qubits local, in place."""
    if c == t:
        raise ValueError(f"control and target must differ, both are {c}")
    m = state.layout.m
    if c >= m or t >= m:
        raise LayoutError(
            f"qubits ({c},{t}) are not both local (m={m}); use the distributed path"
        )
    apply_controlled_raw(state.amps, c, t, q, policy)


def apply_block(
    block_amps: np.ndarray, gates: Iterable["GateOp"], policy: ThreadPolicy = SERIAL
) -> None:
    """Apply gates in order to a contiguous 2^b slice as an independent b-qubit state."""
    b = int(block_amps.shape[0]).bit_length() - 1
    if block_amps.shape[0] != 1 << b:
        raise ValueError("block length must be a power of two")
    for op in gates:
        if op.max_qubit() >= b:
            raise FusionContractError(
                f"gate on qubits {op.qubits()} exceeds block exponent {b}"
            )
        if op.control is None:
            apply_single_raw(block_amps, op.target, op.gate, policy)
        else:
            apply_controlled_raw(block_amps, op.control, op.target, op.gate, policy)
