"""Dense-matrix reference simulator.

Builds the full 2^n x 2^n operator for each gate and multiplies it into the
state, sharing no index arithmetic with the strided kernels. Exponential in
n, so it refuses circuits beyond ORACLE_MAX_QUBITS.
"""

from __future__ import annotations

import numpy as np

from .circuits import Circuit, GateOp
from .errors import ResourceError
from .kernels import GateMatrix

ORACLE_MAX_QUBITS = 12


def _kron_factors(factors: list[np.ndarray]) -> np.ndarray:
    """Kronecker product with factors listed from qubit n-1 down to qubit 0."""
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def full_single_unitary(n: int, k: int, q: GateMatrix) -> np.ndarray:
    """I x ... x Q x ... x I with Q in slot k (bit k of the index)."""
    eye = np.eye(2, dtype=np.complex128)
    factors = [q.mat if pos == k else eye for pos in range(n - 1, -1, -1)]
    return _kron_factors(factors)


def full_controlled_unitary(n: int, c: int, t: int, q: GateMatrix) -> np.ndarray:
    """P0(c) x I + P1(c) x Q(t): identity on the control-0 subspace."""
    eye = np.eye(2, dtype=np.complex128)
    p0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    p1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    idle = [p0 if pos == c else eye for pos in range(n - 1, -1, -1)]
    act = [
        p1 if pos == c else (q.mat if pos == t else eye)
        for pos in range(n - 1, -1, -1)
    ]
    return _kron_factors(idle) + _kron_factors(act)


def full_unitary(n: int, op: GateOp) -> np.ndarray:
    if op.control is None:
        return full_single_unitary(n, op.target, op.gate)
    return full_controlled_unitary(n, op.control, op.target, op.gate)


def oracle_run(circuit: Circuit, initial: np.ndarray | int = 0) -> np.ndarray:
    """Run the circuit by dense matrix-vector products; returns the final state."""
    n = circuit.n
    if n > ORACLE_MAX_QUBITS:
        raise ResourceError(
            f"oracle limited to {ORACLE_MAX_QUBITS} qubits, got {n}"
        )
    dim = 1 << n
    if isinstance(initial, (int, np.integer)):
        state = np.zeros(dim, dtype=np.complex128)
        state[initial] = 1.0
    else:
        state = np.asarray(initial, dtype=np.complex128).copy()
        if state.shape != (dim,):
            raise ValueError(f"initial state must have length {dim}")
    for op in circuit:
        state = full_unitary(n, op) @ state
    return state


def dft_bit_reversed(n: int, basis_index: int) -> np.ndarray:
    """Expected transform output for basis input j: amp[k] = w^(j*rev(k)) / sqrt(2^n)."""
    dim = 1 << n
    rev = np.zeros(dim, dtype=np.int64)
    for k in range(dim):
        r = 0
        for b in range(n):
            r |= ((k >> b) & 1) << (n - 1 - b)
        rev[k] = r
    phases = 2.0j * np.pi * basis_index * rev.astype(np.float64) / dim
    return np.exp(phases) / np.sqrt(dim)
