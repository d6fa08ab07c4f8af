"""Gate vocabulary and circuit builders.

A circuit is an ordered list of operations, each a single-qubit gate or a
controlled single-qubit gate. Qubit k corresponds to bit k of the global
amplitude index, so the transform built by `build_qft` writes coefficient
j of the discrete Fourier transform at the bit-reversed index rev(j).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .kernels import GateMatrix


def hadamard() -> GateMatrix:
    s = 1.0 / math.sqrt(2.0)
    return GateMatrix([[s, s], [s, -s]])


def pauli_x() -> GateMatrix:
    return GateMatrix([[0, 1], [1, 0]])


def pauli_y() -> GateMatrix:
    return GateMatrix([[0, -1j], [1j, 0]])


def pauli_z() -> GateMatrix:
    return GateMatrix([[1, 0], [0, -1]])


def phase_shift(theta: float) -> GateMatrix:
    return GateMatrix([[1, 0], [0, cmath.exp(1j * theta)]])


def phase_r(j: int) -> GateMatrix:
    """R_j = diag(1, exp(2*pi*i / 2^j)), the transform's stage-j phase."""
    if j < 1:
        raise ValueError("phase index must be >= 1")
    return phase_shift(2.0 * math.pi / (1 << j))


def rotation_x(theta: float) -> GateMatrix:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return GateMatrix([[c, -1j * s], [-1j * s, c]])


def rotation_y(theta: float) -> GateMatrix:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return GateMatrix([[c, -s], [s, c]])


def rotation_z(theta: float) -> GateMatrix:
    return GateMatrix([[cmath.exp(-0.5j * theta), 0], [0, cmath.exp(0.5j * theta)]])


def random_unitary(rng: np.random.Generator) -> GateMatrix:
    """Haar-distributed 2x2 unitary via QR of a complex Gaussian matrix."""
    z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return GateMatrix(q)


@dataclass(frozen=True)
class GateOp:
    """One circuit operation: `gate` on `target`, conditioned on `control` if set."""

    gate: GateMatrix
    target: int
    control: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.target < 0:
            raise ValueError("target qubit must be >= 0")
        if self.control is not None:
            if self.control < 0:
                raise ValueError("control qubit must be >= 0")
            if self.control == self.target:
                raise ValueError("control and target must differ")

    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    def max_qubit(self) -> int:
        return max(self.qubits())

    def dagger(self) -> "GateOp":
        name = self.name + "^" if self.name else ""
        return GateOp(self.gate.dagger(), self.target, self.control, name)


@dataclass
class Circuit:
    n: int
    gates: list[GateOp] = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("qubit count must be >= 1")
        for op in self.gates:
            self._check(op)

    def _check(self, op: GateOp) -> None:
        if op.max_qubit() >= self.n:
            raise ValueError(
                f"gate on qubits {op.qubits()} does not fit in {self.n} qubits"
            )

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    def append(self, op: GateOp) -> None:
        self._check(op)
        self.gates.append(op)

    def extend(self, ops: list[GateOp]) -> None:
        for op in ops:
            self.append(op)

    def inverse(self) -> "Circuit":
        return Circuit(self.n, [op.dagger() for op in reversed(self.gates)])

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self) -> Iterator[GateOp]:
        return iter(self.gates)


def build_qft(n: int) -> Circuit:
    """Fourier transform on n qubits, output in bit-reversed order.

    Stages run from qubit n-1 down to 0; the stage for qubit i applies H(i)
    and then R_{i-c+1} on target i controlled by each lower qubit c. Gate
    count is n*(n+1)/2. On basis input j the result is
    amp[k] = 2^{-n/2} * exp(2*pi*i * j * rev(k) / 2^n) with rev the n-bit
    reversal; there is no terminal swap network.
    """
    circ = Circuit(n)
    for i in range(n - 1, -1, -1):
        circ.append(GateOp(hadamard(), i, name="H"))
        for c in range(i - 1, -1, -1):
            j = i - c + 1
            circ.append(GateOp(phase_r(j), i, control=c, name=f"R{j}"))
    return circ


def build_iqft(n: int) -> Circuit:
    """Exact gate-by-gate inverse of `build_qft`.

    Stage i (i = 0 .. n-1) applies the conjugated rotations on target i
    controlled by each lower qubit, then H(i), so the stage touches qubits
    0..i only. Every gate of stages 0..l-1 therefore sits below any block
    exponent l, which is what makes the leading stages one fusable run.
    Gate count is n*(n+1)/2.
    """
    circ = Circuit(n)
    for i in range(n):
        for c in range(i):
            j = i - c + 1
            circ.append(GateOp(phase_r(j).dagger(), i, control=c, name=f"R{j}^"))
        circ.append(GateOp(hadamard(), i, name="H"))
    return circ


def random_circuit(
    n: int,
    num_gates: int,
    rng: np.random.Generator,
    controlled_fraction: float = 0.3,
) -> Circuit:
    """Random circuit of Haar-random gates; controls and targets drawn uniformly."""
    if not 0.0 <= controlled_fraction <= 1.0:
        raise ValueError("controlled_fraction must be in [0, 1]")
    circ = Circuit(n)
    for _ in range(num_gates):
        gate = random_unitary(rng)
        if n >= 2 and rng.random() < controlled_fraction:
            c, t = rng.choice(n, size=2, replace=False)
            circ.append(GateOp(gate, int(t), control=int(c), name="CU"))
        else:
            circ.append(GateOp(gate, int(rng.integers(n)), name="U"))
    return circ
