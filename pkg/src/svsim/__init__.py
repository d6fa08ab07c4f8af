"""Distributed state-vector simulator for quantum circuits.

A register of n qubits is a vector of 2^n complex amplitudes, split
across 2^p ranks as contiguous slices of 2^(n-p). Qubit k corresponds
to bit k of the global amplitude index. Gates on qubits below the slice
boundary run as local strided kernels; gates above it run a chunked,
pairwise amplitude exchange over a message transport.
"""

from __future__ import annotations

from .circuits import (
    Circuit,
    GateOp,
    build_iqft,
    build_qft,
    hadamard,
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
from .core import (
    ALIGNMENT,
    AMP_BYTES,
    Layout,
    LocalState,
    aligned_zeros,
    global_norm_sq,
    init_basis_state,
    probability_of_bit,
    state_from_global,
)
from .distributed import (
    CONTROL_TAG,
    DEFAULT_CHUNK_BYTES,
    GATHER_MAX_QUBITS,
    CompletionHandle,
    ComputesHalf,
    ExchangePlan,
    ScratchPool,
    Transport,
    apply_controlled_distributed,
    apply_op,
    apply_single_distributed,
    chunked_exchange_pipeline,
    gather_full_state,
    make_exchange_plan,
)
from .engine import GateRecord, run_circuit
from .errors import (
    CircuitParseError,
    FusionContractError,
    LayoutError,
    ResourceError,
    TransportError,
)
from .fusion import (
    FusedBlockRun,
    FusionConfig,
    FusionPlan,
    PassThrough,
    default_block_exponent,
    execute_plan,
    plan_fusion,
)
from .kernels import (
    SERIAL,
    GateMatrix,
    ParallelLevel,
    ThreadPolicy,
    apply_block,
    apply_controlled_local,
    apply_single_local,
)
from .oracle import (
    ORACLE_MAX_QUBITS,
    dft_bit_reversed,
    full_controlled_unitary,
    full_single_unitary,
    full_unitary,
    oracle_run,
)
from .perfmodel import (
    DEFAULT_B_MEM,
    DEFAULT_B_NET,
    BoundCase,
    MachineParams,
    Medium,
    achieved_bandwidth,
    bound_medium,
    classify_case,
    detect_llc_bytes,
    lower_bound_seconds,
    measure_copy_bandwidth,
    traffic_bytes,
)
from .transport import (
    CountingTransport,
    InprocFabric,
    InprocTransport,
    PeerTable,
    TcpTransport,
    connect_all,
    run_spmd,
)

__version__ = "0.1.0"

__all__ = [
    "ALIGNMENT",
    "AMP_BYTES",
    "CONTROL_TAG",
    "DEFAULT_B_MEM",
    "DEFAULT_B_NET",
    "DEFAULT_CHUNK_BYTES",
    "GATHER_MAX_QUBITS",
    "ORACLE_MAX_QUBITS",
    "SERIAL",
    "BoundCase",
    "Circuit",
    "CircuitParseError",
    "CompletionHandle",
    "ComputesHalf",
    "CountingTransport",
    "ExchangePlan",
    "FusedBlockRun",
    "FusionConfig",
    "FusionContractError",
    "FusionPlan",
    "GateMatrix",
    "GateOp",
    "GateRecord",
    "InprocFabric",
    "InprocTransport",
    "Layout",
    "LayoutError",
    "LocalState",
    "MachineParams",
    "Medium",
    "ParallelLevel",
    "PassThrough",
    "PeerTable",
    "ResourceError",
    "ScratchPool",
    "TcpTransport",
    "ThreadPolicy",
    "Transport",
    "TransportError",
    "achieved_bandwidth",
    "aligned_zeros",
    "apply_block",
    "apply_controlled_distributed",
    "apply_controlled_local",
    "apply_op",
    "apply_single_distributed",
    "apply_single_local",
    "bound_medium",
    "build_iqft",
    "build_qft",
    "chunked_exchange_pipeline",
    "classify_case",
    "connect_all",
    "default_block_exponent",
    "detect_llc_bytes",
    "dft_bit_reversed",
    "execute_plan",
    "full_controlled_unitary",
    "full_single_unitary",
    "full_unitary",
    "gather_full_state",
    "global_norm_sq",
    "hadamard",
    "init_basis_state",
    "lower_bound_seconds",
    "make_exchange_plan",
    "measure_copy_bandwidth",
    "oracle_run",
    "pauli_x",
    "pauli_y",
    "pauli_z",
    "phase_r",
    "phase_shift",
    "plan_fusion",
    "probability_of_bit",
    "random_circuit",
    "random_unitary",
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "run_circuit",
    "run_spmd",
    "state_from_global",
    "traffic_bytes",
]
