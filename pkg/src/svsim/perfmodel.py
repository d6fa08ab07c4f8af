"""Analytic best-case gate times and bandwidth reporting.

Every gate falls into one of six cases by where its qubits sit relative
to the local/remote boundary m. Each case moves a fixed number of bytes
through either memory or the network; dividing by the sustainable
bandwidth gives a lower bound on the time per gate. Bandwidths are plain
bytes/s and table figures treat GB as 10^9 bytes.
"""

from __future__ import annotations

import enum
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_B_MEM = 40e9
DEFAULT_B_NET = 5.5e9
FALLBACK_LLC_BYTES = 32 << 20


class Medium(enum.Enum):
    MEMORY = "mem"
    NETWORK = "net"


class BoundCase(enum.Enum):
    """The six gate placements, numbered as in the bound table."""

    SINGLE_LOCAL = 1            # single-qubit, k < m
    SINGLE_REMOTE = 2           # single-qubit, k >= m
    CONTROLLED_LOCAL = 3        # controlled, c < m and t < m
    CONTROLLED_REMOTE_CONTROL = 4   # t < m, c >= m
    CONTROLLED_REMOTE_TARGET = 5    # t >= m, c < m
    CONTROLLED_REMOTE_BOTH = 6      # c >= m and t >= m

    @property
    def case_id(self) -> int:
        return self.value


def classify_case(target: int, control: int | None, m: int) -> BoundCase:
    if control is None:
        return BoundCase.SINGLE_LOCAL if target < m else BoundCase.SINGLE_REMOTE
    if target < m:
        return BoundCase.CONTROLLED_LOCAL if control < m else BoundCase.CONTROLLED_REMOTE_CONTROL
    return BoundCase.CONTROLLED_REMOTE_TARGET if control < m else BoundCase.CONTROLLED_REMOTE_BOTH


@dataclass(frozen=True)
class MachineParams:
    """Sustainable bandwidths in bytes/s plus the last-level cache size."""

    b_mem: float = DEFAULT_B_MEM
    b_net: float = DEFAULT_B_NET
    llc_bytes: int = FALLBACK_LLC_BYTES

    def __post_init__(self):
        if self.b_mem <= 0 or self.b_net <= 0 or self.llc_bytes <= 0:
            raise ValueError("machine parameters must be positive")


_TRAFFIC = {
    BoundCase.SINGLE_LOCAL: (5, Medium.MEMORY),
    BoundCase.SINGLE_REMOTE: (5, Medium.NETWORK),
    BoundCase.CONTROLLED_LOCAL: (4, Medium.MEMORY),
    BoundCase.CONTROLLED_REMOTE_CONTROL: (5, Medium.MEMORY),
    BoundCase.CONTROLLED_REMOTE_TARGET: (4, Medium.NETWORK),
    BoundCase.CONTROLLED_REMOTE_BOTH: (5, Medium.NETWORK),
}


def traffic_bytes(case: BoundCase, m: int) -> int:
    """Bytes a case moves for a 2^m-amplitude slice.

    Memory cases count read+write of every touched amplitude; network
    cases count a rank's sent+received exchange payload. Local single and
    remote-control cases touch the full slice twice (2^(m+5)); the
    local-controlled and remote-target cases touch half of it (2^(m+4)).
    """
    exponent, _ = _TRAFFIC[case]
    return 1 << (m + exponent)


def bound_medium(case: BoundCase) -> Medium:
    return _TRAFFIC[case][1]


def lower_bound_seconds(case: BoundCase, m: int, params: MachineParams) -> float:
    """Best-case time per gate: traffic over the governing bandwidth."""
    if m < 1:
        raise ValueError("m must be >= 1")
    bandwidth = params.b_mem if bound_medium(case) is Medium.MEMORY else params.b_net
    return traffic_bytes(case, m) / bandwidth


def achieved_bandwidth(bytes_moved: float, seconds: float) -> float:
    """Aggregate traffic divided by wall time, bytes/s."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    return bytes_moved / seconds


def measure_copy_bandwidth(
    buffer_bytes: int, repetitions: int = 5, llc_bytes: int = FALLBACK_LLC_BYTES
) -> float:
    """Median streaming-copy bandwidth over `repetitions` passes, bytes/s.

    Each pass copies buffer_bytes and is charged 2x that (read + write).
    The buffer must dwarf the cache or the probe measures cache, not
    memory.
    """
    if buffer_bytes < 4 * llc_bytes:
        raise ValueError(
            f"buffer of {buffer_bytes} bytes must be >= 4x the cache ({4 * llc_bytes})"
        )
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    count = buffer_bytes // 8
    src = np.ones(count, dtype=np.float64)
    dst = np.empty(count, dtype=np.float64)
    np.copyto(dst, src)  # touch both buffers before timing
    rates = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        np.copyto(dst, src)
        dt = time.perf_counter() - t0
        rates.append(2 * buffer_bytes / dt)
    return float(statistics.median(rates))


def detect_llc_bytes() -> int:
    """Largest cache reported under sysfs, or a 32 MiB fallback.

    Virtualized hosts report odd figures here; callers treat this as a
    default, never a hard fact.
    """
    best = 0
    root = Path("/sys/devices/system/cpu/cpu0/cache")
    try:
        for index in root.glob("index*"):
            text = (index / "size").read_text().strip()
            if text.endswith("K"):
                size = int(text[:-1]) << 10
            elif text.endswith("M"):
                size = int(text[:-1]) << 20
            else:
                size = int(text)
            best = max(best, size)
    except (OSError, ValueError):
        return FALLBACK_LLC_BYTES
    return best or FALLBACK_LLC_BYTES
