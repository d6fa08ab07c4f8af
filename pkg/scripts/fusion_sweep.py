#!/usr/bin/env python3
"""Sweep the fusion block exponent over a transform circuit.

Times IQFT(n) unfused and at each block exponent, printing per-gate
wall time and speedup. The interesting regime is n a few qubits above
the exponent that fits the last-level cache.

    python3 scripts/fusion_sweep.py --qubits 23 --exponents 16:21
"""

from __future__ import annotations

import argparse
import time

from svsim import (
    FusionConfig,
    Layout,
    build_iqft,
    default_block_exponent,
    detect_llc_bytes,
    init_basis_state,
    run_circuit,
)


def timed_run(circuit, fusion):
    state = init_basis_state(Layout(circuit.n, 0, 0))
    t0 = time.perf_counter()
    run_circuit(state, circuit, fusion=fusion)
    return time.perf_counter() - t0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--qubits", type=int, default=22)
    parser.add_argument("--exponents", default=None,
                        help="lo:hi block exponent range (default: around the LLC fit)")
    args = parser.parse_args()

    n = args.qubits
    llc = detect_llc_bytes()
    fit = default_block_exponent(llc, n)
    if args.exponents:
        lo, hi = (int(x) for x in args.exponents.split(":"))
    else:
        lo, hi = max(1, fit - 3), min(n, fit + 1)

    circuit = build_iqft(n)
    print(f"IQFT({n}), {circuit.gate_count} gates; detected LLC {llc >> 20} MiB "
          f"(block exponent {fit} fits half of it)")

    base = timed_run(circuit, None)
    per_gate = base / circuit.gate_count
    print(f"{'l_c':>5} {'total_s':>9} {'us_per_gate':>12} {'speedup':>8}")
    print(f"{'off':>5} {base:9.3f} {per_gate * 1e6:12.1f} {'1.00':>8}")
    for l_c in range(lo, hi + 1):
        total = timed_run(circuit, FusionConfig(l_c=l_c))
        print(f"{l_c:>5} {total:9.3f} {total / circuit.gate_count * 1e6:12.1f} "
              f"{base / total:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
