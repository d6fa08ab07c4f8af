#!/usr/bin/env python3
"""Measure per-gate wall time against the analytic lower bound by position.

Applies one random single-qubit gate at every position of an n-qubit
register split across ranks, then prints measured seconds next to the
bound for the classified case. Qubits at or above the slice boundary
take the exchange path and show the local/remote cliff.

    python3 scripts/gate_position_sweep.py --qubits 22 --ranks 4
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from svsim import (
    GateOp,
    Layout,
    MachineParams,
    apply_op,
    classify_case,
    detect_llc_bytes,
    init_basis_state,
    lower_bound_seconds,
    measure_copy_bandwidth,
    random_unitary,
    run_spmd,
    traffic_bytes,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--qubits", type=int, default=20)
    parser.add_argument("--ranks", type=int, default=2)
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--probe-bmem", action="store_true",
                        help="measure memory bandwidth instead of assuming the default")
    args = parser.parse_args()

    n = args.qubits
    p = args.ranks.bit_length() - 1
    if 1 << p != args.ranks:
        parser.error("--ranks must be a power of two")
    m = n - p

    llc = detect_llc_bytes()
    b_mem = measure_copy_bandwidth(4 * llc, llc_bytes=llc) if args.probe_bmem else 40e9
    # loopback queues move bytes at memory speed; use it for the network term
    params = MachineParams(b_mem=b_mem, b_net=b_mem, llc_bytes=llc)
    gate = random_unitary(np.random.default_rng(0))

    def worker(rank, transport):
        state = init_basis_state(Layout(n, p, rank))
        times = []
        for k in range(n):
            best = float("inf")
            for _ in range(args.reps):
                if transport is not None:
                    transport.barrier()
                t0 = time.perf_counter()
                apply_op(state, GateOp(gate, k), transport)
                if transport is not None:
                    transport.barrier()
                best = min(best, time.perf_counter() - t0)
            times.append(best)
        return times

    times = worker(0, None) if p == 0 else run_spmd(1 << p, worker)[0]

    print(f"n={n} ranks={1 << p} (m={m}); bounds at B_mem={params.b_mem / 1e9:.1f} GB/s")
    print(f"{'k':>3} {'case':>5} {'measured_s':>11} {'bound_s':>9} {'ratio':>6} {'GB/s':>7}")
    for k, secs in enumerate(times):
        case = classify_case(k, None, m)
        bound = lower_bound_seconds(case, m, params)
        moved = traffic_bytes(case, m)
        print(f"{k:>3} {case.case_id:>5} {secs:11.6f} {bound:9.6f} "
              f"{secs / bound:6.2f} {moved / secs / 1e9:7.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
