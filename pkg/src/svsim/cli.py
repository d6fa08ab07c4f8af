"""Command-line entry point: run circuit files and benchmark sweeps.

Subcommands: `run` executes a circuit file, `gate-bench` sweeps gate
positions, `qft-bench` times transform circuits over a qubit range, and
`bounds` prints the analytic best-case time table. Tables go out as CSV
or JSON (top-level "schema": 1). Exit codes: 0 ok, 2 usage, 3 circuit
parse error, 4 resource refusal, 5 transport failure.

Circuit file format: UTF-8 text, `#` starts a comment, first effective
line is `qubits <n>`, then one gate per line:

    H k | X k | Y k | Z k            named single-qubit gates
    RK j k                           phase diag(1, e^(2*pi*i/2^j)) on k
    CX c t                           controlled X
    CRK j c t                        controlled RK phase
    U k  <8 floats>                  arbitrary 2x2 unitary on k
    CU c t  <8 floats>               controlled arbitrary unitary

The 8 floats are q11re q11im q12re q12im q21re q21im q22re q22im, row
major.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import psutil

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
    random_unitary,
)
from .core import AMP_BYTES, Layout, global_norm_sq, init_basis_state, probability_of_bit
from .distributed import (
    DEFAULT_CHUNK_BYTES,
    GATHER_MAX_QUBITS,
    Transport,
    apply_op,
    gather_full_state,
)
from .engine import run_circuit
from .errors import (
    CircuitParseError,
    FusionContractError,
    LayoutError,
    ResourceError,
    TransportError,
)
from .fusion import FusionConfig
from .kernels import GateMatrix, ThreadPolicy
from .perfmodel import (
    BoundCase,
    MachineParams,
    classify_case,
    detect_llc_bytes,
    lower_bound_seconds,
    measure_copy_bandwidth,
    traffic_bytes,
)
from .transport import PeerTable, connect_all, run_spmd

MEMORY_FRACTION = 0.75


# ---------------------------------------------------------------- parsing

_NAMED_GATES = {"H": hadamard, "X": pauli_x, "Y": pauli_y, "Z": pauli_z}


def _parse_int(token: str, line_no: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise CircuitParseError(line_no, f"{what} must be an integer, got {token!r}") from None


def _parse_matrix(tokens: list[str], line_no: int) -> GateMatrix:
    if len(tokens) != 8:
        raise CircuitParseError(line_no, f"expected 8 floats for the matrix, got {len(tokens)}")
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise CircuitParseError(line_no, "matrix entries must be numbers") from None
    mat = [
        [complex(vals[0], vals[1]), complex(vals[2], vals[3])],
        [complex(vals[4], vals[5]), complex(vals[6], vals[7])],
    ]
    try:
        return GateMatrix(mat)
    except ValueError as exc:
        raise CircuitParseError(line_no, str(exc)) from None


def parse_circuit_text(text: str) -> Circuit:
    circuit: Circuit | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        mnemonic = tokens[0].upper()
        if circuit is None:
            if mnemonic != "QUBITS" or len(tokens) != 2:
                raise CircuitParseError(line_no, "first line must be 'qubits <n>'")
            n = _parse_int(tokens[1], line_no, "qubit count")
            if n < 1:
                raise CircuitParseError(line_no, f"qubit count must be >= 1, got {n}")
            circuit = Circuit(n)
            continue
        try:
            op = _parse_gate_line(mnemonic, tokens, line_no)
            circuit.append(op)
        except ValueError as exc:  # index out of range, c == t, and similar
            raise CircuitParseError(line_no, str(exc)) from None
    if circuit is None:
        raise CircuitParseError(1, "empty circuit file: expected 'qubits <n>'")
    return circuit


def _parse_gate_line(mnemonic: str, tokens: list[str], line_no: int) -> GateOp:
    args = tokens[1:]
    if mnemonic in _NAMED_GATES:
        if len(args) != 1:
            raise CircuitParseError(line_no, f"{mnemonic} takes one qubit argument")
        return GateOp(_NAMED_GATES[mnemonic](), _parse_int(args[0], line_no, "qubit"),
                      name=mnemonic)
    if mnemonic == "RK":
        if len(args) != 2:
            raise CircuitParseError(line_no, "RK takes: j k")
        j = _parse_int(args[0], line_no, "phase index")
        if j < 1:
            raise CircuitParseError(line_no, f"phase index must be >= 1, got {j}")
        return GateOp(phase_r(j), _parse_int(args[1], line_no, "qubit"), name=f"R{j}")
    if mnemonic == "CX":
        if len(args) != 2:
            raise CircuitParseError(line_no, "CX takes: c t")
        c = _parse_int(args[0], line_no, "control")
        t = _parse_int(args[1], line_no, "target")
        return GateOp(pauli_x(), t, control=c, name="CX")
    if mnemonic == "CRK":
        if len(args) != 3:
            raise CircuitParseError(line_no, "CRK takes: j c t")
        j = _parse_int(args[0], line_no, "phase index")
        if j < 1:
            raise CircuitParseError(line_no, f"phase index must be >= 1, got {j}")
        c = _parse_int(args[1], line_no, "control")
        t = _parse_int(args[2], line_no, "target")
        return GateOp(phase_r(j), t, control=c, name=f"CR{j}")
    if mnemonic == "U":
        if len(args) != 9:
            raise CircuitParseError(line_no, "U takes: k and 8 matrix floats")
        k = _parse_int(args[0], line_no, "qubit")
        return GateOp(_parse_matrix(args[1:], line_no), k, name="U")
    if mnemonic == "CU":
        if len(args) != 10:
            raise CircuitParseError(line_no, "CU takes: c t and 8 matrix floats")
        c = _parse_int(args[0], line_no, "control")
        t = _parse_int(args[1], line_no, "target")
        return GateOp(_parse_matrix(args[2:], line_no), t, control=c, name="CU")
    raise CircuitParseError(line_no, f"unknown gate {mnemonic!r}")


def parse_circuit_file(path: str | Path) -> Circuit:
    return parse_circuit_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- helpers

def _check_memory(n: int, p: int, local_processes: bool, chunk_bytes: int) -> None:
    """Refuse runs that would push the host into paging."""
    ranks_here = 1 if local_processes else (1 << p)
    state_bytes = ranks_here * (1 << (n - p)) * AMP_BYTES
    temp_bytes = ranks_here * 2 * chunk_bytes
    required = state_bytes + temp_bytes
    available = psutil.virtual_memory().available
    if required > MEMORY_FRACTION * available:
        raise ResourceError(
            f"run needs about {required} bytes but only "
            f"{int(MEMORY_FRACTION * available)} of {available} available bytes may be used"
        )


def _thread_policy(args) -> ThreadPolicy:
    return ThreadPolicy(num_threads=args.threads)


def _fusion_config(args, m: int) -> FusionConfig | None:
    if args.fusion is None or args.fusion == "off":
        return None
    try:
        l_c = int(args.fusion)
    except ValueError:
        raise ValueError(f"--fusion expects an integer block exponent or 'off', got {args.fusion!r}")
    if l_c > m:
        raise FusionContractError(f"--fusion {l_c} exceeds local qubit count m={m}")
    return FusionConfig(l_c=l_c)


def _chunk_amps(args) -> int | None:
    if args.chunk_bytes is None:
        return None
    if args.chunk_bytes < AMP_BYTES:
        raise ValueError(f"--chunk-bytes must be at least {AMP_BYTES}")
    want = args.chunk_bytes // AMP_BYTES
    return 1 << (want.bit_length() - 1)


def _ranks_to_p(ranks: int) -> int:
    if ranks < 1 or ranks & (ranks - 1):
        raise ValueError(f"--ranks must be a power of two, got {ranks}")
    return ranks.bit_length() - 1


def _emit(rows: list[dict], columns: list[str], meta: dict, args) -> None:
    """Write rows as CSV or a schema-versioned JSON object."""
    if args.format == "json":
        text = json.dumps({"schema": 1, **meta, "rows": rows}, indent=2)
    else:
        buf = io.StringIO()
        for key, value in meta.items():
            if not isinstance(value, (list, dict)):
                buf.write(f"# {key}={value}\n")
        writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue().rstrip("\n")
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _record_rows(records) -> list[dict]:
    return [
        {
            "gate": r.index,
            "kind": r.kind,
            "qubits": "/".join(map(str, r.qubits)),
            "case": r.case.case_id,
            "seconds": f"{r.seconds:.6e}",
            "bytes_moved": r.bytes_moved,
            "gate_count": r.gate_count,
        }
        for r in records
    ]


# ---------------------------------------------------------------- commands

def _execute_workers(p: int, args, worker):
    """Run worker(rank, transport) on every rank.

    inproc spawns one thread per rank in this process; tcp runs only
    this process's --rank against the peer mesh. Returns rank 0's result,
    or None in a tcp process whose rank is not 0.
    """
    if args.transport == "tcp":
        if args.peers is None or args.rank is None:
            raise ValueError("tcp transport requires --peers and --rank")
        peers = PeerTable.from_file(args.peers, args.rank)
        if peers.num_ranks != 1 << p:
            raise ValueError(f"peer table has {peers.num_ranks} ranks but --ranks is {1 << p}")
        transport = connect_all(peers)
        try:
            result = worker(args.rank, transport)
            transport.barrier()
        finally:
            transport.close()
        return result if args.rank == 0 else None
    if p == 0:
        return worker(0, None)
    return run_spmd(1 << p, worker)[0]


def cmd_run(args) -> int:
    circuit = parse_circuit_file(args.circuit)
    n = circuit.n
    p = _ranks_to_p(args.ranks)
    if p >= n:
        raise LayoutError(f"{args.ranks} ranks need more than {n} qubits")
    policy = _thread_policy(args)
    fusion = _fusion_config(args, n - p)
    chunk_amps = _chunk_amps(args)
    _check_memory(n, p, local_processes=args.transport == "tcp",
                  chunk_bytes=args.chunk_bytes or DEFAULT_CHUNK_BYTES)

    def worker(rank: int, transport: Transport | None):
        layout = Layout(n, p, rank)
        state = init_basis_state(layout, args.initial)
        records = run_circuit(
            state, circuit, transport,
            policy=policy, fusion=fusion, chunk_amps=chunk_amps, record=True,
        )
        norm = global_norm_sq(state, transport)
        probabilities = [probability_of_bit(state, q, transport) for q in range(n)]
        top = None
        if n <= GATHER_MAX_QUBITS:
            full = gather_full_state(state, transport)
            if full is not None:
                order = np.argsort(np.abs(full))[::-1][:8]
                top = [
                    {
                        "index": int(i),
                        "re": float(full[i].real),
                        "im": float(full[i].imag),
                        "prob": float(abs(full[i]) ** 2),
                    }
                    for i in order
                ]
        return records, norm, probabilities, top

    result = _execute_workers(p, args, worker)
    if result is None:
        return 0
    records, norm, probabilities, top = result
    meta = {
        "command": "run",
        "circuit": str(args.circuit),
        "n": n,
        "p": p,
        "threads": args.threads,
        "fusion": args.fusion or "off",
        "norm": norm,
        "probabilities": probabilities,
        "top_amplitudes": top,
    }
    if args.format == "csv":
        meta["probabilities"] = " ".join(f"{q}:{v:.6f}" for q, v in enumerate(probabilities))
        meta.pop("top_amplitudes")
    columns = ["gate", "kind", "qubits", "case", "seconds", "bytes_moved", "gate_count"]
    _emit(_record_rows(records), columns, meta, args)
    return 0


def cmd_gate_bench(args) -> int:
    n = args.qubits
    p = _ranks_to_p(args.ranks)
    if p >= n:
        raise LayoutError(f"{args.ranks} ranks need more than {n} qubits")
    m = n - p
    policy = _thread_policy(args)
    chunk_amps = _chunk_amps(args)
    _check_memory(n, p, local_processes=args.transport == "tcp",
                  chunk_bytes=args.chunk_bytes or DEFAULT_CHUNK_BYTES)
    rng = np.random.default_rng(args.seed)
    gate = random_unitary(rng)

    if args.controlled_grid:
        if n < 2:
            raise ValueError("--controlled-grid needs at least 2 qubits")
        pairs = [(c, t) for c in range(n) for t in range(n) if c != t]
        ops = [GateOp(gate, t, control=c, name="CU") for c, t in pairs]
    else:
        lo, hi = _parse_range(args.qubit_range or f"0:{n - 1}", 0, n - 1, "--qubit-range")
        pairs = [(None, k) for k in range(lo, hi + 1)]
        ops = [GateOp(gate, k, name="U") for _, k in pairs]

    def worker(rank: int, transport: Transport | None):
        state = init_basis_state(Layout(n, p, rank))
        times = []
        for op in ops:
            best = math.inf
            for _ in range(max(1, args.reps)):
                if transport is not None:
                    transport.barrier()
                t0 = time.perf_counter()
                apply_op(state, op, transport, policy=policy, chunk_amps=chunk_amps)
                if transport is not None:
                    transport.barrier()
                best = min(best, time.perf_counter() - t0)
            times.append(best)
        return times

    seconds = _execute_workers(p, args, worker)
    if seconds is None:
        return 0
    rows = []
    for (c, t), secs in zip(pairs, seconds):
        case = classify_case(t, c, m)
        moved = traffic_bytes(case, m)
        row = {
            "target": t,
            "case": case.case_id,
            "network": "yes" if case.case_id in (2, 5, 6) else "no",
            "seconds": f"{secs:.6e}",
            "bytes_moved": moved,
            "gbps": f"{moved / secs / 1e9:.3f}",
        }
        if c is not None:
            row = {"control": c, **row}
        rows.append(row)
    meta = {"command": "gate-bench", "n": n, "p": p, "threads": args.threads,
            "grid": bool(args.controlled_grid), "seed": args.seed, "reps": args.reps}
    _emit(rows, list(rows[0]), meta, args)
    return 0


def cmd_qft_bench(args) -> int:
    lo, hi = _parse_range(args.qubits_range, 1, 64, "--qubits-range")
    p = _ranks_to_p(args.ranks)
    if p >= lo:
        raise LayoutError(f"{args.ranks} ranks need more than {lo} qubits")
    policy = _thread_policy(args)
    chunk_amps = _chunk_amps(args)
    _check_memory(hi, p, local_processes=args.transport == "tcp",
                  chunk_bytes=args.chunk_bytes or DEFAULT_CHUNK_BYTES)
    sizes = list(range(lo, hi + 1))

    def worker(rank: int, transport: Transport | None):
        totals = []
        for n in sizes:
            circuit = build_iqft(n) if args.inverse else build_qft(n)
            fusion = _fusion_config(args, n - p)
            state = init_basis_state(Layout(n, p, rank))
            if transport is not None:
                transport.barrier()
            t0 = time.perf_counter()
            run_circuit(state, circuit, transport,
                        policy=policy, fusion=fusion, chunk_amps=chunk_amps)
            if transport is not None:
                transport.barrier()
            totals.append(time.perf_counter() - t0)
        return totals

    totals = _execute_workers(p, args, worker)
    if totals is None:
        return 0
    rows = []
    for n, total in zip(sizes, totals):
        ngates = n * (n + 1) // 2
        rows.append({
            "n": n,
            "ngates": ngates,
            "total_s": f"{total:.6e}",
            "s_per_gate": f"{total / ngates:.6e}",
        })
    meta = {"command": "qft-bench", "p": p, "threads": args.threads,
            "fusion": args.fusion or "off", "inverse": bool(args.inverse)}
    _emit(rows, ["n", "ngates", "total_s", "s_per_gate"], meta, args)
    return 0


def cmd_bounds(args) -> int:
    if args.m is not None:
        lo = hi = args.m
    else:
        lo, hi = _parse_range(args.m_range, 1, 64, "--m-range")
    b_mem = args.bmem
    if args.probe:
        llc = detect_llc_bytes()
        b_mem = measure_copy_bandwidth(4 * llc, repetitions=5, llc_bytes=llc)
    params = MachineParams(b_mem=b_mem, b_net=args.bnet, llc_bytes=detect_llc_bytes())
    rows = []
    for m in range(lo, hi + 1):
        row = {"m": m}
        for case in BoundCase:
            row[f"case{case.case_id}_s"] = f"{lower_bound_seconds(case, m, params):.4f}"
        rows.append(row)
    meta = {"command": "bounds", "b_mem": params.b_mem, "b_net": params.b_net}
    _emit(rows, ["m"] + [f"case{c.case_id}_s" for c in BoundCase], meta, args)
    return 0


def _parse_range(spec: str, lo_min: int, hi_max: int, flag: str) -> tuple[int, int]:
    try:
        lo_s, hi_s = spec.split(":", 1)
        lo, hi = int(lo_s), int(hi_s)
    except ValueError:
        raise ValueError(f"{flag} expects 'lo:hi', got {spec!r}") from None
    if not lo_min <= lo <= hi <= hi_max:
        raise ValueError(f"{flag} range {lo}:{hi} outside [{lo_min}, {hi_max}]")
    return lo, hi


# ---------------------------------------------------------------- wiring

def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--ranks", type=int, default=1,
                     help="rank count, a power of two (default 1)")
    sub.add_argument("--threads", type=int, default=1, help="threads per rank (default 1)")
    sub.add_argument("--fusion", default=None, metavar="L_C|off",
                     help="block exponent for gate fusion, or 'off' (default off)")
    sub.add_argument("--chunk-bytes", type=int, default=None,
                     help="exchange pipeline chunk size in bytes (default 4 MiB)")
    sub.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    sub.add_argument("--peers", default=None, help="peer file for tcp: 'rank host:port' lines")
    sub.add_argument("--rank", type=int, default=None, help="this process's rank (tcp only)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svsim",
        description="Distributed state-vector simulator for gate circuits",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="execute a circuit file")
    run.add_argument("circuit", help="circuit file path")
    run.add_argument("--initial", type=int, default=0, help="initial basis index (default 0)")
    _add_common_flags(run)

    bench = subs.add_parser("gate-bench", help="time single or controlled gates per position")
    bench.add_argument("--qubits", type=int, required=True)
    bench.add_argument("--qubit-range", default=None, help="lo:hi sweep range (default all)")
    bench.add_argument("--controlled-grid", action="store_true",
                       help="time every (control, target) pair instead of a single sweep")
    bench.add_argument("--reps", type=int, default=3, help="repetitions per point, best kept")
    _add_common_flags(bench)

    qft = subs.add_parser("qft-bench", help="time transform circuits over a qubit range")
    qft.add_argument("--qubits-range", required=True, help="lo:hi inclusive")
    qft.add_argument("--inverse", action="store_true", help="time the inverse transform")
    _add_common_flags(qft)

    bounds = subs.add_parser("bounds", help="print the analytic lower-bound table")
    bounds.add_argument("--m", type=int, default=None, help="single local exponent m")
    bounds.add_argument("--m-range", default="29:36", help="lo:hi range of m (default 29:36)")
    bounds.add_argument("--bmem", type=float, default=40e9, help="memory bytes/s (default 40e9)")
    bounds.add_argument("--bnet", type=float, default=5.5e9, help="network bytes/s (default 5.5e9)")
    bounds.add_argument("--probe", action="store_true",
                        help="measure memory bandwidth instead of using --bmem")
    bounds.add_argument("--format", choices=("csv", "json"), default="csv")
    bounds.add_argument("--out", default=None)
    return parser


_COMMANDS = {
    "run": cmd_run,
    "gate-bench": cmd_gate_bench,
    "qft-bench": cmd_qft_bench,
    "bounds": cmd_bounds,
}


def _classify_failure(exc: BaseException) -> int:
    seen = set()
    cursor: BaseException | None = exc
    while cursor is not None and id(cursor) not in seen:
        seen.add(id(cursor))
        if isinstance(cursor, CircuitParseError):
            return 3
        if isinstance(cursor, ResourceError):
            return 4
        if isinstance(cursor, TransportError):
            return 5
        if isinstance(cursor, (LayoutError, FusionContractError, ValueError, OSError)):
            return 2
        cursor = cursor.__cause__
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, RuntimeError, ValueError, LayoutError, CircuitParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _classify_failure(exc)


if __name__ == "__main__":
    sys.exit(main())
