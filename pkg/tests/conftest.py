"""Shared helpers: serial references and multi-rank round trips."""

from __future__ import annotations

import numpy as np
import pytest

from svsim import Layout, gather_full_state, init_basis_state, run_circuit, run_spmd


def serial_state(circuit, initial=0, **kwargs) -> np.ndarray:
    """Run the circuit on a single rank and return the full state vector."""
    state = init_basis_state(Layout(circuit.n, 0, 0), initial)
    run_circuit(state, circuit, **kwargs)
    return state.amps.copy()


def spmd_state(circuit, p, initial=0, **kwargs) -> np.ndarray:
    """Run the circuit across 2^p in-process ranks and gather the result."""

    def worker(rank, transport):
        state = init_basis_state(Layout(circuit.n, p, rank), initial)
        run_circuit(state, circuit, transport, **kwargs)
        return gather_full_state(state, transport)

    if p == 0:
        return worker(0, None)
    return run_spmd(1 << p, worker)[0]


def max_abs_diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Verdict lines registered by the acceptance tests; echoed after the run so
# they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
