"""Message fabric behavior: ordering, framing, tcp mesh, peer tables."""

from __future__ import annotations

import socket
import threading
import time

import numpy as np
import pytest

from svsim import (
    CountingTransport,
    InprocFabric,
    PeerTable,
    TransportError,
    connect_all,
    run_spmd,
)
from svsim.transport import TcpTransport


def free_ports(count):
    socks = []
    for _ in range(count):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


class TestInprocFabric:
    def test_payload_bit_exact(self, rng):
        payload = rng.integers(0, 256, size=4096, dtype=np.uint8).tobytes()

        def worker(rank, transport):
            tag = transport.fresh_tag()
            if rank == 0:
                transport.send(1, tag, payload)
                return None
            return transport.receive(0, tag)

        assert run_spmd(2, worker)[1] == payload

    def test_fifo_per_tag_and_tag_isolation(self):
        def worker(rank, transport):
            t1 = transport.fresh_tag()
            t2 = transport.fresh_tag()
            if rank == 0:
                transport.send(1, t1, b"a1", phase=0)
                transport.send(1, t1, b"a2", phase=1)
                transport.send(1, t2, b"b", phase=0)
                return None
            # later tag first: mailboxes are independent queues
            got = [transport.receive(0, t2, phase=0)]
            got.append(transport.receive(0, t1, phase=0))
            got.append(transport.receive(0, t1, phase=1))
            return got

        assert run_spmd(2, worker)[1] == [b"b", b"a1", b"a2"]

    def test_phase_mismatch_is_desync(self):
        def worker(rank, transport):
            tag = transport.fresh_tag()
            if rank == 0:
                transport.send(1, tag, b"x", phase=7)
                return None
            with pytest.raises(TransportError):
                transport.receive(0, tag, phase=8)
            return True

        assert run_spmd(2, worker)[1] is True

    def test_nonblocking_handles(self):
        def worker(rank, transport):
            tag = transport.fresh_tag()
            if rank == 0:
                h = transport.isend(1, tag, b"ping")
                h.wait()
                return transport.receive(1, tag)
            h = transport.irecv(0, tag)
            got = h.wait()
            assert h.done()
            transport.send(0, tag, got + b"pong")
            return None

        assert run_spmd(2, worker)[0] == b"pingpong"

    def test_receive_timeout(self):
        fabric = InprocFabric(2)
        try:
            t = fabric.transport(0, timeout=0.1)
            with pytest.raises(TransportError):
                t.receive(1, t.fresh_tag())
        finally:
            fabric.close()

    def test_barrier_synchronizes(self):
        hits = []

        def worker(rank, transport):
            for round_no in range(3):
                if rank == 0:
                    time.sleep(0.01)
                transport.barrier()
                hits.append((round_no, rank))
            return True

        assert run_spmd(4, worker) == [True] * 4
        for round_no in range(3):
            chunk = [r for r in hits if r[0] == round_no]
            assert len(chunk) == 4

    def test_worker_failure_names_rank(self):
        def worker(rank, transport):
            if rank == 2:
                raise ValueError("boom")
            transport.barrier()

        with pytest.raises(RuntimeError, match="rank 2"):
            run_spmd(4, worker, timeout=2.0)

    def test_send_validates_destination(self):
        fabric = InprocFabric(2)
        try:
            t = fabric.transport(0)
            with pytest.raises(ValueError):
                t.send(0, 1, b"self")
            with pytest.raises(ValueError):
                t.send(5, 1, b"range")
        finally:
            fabric.close()

    def test_delay_channel_paces_messages(self):
        fabric = InprocFabric(2, per_message_delay=0.05)
        try:
            a, b = fabric.transport(0), fabric.transport(1)
            tag = a.fresh_tag()
            b.fresh_tag()
            start = time.perf_counter()
            for i in range(3):
                a.send(1, tag, b"x", phase=i)
            for i in range(3):
                b.receive(0, tag, phase=i)
            elapsed = time.perf_counter() - start
            assert elapsed >= 0.15
        finally:
            fabric.close()


class TestCountingTransport:
    def test_counts_payload_bytes_only(self):
        def worker(rank, transport):
            counting = CountingTransport(transport)
            tag = counting.fresh_tag()
            counting.barrier()  # empty payloads do not count
            if rank == 0:
                counting.send(1, tag, b"z" * 100)
                counting.irecv(1, tag).wait()
            else:
                counting.isend(0, tag, b"w" * 60).wait()
                counting.receive(0, tag)
            return counting.snapshot()

        got = run_spmd(2, worker)
        assert got[0] == (100, 60)
        assert got[1] == (60, 100)


class TestPeerTable:
    def test_parse_round_trip(self):
        text = "# ranks\n0 127.0.0.1:9000\n\n1 127.0.0.1:9001\n"
        table = PeerTable.parse(text, self_rank=1)
        assert table.num_ranks == 2
        assert table.addresses[0] == ("127.0.0.1", 9000)
        assert table.self_rank == 1

    def test_rejects_bad_tables(self):
        with pytest.raises(ValueError):
            PeerTable.parse("0 h:1\n1 h:2\n2 h:3\n", 0)  # not a power of two
        with pytest.raises(ValueError):
            PeerTable.parse("0 h:1\n0 h:2\n", 0)  # duplicate rank
        with pytest.raises(ValueError):
            PeerTable.parse("0 h:1\n2 h:2\n", 0)  # gap
        with pytest.raises(ValueError):
            PeerTable.parse("0 h:1\n1 h:1\n", 0)  # address collision
        with pytest.raises(ValueError):
            PeerTable.parse("0 h:1\n1 h:2\n", 3)  # self rank absent
        with pytest.raises(ValueError):
            PeerTable.parse("0 h\n1 h:2\n", 0)  # malformed address


class TestTcpMesh:
    def test_four_rank_ring_echo(self, rng):
        ports = free_ports(4)
        text = "".join(f"{r} 127.0.0.1:{ports[r]}\n" for r in range(4))
        payloads = [rng.integers(0, 256, size=10000, dtype=np.uint8).tobytes()
                    for _ in range(4)]
        results = [None] * 4

        def node(rank):
            table = PeerTable.parse(text, rank)
            transport = connect_all(table, timeout=10.0)
            try:
                tag = transport.fresh_tag()
                transport.send((rank + 1) % 4, tag, payloads[rank])
                got = transport.receive((rank - 1) % 4, tag)
                transport.barrier()
                results[rank] = got
            finally:
                transport.close()

        threads = [threading.Thread(target=node, args=(r,)) for r in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(30)
        for rank in range(4):
            assert results[rank] == payloads[(rank - 1) % 4]

    def test_missing_peer_times_out_with_rank_id(self):
        ports = free_ports(2)
        table = PeerTable.parse(
            f"0 127.0.0.1:{ports[0]}\n1 127.0.0.1:{ports[1]}\n", 0
        )
        with pytest.raises(TransportError, match="1"):
            connect_all(table, timeout=0.5)
