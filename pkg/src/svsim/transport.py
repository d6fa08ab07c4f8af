"""Concrete message transports: in-process queues and TCP sockets.

Both speak the same frame format over any byte channel:
little-endian [u32 tag][u32 phase][u64 payload length][payload]. Frames
between a fixed (src, dest) pair with the same tag arrive in send order;
the receiver names the phase it expects and any mismatch is treated as a
protocol desync rather than reordered silently.

The in-process fabric runs every rank as a thread in one interpreter and
can inject per-message and per-byte delivery delays through serialized
per-direction channels, which is how communication/computation overlap is
exercised in tests. The TCP transport runs one rank per OS process with
one socket per ordered rank pair.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .distributed import CONTROL_TAG, CompletionHandle, Transport
from .errors import TransportError

FRAME_HEADER = struct.Struct("<IIQ")
DEFAULT_TIMEOUT = 30.0


class _Mailbox:
    """Per-rank inbox: FIFO of (phase, payload) per (src, tag) channel."""

    def __init__(self):
        self._cond = threading.Condition()
        self._queues: dict[tuple[int, int], deque] = {}
        self._closed = False

    def put(self, src: int, tag: int, phase: int, payload: bytes) -> None:
        with self._cond:
            self._queues.setdefault((src, tag), deque()).append((phase, payload))
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def poll(self, src: int, tag: int) -> bool:
        with self._cond:
            q = self._queues.get((src, tag))
            return bool(q)

    def get(self, src: int, tag: int, phase: int, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                q = self._queues.get((src, tag))
                if q:
                    got_phase, payload = q.popleft()
                    if not q:
                        del self._queues[(src, tag)]
                    if got_phase != phase:
                        raise TransportError(
                            f"protocol desync from rank {src}: expected phase "
                            f"{phase:#x}, got {got_phase:#x} (tag {tag})"
                        )
                    return payload
                if self._closed:
                    raise TransportError("transport closed while waiting for a message")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError(
                        f"timed out after {timeout:g}s waiting for rank {src} "
                        f"(tag {tag}, phase {phase:#x})"
                    )
                self._cond.wait(remaining)


class _DoneHandle(CompletionHandle):
    def __init__(self, payload: bytes | None = None):
        self._payload = payload

    def wait(self, timeout: float | None = None) -> bytes | None:
        return self._payload

    def done(self) -> bool:
        return True


class _LazyRecvHandle(CompletionHandle):
    """Claims the next in-order message for (src, tag) when waited on."""

    def __init__(self, transport: "_MailboxTransport", src: int, tag: int, phase: int):
        self._transport = transport
        self._src = src
        self._tag = tag
        self._phase = phase
        self._payload: bytes | None = None

    def wait(self, timeout: float | None = None) -> bytes:
        if self._payload is None:
            self._payload = self._transport._mailbox.get(
                self._src, self._tag, self._phase, timeout or self._transport.timeout
            )
        return self._payload

    def done(self) -> bool:
        return self._payload is not None or self._transport._mailbox.poll(self._src, self._tag)


class _MailboxTransport(Transport):
    """Shared send/receive/barrier plumbing over an abstract delivery hook."""

    def __init__(self, rank: int, num_ranks: int, timeout: float = DEFAULT_TIMEOUT):
        self.rank = rank
        self.num_ranks = num_ranks
        self.timeout = timeout
        self._mailbox = _Mailbox()
        self._next_tag = CONTROL_TAG + 1
        self._barrier_gen = 0

    def _deliver(self, dest: int, tag: int, phase: int, payload: bytes) -> None:
        raise NotImplementedError

    def fresh_tag(self) -> int:
        tag = self._next_tag
        self._next_tag += 1
        return tag

    def send(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> None:
        if dest == self.rank:
            raise ValueError("a rank does not message itself")
        if not 0 <= dest < self.num_ranks:
            raise ValueError(f"destination rank {dest} out of range")
        self._deliver(dest, tag, phase, bytes(payload))

    def receive(self, src: int, tag: int, phase: int = 0) -> bytes:
        return self._mailbox.get(src, tag, phase, self.timeout)

    def isend(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> CompletionHandle:
        self.send(dest, tag, payload, phase)
        return _DoneHandle()

    def irecv(self, src: int, tag: int, phase: int = 0) -> CompletionHandle:
        return _LazyRecvHandle(self, src, tag, phase)

    def barrier(self) -> None:
        gen = self._barrier_gen
        self._barrier_gen += 1
        for dest in range(self.num_ranks):
            if dest != self.rank:
                self.send(dest, CONTROL_TAG, b"", phase=gen)
        for src in range(self.num_ranks):
            if src != self.rank:
                self.receive(src, CONTROL_TAG, phase=gen)

    def close(self) -> None:
        self._mailbox.close()


class _DelayChannel:
    """Serialized one-directional link: messages occupy it for their modeled time."""

    def __init__(self, mailbox: _Mailbox, src: int, per_message_delay: float, per_byte_delay: float):
        self._mailbox = mailbox
        self._src = src
        self._per_message = per_message_delay
        self._per_byte = per_byte_delay
        self._cond = threading.Condition()
        self._queue: deque = deque()
        self._stop = False
        self._clock = 0.0
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def enqueue(self, tag: int, phase: int, payload: bytes) -> None:
        with self._cond:
            self._queue.append((tag, phase, payload))
            self._cond.notify()

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._stop:
                    self._cond.wait()
                if not self._queue and self._stop:
                    return
                tag, phase, payload = self._queue.popleft()
            now = time.monotonic()
            self._clock = max(self._clock, now)
            self._clock += self._per_message + len(payload) * self._per_byte
            delay = self._clock - now
            if delay > 0:
                time.sleep(delay)
            self._mailbox.put(self._src, tag, phase, payload)

    def stop(self) -> None:
        with self._cond:
            self._stop = True
            self._cond.notify()
        self._thread.join()


class InprocFabric:
    """Message switchboard for 2^p rank threads inside one process."""

    def __init__(
        self,
        num_ranks: int,
        per_message_delay: float = 0.0,
        per_byte_delay: float = 0.0,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        if num_ranks < 1 or num_ranks & (num_ranks - 1):
            raise ValueError(f"rank count must be a power of two, got {num_ranks}")
        self.num_ranks = num_ranks
        self._per_message = per_message_delay
        self._per_byte = per_byte_delay
        self._timeout = timeout
        self._transports: dict[int, InprocTransport] = {}
        self._channels: dict[tuple[int, int], _DelayChannel] = {}
        self._lock = threading.Lock()

    @property
    def delayed(self) -> bool:
        return self._per_message > 0 or self._per_byte > 0

    def transport(self, rank: int, timeout: float | None = None) -> "InprocTransport":
        # routing may instantiate a destination's transport before its own
        # thread asks for it, so an explicit timeout updates the cached one
        with self._lock:
            got = self._transports.get(rank)
            if got is None:
                got = InprocTransport(self, rank, self._timeout if timeout is None else timeout)
                self._transports[rank] = got
            elif timeout is not None:
                got.timeout = timeout
            return got

    def _route(self, src: int, dest: int, tag: int, phase: int, payload: bytes) -> None:
        mailbox = self.transport(dest)._mailbox
        if not self.delayed:
            mailbox.put(src, tag, phase, payload)
            return
        with self._lock:
            channel = self._channels.get((src, dest))
            if channel is None:
                channel = _DelayChannel(mailbox, src, self._per_message, self._per_byte)
                self._channels[(src, dest)] = channel
        channel.enqueue(tag, phase, payload)

    def close(self) -> None:
        with self._lock:
            channels = list(self._channels.values())
            transports = list(self._transports.values())
        for channel in channels:
            channel.stop()
        for transport in transports:
            transport._mailbox.close()


class InprocTransport(_MailboxTransport):
    def __init__(self, fabric: InprocFabric, rank: int, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(rank, fabric.num_ranks, timeout)
        self._fabric = fabric

    def _deliver(self, dest: int, tag: int, phase: int, payload: bytes) -> None:
        self._fabric._route(self.rank, dest, tag, phase, payload)


def run_spmd(
    num_ranks: int,
    fn,
    *,
    per_message_delay: float = 0.0,
    per_byte_delay: float = 0.0,
    timeout: float = DEFAULT_TIMEOUT,
) -> list:
    """Run fn(rank, transport) on one thread per rank; returns per-rank results.

    The first rank failure is re-raised after all workers stop (peers that
    were blocked on the failed rank unblock via their receive timeouts).
    """
    fabric = InprocFabric(num_ranks, per_message_delay, per_byte_delay, timeout)
    results: list = [None] * num_ranks
    failures: list[tuple[int, BaseException]] = []
    lock = threading.Lock()

    def worker(rank: int) -> None:
        transport = fabric.transport(rank)
        try:
            results[rank] = fn(rank, transport)
        except BaseException as exc:
            with lock:
                failures.append((rank, exc))

    threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in range(num_ranks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    fabric.close()
    if failures:
        failures.sort(key=lambda item: item[0])
        rank, exc = failures[0]
        raise RuntimeError(f"rank {rank} failed: {exc}") from exc
    return results


@dataclass(frozen=True)
class PeerTable:
    """rank -> (host, port) map plus this process's own rank."""

    self_rank: int
    addresses: dict[int, tuple[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        count = len(self.addresses)
        if count < 1 or count & (count - 1):
            raise ValueError(f"peer table needs a power-of-two rank count, got {count}")
        if sorted(self.addresses) != list(range(count)):
            raise ValueError(f"peer table ranks must be exactly 0..{count - 1}")
        if len(set(self.addresses.values())) != count:
            raise ValueError("peer table addresses collide")
        if self.self_rank not in self.addresses:
            raise ValueError(f"own rank {self.self_rank} missing from peer table")

    @property
    def num_ranks(self) -> int:
        return len(self.addresses)

    @classmethod
    def parse(cls, text: str, self_rank: int) -> "PeerTable":
        addresses: dict[int, tuple[str, int]] = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rank_part, addr = line.split()
                host, port = addr.rsplit(":", 1)
                rank = int(rank_part)
                entry = (host, int(port))
            except ValueError as exc:
                raise ValueError(f"peer file line {line_no}: expected 'rank host:port'") from exc
            if rank in addresses:
                raise ValueError(f"peer file line {line_no}: rank {rank} listed twice")
            addresses[rank] = entry
        return cls(self_rank, addresses)

    @classmethod
    def from_file(cls, path: str | Path, self_rank: int) -> "PeerTable":
        return cls.parse(Path(path).read_text(encoding="utf-8"), self_rank)


def _recv_exact(sock: socket.socket, nbytes: int) -> bytes:
    chunks = []
    remaining = nbytes
    while remaining:
        block = sock.recv(min(remaining, 1 << 20))
        if not block:
            raise ConnectionError("peer closed the connection")
        chunks.append(block)
        remaining -= len(block)
    return b"".join(chunks)


class _SocketWriter:
    """Owns the outgoing socket of one ordered pair; frames leave in send order."""

    def __init__(self, sock: socket.socket, dest: int):
        self._sock = sock
        self._dest = dest
        self._cond = threading.Condition()
        self._queue: deque[bytes] = deque()
        self._stop = False
        self._error: Exception | None = None
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def enqueue(self, frame: bytes) -> None:
        with self._cond:
            if self._error is not None:
                raise TransportError(f"send to rank {self._dest} failed: {self._error}")
            self._queue.append(frame)
            self._cond.notify()

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._stop:
                    self._cond.wait()
                if not self._queue:
                    return
                frame = self._queue.popleft()
            try:
                self._sock.sendall(frame)
            except OSError as exc:
                with self._cond:
                    self._error = exc
                return

    def stop(self) -> None:
        with self._cond:
            self._stop = True
            self._cond.notify()
        self._thread.join(timeout=5)
        try:
            self._sock.close()
        except OSError:
            pass


class TcpTransport(_MailboxTransport):
    """One rank per OS process; one TCP connection per ordered rank pair.

    Construction binds the listening socket, dials every peer (with retries
    until the timeout, since peers start at different times), and waits for
    the full incoming mesh before returning.
    """

    def __init__(self, peers: PeerTable, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(peers.self_rank, peers.num_ranks, timeout)
        self._peers = peers
        self._writers: dict[int, _SocketWriter] = {}
        self._readers: list[threading.Thread] = []
        self._incoming = 0
        self._mesh_cond = threading.Condition()
        self._closing = False

        host, port = peers.addresses[peers.self_rank]
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(peers.num_ranks)
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()
        try:
            self._connect_mesh(timeout)
        except BaseException:
            self.close()
            raise

    def _connect_mesh(self, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        for dest in range(self.num_ranks):
            if dest == self.rank:
                continue
            host, port = self._peers.addresses[dest]
            while True:
                try:
                    sock = socket.create_connection((host, port), timeout=1.0)
                    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    sock.sendall(struct.pack("<I", self.rank))
                    self._writers[dest] = _SocketWriter(sock, dest)
                    break
                except OSError:
                    if time.monotonic() >= deadline:
                        raise TransportError(
                            f"rank {self.rank} could not reach rank {dest} at "
                            f"{host}:{port} within {timeout:g}s"
                        ) from None
                    time.sleep(0.05)
        with self._mesh_cond:
            while self._incoming < self.num_ranks - 1:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    missing = self.num_ranks - 1 - self._incoming
                    raise TransportError(
                        f"rank {self.rank} timed out with {missing} incoming "
                        f"connection(s) still missing"
                    )
                self._mesh_cond.wait(remaining)

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            try:
                (src,) = struct.unpack("<I", _recv_exact(sock, 4))
            except (ConnectionError, OSError):
                sock.close()
                continue
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            reader = threading.Thread(target=self._read_loop, args=(sock, src), daemon=True)
            reader.start()
            self._readers.append(reader)
            with self._mesh_cond:
                self._incoming += 1
                self._mesh_cond.notify_all()

    def _read_loop(self, sock: socket.socket, src: int) -> None:
        try:
            while True:
                tag, phase, length = FRAME_HEADER.unpack(_recv_exact(sock, FRAME_HEADER.size))
                payload = _recv_exact(sock, length) if length else b""
                self._mailbox.put(src, tag, phase, payload)
        except (ConnectionError, OSError):
            return
        finally:
            sock.close()

    def _deliver(self, dest: int, tag: int, phase: int, payload: bytes) -> None:
        writer = self._writers.get(dest)
        if writer is None:
            raise TransportError(f"no connection to rank {dest}")
        writer.enqueue(FRAME_HEADER.pack(tag, phase, len(payload)) + payload)

    def close(self) -> None:
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        for writer in self._writers.values():
            writer.stop()
        super().close()


def connect_all(peers: PeerTable, timeout: float = DEFAULT_TIMEOUT) -> TcpTransport:
    """Establish the full TCP mesh and confirm it with a barrier."""
    transport = TcpTransport(peers, timeout)
    transport.barrier()
    return transport


class _CountingRecvHandle(CompletionHandle):
    def __init__(self, inner: CompletionHandle, counter: "CountingTransport"):
        self._inner = inner
        self._counter = counter
        self._counted = False

    def wait(self, timeout: float | None = None) -> bytes | None:
        payload = self._inner.wait(timeout)
        if payload is not None and not self._counted:
            self._counted = True
            self._counter._count_received(len(payload))
        return payload

    def done(self) -> bool:
        return self._inner.done()


class CountingTransport(Transport):
    """Wrapper that tallies payload bytes by direction, for traffic assertions."""

    def __init__(self, inner: Transport):
        self._inner = inner
        self.rank = inner.rank
        self.num_ranks = inner.num_ranks
        self.sent_bytes = 0
        self.received_bytes = 0
        self._lock = threading.Lock()

    @property
    def total_bytes(self) -> int:
        return self.sent_bytes + self.received_bytes

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.sent_bytes, self.received_bytes

    def _count_received(self, nbytes: int) -> None:
        with self._lock:
            self.received_bytes += nbytes

    def fresh_tag(self) -> int:
        return self._inner.fresh_tag()

    def send(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> None:
        self._inner.send(dest, tag, payload, phase)
        with self._lock:
            self.sent_bytes += len(payload)

    def receive(self, src: int, tag: int, phase: int = 0) -> bytes:
        payload = self._inner.receive(src, tag, phase)
        self._count_received(len(payload))
        return payload

    def isend(self, dest: int, tag: int, payload: bytes, phase: int = 0) -> CompletionHandle:
        handle = self._inner.isend(dest, tag, payload, phase)
        with self._lock:
            self.sent_bytes += len(payload)
        return handle

    def irecv(self, src: int, tag: int, phase: int = 0) -> CompletionHandle:
        return _CountingRecvHandle(self._inner.irecv(src, tag, phase), self)

    def barrier(self) -> None:
        self._inner.barrier()

    def close(self) -> None:
        self._inner.close()
