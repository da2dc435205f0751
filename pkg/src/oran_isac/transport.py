"""Whole-frame transport between dApp and xApp: in-process and TCP loopback.

Both implementations deliver frames intact and in order over a full-duplex
channel pair. The in-process variant is a pair of bounded deques guarded by
conditions; the TCP variant is a loopback socket with a 4-byte big-endian
length prefix per frame. Keeping the contract identical lets the latency
experiments isolate protocol cost from transport cost.

Backpressure policy lives with the caller: ``send`` raises when a bounded
outbox is full unless the frame was marked droppable, in which case the
oldest droppable frame is evicted instead (stale telemetry is worthless;
control messages and acks must survive).
"""

from __future__ import annotations

import enum
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

DEFAULT_OUTBOX_BOUND = 1024

_LEN_PREFIX = struct.Struct(">I")


class TransportError(Exception):
    pass


class Disconnected(TransportError):
    pass


class Timeout(TransportError):
    pass


class Backpressure(TransportError):
    """Bounded outbox full and the frame may not be dropped."""


class EndpointKind(enum.Enum):
    IN_PROCESS = "inproc"
    TCP = "tcp"


@dataclass(frozen=True)
class Endpoint:
    kind: EndpointKind
    address: str = ""


class Channel:
    """One side of a full-duplex frame channel."""

    def send(self, frame: bytes, droppable: bool = False) -> None:
        raise NotImplementedError

    def recv(self, timeout: float | None = None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    @property
    def drops(self) -> int:
        """Frames evicted under backpressure on this side's outbox."""
        return 0


class _InProcQueue:
    """Bounded FIFO of (frame, droppable) with drop-oldest-droppable eviction."""

    def __init__(self, bound: int) -> None:
        self._items: deque[tuple[bytes, bool]] = deque()
        self._bound = bound
        self._cond = threading.Condition()
        self.closed = False
        self.drops = 0

    def put(self, frame: bytes, droppable: bool) -> None:
        with self._cond:
            if self.closed:
                raise Disconnected("peer closed")
            if len(self._items) >= self._bound:
                evicted = False
                for i, (_, d) in enumerate(self._items):
                    if d:
                        del self._items[i]
                        self.drops += 1
                        evicted = True
                        break
                if not evicted:
                    raise Backpressure(f"outbox full ({self._bound} frames)")
            self._items.append((frame, droppable))
            self._cond.notify()

    def get(self, timeout: float | None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._items:
                if self.closed:
                    raise Disconnected("peer closed")
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise Timeout("no frame within deadline")
                self._cond.wait(remaining)
            return self._items.popleft()[0]

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()


class InProcChannel(Channel):
    def __init__(self, outbox: _InProcQueue, inbox: _InProcQueue) -> None:
        self._outbox = outbox
        self._inbox = inbox

    def send(self, frame: bytes, droppable: bool = False) -> None:
        self._outbox.put(bytes(frame), droppable)

    def recv(self, timeout: float | None = None) -> bytes:
        return self._inbox.get(timeout)

    def close(self) -> None:
        self._outbox.close()
        self._inbox.close()

    @property
    def drops(self) -> int:
        return self._outbox.drops


class TcpChannel(Channel):
    """Length-prefixed framing over a connected loopback socket."""

    def __init__(self, sock: socket.socket, outbox_bound: int = DEFAULT_OUTBOX_BOUND) -> None:
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._recv_lock = threading.Lock()
        self._recv_buf = b""
        self._drops = 0
        self._outbox_bound = outbox_bound

    def send(self, frame: bytes, droppable: bool = False) -> None:
        data = _LEN_PREFIX.pack(len(frame)) + frame
        with self._send_lock:
            try:
                self._sock.sendall(data)
            except (BrokenPipeError, ConnectionResetError, OSError) as e:
                raise Disconnected(str(e)) from e

    def _read_exact(self, n: int, deadline: float | None) -> bytes:
        while len(self._recv_buf) < n:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise Timeout("no frame within deadline")
                self._sock.settimeout(remaining)
            else:
                self._sock.settimeout(None)
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise Timeout("no frame within deadline") from None
            except (ConnectionResetError, OSError) as e:
                raise Disconnected(str(e)) from e
            if not chunk:
                raise Disconnected("peer closed connection")
            self._recv_buf += chunk
        out, self._recv_buf = self._recv_buf[:n], self._recv_buf[n:]
        return out

    def recv(self, timeout: float | None = None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._recv_lock:
            header = self._read_exact(_LEN_PREFIX.size, deadline)
            (length,) = _LEN_PREFIX.unpack(header)
            return self._read_exact(length, deadline)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    @property
    def drops(self) -> int:
        return self._drops


def channel_pair(kind: EndpointKind = EndpointKind.IN_PROCESS,
                 outbox_bound: int = DEFAULT_OUTBOX_BOUND) -> tuple[Channel, Channel]:
    """Create a connected full-duplex pair (side A, side B)."""
    if kind == EndpointKind.IN_PROCESS:
        a_to_b = _InProcQueue(outbox_bound)
        b_to_a = _InProcQueue(outbox_bound)
        return InProcChannel(a_to_b, b_to_a), InProcChannel(b_to_a, a_to_b)

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    port = listener.getsockname()[1]
    client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    client.connect(("127.0.0.1", port))
    server, _ = listener.accept()
    listener.close()
    return TcpChannel(server, outbox_bound), TcpChannel(client, outbox_bound)


def send_telemetry(channel: Channel, frame: bytes) -> bool:
    """Send an indication frame under the drop-oldest policy.

    Returns False when the frame itself could not be enqueued (sequence gaps
    are visible to the subscriber through sequence numbers, never reordering).
    """
    try:
        channel.send(frame, droppable=True)
        return True
    except Backpressure:
        return False
