"""Wire messages and the two carriers (in-process, TCP) between workers and
the coordinator.

Frame layout: [u32 LE total length][u8 type tag][payload], all integers
little-endian, reals IEEE-754 doubles. The total length counts the tag plus
payload, not the length prefix itself. The schema deliberately has no field
that could carry model parameters or raw features.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass

TAG_PUSH_REQUEST = 1
TAG_PUSH_ACK = 2
TAG_PULL_REQUEST = 3
TAG_PULL_GRANT = 4
TAG_PULL_REJECT = 5
TAG_ERROR = 6

ERR_BAD_WORKER = 1
ERR_BAD_SAMPLE = 2
ERR_BAD_REQUEST = 3


class DecodeError(ValueError):
    """Bad tag, length mismatch or truncated frame."""


class TransportError(RuntimeError):
    """Carrier-level failure (connection lost, retries exhausted)."""


@dataclass(frozen=True)
class PushRequest:
    worker: int
    iteration: int
    sample_ids: tuple
    values: tuple


@dataclass(frozen=True)
class PushAck:
    iteration: int


@dataclass(frozen=True)
class PullRequest:
    worker: int
    iteration: int
    sample_ids: tuple


@dataclass(frozen=True)
class PullGrant:
    iteration: int
    sums: tuple


@dataclass(frozen=True)
class PullReject:
    iteration: int
    slowest: int


@dataclass(frozen=True)
class ErrorReply:
    code: int
    detail: str


def encode(msg) -> bytes:
    if isinstance(msg, PushRequest):
        n = len(msg.sample_ids)
        if n != len(msg.values):
            raise ValueError("sample id / value count mismatch")
        body = struct.pack("<HQI", msg.worker, msg.iteration, n)
        body += struct.pack(f"<{'Qd' * n}", *(x for pair in zip(msg.sample_ids, msg.values) for x in pair))
        tag = TAG_PUSH_REQUEST
    elif isinstance(msg, PushAck):
        body = struct.pack("<Q", msg.iteration)
        tag = TAG_PUSH_ACK
    elif isinstance(msg, PullRequest):
        n = len(msg.sample_ids)
        body = struct.pack("<HQI", msg.worker, msg.iteration, n)
        body += struct.pack(f"<{n}Q", *msg.sample_ids)
        tag = TAG_PULL_REQUEST
    elif isinstance(msg, PullGrant):
        n = len(msg.sums)
        body = struct.pack("<QI", msg.iteration, n)
        body += struct.pack(f"<{n}d", *msg.sums)
        tag = TAG_PULL_GRANT
    elif isinstance(msg, PullReject):
        body = struct.pack("<QQ", msg.iteration, msg.slowest)
        tag = TAG_PULL_REJECT
    elif isinstance(msg, ErrorReply):
        detail = msg.detail.encode("utf-8")
        body = struct.pack("<HI", msg.code, len(detail)) + detail
        tag = TAG_ERROR
    else:
        raise ValueError(f"not a wire message: {type(msg).__name__}")
    payload = bytes([tag]) + body
    return struct.pack("<I", len(payload)) + payload


def _need(buf: bytes, offset: int, size: int):
    if offset + size > len(buf):
        raise DecodeError("truncated frame")
    return offset + size


def decode(frame: bytes):
    """Inverse of encode over one complete frame (length prefix included)."""
    if len(frame) < 5:
        raise DecodeError("frame shorter than header")
    (total,) = struct.unpack_from("<I", frame, 0)
    if total != len(frame) - 4:
        raise DecodeError(f"length field {total} does not match frame size {len(frame) - 4}")
    tag = frame[4]
    off = 5
    if tag == TAG_PUSH_REQUEST:
        off = _need(frame, off, 14) - 14
        worker, iteration, n = struct.unpack_from("<HQI", frame, off)
        off += 14
        _need(frame, off, 16 * n)
        flat = struct.unpack_from(f"<{'Qd' * n}", frame, off)
        off += 16 * n
        msg = PushRequest(worker, iteration, tuple(flat[0::2]), tuple(flat[1::2]))
    elif tag == TAG_PUSH_ACK:
        _need(frame, off, 8)
        (iteration,) = struct.unpack_from("<Q", frame, off)
        off += 8
        msg = PushAck(iteration)
    elif tag == TAG_PULL_REQUEST:
        off = _need(frame, off, 14) - 14
        worker, iteration, n = struct.unpack_from("<HQI", frame, off)
        off += 14
        _need(frame, off, 8 * n)
        ids = struct.unpack_from(f"<{n}Q", frame, off)
        off += 8 * n
        msg = PullRequest(worker, iteration, tuple(ids))
    elif tag == TAG_PULL_GRANT:
        off = _need(frame, off, 12) - 12
        iteration, n = struct.unpack_from("<QI", frame, off)
        off += 12
        _need(frame, off, 8 * n)
        sums = struct.unpack_from(f"<{n}d", frame, off)
        off += 8 * n
        msg = PullGrant(iteration, tuple(sums))
    elif tag == TAG_PULL_REJECT:
        _need(frame, off, 16)
        iteration, slowest = struct.unpack_from("<QQ", frame, off)
        off += 16
        msg = PullReject(iteration, slowest)
    elif tag == TAG_ERROR:
        off = _need(frame, off, 6) - 6
        code, n = struct.unpack_from("<HI", frame, off)
        off += 6
        _need(frame, off, n)
        try:
            detail = frame[off : off + n].decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"error detail is not UTF-8: {e}") from None
        off += n
        msg = ErrorReply(code, detail)
    else:
        raise DecodeError(f"unknown message tag {tag}")
    if off != len(frame):
        raise DecodeError(f"{len(frame) - off} trailing bytes after payload")
    return msg


class InProcessCarrier:
    """Direct method-call carrier; message objects cross a lock, not bytes."""

    def __init__(self, coordinator):
        self._coordinator = coordinator

    def request(self, msg):
        return self._coordinator.handle_message(msg)

    def close(self):
        pass


def _recv_exact(sock, size: int) -> bytes:
    chunks = []
    got = 0
    while got < size:
        chunk = sock.recv(size - got)
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock) -> bytes:
    header = _recv_exact(sock, 4)
    (total,) = struct.unpack("<I", header)
    return header + _recv_exact(sock, total)


class SocketCarrier:
    """One TCP connection per worker, one outstanding request at a time."""

    def __init__(self, host: str, port: int, connect_retries: int = 50, retry_delay: float = 0.1):
        import time

        last = None
        for _ in range(connect_retries):
            try:
                self._sock = socket.create_connection((host, port), timeout=30.0)
                break
            except OSError as e:
                last = e
                time.sleep(retry_delay)
        else:
            raise TransportError(f"cannot reach coordinator at {host}:{port}: {last}")
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def request(self, msg):
        try:
            self._sock.sendall(encode(msg))
            return decode(read_frame(self._sock))
        except OSError as e:
            raise TransportError(str(e)) from e

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class CoordinatorServer:
    """Serves the wire protocol plus a plain-text status listener."""

    def __init__(self, coordinator, host: str = "127.0.0.1", port: int = 0,
                 status_port: int | None = None):
        self._coordinator = coordinator
        self._stop = threading.Event()
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._status_listener = socket.create_server(
            (host, status_port if status_port is not None else 0))
        self.status_port = self._status_listener.getsockname()[1]
        self._threads: list[threading.Thread] = []
        for sock, fn in ((self._listener, self._serve_protocol),
                         (self._status_listener, self._serve_status)):
            sock.settimeout(0.2)
            th = threading.Thread(target=fn, args=(sock,), daemon=True)
            th.start()
            self._threads.append(th)

    def _serve_protocol(self, listener):
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            th = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            th.start()
            self._threads.append(th)

    def _serve_connection(self, conn):
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with conn:
            while not self._stop.is_set():
                try:
                    frame = read_frame(conn)
                except (TransportError, OSError):
                    return
                try:
                    msg = decode(frame)
                except DecodeError:
                    return  # drop the connection on malformed input
                reply = self._coordinator.handle_message(msg)
                try:
                    conn.sendall(encode(reply))
                except OSError:
                    return

    def _serve_status(self, listener):
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                try:
                    conn.sendall(self._coordinator.status_text().encode("utf-8"))
                except OSError:
                    pass

    def stop(self):
        self._stop.set()
        for sock in (self._listener, self._status_listener):
            try:
                sock.close()
            except OSError:
                pass


def fetch_status(host: str, port: int) -> str:
    with socket.create_connection((host, port), timeout=10.0) as sock:
        chunks = []
        while True:
            chunk = sock.recv(4096)
            if not chunk:
                break
            chunks.append(chunk)
    return b"".join(chunks).decode("utf-8")
