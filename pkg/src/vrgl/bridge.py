"""JSON-over-TCP topic bridge: framed envelopes, pub/sub broker, benchmark.

Wire format: each frame is a 4-byte big-endian payload length followed by a
UTF-8 JSON object with exactly the envelope keys.  The crc32 field is the
IEEE CRC of the payload's `data` value serialized in canonical form (sorted
keys, minimal separators), so any peer can re-verify integrity per hop.
"""

from __future__ import annotations

import json
import socket
import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

MAX_FRAME = 16 * 1024 * 1024
QUEUE_LIMIT = 64 * 1024 * 1024
DEFAULT_PORT = 9763
CONTROL_TYPE = "Control"
CONTROL_OPS = ("ADVERTISE", "UNADVERTISE", "SUBSCRIBE", "UNSUBSCRIBE", "PING", "PONG")

ENVELOPE_KEYS = frozenset({"topic", "seq", "stamp_ns", "type", "crc32", "data"})
U64 = 2**64
U32 = 2**32


class ProtocolError(ValueError):
    """Connection-fatal wire protocol violation."""


class CrcError(ProtocolError):
    """Per-frame payload corruption; the frame is dropped and counted."""


def canonical_dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def data_crc(data: Any) -> int:
    return zlib.crc32(canonical_dumps(data).encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int
    stamp_ns: int
    type: str
    data: Any
    crc32: int = -1  # computed from data when left unset

    def __post_init__(self):
        if self.crc32 == -1:
            object.__setattr__(self, "crc32", data_crc(self.data))
        if not (0 <= self.seq < U64 and 0 <= self.stamp_ns < U64):
            raise ProtocolError("seq/stamp_ns must fit in uint64")
        if not 0 <= self.crc32 < U32:
            raise ProtocolError("crc32 must fit in uint32")
        if self.topic != "" and not self.topic.startswith("/"):
            raise ProtocolError(f"topic must be empty or /-rooted: {self.topic!r}")

    def to_payload(self) -> dict:
        return {
            "topic": self.topic,
            "seq": self.seq,
            "stamp_ns": self.stamp_ns,
            "type": self.type,
            "crc32": self.crc32,
            "data": self.data,
        }


def encode_frame(env: Envelope) -> bytes:
    body = canonical_dumps(env.to_payload()).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return len(body).to_bytes(4, "big") + body


def parse_envelope(body: bytes) -> Envelope:
    """Parse one frame payload; raises CrcError on data corruption."""
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"invalid frame payload: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != ENVELOPE_KEYS:
        raise ProtocolError("frame payload must carry exactly the envelope keys")
    env = Envelope(
        topic=obj["topic"],
        seq=obj["seq"],
        stamp_ns=obj["stamp_ns"],
        type=obj["type"],
        data=obj["data"],
        crc32=obj["crc32"],
    )
    if data_crc(env.data) != env.crc32:
        raise CrcError(f"crc mismatch on topic {env.topic!r} seq {env.seq}")
    return env


def decode_frame(data: bytes) -> tuple[Envelope, int]:
    """Decode one complete frame from the head of `data`; returns (envelope, bytes consumed)."""
    if len(data) < 4:
        raise ProtocolError("incomplete length prefix")
    n = int.from_bytes(data[:4], "big")
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds {MAX_FRAME}")
    if len(data) < 4 + n:
        raise ProtocolError("incomplete frame")
    return parse_envelope(data[4 : 4 + n]), 4 + n


class FrameDecoder:
    """Incremental splitter: feed arbitrary chunks, get complete frame payloads."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[bytes]:
        self._buf.extend(chunk)
        out = []
        while True:
            if len(self._buf) < 4:
                break
            n = int.from_bytes(self._buf[:4], "big")
            if n > MAX_FRAME:
                raise ProtocolError(f"frame of {n} bytes exceeds {MAX_FRAME}")
            if len(self._buf) < 4 + n:
                break
            out.append(bytes(self._buf[4 : 4 + n]))
            del self._buf[: 4 + n]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def control_envelope(op: str, topic: str | None = None, type: str | None = None, stamp_ns: int | None = None, seq: int = 0) -> Envelope:
    if op not in CONTROL_OPS:
        raise ProtocolError(f"unknown control op {op!r}")
    data: dict[str, Any] = {"op": op}
    if topic is not None:
        data["topic"] = topic
    if type is not None:
        data["type"] = type
    return Envelope("", seq, time.time_ns() if stamp_ns is None else stamp_ns, CONTROL_TYPE, data)


def topic_matches(pattern: str, topic: str) -> bool:
    """Segment-wise match; `*` matches exactly one segment."""
    if pattern == topic:
        return True
    ps, ts = pattern.split("/"), topic.split("/")
    if len(ps) != len(ts):
        return False
    return all(p == "*" or p == t for p, t in zip(ps, ts))


@dataclass
class StreamStats:
    messages_sent: int = 0
    messages_received: int = 0
    bytes: int = 0
    loss: int = 0
    out_of_order: int = 0
    crc_failures: int = 0
    elapsed: float = 0.0
    throughput: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "messages_sent", "messages_received", "bytes", "loss",
            "out_of_order", "crc_failures", "elapsed", "throughput", "error",
        )}


@dataclass
class BrokerStats:
    published: int = 0
    delivered: int = 0
    dropped_no_subscriber: int = 0
    crc_failures: int = 0
    protocol_errors: int = 0
    pings: int = 0


class _Connection:
    def __init__(self, broker: "Broker", sock: socket.socket, peer: str):
        self.broker = broker
        self.sock = sock
        self.peer = peer
        self.subscriptions: set[str] = set()
        self.advertised: dict[str, str] = {}
        self._queue: deque[bytes] = deque()
        self._queued_bytes = 0
        self._cond = threading.Condition()
        self._closed = False
        self._seq = 0

    def start(self):
        threading.Thread(target=self._read_loop, name=f"bridge-read-{self.peer}", daemon=True).start()
        threading.Thread(target=self._write_loop, name=f"bridge-write-{self.peer}", daemon=True).start()

    def enqueue(self, frame: bytes) -> None:
        with self._cond:
            if self._closed:
                return
            overflow = self._queued_bytes + len(frame) > QUEUE_LIMIT
            if overflow:
                self._closed = True  # slow consumer: disconnect, per backpressure policy
                self._queue.clear()
                self._queued_bytes = 0
                self._cond.notify_all()
            else:
                self._queue.append(frame)
                self._queued_bytes += len(frame)
                self._cond.notify()
        if overflow:
            self.close()

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self.broker._drop_connection(self)

    def _read_loop(self):
        decoder = FrameDecoder()
        try:
            while not self._closed:
                chunk = self.sock.recv(1 << 16)
                if not chunk:
                    break
                for body in decoder.feed(chunk):
                    self._handle_body(body)
        except OSError:
            pass
        except ProtocolError:
            self.broker.stats.protocol_errors += 1
        finally:
            self.close()

    def _handle_body(self, body: bytes):
        try:
            env = parse_envelope(body)
        except CrcError:
            self.broker.stats.crc_failures += 1
            return
        if env.topic == "" and env.type == CONTROL_TYPE:
            self._handle_control(env)
        else:
            self.broker._route(env.topic, len(body).to_bytes(4, "big") + body)

    def _handle_control(self, env: Envelope):
        data = env.data if isinstance(env.data, dict) else {}
        op = data.get("op")
        if op in ("SUBSCRIBE", "UNSUBSCRIBE", "ADVERTISE", "UNADVERTISE") and "topic" not in data:
            raise ProtocolError(f"control op {op} requires a topic")
        if op == "SUBSCRIBE":
            with self.broker._lock:
                self.subscriptions.add(str(data["topic"]))
        elif op == "UNSUBSCRIBE":
            with self.broker._lock:
                self.subscriptions.discard(str(data["topic"]))
        elif op == "ADVERTISE":
            self.advertised[str(data["topic"])] = str(data.get("type", ""))
        elif op == "UNADVERTISE":
            self.advertised.pop(str(data.get("topic")), None)
        elif op == "PING":
            self.broker.stats.pings += 1
            self._seq += 1
            pong = control_envelope("PONG", stamp_ns=env.stamp_ns, seq=self._seq)
            self.enqueue(encode_frame(pong))
        elif op == "PONG":
            pass
        else:
            raise ProtocolError(f"unknown control op {op!r}")

    def _write_loop(self):
        try:
            while True:
                with self._cond:
                    while not self._queue and not self._closed:
                        self._cond.wait()
                    if self._closed:
                        return
                    frame = self._queue.popleft()
                    self._queued_bytes -= len(frame)
                self.sock.sendall(frame)
        except OSError:
            pass
        finally:
            self.close()


class Broker:
    """Topic pub/sub broker over length-prefixed JSON frames.

    Each connection is serviced independently; routing preserves
    per-publisher order because a publisher's frames are enqueued to every
    subscriber by the single thread reading that publisher's socket.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self._requested_port = port
        self.stats = BrokerStats()
        self._lock = threading.Lock()
        self._connections: set[_Connection] = set()
        self._listener: socket.socket | None = None
        self._running = False

    @property
    def port(self) -> int:
        if self._listener is None:
            raise RuntimeError("broker not started")
        return self._listener.getsockname()[1]

    def start(self) -> "Broker":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self._requested_port))
        sock.listen(64)
        self._listener = sock
        self._running = True
        threading.Thread(target=self._accept_loop, name="bridge-accept", daemon=True).start()
        return self

    def stop(self):
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._connections)
        for c in conns:
            c.close()

    def __enter__(self) -> "Broker":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self):
        while self._running:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(self, sock, f"{addr[0]}:{addr[1]}")
            with self._lock:
                self._connections.add(conn)
            conn.start()

    def _drop_connection(self, conn: _Connection):
        with self._lock:
            self._connections.discard(conn)

    def _route(self, topic: str, frame: bytes):
        self.stats.published += 1
        with self._lock:
            targets = [c for c in self._connections if any(topic_matches(p, topic) for p in c.subscriptions)]
        if not targets:
            self.stats.dropped_no_subscriber += 1
            return
        for c in targets:
            c.enqueue(frame)
            self.stats.delivered += 1


class BridgeClient:
    """Convenience peer: publish with per-topic sequence numbers, subscribe with handlers."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, connect_timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock.settimeout(None)
        self._seq: dict[str, int] = {}
        self._ctl_seq = 0
        self._send_lock = threading.Lock()
        self._inbox: deque[Envelope] = deque()
        self._inbox_cond = threading.Condition()
        self._handlers: list[tuple[str, Callable[[Envelope], None]]] = []
        self._pong: threading.Event = threading.Event()
        self._pong_stamp = 0
        self.crc_failures = 0
        self.closed = False
        threading.Thread(target=self._read_loop, name="bridge-client-read", daemon=True).start()

    # -- outgoing -------------------------------------------------------
    def _send(self, env: Envelope):
        frame = encode_frame(env)
        with self._send_lock:
            self.sock.sendall(frame)

    def _control(self, op: str, **kw):
        self._ctl_seq += 1
        self._send(control_envelope(op, seq=self._ctl_seq, **kw))

    def advertise(self, topic: str, type: str):
        self._control("ADVERTISE", topic=topic, type=type)

    def unadvertise(self, topic: str):
        self._control("UNADVERTISE", topic=topic)

    def subscribe(self, topic: str, handler: Callable[[Envelope], None] | None = None):
        if handler is not None:
            self._handlers.append((topic, handler))
        self._control("SUBSCRIBE", topic=topic)

    def unsubscribe(self, topic: str):
        self._handlers = [(t, h) for t, h in self._handlers if t != topic]
        self._control("UNSUBSCRIBE", topic=topic)

    def publish(self, topic: str, type: str, data: Any, stamp_ns: int | None = None) -> Envelope:
        seq = self._seq.get(topic, 0)
        self._seq[topic] = seq + 1
        env = Envelope(topic, seq, time.time_ns() if stamp_ns is None else stamp_ns, type, data)
        self._send(env)
        return env

    def ping(self, timeout: float = 5.0) -> float:
        """Round-trip time in seconds via PING/PONG."""
        self._pong.clear()
        t0 = time.perf_counter()
        self._control("PING", stamp_ns=time.time_ns())
        if not self._pong.wait(timeout):
            raise TimeoutError("no PONG from broker")
        return time.perf_counter() - t0

    # -- incoming -------------------------------------------------------
    def _read_loop(self):
        decoder = FrameDecoder()
        try:
            while True:
                chunk = self.sock.recv(1 << 16)
                if not chunk:
                    break
                for body in decoder.feed(chunk):
                    try:
                        env = parse_envelope(body)
                    except CrcError:
                        self.crc_failures += 1
                        continue
                    self._dispatch(env)
        except (OSError, ProtocolError):
            pass
        finally:
            self.closed = True
            with self._inbox_cond:
                self._inbox_cond.notify_all()

    def _dispatch(self, env: Envelope):
        if env.topic == "" and env.type == CONTROL_TYPE:
            if isinstance(env.data, dict) and env.data.get("op") == "PONG":
                self._pong_stamp = env.stamp_ns
                self._pong.set()
            return
        for pattern, handler in self._handlers:
            if topic_matches(pattern, env.topic):
                handler(env)
        with self._inbox_cond:
            self._inbox.append(env)
            self._inbox_cond.notify()

    def recv(self, timeout: float | None = 5.0) -> Envelope | None:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._inbox_cond:
            while not self._inbox:
                if self.closed:
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._inbox_cond.wait(remaining)
            return self._inbox.popleft()

    def drain(self) -> list[Envelope]:
        with self._inbox_cond:
            out = list(self._inbox)
            self._inbox.clear()
        return out

    def close(self):
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def random_payload(n_bytes: int, seed: int = 0) -> str:
    """ASCII payload of exactly n_bytes, deterministic in seed."""
    import numpy as np

    rng = np.random.default_rng(seed)
    return rng.integers(97, 123, size=n_bytes, dtype=np.uint8).tobytes().decode("ascii")


def benchmark_throughput(
    payload_bytes: int,
    count: int,
    endpoint: tuple[str, int],
    topic: str = "/bench",
    seed: int = 0,
) -> StreamStats:
    """Publish `count` random payloads through a broker and verify the stream.

    The subscriber drains its socket on a dedicated thread (raw frames only)
    so parsing never backpressures the broker, then verifies CRC and
    sequence order.
    """
    stats = StreamStats()
    if count == 0:
        return stats
    host, port = endpoint

    bodies: list[bytes] = []
    done = threading.Event()

    sub_sock = socket.create_connection((host, port), timeout=5.0)
    sub_sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sub_sock.sendall(encode_frame(control_envelope("SUBSCRIBE", topic=topic)))

    def drain():
        decoder = FrameDecoder()
        try:
            while len(bodies) < count:
                chunk = sub_sock.recv(1 << 20)
                if not chunk:
                    break
                bodies.extend(decoder.feed(chunk))
        except OSError:
            pass
        done.set()

    reader = threading.Thread(target=drain, name="bench-drain", daemon=True)
    reader.start()
    time.sleep(0.05)  # let the SUBSCRIBE land before publishing

    payload = random_payload(payload_bytes, seed)
    t0 = time.perf_counter()
    try:
        with BridgeClient(host, port) as pub:
            pub.advertise(topic, "Bench")
            for i in range(count):
                pub.publish(topic, "Bench", {"i": i, "blob": payload})
                stats.messages_sent += 1
    except OSError as exc:
        stats.error = f"publisher connection lost: {exc}"
    if not done.wait(timeout=max(60.0, 0.1 * count)):
        stats.error = stats.error or "timed out waiting for delivery"
    stats.elapsed = time.perf_counter() - t0
    sub_sock.close()

    expected_seq = 0
    for body in bodies:
        try:
            env = parse_envelope(body)
        except CrcError:
            stats.crc_failures += 1
            continue
        if env.topic != topic:
            continue
        stats.messages_received += 1
        stats.bytes += payload_bytes
        if env.seq > expected_seq:
            stats.loss += env.seq - expected_seq
            expected_seq = env.seq + 1
        elif env.seq < expected_seq:
            stats.out_of_order += 1
        else:
            expected_seq = env.seq + 1
    stats.loss += max(0, count - expected_seq)
    stats.throughput = stats.bytes / stats.elapsed if stats.elapsed > 0 else 0.0
    return stats
