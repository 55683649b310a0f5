import base64
import json
import os
import socket
import struct
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrgl.bridge import (
    Broker,
    BridgeClient,
    CrcError,
    Envelope,
    FrameDecoder,
    ProtocolError,
    StreamStats,
    benchmark_throughput,
    canonical_dumps,
    control_envelope,
    decode_frame,
    encode_frame,
    parse_envelope,
    random_payload,
    topic_matches,
)
from vrgl.gateway import Gateway


def env(topic="/t", seq=0, data=None, type="Test", stamp=12345):
    return Envelope(topic, seq, stamp, type, {} if data is None else data)


json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(min_value=-(2**53), max_value=2**53)
    | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=12,
)


class TestCodec:
    def test_length_field_matches_json_bytes(self):
        e = env(data={})
        frame = encode_frame(e)
        n = int.from_bytes(frame[:4], "big")
        assert n == len(frame) - 4
        assert json.loads(frame[4:]) == e.to_payload()

    def test_round_trip_512kib_payload(self):
        e = env(data={"blob": random_payload(512 * 1024, seed=3)})
        decoded, consumed = decode_frame(encode_frame(e))
        assert decoded == e
        assert consumed == len(encode_frame(e))

    def test_flipped_payload_byte_is_crc_error(self):
        frame = bytearray(encode_frame(env(data={"k": "abcdef"})))
        idx = frame.index(b"abcdef"[:3]) + 1
        frame[idx] ^= 0x01
        with pytest.raises(CrcError):
            decode_frame(bytes(frame))

    def test_missing_key_rejected(self):
        body = canonical_dumps({"topic": "/t", "seq": 0, "stamp_ns": 0, "type": "X", "data": 1}).encode()
        with pytest.raises(ProtocolError, match="envelope keys"):
            parse_envelope(body)

    def test_invalid_utf8_rejected(self):
        with pytest.raises(ProtocolError):
            parse_envelope(b"\xff\xfe{}")

    def test_oversize_frame_rejected(self):
        e = env(data={"blob": "x" * (17 * 1024 * 1024)})
        with pytest.raises(ProtocolError, match="exceeds"):
            encode_frame(e)

    def test_bad_topic_rejected(self):
        with pytest.raises(ProtocolError, match="rooted"):
            Envelope("no-slash", 0, 0, "T", None)

    @settings(max_examples=200, deadline=None)
    @given(json_values, st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
    def test_round_trip_property(self, data, seq, stamp):
        e = Envelope("/prop/test", seq, stamp, "Prop", data)
        decoded, _ = decode_frame(encode_frame(e))
        assert decoded == e

    @settings(max_examples=50, deadline=None)
    @given(st.lists(json_values, min_size=1, max_size=6), st.randoms())
    def test_rechunked_stream_decodes_identically(self, datas, rnd):
        envs = [Envelope("/s", i, i, "S", d) for i, d in enumerate(datas)]
        stream = b"".join(encode_frame(e) for e in envs)
        decoder = FrameDecoder()
        out = []
        i = 0
        while i < len(stream):
            j = min(len(stream), i + rnd.randint(1, 7))
            out.extend(decoder.feed(stream[i:j]))
            i = j
        assert [parse_envelope(b) for b in out] == envs
        assert decoder.pending == 0

    def test_single_byte_corruptions_detected(self):
        e = env(data={"s": "hello world", "n": 42})
        frame = bytearray(encode_frame(e))
        body = frame[4:]
        start = bytes(body).index(b'"data"')
        dstart = 4 + start
        for i in range(dstart, len(frame)):
            corrupted = bytearray(frame)
            corrupted[i] ^= 0x20
            try:
                decoded, _ = decode_frame(bytes(corrupted))
            except (ProtocolError, CrcError):
                continue
            # any survivor must not silently change the data
            assert decoded.data == e.data


class TestTopics:
    def test_exact_and_wildcard(self):
        assert topic_matches("/agent/h1/signal", "/agent/h1/signal")
        assert topic_matches("/agent/*/signal", "/agent/h2/signal")
        assert not topic_matches("/agent/*/signal", "/agent/h2/odom")
        assert not topic_matches("/agent/*", "/agent/h2/odom")


class TestBroker:
    def test_routing_delivers_identical_envelope(self):
        with Broker() as broker:
            with BridgeClient(port=broker.port) as a, BridgeClient(port=broker.port) as b:
                b.subscribe("/agent1/odom")
                b.ping()  # barrier: subscription processed
                a.advertise("/agent1/odom", "Odometry")
                sent = a.publish("/agent1/odom", "Odometry", {"x": 1.5, "tick": 7})
                got = b.recv(timeout=5)
                assert got == sent

    def test_two_publishers_each_ordered(self):
        with Broker() as broker:
            with BridgeClient(port=broker.port) as a, BridgeClient(port=broker.port) as b, BridgeClient(
                port=broker.port
            ) as sub:
                sub.subscribe("/stream/a")
                sub.subscribe("/stream/b")
                sub.ping()
                for i in range(50):
                    a.publish("/stream/a", "S", {"i": i})
                    b.publish("/stream/b", "S", {"i": i})
                seen = {"/stream/a": [], "/stream/b": []}
                for _ in range(100):
                    e = sub.recv(timeout=5)
                    assert e is not None
                    seen[e.topic].append(e.seq)
                assert seen["/stream/a"] == list(range(50))
                assert seen["/stream/b"] == list(range(50))

    def test_publish_without_subscribers_counted(self):
        with Broker() as broker:
            with BridgeClient(port=broker.port) as a:
                a.publish("/nowhere", "X", 1)
                a.ping()
            assert broker.stats.dropped_no_subscriber == 1

    def test_ping_pong_echoes_stamp(self):
        with Broker() as broker:
            with BridgeClient(port=broker.port) as a:
                rtt = a.ping()
                assert rtt < 1.0

    def test_wildcard_subscription(self):
        with Broker() as broker:
            with BridgeClient(port=broker.port) as pub, BridgeClient(port=broker.port) as sub:
                sub.subscribe("/agent/*/signal")
                sub.ping()
                pub.publish("/agent/h1/signal", "SocialSignal", {"kind": "wave"})
                got = sub.recv(timeout=5)
                assert got is not None and got.topic == "/agent/h1/signal"

    def test_slow_consumer_disconnected(self, monkeypatch):
        import vrgl.bridge as br

        monkeypatch.setattr(br, "QUEUE_LIMIT", 64 * 1024)
        with Broker() as broker:
            raw = socket.create_connection(("127.0.0.1", broker.port))
            raw.sendall(encode_frame(control_envelope("SUBSCRIBE", topic="/flood")))
            time.sleep(0.1)
            blob = "z" * 65536
            with BridgeClient(port=broker.port) as pub:
                for i in range(200):  # far beyond socket buffers + queue bound
                    pub.publish("/flood", "B", {"i": i, "blob": blob})
            deadline = time.time() + 5
            while time.time() < deadline and broker._connections:
                time.sleep(0.05)
            assert not broker._connections  # flooded subscriber force-dropped
            raw.close()

    def test_fanout_counts(self):
        with Broker() as broker:
            subs = [BridgeClient(port=broker.port) for _ in range(3)]
            for s in subs:
                s.subscribe("/fan")
                s.ping()
            with BridgeClient(port=broker.port) as pub:
                for i in range(10):
                    pub.publish("/fan", "F", i)
            for s in subs:
                got = [s.recv(timeout=5) for _ in range(10)]
                assert [e.seq for e in got] == list(range(10))
                s.close()

    def test_protocol_violation_closes_only_that_connection(self):
        with Broker() as broker:
            bad = socket.create_connection(("127.0.0.1", broker.port))
            bad.sendall((2**30).to_bytes(4, "big") + b"xx")
            with BridgeClient(port=broker.port) as ok_client:
                assert ok_client.ping() < 1.0
            deadline = time.time() + 2
            while time.time() < deadline and broker.stats.protocol_errors == 0:
                time.sleep(0.01)
            assert broker.stats.protocol_errors == 1
            bad.close()


class TestBenchmark:
    def test_small_benchmark_clean(self):
        with Broker() as broker:
            stats = benchmark_throughput(1024, 50, ("127.0.0.1", broker.port))
            assert stats.messages_sent == 50
            assert stats.messages_received == 50
            assert stats.loss == 0 and stats.out_of_order == 0 and stats.crc_failures == 0
            assert stats.throughput > 0

    def test_zero_count(self):
        stats = benchmark_throughput(1024, 0, ("127.0.0.1", 1))
        assert stats == StreamStats()

    def test_single_empty_payload(self):
        with Broker() as broker:
            stats = benchmark_throughput(0, 1, ("127.0.0.1", broker.port))
            assert stats.messages_received == 1
            assert stats.throughput >= 0


class WsTestClient:
    def __init__(self, port, path="/bridge", host="127.0.0.1"):
        self.sock = socket.create_connection((host, port), timeout=5)
        key = base64.b64encode(os.urandom(16)).decode()
        self.sock.sendall(
            (
                f"GET {path} HTTP/1.1\r\nHost: {host}\r\nUpgrade: websocket\r\n"
                f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
            ).encode()
        )
        buf = b""
        while b"\r\n\r\n" not in buf:
            buf += self.sock.recv(4096)
        status = buf.split(b"\r\n", 1)[0]
        assert b"101" in status, status
        self._buf = bytearray(buf.split(b"\r\n\r\n", 1)[1])

    def _send_frame(self, opcode, payload: bytes):
        mask = os.urandom(4)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        n = len(payload)
        if n < 126:
            head = struct.pack("!BB", 0x80 | opcode, 0x80 | n)
        elif n < 1 << 16:
            head = struct.pack("!BBH", 0x80 | opcode, 0xFE, n)
        else:
            head = struct.pack("!BBQ", 0x80 | opcode, 0xFF, n)
        self.sock.sendall(head + mask + masked)

    def send_text(self, payload: bytes):
        self._send_frame(0x1, payload)

    def send_binary(self, payload: bytes):
        self._send_frame(0x2, payload)

    def send_envelope(self, e: Envelope):
        self.send_text(canonical_dumps(e.to_payload()).encode())

    def _need(self, n):
        while len(self._buf) < n:
            chunk = self.sock.recv(1 << 16)
            if not chunk:
                raise ConnectionError("closed")
            self._buf.extend(chunk)

    def recv_message(self, timeout=5.0):
        self.sock.settimeout(timeout)
        self._need(2)
        b0, b1 = self._buf[0], self._buf[1]
        opcode, length = b0 & 0x0F, b1 & 0x7F
        offset = 2
        if length == 126:
            self._need(4)
            length = int.from_bytes(self._buf[2:4], "big")
            offset = 4
        elif length == 127:
            self._need(10)
            length = int.from_bytes(self._buf[2:10], "big")
            offset = 10
        self._need(offset + length)
        payload = bytes(self._buf[offset : offset + length])
        del self._buf[: offset + length]
        if opcode == 0x8:
            return None
        return payload

    def close(self):
        self.sock.close()


class TestGateway:
    def test_tcp_to_ws_mirroring(self):
        with Broker() as broker:
            with Gateway(("127.0.0.1", broker.port)) as gw:
                ws = WsTestClient(gw.port)
                ws.send_envelope(control_envelope("SUBSCRIBE", topic="/scene/snapshot"))
                time.sleep(0.1)
                with BridgeClient(port=broker.port) as sim:
                    sent = sim.publish("/scene/snapshot", "SceneSnapshot", {"tick": 1})
                msg = ws.recv_message()
                assert msg is not None
                assert parse_envelope(msg) == sent
                ws.close()

    def test_ws_to_tcp_mirroring(self):
        with Broker() as broker:
            with Gateway(("127.0.0.1", broker.port)) as gw:
                with BridgeClient(port=broker.port) as sub:
                    sub.subscribe("/agent1/cmd")
                    sub.ping()
                    ws = WsTestClient(gw.port)
                    cmd = Envelope("/agent1/cmd", 0, 99, "Cmd", {"v": 1.0, "omega": 0.0})
                    ws.send_envelope(cmd)
                    got = sub.recv(timeout=5)
                    assert got == cmd
                    ws.close()

    def test_binary_frame_closes_connection(self):
        with Broker() as broker:
            with Gateway(("127.0.0.1", broker.port)) as gw:
                ws = WsTestClient(gw.port)
                ws.send_binary(b"\x00\x01")
                msg = ws.recv_message()
                assert msg is None  # close frame

    def test_static_serving(self, tmp_path):
        (tmp_path / "index.html").write_text("<html>ui</html>")
        with Broker() as broker:
            with Gateway(("127.0.0.1", broker.port), static_dir=tmp_path) as gw:
                s = socket.create_connection(("127.0.0.1", gw.port))
                s.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
                buf = b""
                while b"</html>" not in buf:
                    chunk = s.recv(4096)
                    if not chunk:
                        break
                    buf += chunk
                assert b"200 OK" in buf and b"<html>ui</html>" in buf
                s.close()

    def test_path_traversal_blocked(self, tmp_path):
        (tmp_path / "index.html").write_text("x")
        with Broker() as broker:
            with Gateway(("127.0.0.1", broker.port), static_dir=tmp_path) as gw:
                s = socket.create_connection(("127.0.0.1", gw.port))
                s.sendall(b"GET /../../etc/passwd HTTP/1.1\r\nHost: x\r\n\r\n")
                buf = s.recv(65536)
                assert b"404" in buf
                s.close()
