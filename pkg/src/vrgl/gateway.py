"""WebSocket mirror of the TCP bridge, plus static file serving for the UI.

Each WebSocket text frame carries exactly one envelope JSON object (the WS
frame boundary replaces the TCP length prefix).  Every WS client is piped
to its own TCP connection on the broker, so pub/sub semantics and ordering
are identical on both transports.  Plain HTTP GETs on the same port serve
the UI's static assets; the WS endpoint lives at /bridge.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct
import threading
from pathlib import Path

from .bridge import CrcError, FrameDecoder, ProtocolError, parse_envelope

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
DEFAULT_WS_PORT = 9764
WS_PATH = "/bridge"
MAX_WS_MESSAGE = 16 * 1024 * 1024

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class WsError(ValueError):
    pass


def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def encode_text_frame(payload: bytes) -> bytes:
    """Server-to-client unmasked text frame."""
    n = len(payload)
    if n < 126:
        header = struct.pack("!BB", 0x81, n)
    elif n < 1 << 16:
        header = struct.pack("!BBH", 0x81, 126, n)
    else:
        header = struct.pack("!BBQ", 0x81, 127, n)
    return header + payload


def encode_close_frame(code: int = 1000) -> bytes:
    return struct.pack("!BBH", 0x88, 2, code)


class _WsReader:
    """Parses masked client frames; yields complete text messages."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = bytearray()
        self._fragments = bytearray()
        self._frag_opcode: int | None = None

    def _need(self, n: int):
        while len(self._buf) < n:
            chunk = self.sock.recv(1 << 16)
            if not chunk:
                raise WsError("connection closed mid-frame")
            self._buf.extend(chunk)

    def next_message(self) -> bytes | None:
        """Returns the next complete text payload, or None on clean close."""
        while True:
            self._need(2)
            b0, b1 = self._buf[0], self._buf[1]
            fin, opcode = b0 & 0x80, b0 & 0x0F
            masked, length = b1 & 0x80, b1 & 0x7F
            offset = 2
            if length == 126:
                self._need(4)
                length = int.from_bytes(self._buf[2:4], "big")
                offset = 4
            elif length == 127:
                self._need(10)
                length = int.from_bytes(self._buf[2:10], "big")
                offset = 10
            if length > MAX_WS_MESSAGE:
                raise WsError("frame too large")
            if not masked:
                raise WsError("client frames must be masked")
            self._need(offset + 4 + length)
            mask = self._buf[offset : offset + 4]
            raw = self._buf[offset + 4 : offset + 4 + length]
            del self._buf[: offset + 4 + length]
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(raw))

            if opcode == 0x8:  # close
                return None
            if opcode == 0x9:  # ping -> pong
                self.sock.sendall(struct.pack("!BB", 0x8A, len(payload)) + payload)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode == 0x2:
                raise WsError("binary frames not allowed")
            if opcode == 0x1 or opcode == 0x0:
                if opcode == 0x1:
                    if self._frag_opcode is not None:
                        raise WsError("nested fragmentation")
                    self._fragments = bytearray(payload)
                    self._frag_opcode = 0x1
                else:
                    if self._frag_opcode is None:
                        raise WsError("continuation without start")
                    self._fragments.extend(payload)
                if fin:
                    msg = bytes(self._fragments)
                    self._fragments = bytearray()
                    self._frag_opcode = None
                    return msg
                continue
            raise WsError(f"unsupported opcode {opcode}")


def _http_response(status: str, body: bytes = b"", content_type: str = "text/plain") -> bytes:
    head = (
        f"HTTP/1.1 {status}\r\n"
        f"Content-Type: {content_type}\r\n"
        f"Content-Length: {len(body)}\r\n"
        "Connection: close\r\n\r\n"
    )
    return head.encode("ascii") + body


class Gateway:
    """HTTP + WebSocket front for a running broker."""

    def __init__(
        self,
        broker_endpoint: tuple[str, int],
        host: str = "127.0.0.1",
        port: int = 0,
        static_dir: str | Path | None = None,
    ):
        self.broker_endpoint = broker_endpoint
        self.host = host
        self._requested_port = port
        self.static_dir = Path(static_dir) if static_dir else None
        self._listener: socket.socket | None = None
        self._running = False
        self.ws_clients = 0

    @property
    def port(self) -> int:
        if self._listener is None:
            raise RuntimeError("gateway not started")
        return self._listener.getsockname()[1]

    def start(self) -> "Gateway":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self._requested_port))
        sock.listen(32)
        self._listener = sock
        self._running = True
        threading.Thread(target=self._accept_loop, name="gateway-accept", daemon=True).start()
        return self

    def stop(self):
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass

    def __enter__(self) -> "Gateway":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self):
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client, args=(sock,), daemon=True).start()

    def _serve_client(self, sock: socket.socket):
        try:
            request = self._read_request(sock)
            if request is None:
                return
            method, path, headers = request
            upgrade = headers.get("upgrade", "").lower() == "websocket"
            if path == WS_PATH and upgrade:
                self._serve_ws(sock, headers)
            elif method == "GET":
                sock.sendall(self._static_response(path))
            else:
                sock.sendall(_http_response("405 Method Not Allowed"))
        except (OSError, WsError, ProtocolError):
            pass
        finally:
            try:
                sock.close()
            except OSError:
                pass

    @staticmethod
    def _read_request(sock: socket.socket):
        data = bytearray()
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                return None
            data.extend(chunk)
            if len(data) > 64 * 1024:
                return None
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head.split("\r\n")
        try:
            method, path, _ = lines[0].split(" ", 2)
        except ValueError:
            return None
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()
        return method, path, headers

    def _static_response(self, path: str) -> bytes:
        if self.static_dir is None:
            return _http_response("404 Not Found", b"no static assets configured")
        rel = path.split("?", 1)[0]
        if rel in ("", "/"):
            rel = "/index.html"
        target = (self.static_dir / rel.lstrip("/")).resolve()
        try:
            target.relative_to(self.static_dir.resolve())
        except ValueError:
            return _http_response("404 Not Found")
        if not target.is_file():
            return _http_response("404 Not Found")
        ctype = CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        return _http_response("200 OK", target.read_bytes(), ctype)

    # -- websocket bridging ----------------------------------------------
    def _serve_ws(self, sock: socket.socket, headers: dict[str, str]):
        key = headers.get("sec-websocket-key")
        if not key:
            sock.sendall(_http_response("400 Bad Request"))
            return
        accept = ws_accept_key(key)
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode("ascii")
        )
        upstream = socket.create_connection(self.broker_endpoint, timeout=5.0)
        upstream.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.ws_clients += 1
        closed = threading.Event()

        def tcp_to_ws():
            decoder = FrameDecoder()
            try:
                while not closed.is_set():
                    chunk = upstream.recv(1 << 16)
                    if not chunk:
                        break
                    for body in decoder.feed(chunk):
                        sock.sendall(encode_text_frame(body))
            except (OSError, ProtocolError):
                pass
            finally:
                closed.set()
                try:
                    sock.sendall(encode_close_frame())
                except OSError:
                    pass

        pump = threading.Thread(target=tcp_to_ws, name="gateway-tcp2ws", daemon=True)
        pump.start()
        reader = _WsReader(sock)
        try:
            while not closed.is_set():
                msg = reader.next_message()
                if msg is None:
                    break
                try:
                    parse_envelope(msg)  # validate before forwarding
                except CrcError:
                    continue  # corrupt payload: drop the frame, keep the client
                upstream.sendall(len(msg).to_bytes(4, "big") + msg)
        except (WsError, ProtocolError, OSError):
            try:
                sock.sendall(encode_close_frame(1002))
            except OSError:
                pass
        finally:
            closed.set()
            self.ws_clients -= 1
            try:
                upstream.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            upstream.close()
