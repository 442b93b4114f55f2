"""Browser-facing bridge: a small WebSocket (RFC 6455) server, stdlib only.

`serve_console` hosts the live room: a real-time session (netem links, arm,
camera, detector) on one loop thread, with each browser connection joined as
a participant. Text frames carry the canonical JSON control/ack payloads,
binary frames carry encoded detection frames, and a hello message gives the
client the loop clock so display latency is measured against one time base.
Non-upgrade HTTP requests serve the operator console's static files.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import queue
import socket
import socketserver
import struct
import threading

from .actuator import AckMessage, CommandDecodeError, ControlMessage
from .clock import EventLoop
from .config import ScenarioConfig
from .session import SessionService

log = logging.getLogger("teleosim.serve")

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
OP_TEXT, OP_BINARY, OP_CLOSE, OP_PING, OP_PONG = 0x1, 0x2, 0x8, 0x9, 0xA

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
}


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf += chunk
    return buf


def read_ws_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    head = _recv_exact(sock, 2)
    if head is None:
        return None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        ext = _recv_exact(sock, 2)
        if ext is None:
            return None
        (length,) = struct.unpack(">H", ext)
    elif length == 127:
        ext = _recv_exact(sock, 8)
        if ext is None:
            return None
        (length,) = struct.unpack(">Q", ext)
    mask = b"\x00\x00\x00\x00"
    if masked:
        mask = _recv_exact(sock, 4)
        if mask is None:
            return None
    payload = _recv_exact(sock, length) if length else b""
    if length and payload is None:
        return None
    if masked:
        payload = bytes(b ^ mask[i & 3] for i, b in enumerate(payload))
    return opcode, payload


def ws_frame(opcode: int, payload: bytes) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 65536:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def _parse_http_request(sock: socket.socket) -> tuple[str, str, dict[str, str]] | None:
    data = b""
    while b"\r\n\r\n" not in data:
        try:
            chunk = sock.recv(4096)
        except OSError:
            return None
        if not chunk:
            return None
        data += chunk
        if len(data) > 65536:
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
            key, value = line.split(":", 1)
            headers[key.strip().lower()] = value.strip()
    return method, path, headers


def _upgrade_response(key: str) -> bytes:
    accept = base64.b64encode(
        hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
    return ("HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode()


def _static_response(static_dir: str | None, path: str) -> bytes:
    if path == "/":
        path = "/index.html"
    candidate = None
    if static_dir:
        candidate = os.path.realpath(os.path.join(static_dir, path.lstrip("/")))
        if not candidate.startswith(os.path.realpath(static_dir)):
            candidate = None
    if candidate and os.path.isfile(candidate):
        with open(candidate, "rb") as fh:
            body = fh.read()
        ctype = CONTENT_TYPES.get(os.path.splitext(candidate)[1], "application/octet-stream")
        head = (f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n")
        return head.encode() + body
    body = b"teleosim console assets not found; build the frontend first\n"
    return (b"HTTP/1.1 404 Not Found\r\nContent-Type: text/plain\r\n"
            b"Content-Length: " + str(len(body)).encode() + b"\r\n"
            b"Connection: close\r\n\r\n" + body)


class _ConsoleSession:
    """One browser connection: participant join, seq arbitration, pumps."""

    def __init__(self, service: SessionService, room_id: str, sock: socket.socket,
                 participant_id: str):
        self.service = service
        self.room = service.room(room_id)
        self.loop = service.loop
        self.sock = sock
        self.participant_id = participant_id
        self.outbox: queue.Queue[bytes | None] = queue.Queue(maxsize=256)
        self.seq_map: dict[int, int] = {}  # room seq -> console seq

    def start(self) -> None:
        ready = threading.Event()
        holder = {}

        def join() -> None:
            part = self.room.join(self.participant_id)
            part.frame_callbacks.append(self._on_frame)
            part.ack_callbacks.append(self._on_ack)
            holder["part"] = part
            ready.set()

        self.loop.post(join)
        ready.wait()
        self.part = holder["part"]
        hello = json.dumps({"type": "hello", "now_us": self.loop.now_us(),
                            "room": self.room.room_id, "arm": self.room.arm_id,
                            "participant": self.participant_id,
                            "route": self.room.route})
        self._enqueue(ws_frame(OP_TEXT, hello.encode()))
        threading.Thread(target=self._writer, daemon=True).start()

    # loop thread -> socket
    def _on_frame(self, frame, shown_at_us: int) -> None:
        from .perception import encode_frame
        self._enqueue(ws_frame(OP_BINARY, encode_frame(frame)))

    def _on_ack(self, ack: AckMessage) -> None:
        console_seq = self.seq_map.pop(ack.seq, None)
        payload = ack.to_json()
        if console_seq is not None:
            obj = json.loads(payload)
            obj["seq"] = console_seq
            payload = json.dumps(obj, separators=(",", ":")).encode()
        self._enqueue(ws_frame(OP_TEXT, payload))

    def _enqueue(self, data: bytes) -> None:
        try:
            self.outbox.put_nowait(data)
        except queue.Full:
            log.warning("console %s: outbox full, dropping", self.participant_id)

    def _writer(self) -> None:
        while True:
            data = self.outbox.get()
            if data is None:
                return
            try:
                self.sock.sendall(data)
            except OSError:
                return

    # socket -> loop thread
    def handle_text(self, payload: bytes) -> None:
        try:
            obj = json.loads(payload.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return
        if "verb" in obj:
            def run_verb() -> None:
                response = self.service.handle_verb(payload)
                self._enqueue(ws_frame(OP_TEXT, response))
            self.loop.post(run_verb)
        elif "joint" in obj:
            try:
                cmd = ControlMessage.from_json(payload)
            except CommandDecodeError:
                return

            def route() -> None:
                room_seq = self.room.next_seq()
                self.seq_map[room_seq] = cmd.seq
                remapped = ControlMessage(room_seq, cmd.joint, cmd.target_deg,
                                          self.loop.now_us(), cmd.version)
                self.room.route_control(self.participant_id, remapped)
            self.loop.post(route)

    def close(self) -> None:
        self.outbox.put(None)

        def leave() -> None:
            try:
                self.room.leave(self.participant_id)
            except Exception:
                pass
        self.loop.post(leave)


def serve_console(cfg: ScenarioConfig, host: str = "127.0.0.1", port: int = 8765,
                  room_id: str = "desk", arm_id: str = "arm1",
                  static_dir: str | None = None,
                  ready_event: threading.Event | None = None) -> None:
    """Blocking live server: real-time session + WebSocket/HTTP frontend."""
    loop = EventLoop(realtime=True)
    service = SessionService(loop, cfg)
    service.create_room(room_id, arm_id, cfg.route, start_video=True)
    threading.Thread(target=loop.run_realtime, daemon=True).start()
    counter = {"n": 0}

    class Handler(socketserver.BaseRequestHandler):
        def handle(self) -> None:
            parsed = _parse_http_request(self.request)
            if parsed is None:
                return
            _, path, headers = parsed
            if headers.get("upgrade", "").lower() != "websocket":
                try:
                    self.request.sendall(_static_response(static_dir, path))
                except OSError:
                    pass
                return
            key = headers.get("sec-websocket-key", "")
            self.request.sendall(_upgrade_response(key))
            counter["n"] += 1
            session = _ConsoleSession(service, room_id, self.request,
                                      f"op{counter['n']}")
            session.start()
            log.info("console %s connected from %s", session.participant_id,
                     self.client_address)
            try:
                while True:
                    frame = read_ws_frame(self.request)
                    if frame is None:
                        break
                    opcode, payload = frame
                    if opcode == OP_CLOSE:
                        break
                    if opcode == OP_PING:
                        session._enqueue(ws_frame(OP_PONG, payload))
                    elif opcode == OP_TEXT:
                        session.handle_text(payload)
            finally:
                session.close()
                log.info("console %s disconnected", session.participant_id)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host, port), Handler) as server:
        log.info("console server on http://%s:%s (room %s, route %s)",
                 host, port, room_id, cfg.route)
        if ready_event is not None:
            ready_event.set()
        server.serve_forever()
