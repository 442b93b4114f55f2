"""Ordered reliable stream transport over lossy datagram links.

Models a socket-upgrade style protocol: a fixed 64/32-byte handshake, then
masked frames. Delivery is exactly-once and globally ordered; a lost segment
is retransmitted after a fixed timeout and blocks every later message until
it lands (head-of-line blocking), which is the latency cost this transport
pays relative to the pub/sub path.

Frame layout: byte0 = 0x80 | opcode, byte1 = 0x80 | len7 (126 marks a 2-byte
extended length), then a 4-byte key, then the payload XOR-masked by the key.
The key doubles as the segment sequence number (data) or cumulative ack.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from typing import Callable

from ..clock import EventLoop, Handle

log = logging.getLogger("teleosim.stream")

HS_REQUEST_MAGIC = b"STRMOPEN"
HS_RESPONSE_MAGIC = b"STRMACPT"
HS_REQUEST_LEN = 64
HS_RESPONSE_LEN = 32
OP_DATA = 0x2
OP_ACK = 0xA
MAX_STREAM_PAYLOAD = 65535


class StreamClosedError(RuntimeError):
    pass


class StreamFrameError(ValueError):
    pass


def stream_wire_size(payload_len: int) -> int:
    """Bytes on the wire for one data message of the given payload size."""
    return payload_len + 6 + (2 if payload_len > 125 else 0)


def _mask(payload: bytes, key: bytes) -> bytes:
    return bytes(b ^ key[i & 3] for i, b in enumerate(payload))


def encode_frame(opcode: int, key_value: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_STREAM_PAYLOAD:
        raise StreamFrameError(f"payload too long for stream frame: {len(payload)}")
    head = bytes([0x80 | opcode])
    if len(payload) > 125:
        head += bytes([0x80 | 126]) + struct.pack(">H", len(payload))
    else:
        head += bytes([0x80 | len(payload)])
    key = struct.pack(">I", key_value & 0xFFFFFFFF)
    return head + key + _mask(payload, key)


def decode_frame(data: bytes) -> tuple[int, int, bytes]:
    """Returns (opcode, key_value, payload)."""
    if len(data) < 6:
        raise StreamFrameError("short frame")
    opcode = data[0] & 0x0F
    if not data[0] & 0x80:
        raise StreamFrameError("FIN bit not set")
    if not data[1] & 0x80:
        raise StreamFrameError("mask bit not set")
    length = data[1] & 0x7F
    off = 2
    if length == 126:
        if len(data) < 8:
            raise StreamFrameError("short extended-length frame")
        (length,) = struct.unpack_from(">H", data, 2)
        off = 4
    key = data[off:off + 4]
    if len(key) != 4:
        raise StreamFrameError("short masking key")
    payload = _mask(data[off + 4:], key)
    if len(payload) != length:
        raise StreamFrameError(f"length mismatch: {length} vs {len(payload)}")
    return opcode, struct.unpack(">I", key)[0], payload


def handshake_request(name: str) -> bytes:
    nonce = hashlib.sha256(name.encode()).digest()[:16]
    body = HS_REQUEST_MAGIC + bytes([1]) + nonce
    return body + bytes(HS_REQUEST_LEN - len(body))


def handshake_response(request: bytes) -> bytes:
    nonce = request[9:25]
    body = HS_RESPONSE_MAGIC + nonce
    return body + bytes(HS_RESPONSE_LEN - len(body))


@dataclass
class StreamReceipt:
    seq: int
    enqueued_at: int
    failed: bool = False


class StreamConn:
    """One endpoint of a bidirectional ordered stream."""

    def __init__(self, loop: EventLoop, name: str, initiator: bool,
                 on_message: Callable[[bytes], None],
                 rto_ms: int = 200, max_attempts: int = 10):
        self.loop = loop
        self.name = name
        self.initiator = initiator
        self.on_message = on_message
        self.rto_ms = rto_ms
        self.max_attempts = max_attempts
        self._send_raw: Callable[[bytes], None] | None = None
        self.open = False
        self.closed = False
        self.broken = False
        self._hs_attempts = 0
        self._hs_timer: Handle | None = None
        self._queued: list[tuple[bytes, StreamReceipt]] = []
        # sender state
        self._next_seq = 0
        self._unacked: dict[int, tuple[bytes, StreamReceipt, int, Handle | None]] = {}
        # receiver state
        self._expected = 0
        self._buffer: dict[int, bytes] = {}

    def attach(self, send_raw: Callable[[bytes], None]) -> None:
        self._send_raw = send_raw

    def start(self) -> None:
        """Initiator: begin the upgrade handshake."""
        if not self.initiator:
            return
        self._send_handshake()

    def _send_handshake(self) -> None:
        if self.open or self.closed:
            return
        self._hs_attempts += 1
        if self._hs_attempts > self.max_attempts:
            self._break("handshake failed")
            return
        self._send_raw(handshake_request(self.name))
        self._hs_timer = self.loop.call_later(self.rto_ms * 1000, self._send_handshake)

    def _break(self, reason: str) -> None:
        self.broken = True
        self.closed = True
        log.warning("stream %s broken: %s", self.name, reason)
        for _, receipt, _, timer in self._unacked.values():
            receipt.failed = True
            if timer:
                timer.cancel()
        self._unacked.clear()
        for _, receipt in self._queued:
            receipt.failed = True
        self._queued.clear()

    def close(self) -> None:
        self.closed = True
        if self._hs_timer:
            self._hs_timer.cancel()
        for _, _, _, timer in self._unacked.values():
            if timer:
                timer.cancel()

    # -- sending ------------------------------------------------------------

    def send(self, payload: bytes) -> StreamReceipt:
        if self.closed:
            raise StreamClosedError(f"stream {self.name} is closed")
        receipt = StreamReceipt(-1, self.loop.now_us())
        if not self.open:
            self._queued.append((payload, receipt))
            return receipt
        self._transmit(payload, receipt)
        return receipt

    def _transmit(self, payload: bytes, receipt: StreamReceipt) -> None:
        seq = self._next_seq
        self._next_seq += 1
        receipt.seq = seq
        frame = encode_frame(OP_DATA, seq, payload)
        timer = self.loop.call_later(self.rto_ms * 1000, lambda: self._retransmit(seq))
        self._unacked[seq] = (frame, receipt, 1, timer)
        self._send_raw(frame)

    def _retransmit(self, seq: int) -> None:
        entry = self._unacked.get(seq)
        if entry is None or self.closed:
            return
        frame, receipt, attempts, _ = entry
        if attempts >= self.max_attempts:
            del self._unacked[seq]
            receipt.failed = True
            self._break(f"segment {seq} undeliverable after {attempts} attempts")
            return
        timer = self.loop.call_later(self.rto_ms * 1000, lambda: self._retransmit(seq))
        self._unacked[seq] = (frame, receipt, attempts + 1, timer)
        self._send_raw(frame)

    def _flush_queue(self) -> None:
        queued, self._queued = self._queued, []
        for payload, receipt in queued:
            self._transmit(payload, receipt)

    # -- receiving ----------------------------------------------------------

    def on_datagram(self, data: bytes) -> None:
        if self.closed:
            return
        if data[:8] == HS_REQUEST_MAGIC and len(data) == HS_REQUEST_LEN:
            # acceptor side; duplicate requests get duplicate responses
            self.open = True
            self._send_raw(handshake_response(data))
            self._flush_queue()
            return
        if data[:8] == HS_RESPONSE_MAGIC and len(data) == HS_RESPONSE_LEN:
            if self.initiator and not self.open:
                self.open = True
                if self._hs_timer:
                    self._hs_timer.cancel()
                self._flush_queue()
            return
        try:
            opcode, key, payload = decode_frame(data)
        except StreamFrameError as exc:
            log.warning("stream %s: dropping bad frame: %s", self.name, exc)
            return
        if opcode == OP_ACK:
            self._on_ack(key)
        elif opcode == OP_DATA:
            self._on_data(key, payload)

    def _on_ack(self, cumulative: int) -> None:
        for seq in [s for s in self._unacked if s < cumulative]:
            _, _, _, timer = self._unacked.pop(seq)
            if timer:
                timer.cancel()

    def _on_data(self, seq: int, payload: bytes) -> None:
        if seq < self._expected or seq in self._buffer:
            self._send_raw(encode_frame(OP_ACK, self._expected))
            return
        self._buffer[seq] = payload
        while self._expected in self._buffer:
            ready = self._buffer.pop(self._expected)
            self._expected += 1
            self.on_message(ready)
        self._send_raw(encode_frame(OP_ACK, self._expected))


def connect_streams(loop: EventLoop, a_to_b_send: Callable[[bytes], None],
                    b_to_a_send: Callable[[bytes], None], name: str,
                    on_message_a: Callable[[bytes], None],
                    on_message_b: Callable[[bytes], None],
                    rto_ms: int = 200, max_attempts: int = 10) -> tuple["StreamConn", "StreamConn"]:
    """Build an initiator/acceptor pair; caller wires link sinks to on_datagram."""
    a = StreamConn(loop, name, True, on_message_a, rto_ms, max_attempts)
    b = StreamConn(loop, name + ":accept", False, on_message_b, rto_ms, max_attempts)
    a.attach(a_to_b_send)
    b.attach(b_to_a_send)
    return a, b
