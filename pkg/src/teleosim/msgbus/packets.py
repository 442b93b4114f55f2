"""Pub/sub packet model, fixed wire framing, and topic filter matching.

Framing: byte0 = (kind << 4) | (qos << 1), then a u32 big-endian remaining
length, then a kind-specific body. All packets travel as self-delimiting
length-prefixed datagrams, so the same bytes work over emulated links and
real TCP streams.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

MAX_TOPIC_BYTES = 65535
MAX_PAYLOAD_BYTES = 2**32 - 16


class EncodingError(ValueError):
    pass


class DecodeError(ValueError):
    pass


class FilterError(ValueError):
    pass


class PacketKind(IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    SUBSCRIBE = 5
    SUBACK = 6
    PINGREQ = 7
    PINGRESP = 8
    DISCONNECT = 9


@dataclass(frozen=True)
class Packet:
    kind: PacketKind
    qos: int = 0
    packet_id: int | None = None
    topic: str = ""
    payload: bytes = b""


def _validate_topic(topic: str, publish: bool) -> bytes:
    if not topic:
        raise EncodingError("empty topic")
    if "\x00" in topic:
        raise EncodingError("NUL in topic")
    if publish and ("+" in topic or "#" in topic):
        raise EncodingError(f"wildcard in publish topic: {topic!r}")
    raw = topic.encode("utf-8")
    if len(raw) > MAX_TOPIC_BYTES:
        raise EncodingError(f"topic too long: {len(raw)} bytes")
    return raw


def encode_packet(p: Packet) -> bytes:
    if p.qos not in (0, 1):
        raise EncodingError(f"qos must be 0 or 1, got {p.qos}")
    if len(p.payload) > MAX_PAYLOAD_BYTES:
        raise EncodingError(f"payload too long: {len(p.payload)} bytes")
    kind = PacketKind(p.kind)

    if kind == PacketKind.PUBLISH:
        raw_topic = _validate_topic(p.topic, publish=True)
        if p.qos == 1:
            if p.packet_id is None:
                raise EncodingError("qos1 PUBLISH requires packet_id")
            body = struct.pack(">H", len(raw_topic)) + raw_topic \
                + struct.pack(">H", p.packet_id) + p.payload
        else:
            if p.packet_id is not None:
                raise EncodingError("qos0 PUBLISH must not carry packet_id")
            body = struct.pack(">H", len(raw_topic)) + raw_topic + p.payload
    elif kind == PacketKind.SUBSCRIBE:
        raw_filter = _validate_topic(p.topic, publish=False)
        TopicFilter.parse(p.topic)  # reject malformed filters at encode time
        if p.packet_id is None:
            raise EncodingError("SUBSCRIBE requires packet_id")
        body = struct.pack(">H", p.packet_id) \
            + struct.pack(">H", len(raw_filter)) + raw_filter \
            + struct.pack(">B", p.qos)
    elif kind in (PacketKind.PUBACK, PacketKind.SUBACK):
        if p.packet_id is None:
            raise EncodingError(f"{kind.name} requires packet_id")
        body = struct.pack(">H", p.packet_id)
    elif kind == PacketKind.CONNECT:
        if len(p.payload) > MAX_TOPIC_BYTES:
            raise EncodingError("client id too long")
        body = struct.pack(">H", len(p.payload)) + p.payload
    else:  # CONNACK, PINGREQ, PINGRESP, DISCONNECT
        body = b""

    byte0 = (int(kind) << 4) | (p.qos << 1)
    return bytes([byte0]) + struct.pack(">I", len(body)) + body


def decode_packet(data: bytes) -> Packet:
    if len(data) < 5:
        raise DecodeError(f"short packet: {len(data)} bytes")
    byte0 = data[0]
    try:
        kind = PacketKind(byte0 >> 4)
    except ValueError as exc:
        raise DecodeError(f"unknown packet kind {byte0 >> 4}") from exc
    qos = (byte0 >> 1) & 0x01
    (remaining,) = struct.unpack(">I", data[1:5])
    body = data[5:]
    if len(body) != remaining:
        raise DecodeError(f"length mismatch: header says {remaining}, got {len(body)}")

    def take_u16(buf: bytes, off: int) -> tuple[int, int]:
        if off + 2 > len(buf):
            raise DecodeError("truncated u16")
        return struct.unpack_from(">H", buf, off)[0], off + 2

    if kind == PacketKind.PUBLISH:
        tlen, off = take_u16(body, 0)
        if off + tlen > len(body):
            raise DecodeError("truncated topic")
        topic = body[off:off + tlen].decode("utf-8")
        off += tlen
        packet_id = None
        if qos == 1:
            packet_id, off = take_u16(body, off)
        return Packet(kind, qos, packet_id, topic, bytes(body[off:]))
    if kind == PacketKind.SUBSCRIBE:
        packet_id, off = take_u16(body, 0)
        flen, off = take_u16(body, off)
        if off + flen + 1 != len(body):
            raise DecodeError("bad SUBSCRIBE body length")
        topic = body[off:off + flen].decode("utf-8")
        off += flen
        req_qos = body[off]
        if req_qos not in (0, 1):
            raise DecodeError(f"bad requested qos {req_qos}")
        return Packet(kind, req_qos, packet_id, topic)
    if kind in (PacketKind.PUBACK, PacketKind.SUBACK):
        if remaining != 2:
            raise DecodeError(f"bad {kind.name} body length")
        packet_id, _ = take_u16(body, 0)
        return Packet(kind, qos, packet_id)
    if kind == PacketKind.CONNECT:
        clen, off = take_u16(body, 0)
        if off + clen != len(body):
            raise DecodeError("bad client id length")
        return Packet(kind, qos, None, "", bytes(body[off:off + clen]))
    if remaining != 0:
        raise DecodeError(f"{kind.name} must have empty body")
    return Packet(kind, qos)


@dataclass(frozen=True)
class TopicFilter:
    levels: tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def parse(cls, text: str) -> "TopicFilter":
        if not text:
            raise FilterError("empty filter")
        if "\x00" in text:
            raise FilterError("NUL in filter")
        levels = tuple(text.split("/"))
        for i, level in enumerate(levels):
            if level == "#" and i != len(levels) - 1:
                raise FilterError(f"'#' only allowed as final level: {text!r}")
            if ("#" in level or "+" in level) and level not in ("#", "+"):
                raise FilterError(f"wildcard must occupy a whole level: {text!r}")
        return cls(levels)

    def matches(self, topic: str) -> bool:
        parts = topic.split("/")
        for i, level in enumerate(self.levels):
            if level == "#":
                # '#' also matches its parent level ("a/#" matches "a")
                return True
            if i >= len(parts):
                return False
            if level == "+":
                continue
            if level != parts[i]:
                return False
        return len(parts) == len(self.levels)

    def __str__(self) -> str:
        return "/".join(self.levels)


def match_topic(filter_text: str | TopicFilter, topic: str) -> bool:
    f = filter_text if isinstance(filter_text, TopicFilter) else TopicFilter.parse(filter_text)
    return f.matches(topic)
