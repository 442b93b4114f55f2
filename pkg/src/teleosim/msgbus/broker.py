"""In-process pub/sub broker.

All state mutations happen on one event loop, so broker events have a single
total order regardless of how many connections feed it. QoS1 fan-out keeps a
per-subscriber inflight table and retransmits on a fixed timer until the
subscriber acks or the attempt budget runs out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from ..clock import EventLoop, Handle
from .packets import (
    DecodeError,
    FilterError,
    Packet,
    PacketKind,
    TopicFilter,
    decode_packet,
    encode_packet,
)

log = logging.getLogger("teleosim.msgbus")


@dataclass
class _Inflight:
    packet: Packet
    attempts: int = 1
    timer: Handle | None = None


@dataclass
class _Conn:
    send: Callable[[bytes], None]
    client_id: str = ""
    connected: bool = False
    subs: list[tuple[TopicFilter, int]] = field(default_factory=list)
    inflight: dict[int, _Inflight] = field(default_factory=dict)
    next_pid: int = 1


class Broker:
    def __init__(self, loop: EventLoop, rto_ms: int = 200, max_attempts: int = 10):
        self.loop = loop
        self.rto_ms = rto_ms
        self.max_attempts = max_attempts
        self._conns: dict[int, _Conn] = {}
        self._next_conn_id = 1
        self.redelivery_failures = 0

    def add_connection(self, send: Callable[[bytes], None]) -> int:
        conn_id = self._next_conn_id
        self._next_conn_id += 1
        self._conns[conn_id] = _Conn(send=send)
        return conn_id

    def replace_send(self, conn_id: int, send: Callable[[bytes], None]) -> None:
        """Swap a connection's outbound path (link re-wiring on mode switch)."""
        self._conns[conn_id].send = send

    def drop_connection(self, conn_id: int) -> None:
        conn = self._conns.pop(conn_id, None)
        if conn:
            for entry in conn.inflight.values():
                if entry.timer:
                    entry.timer.cancel()

    def on_datagram(self, conn_id: int, data: bytes) -> None:
        conn = self._conns.get(conn_id)
        if conn is None:
            return
        try:
            packet = decode_packet(data)
        except DecodeError as exc:
            log.warning("broker: dropping undecodable datagram from %s: %s", conn_id, exc)
            return
        kind = packet.kind
        if kind == PacketKind.CONNECT:
            conn.client_id = packet.payload.decode("utf-8", "replace")
            conn.connected = True
            conn.send(encode_packet(Packet(PacketKind.CONNACK)))
        elif kind == PacketKind.PINGREQ:
            conn.send(encode_packet(Packet(PacketKind.PINGRESP)))
        elif kind == PacketKind.DISCONNECT:
            self.drop_connection(conn_id)
        elif not conn.connected:
            log.warning("broker: %s packet before CONNECT from conn %s", kind.name, conn_id)
        elif kind == PacketKind.SUBSCRIBE:
            self._on_subscribe(conn, packet)
        elif kind == PacketKind.PUBLISH:
            self._on_publish(conn, packet)
        elif kind == PacketKind.PUBACK:
            entry = conn.inflight.pop(packet.packet_id, None)
            if entry and entry.timer:
                entry.timer.cancel()

    def _on_subscribe(self, conn: _Conn, packet: Packet) -> None:
        try:
            topic_filter = TopicFilter.parse(packet.topic)
        except FilterError as exc:
            log.warning("broker: rejecting filter %r: %s", packet.topic, exc)
            return
        # re-subscribing (e.g. a retried SUBSCRIBE) replaces, never duplicates
        conn.subs = [(f, q) for f, q in conn.subs if f != topic_filter]
        conn.subs.append((topic_filter, packet.qos))
        conn.send(encode_packet(Packet(PacketKind.SUBACK, packet_id=packet.packet_id)))

    def _on_publish(self, conn: _Conn, packet: Packet) -> None:
        if packet.qos == 1:
            conn.send(encode_packet(Packet(PacketKind.PUBACK, packet_id=packet.packet_id)))
        self._fan_out(packet.topic, packet.payload, packet.qos)

    def _fan_out(self, topic: str, payload: bytes, pub_qos: int) -> None:
        for conn in list(self._conns.values()):
            if not conn.connected:
                continue
            best_qos = -1
            for topic_filter, sub_qos in conn.subs:
                if topic_filter.matches(topic):
                    best_qos = max(best_qos, min(pub_qos, sub_qos))
            if best_qos < 0:
                continue
            if best_qos == 0:
                conn.send(encode_packet(Packet(PacketKind.PUBLISH, 0, None, topic, payload)))
            else:
                pid = self._alloc_pid(conn)
                out = Packet(PacketKind.PUBLISH, 1, pid, topic, payload)
                entry = _Inflight(out)
                conn.inflight[pid] = entry
                conn.send(encode_packet(out))
                entry.timer = self.loop.call_later(
                    self.rto_ms * 1000, lambda c=conn, p=pid: self._retransmit(c, p))

    def _alloc_pid(self, conn: _Conn) -> int:
        for _ in range(65535):
            pid = conn.next_pid
            conn.next_pid = pid % 65535 + 1
            if pid not in conn.inflight:
                return pid
        raise RuntimeError("packet id space exhausted")

    def _retransmit(self, conn: _Conn, pid: int) -> None:
        entry = conn.inflight.get(pid)
        if entry is None:
            return
        if entry.attempts >= self.max_attempts:
            del conn.inflight[pid]
            self.redelivery_failures += 1
            log.warning("broker: giving up on pid %s to %r after %s attempts",
                        pid, conn.client_id, entry.attempts)
            return
        entry.attempts += 1
        conn.send(encode_packet(entry.packet))
        entry.timer = self.loop.call_later(
            self.rto_ms * 1000, lambda c=conn, p=pid: self._retransmit(c, p))
