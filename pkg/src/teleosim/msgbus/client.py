"""Pub/sub client: connect/subscribe/publish with QoS1 retry.

One logical owner per client. Session setup (CONNECT, SUBSCRIBE) retries on
the same fixed timer as QoS1 publishes, so a lost setup datagram delays but
never wedges the session. Publishes made before every pending SUBACK has
arrived are queued, keeping a command's ack subscription live before the
first command leaves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from ..clock import EventLoop, Handle
from .packets import (
    DecodeError,
    Packet,
    PacketKind,
    TopicFilter,
    decode_packet,
    encode_packet,
)

log = logging.getLogger("teleosim.msgbus")

MessageCallback = Callable[[str, bytes], None]


class NotConnectedError(RuntimeError):
    pass


@dataclass
class PublishReceipt:
    topic: str
    enqueued_at: int  # monotonic us
    packet_id: int | None = None
    qos: int = 0
    failed: bool = False
    acked_at: int | None = None


@dataclass
class _PendingPublish:
    receipt: PublishReceipt
    payload: bytes
    attempts: int = 0
    timer: Handle | None = None


@dataclass
class _PendingSubscribe:
    packet: Packet
    topic_filter: TopicFilter
    qos: int
    callback: MessageCallback
    attempts: int = 0
    timer: Handle | None = None


class Client:
    def __init__(self, loop: EventLoop, client_id: str,
                 rto_ms: int = 200, max_attempts: int = 10):
        self.loop = loop
        self.client_id = client_id
        self.rto_ms = rto_ms
        self.max_attempts = max_attempts
        self._send: Callable[[bytes], None] | None = None
        self.connected = False
        self._connect_sent = False
        self._connect_attempts = 0
        self._connect_timer: Handle | None = None
        self._next_pid = 1
        self._subs: list[tuple[TopicFilter, int, MessageCallback]] = []
        self._pending_subacks: dict[int, _PendingSubscribe] = {}
        self._queued_publishes: list[_PendingPublish] = []
        self._inflight: dict[int, _PendingPublish] = {}
        self.publish_failures = 0
        self.session_failed = False

    def attach(self, send: Callable[[bytes], None]) -> None:
        self._send = send

    # -- session ----------------------------------------------------------

    def connect(self) -> None:
        if self._send is None:
            raise NotConnectedError("client has no transport attached")
        self._connect_sent = True
        self._transmit_connect()

    def _transmit_connect(self) -> None:
        if self.connected:
            return
        self._connect_attempts += 1
        if self._connect_attempts > self.max_attempts:
            self.session_failed = True
            log.warning("client %s: connect failed after %s attempts",
                        self.client_id, self.max_attempts)
            return
        self._send(encode_packet(
            Packet(PacketKind.CONNECT, payload=self.client_id.encode("utf-8"))))
        self._connect_timer = self.loop.call_later(self.rto_ms * 1000,
                                                   self._transmit_connect)

    def disconnect(self) -> None:
        if self._send and self.connected:
            self._send(encode_packet(Packet(PacketKind.DISCONNECT)))
        self.connected = False
        self._subs.clear()
        for pending in self._inflight.values():
            if pending.timer:
                pending.timer.cancel()
        self._inflight.clear()
        for sub in self._pending_subacks.values():
            if sub.timer:
                sub.timer.cancel()
        self._pending_subacks.clear()

    def ping(self) -> None:
        self._require_session()
        self._send(encode_packet(Packet(PacketKind.PINGREQ)))

    def _require_session(self) -> None:
        if self._send is None or not self._connect_sent:
            raise NotConnectedError(f"client {self.client_id!r} not connected")

    # -- subscribe / publish ----------------------------------------------

    def subscribe(self, filter_text: str, qos: int, callback: MessageCallback) -> TopicFilter:
        self._require_session()
        topic_filter = TopicFilter.parse(filter_text)  # raises FilterError if malformed
        pid = self._alloc_pid()
        packet = Packet(PacketKind.SUBSCRIBE, qos, pid, filter_text)
        pending = _PendingSubscribe(packet, topic_filter, qos, callback)
        self._pending_subacks[pid] = pending
        if self.connected:
            self._transmit_subscribe(pid)
        return topic_filter

    def _transmit_subscribe(self, pid: int) -> None:
        pending = self._pending_subacks.get(pid)
        if pending is None:
            return
        pending.attempts += 1
        if pending.attempts > self.max_attempts:
            del self._pending_subacks[pid]
            self.session_failed = True
            log.warning("client %s: subscribe %s failed after %s attempts",
                        self.client_id, pending.packet.topic, self.max_attempts)
            self._flush_if_ready()
            return
        self._send(encode_packet(pending.packet))
        pending.timer = self.loop.call_later(self.rto_ms * 1000,
                                             lambda: self._transmit_subscribe(pid))

    def publish(self, topic: str, payload: bytes, qos: int = 0) -> PublishReceipt:
        self._require_session()
        receipt = PublishReceipt(topic, self.loop.now_us(), qos=qos)
        pending = _PendingPublish(receipt, payload)
        if qos == 1:
            receipt.packet_id = self._alloc_pid()
        if self.connected and not self._pending_subacks:
            self._transmit(pending)
        else:
            self._queued_publishes.append(pending)
        return receipt

    def _transmit(self, pending: _PendingPublish) -> None:
        receipt = pending.receipt
        packet = Packet(PacketKind.PUBLISH, receipt.qos, receipt.packet_id,
                        receipt.topic, pending.payload)
        data = encode_packet(packet)
        pending.attempts += 1
        self._send(data)
        if receipt.qos == 1:
            self._inflight[receipt.packet_id] = pending
            pending.timer = self.loop.call_later(
                self.rto_ms * 1000,
                lambda pid=receipt.packet_id: self._retransmit(pid))

    def _retransmit(self, pid: int) -> None:
        pending = self._inflight.get(pid)
        if pending is None:
            return
        if pending.attempts >= self.max_attempts:
            del self._inflight[pid]
            pending.receipt.failed = True
            self.publish_failures += 1
            log.warning("client %s: publish pid %s failed after %s attempts",
                        self.client_id, pid, pending.attempts)
            return
        pending.attempts += 1
        self._send(encode_packet(Packet(
            PacketKind.PUBLISH, 1, pid, pending.receipt.topic, pending.payload)))
        pending.timer = self.loop.call_later(
            self.rto_ms * 1000, lambda: self._retransmit(pid))

    def _alloc_pid(self) -> int:
        pid = self._next_pid
        self._next_pid = pid % 65535 + 1
        return pid

    def _flush_if_ready(self) -> None:
        if not self.connected or self._pending_subacks:
            return
        queued, self._queued_publishes = self._queued_publishes, []
        for pending in queued:
            self._transmit(pending)

    # -- inbound ------------------------------------------------------------

    def on_datagram(self, data: bytes) -> None:
        try:
            packet = decode_packet(data)
        except DecodeError as exc:
            log.warning("client %s: dropping undecodable datagram: %s", self.client_id, exc)
            return
        kind = packet.kind
        if kind == PacketKind.CONNACK:
            first = not self.connected
            self.connected = True
            if self._connect_timer:
                self._connect_timer.cancel()
            if first:
                for pid in list(self._pending_subacks):
                    self._transmit_subscribe(pid)
            self._flush_if_ready()
        elif kind == PacketKind.SUBACK:
            pending = self._pending_subacks.pop(packet.packet_id, None)
            if pending:
                if pending.timer:
                    pending.timer.cancel()
                self._subs.append((pending.topic_filter, pending.qos, pending.callback))
            self._flush_if_ready()
        elif kind == PacketKind.PUBACK:
            pending = self._inflight.pop(packet.packet_id, None)
            if pending:
                if pending.timer:
                    pending.timer.cancel()
                pending.receipt.acked_at = self.loop.now_us()
        elif kind == PacketKind.PUBLISH:
            if packet.qos == 1:
                self._send(encode_packet(Packet(PacketKind.PUBACK, packet_id=packet.packet_id)))
            for topic_filter, _, callback in self._subs:
                if topic_filter.matches(packet.topic):
                    callback(packet.topic, packet.payload)
        elif kind == PacketKind.PINGRESP:
            pass
