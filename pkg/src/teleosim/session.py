"""Rooms: operators + one arm + perception bound over emulated routes.

Cloud mode routes everything through a server hop (operator <-route->
server <-lan-> arm), offline-local collapses to a single local traversal
with the broker and inference living beside the arm. Mode switches swap the
links underneath live broker connections and stream endpoints, so sessions,
subscriptions, and acked command state all survive the transition.
"""

from __future__ import annotations

import json
import logging
from typing import Callable

from .actuator import AckMessage, ArmNode, CommandDecodeError, ControlMessage
from .clock import EventLoop
from .config import ScenarioConfig
from .msgbus.broker import Broker
from .msgbus.client import Client, PublishReceipt
from .msgbus.stream import StreamClosedError, StreamConn
from .netem import Link, NetProfile, ProfileError, derive_rng
from .perception import (
    DetectionFrame,
    FrameSource,
    InferenceRelay,
    SceneObject,
    decode_frame,
    make_scene,
)

log = logging.getLogger("teleosim.session")

MODE_CLOUD = "cloud"
MODE_OFFLINE = "offline_local"
MODES = (MODE_CLOUD, MODE_OFFLINE)


class SessionError(RuntimeError):
    pass


def _direct_send(loop: EventLoop, sink: Callable[[bytes], None]) -> Callable[[bytes], None]:
    """Zero-latency in-process hop, still serialized through the event loop."""
    return lambda data: loop.call_later(0, lambda d=data: sink(d))


class Participant:
    def __init__(self, participant_id: str, room: "Room"):
        self.participant_id = participant_id
        self.room = room
        self.client = Client(room.loop, participant_id,
                             room.cfg.rto_ms, room.cfg.max_attempts)
        self.conn_id = -1  # broker connection, assigned at join
        self.video_up: StreamConn | None = None    # service -> operator direction
        self.video_down: StreamConn | None = None  # operator endpoint
        self.frames: list[tuple[DetectionFrame, int]] = []
        self.acks: list[AckMessage] = []
        self.ack_callbacks: list[Callable[[AckMessage], None]] = []
        self.frame_callbacks: list[Callable[[DetectionFrame, int], None]] = []
        self.frame_decode_errors = 0

    def _on_ack_payload(self, topic: str, payload: bytes) -> None:
        try:
            ack = AckMessage.from_json(payload)
        except CommandDecodeError:
            return
        self.acks.append(ack)
        for cb in list(self.ack_callbacks):
            cb(ack)

    def _on_video_bytes(self, data: bytes) -> None:
        try:
            frame = decode_frame(data)
        except ValueError:
            self.frame_decode_errors += 1
            return
        self.room.loop.call_later(round(self.room.cfg.render_ms * 1000),
                                  lambda: self._display(frame))

    def _display(self, frame: DetectionFrame) -> None:
        shown_at = self.room.loop.now_us()
        self.frames.append((frame, shown_at))
        for cb in list(self.frame_callbacks):
            cb(frame, shown_at)


class Room:
    def __init__(self, loop: EventLoop, cfg: ScenarioConfig, room_id: str,
                 arm_id: str, route: str, start_video: bool = False,
                 log_event: Callable[..., None] | None = None):
        try:
            self.route_profile = cfg.profile(route)
        except ProfileError as exc:
            raise SessionError(f"configuration error: {exc}") from exc
        self.loop = loop
        self.cfg = cfg
        self.room_id = room_id
        self.arm_id = arm_id
        self.route = route
        self.mode = MODE_CLOUD
        self._log = log_event or (lambda *a, **k: None)
        self.participants: dict[str, Participant] = {}
        self._seq = 0
        self._wan_links: list[Link] = []
        self._wiring_epoch = 0

        self.local_profile = cfg.profile("local")
        self.lan_profile = cfg.profile("lan")
        penalty = cfg.video_penalty_ms_per_kb
        self.video_profiles = {
            "route": self.route_profile.video_variant(penalty),
            "local": self.local_profile.video_variant(penalty),
            "lan": self.lan_profile.video_variant(penalty),
        }
        seed = cfg.seed

        self.broker = Broker(loop, cfg.rto_ms, cfg.max_attempts)
        self.scene: tuple[SceneObject, ...] = make_scene(
            derive_rng(seed, room_id, "scene"))

        # arm node rides a broker connection whose links depend on the mode
        self.arm_client = Client(loop, f"arm:{arm_id}", cfg.rto_ms, cfg.max_attempts)
        self._arm_conn = self.broker.add_connection(lambda data: None)
        self._wire_arm()
        self.arm = ArmNode(loop, arm_id, self.arm_client, cfg.arm)
        self.arm.start()

        # video backbone: camera -> (lan stream) -> inference relay -> fan-out
        self.relay = InferenceRelay(loop, self._fan_out_frame, cfg.overlay,
                                    cfg.noise, derive_rng(seed, room_id, "detector"),
                                    cfg.inference_ms)
        self.cam_up = StreamConn(loop, f"{room_id}:cam", True, self.relay.on_frame,
                                 cfg.rto_ms, cfg.max_attempts)
        self.cam_down = StreamConn(loop, f"{room_id}:cam:accept", False,
                                   self.relay.on_frame, cfg.rto_ms, cfg.max_attempts)
        self._wire_camera_stream()
        self.cam_up.start()
        self.camera = FrameSource(loop, lambda: self.scene, self._camera_sink,
                                  cfg.fps, cfg.pipeline_ms())
        if start_video:
            self.camera.start()

    # -- wiring ------------------------------------------------------------

    def _client_links(self, client: Client, conn_id: int, profile: NetProfile,
                      label: str, wan: bool) -> None:
        rng_up = derive_rng(self.cfg.seed, self.room_id, label, "up", self._wiring_epoch)
        rng_down = derive_rng(self.cfg.seed, self.room_id, label, "down", self._wiring_epoch)
        up = Link(self.loop, profile, rng_up,
                  lambda data, cid=conn_id: self.broker.on_datagram(cid, data),
                  name=f"{label}-up")
        down = Link(self.loop, profile, rng_down,
                    client.on_datagram, name=f"{label}-down")
        client.attach(up.send)
        self.broker.replace_send(conn_id, down.send)
        if wan:
            self._wan_links.extend([up, down])

    def _wire_arm(self) -> None:
        if self.mode == MODE_CLOUD:
            self._client_links(self.arm_client, self._arm_conn, self.lan_profile,
                               f"arm:{self.arm_id}", wan=False)
        else:
            self.arm_client.attach(
                _direct_send(self.loop,
                             lambda d: self.broker.on_datagram(self._arm_conn, d)))
            self.broker.replace_send(
                self._arm_conn, _direct_send(self.loop, self.arm_client.on_datagram))

    def _stream_links(self, up_end: StreamConn, down_end: StreamConn,
                      profile: NetProfile, label: str, wan: bool) -> None:
        rng_up = derive_rng(self.cfg.seed, self.room_id, label, "up", self._wiring_epoch)
        rng_down = derive_rng(self.cfg.seed, self.room_id, label, "down", self._wiring_epoch)
        forward = Link(self.loop, profile, rng_up, down_end.on_datagram,
                       name=f"{label}-fwd")
        backward = Link(self.loop, profile, rng_down, up_end.on_datagram,
                        name=f"{label}-back")
        up_end.attach(forward.send)
        down_end.attach(backward.send)
        if wan:
            self._wan_links.extend([forward, backward])

    def _wire_camera_stream(self) -> None:
        self._stream_links(self.cam_up, self.cam_down, self.video_profiles["lan"],
                           "cam", wan=False)

    def _camera_sink(self, data: bytes) -> None:
        if self.mode == MODE_CLOUD:
            self.cam_up.send(data)
        else:
            # offline: inference runs beside the arm, no server hop
            self.relay.on_frame(data)

    def _wire_participant(self, part: Participant) -> None:
        if self.mode == MODE_CLOUD:
            self._client_links(part.client, part.conn_id, self.route_profile,
                               f"op:{part.participant_id}", wan=True)
            video_profile = self.video_profiles["route"]
        else:
            self._client_links(part.client, part.conn_id, self.local_profile,
                               f"op:{part.participant_id}", wan=False)
            video_profile = self.video_profiles["local"]
        self._stream_links(part.video_up, part.video_down, video_profile,
                           f"video:{part.participant_id}", wan=self.mode == MODE_CLOUD)

    def _fan_out_frame(self, data: bytes) -> None:
        for part in self.participants.values():
            try:
                part.video_up.send(data)
            except StreamClosedError:
                log.warning("room %s: video stream to %s closed, frame dropped",
                            self.room_id, part.participant_id)

    # -- public operations ---------------------------------------------------

    def join(self, participant_id: str) -> Participant:
        if participant_id in self.participants:
            raise SessionError(f"participant {participant_id!r} already in room")
        part = Participant(participant_id, self)
        part.conn_id = self.broker.add_connection(lambda data: None)
        part.video_up = StreamConn(self.loop, f"{self.room_id}:{participant_id}:video",
                                   True, lambda data: None,
                                   self.cfg.rto_ms, self.cfg.max_attempts)
        part.video_down = StreamConn(self.loop,
                                     f"{self.room_id}:{participant_id}:video:accept",
                                     False, part._on_video_bytes,
                                     self.cfg.rto_ms, self.cfg.max_attempts)
        self._wire_participant(part)
        part.client.connect()
        part.client.subscribe(self.arm.ack_topic, 1, part._on_ack_payload)
        part.video_up.start()
        self.participants[participant_id] = part
        self._log(self.room_id, "JOIN", participant=participant_id)
        return part

    def leave(self, participant_id: str) -> None:
        part = self.participants.pop(participant_id, None)
        if part is None:
            raise SessionError(f"no participant {participant_id!r}")
        part.client.disconnect()
        part.video_up.close()
        part.video_down.close()
        self._log(self.room_id, "LEAVE", participant=participant_id)

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def route_control(self, participant_id: str, msg: ControlMessage) -> PublishReceipt:
        part = self.participants.get(participant_id)
        if part is None:
            raise SessionError(f"unknown participant {participant_id!r}")
        return part.client.publish(self.arm.cmd_topic, msg.to_json(),
                                   qos=self.cfg.command_qos)

    def set_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise SessionError(f"unknown mode {mode!r}")
        if mode == self.mode:
            self._log(self.room_id, "SET_MODE", mode=mode, changed=False)
            return
        self.mode = mode
        self._wan_links = []
        self._wiring_epoch += 1
        self._wire_arm()
        self._wire_camera_stream()
        for part in self.participants.values():
            self._wire_participant(part)
        self._log(self.room_id, "SET_MODE", mode=mode, changed=True)

    def set_wan_outage(self, down: bool) -> None:
        for link in self._wan_links:
            link.down = down
        self._log(self.room_id, "WAN_OUTAGE", down=down)

    def place_object(self, scene: tuple[SceneObject, ...]) -> None:
        self.scene = scene


class SessionService:
    """Many rooms on one loop; emits an append-only JSON-lines event log."""

    def __init__(self, loop: EventLoop, cfg: ScenarioConfig):
        self.loop = loop
        self.cfg = cfg
        self.rooms: dict[str, Room] = {}
        self.events: list[dict] = []

    def log_event(self, room_id: str, verb: str, **fields) -> None:
        entry = {"ts_us": self.loop.now_us(), "room": room_id, "event": verb}
        entry.update(fields)
        self.events.append(entry)

    def log_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.events) + "\n"

    def create_room(self, room_id: str, arm_id: str, route: str,
                    start_video: bool = False) -> Room:
        if room_id in self.rooms:
            raise SessionError(f"duplicate room {room_id!r}")
        room = Room(self.loop, self.cfg, room_id, arm_id, route,
                    start_video=start_video, log_event=self.log_event)
        self.rooms[room_id] = room
        self.log_event(room_id, "CREATE_ROOM", arm=arm_id, route=route)
        return room

    def room(self, room_id: str) -> Room:
        room = self.rooms.get(room_id)
        if room is None:
            raise SessionError(f"no room {room_id!r}")
        return room

    def handle_verb(self, payload: bytes) -> bytes:
        """Canonical-JSON control API: CREATE_ROOM, JOIN, LEAVE, SET_MODE."""
        try:
            msg = json.loads(payload.decode("utf-8"))
            verb = msg["verb"]
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            return json.dumps({"ok": False, "error": f"bad verb message: {exc}"}).encode()
        try:
            if verb == "CREATE_ROOM":
                self.create_room(msg["room_id"], msg["arm_id"], msg.get("route", "local"))
            elif verb == "JOIN":
                self.room(msg["room_id"]).join(msg["participant_id"])
            elif verb == "LEAVE":
                self.room(msg["room_id"]).leave(msg["participant_id"])
            elif verb == "SET_MODE":
                self.room(msg["room_id"]).set_mode(msg["mode"])
            else:
                return json.dumps({"ok": False, "error": f"unknown verb {verb!r}"}).encode()
        except (SessionError, KeyError) as exc:
            return json.dumps({"ok": False, "error": str(exc)}).encode()
        return json.dumps({"ok": True, "verb": verb}).encode()
