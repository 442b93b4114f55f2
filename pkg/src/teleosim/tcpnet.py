"""Real-socket adapters: the same packet framing over TCP.

The framing is self-delimiting (fixed 5-byte header carrying the remaining
length), so a TCP stream splits cleanly into datagrams. Each process runs
one real-time event loop thread for protocol state; socket reader threads
post inbound datagrams onto it.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading

from .actuator import ArmConfig, ArmNode
from .clock import EventLoop
from .msgbus.broker import Broker
from .msgbus.client import Client
from .netem import derive_rng
from .perception import DEFAULT_INFERENCE_MS, NoiseModel, annotate, detect, encode_frame, make_scene
from .perception.model import DetectionFrame

log = logging.getLogger("teleosim.tcp")


def read_datagram(sock: socket.socket) -> bytes | None:
    header = _read_exact(sock, 5)
    if header is None:
        return None
    (remaining,) = struct.unpack(">I", header[1:5])
    body = _read_exact(sock, remaining) if remaining else b""
    if remaining and body is None:
        return None
    return header + (body or b"")


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
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


def _loop_thread(loop: EventLoop) -> threading.Thread:
    thread = threading.Thread(target=loop.run_realtime, daemon=True)
    thread.start()
    return thread


def serve_broker(host: str, port: int) -> None:
    """Blocking TCP broker daemon speaking the packet framing."""
    loop = EventLoop(realtime=True)
    broker = Broker(loop)
    _loop_thread(loop)

    class Handler(socketserver.BaseRequestHandler):
        def handle(self) -> None:
            sock = self.request
            lock = threading.Lock()

            def send(data: bytes) -> None:
                with lock:
                    try:
                        sock.sendall(data)
                    except OSError:
                        pass

            conn_id = None
            done = threading.Event()

            def register() -> None:
                nonlocal conn_id
                conn_id = broker.add_connection(send)
                done.set()

            loop.post(register)
            done.wait()
            log.info("broker: connection %s from %s", conn_id, self.client_address)
            while True:
                datagram = read_datagram(sock)
                if datagram is None:
                    break
                loop.post(lambda d=datagram: broker.on_datagram(conn_id, d))
            loop.post(lambda: broker.drop_connection(conn_id))
            log.info("broker: connection %s closed", conn_id)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host, port), Handler) as server:
        log.info("broker listening on %s:%s", host, port)
        server.serve_forever()


class TcpClientSession:
    """A bus client bridged over one TCP connection, loop thread included."""

    def __init__(self, host: str, port: int, client_id: str):
        self.loop = EventLoop(realtime=True)
        self.client = Client(self.loop, client_id)
        self.sock = socket.create_connection((host, port))
        self._send_lock = threading.Lock()
        self.client.attach(self._send)
        self._loop_thread = _loop_thread(self.loop)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.closed = threading.Event()

    def _send(self, data: bytes) -> None:
        with self._send_lock:
            try:
                self.sock.sendall(data)
            except OSError:
                pass

    def _read_loop(self) -> None:
        while True:
            datagram = read_datagram(self.sock)
            if datagram is None:
                break
            self.loop.post(lambda d=datagram: self.client.on_datagram(d))
        self.closed.set()
        self.loop.stop()

    def close(self) -> None:
        try:
            self.sock.close()
        finally:
            self.loop.stop()


def run_arm_node(host: str, port: int, arm_id: str,
                 cfg: ArmConfig = ArmConfig()) -> None:
    """Blocking actuator node: connect, subscribe, actuate until EOF."""
    session = TcpClientSession(host, port, f"arm:{arm_id}")
    arm_holder = {}

    def start() -> None:
        arm = ArmNode(session.loop, arm_id, session.client, cfg)
        arm.start()
        arm_holder["arm"] = arm

    session.loop.post(start)
    log.info("arm %s attached to %s:%s", arm_id, host, port)
    session.closed.wait()


def run_frame_publisher(host: str, port: int, arm_id: str, fps: float = 5.0,
                        overlay: bool = True, seed: int = 42,
                        noise: NoiseModel = NoiseModel(),
                        inference_ms: int = DEFAULT_INFERENCE_MS,
                        reshuffle_s: float = 10.0) -> None:
    """Blocking frame source: publishes annotated frames on arm/{id}/frames.

    The scene reshuffles periodically so the overlay visibly moves.
    """
    session = TcpClientSession(host, port, f"cam:{arm_id}")
    rng_scene = derive_rng(seed, "perceive", "scene")
    rng_detect = derive_rng(seed, "perceive", "detect")
    topic = f"arm/{arm_id}/frames"
    state = {"scene": make_scene(rng_scene), "frame_id": 1}

    def reshuffle() -> None:
        state["scene"] = make_scene(rng_scene)
        session.loop.call_later(round(reshuffle_s * 1e6), reshuffle)

    def tick() -> None:
        loop = session.loop
        frame = DetectionFrame(state["frame_id"], loop.now_us(), state["scene"])
        state["frame_id"] += 1
        if overlay:
            frame = annotate(frame, detect(frame.scene, noise, rng_detect),
                             inference_ms)
        session.client.publish(topic, encode_frame(frame), qos=0)
        loop.call_later(round(1e6 / fps), tick)

    def start() -> None:
        session.client.connect()
        reshuffle()
        tick()

    session.loop.post(start)
    log.info("frame publisher for %s on %s:%s (overlay=%s)", arm_id, host, port, overlay)
    session.closed.wait()
