"""Binary TCP link between the behavior engine and an attached renderer.

Framing: 4-byte little-endian unsigned length (counting the kind tag), one
kind tag byte, then the payload. All numeric payload fields are
little-endian; positions are 32-bit floats (meters), ids 32-bit unsigned,
ticks 64-bit unsigned. The byte-exact tables live in docs/protocol.md.

The server speaks one client per session. In lockstep mode (the default)
it advances only after the client echoes TICK_END for the previous tick;
ENV_UPDATE messages may arrive at any time and are applied between ticks.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from .world import WorldState

PROTOCOL_VERSION = 1
DEFAULT_PORT = 4580
MAX_FRAME = 16 * 1024 * 1024

MODE_LOCKSTEP = 0
MODE_STREAMING = 1

KIND_HELLO = 1
KIND_HELLO_ACK = 2
KIND_TICK_BEGIN = 3
KIND_AGENT_STATE = 4
KIND_TICK_END = 5
KIND_ENV_UPDATE = 6
KIND_SPAWN_EVENT = 7
KIND_DESPAWN_EVENT = 8
KIND_ERROR = 9
KIND_SHUTDOWN = 10

ENV_ADD_OBSTACLE = 1
ENV_REMOVE_OBSTACLE = 2
ENV_OPEN_SPAWN = 3
ENV_CLOSE_SPAWN = 4
ENV_RETARGET_GOAL = 5

ERR_UNKNOWN_KIND = 1
ERR_FRAMING = 2
ERR_BAD_UPDATE = 3
ERR_VERSION = 4
ERR_PROTOCOL = 5

DESPAWN_GOAL = 0
DESPAWN_REMOVED = 1


class ProtocolError(Exception):
    def __init__(self, message: str, code: int = ERR_PROTOCOL):
        super().__init__(message)
        self.code = code


class FramingError(ProtocolError):
    def __init__(self, message: str):
        super().__init__(message, code=ERR_FRAMING)


class UnknownKindError(ProtocolError):
    def __init__(self, tag: int):
        super().__init__(f"unknown message kind tag 0x{tag:02X}", code=ERR_UNKNOWN_KIND)
        self.tag = tag


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION
    mode: int = MODE_LOCKSTEP


@dataclass(frozen=True)
class HelloAck:
    version: int = PROTOCOL_VERSION
    mode: int = MODE_LOCKSTEP


@dataclass(frozen=True)
class TickBegin:
    tick: int
    agent_count: int


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    tick: int
    x: float
    y: float
    vx: float
    vy: float
    gait_phase: float
    anomaly: int


@dataclass(frozen=True)
class TickEnd:
    tick: int


@dataclass(frozen=True)
class EnvUpdate:
    op: int
    target_id: int = 0
    vertices: tuple = ()          # flat (x0, y0, x1, y1, ...) floats


@dataclass(frozen=True)
class SpawnEvent:
    tick: int
    agent_id: int
    x: float
    y: float
    v0: float
    height: float


@dataclass(frozen=True)
class DespawnEvent:
    tick: int
    agent_id: int
    reason: int


@dataclass(frozen=True)
class Error:
    code: int
    message: str


@dataclass(frozen=True)
class Shutdown:
    pass


_KIND_OF = {
    Hello: KIND_HELLO,
    HelloAck: KIND_HELLO_ACK,
    TickBegin: KIND_TICK_BEGIN,
    AgentState: KIND_AGENT_STATE,
    TickEnd: KIND_TICK_END,
    EnvUpdate: KIND_ENV_UPDATE,
    SpawnEvent: KIND_SPAWN_EVENT,
    DespawnEvent: KIND_DESPAWN_EVENT,
    Error: KIND_ERROR,
    Shutdown: KIND_SHUTDOWN,
}


def encode_message(msg) -> bytes:
    """Frame one message: u32le length (tag + payload), tag byte, payload."""
    kind = _KIND_OF[type(msg)]
    if kind == KIND_HELLO or kind == KIND_HELLO_ACK:
        payload = struct.pack("<HB", msg.version, msg.mode)
    elif kind == KIND_TICK_BEGIN:
        payload = struct.pack("<QI", msg.tick, msg.agent_count)
    elif kind == KIND_AGENT_STATE:
        payload = struct.pack("<IQfffffB", msg.agent_id, msg.tick, msg.x,
                              msg.y, msg.vx, msg.vy, msg.gait_phase, msg.anomaly)
    elif kind == KIND_TICK_END:
        payload = struct.pack("<Q", msg.tick)
    elif kind == KIND_ENV_UPDATE:
        n = len(msg.vertices) // 2
        payload = struct.pack("<BII", msg.op, msg.target_id, n)
        payload += struct.pack(f"<{len(msg.vertices)}f", *msg.vertices) if msg.vertices else b""
    elif kind == KIND_SPAWN_EVENT:
        payload = struct.pack("<QIffff", msg.tick, msg.agent_id, msg.x, msg.y,
                              msg.v0, msg.height)
    elif kind == KIND_DESPAWN_EVENT:
        payload = struct.pack("<QIB", msg.tick, msg.agent_id, msg.reason)
    elif kind == KIND_ERROR:
        text = msg.message.encode("utf-8")
        payload = struct.pack("<HH", msg.code, len(text)) + text
    else:  # SHUTDOWN
        payload = b""
    return struct.pack("<I", 1 + len(payload)) + bytes([kind]) + payload


def _decode_payload(kind: int, payload: bytes):
    if kind == KIND_HELLO or kind == KIND_HELLO_ACK:
        version, mode = struct.unpack("<HB", payload)
        cls = Hello if kind == KIND_HELLO else HelloAck
        return cls(version=version, mode=mode)
    if kind == KIND_TICK_BEGIN:
        tick, count = struct.unpack("<QI", payload)
        return TickBegin(tick=tick, agent_count=count)
    if kind == KIND_AGENT_STATE:
        aid, tick, x, y, vx, vy, gait, anomaly = struct.unpack("<IQfffffB", payload)
        return AgentState(agent_id=aid, tick=tick, x=x, y=y, vx=vx, vy=vy,
                          gait_phase=gait, anomaly=anomaly)
    if kind == KIND_TICK_END:
        return TickEnd(tick=struct.unpack("<Q", payload)[0])
    if kind == KIND_ENV_UPDATE:
        op, target, n = struct.unpack_from("<BII", payload, 0)
        verts = struct.unpack_from(f"<{2 * n}f", payload, 9) if n else ()
        return EnvUpdate(op=op, target_id=target, vertices=tuple(verts))
    if kind == KIND_SPAWN_EVENT:
        tick, aid, x, y, v0, height = struct.unpack("<QIffff", payload)
        return SpawnEvent(tick=tick, agent_id=aid, x=x, y=y, v0=v0, height=height)
    if kind == KIND_DESPAWN_EVENT:
        tick, aid, reason = struct.unpack("<QIB", payload)
        return DespawnEvent(tick=tick, agent_id=aid, reason=reason)
    if kind == KIND_ERROR:
        code, n = struct.unpack_from("<HH", payload, 0)
        return Error(code=code, message=payload[4:4 + n].decode("utf-8"))
    if kind == KIND_SHUTDOWN:
        return Shutdown()
    raise UnknownKindError(kind)


def decode_message(buffer: bytes):
    """Incremental decode: (message, consumed_bytes) or (None, 0) when a
    full frame is not yet buffered. Never consumes a partial frame."""
    if len(buffer) < 4:
        return None, 0
    (length,) = struct.unpack_from("<I", buffer, 0)
    if length > MAX_FRAME:
        raise FramingError(f"frame length {length} exceeds {MAX_FRAME}")
    if length < 1:
        raise FramingError("frame length must count the kind tag")
    if len(buffer) < 4 + length:
        return None, 0
    kind = buffer[4]
    payload = bytes(buffer[5:4 + length])
    try:
        msg = _decode_payload(kind, payload)
    except struct.error as exc:
        raise FramingError(f"payload too short for kind {kind}: {exc}") from exc
    return msg, 4 + length


class FrameDecoder:
    """Buffering decoder for a byte stream arriving in arbitrary chunks."""

    def __init__(self):
        self._buf = bytearray()

    def push(self, data: bytes) -> list:
        self._buf.extend(data)
        out = []
        while True:
            msg, consumed = decode_message(self._buf)
            if msg is None:
                break
            del self._buf[:consumed]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def apply_env_update(world: WorldState, update: EnvUpdate) -> None:
    """Apply one environment update between ticks; unknown target ids raise
    KeyError and leave the world untouched."""
    if update.op == ENV_ADD_OBSTACLE:
        verts = np.array(update.vertices, dtype=np.float64).reshape(-1, 2)
        world.add_obstacle(verts)
    elif update.op == ENV_REMOVE_OBSTACLE:
        world.remove_obstacle(update.target_id)
    elif update.op == ENV_OPEN_SPAWN:
        world.set_spawn_open(update.target_id, True)
    elif update.op == ENV_CLOSE_SPAWN:
        world.set_spawn_open(update.target_id, False)
    elif update.op == ENV_RETARGET_GOAL:
        verts = np.array(update.vertices, dtype=np.float64).reshape(-1, 2)
        world.retarget_goal(update.target_id, verts)
    else:
        raise KeyError(f"unknown env update op {update.op}")


@dataclass
class SessionState:
    version: int = PROTOCOL_VERSION
    mode: int = MODE_LOCKSTEP
    last_ack: int = -1
    env_updates_applied: int = 0
    error: str = None
    completed_ticks: int = 0


class _Connection:
    def __init__(self, sock: socket.socket, timeout: float = 30.0):
        self.sock = sock
        self.timeout = timeout
        self.decoder = FrameDecoder()

    def send(self, msg) -> None:
        self.sock.sendall(encode_message(msg))

    def recv_messages(self, blocking: bool) -> list:
        """Decoded messages currently available; blocks for at least one
        frame (up to the timeout) when blocking=True. Empty list means the
        peer closed or timed out (blocking) or nothing pending."""
        if blocking:
            self.sock.settimeout(self.timeout)
        else:
            self.sock.setblocking(False)
        out = []
        try:
            while True:
                data = self.sock.recv(65536)
                if not data:
                    return out if not blocking else []
                out.extend(self.decoder.push(data))
                if out and blocking:
                    return out
                if not blocking:
                    continue
        except (BlockingIOError, socket.timeout):
            return out
        except ConnectionResetError:
            return []


def serve(world: WorldState, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
          accept_timeout: float = None, headless_fallback: bool = False,
          recv_timeout: float = 30.0, ready_callback=None) -> SessionState:
    """Run the scenario while streaming per-tick state to one TCP client.

    Lockstep sessions step only after the client echoes TICK_END; client
    disconnect halts the run cleanly with logs intact. Returns the session
    state for inspection.
    """
    session = SessionState()
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind((host, port))
        server.listen(1)
        if accept_timeout is not None:
            server.settimeout(accept_timeout)
        if ready_callback is not None:
            ready_callback(server.getsockname()[1])
        try:
            client_sock, _addr = server.accept()
        except socket.timeout:
            if headless_fallback:
                world.run()
                session.completed_ticks = world.clock.tick
                return session
            raise
    finally:
        server.close()

    conn = _Connection(client_sock, timeout=recv_timeout)
    try:
        _run_session(world, conn, session)
    finally:
        client_sock.close()
    return session


def _run_session(world: WorldState, conn: _Connection, session: SessionState) -> None:
    # handshake
    msgs = conn.recv_messages(blocking=True)
    if not msgs or not isinstance(msgs[0], Hello):
        conn.send(Error(code=ERR_PROTOCOL, message="expected HELLO"))
        conn.send(Shutdown())
        session.error = "handshake failed"
        return
    hello = msgs[0]
    if hello.version != PROTOCOL_VERSION:
        conn.send(Error(code=ERR_VERSION,
                        message=f"unsupported version {hello.version}"))
        conn.send(Shutdown())
        session.error = "version mismatch"
        return
    session.mode = hello.mode if hello.mode in (MODE_LOCKSTEP, MODE_STREAMING) \
        else MODE_LOCKSTEP
    conn.send(HelloAck(version=PROTOCOL_VERSION, mode=session.mode))
    pending = list(msgs[1:])

    def handle(msg, tick_expected):
        """Returns 'ack' / 'shutdown' / None."""
        if isinstance(msg, TickEnd):
            session.last_ack = msg.tick
            if msg.tick == tick_expected:
                return "ack"
            return None
        if isinstance(msg, EnvUpdate):
            try:
                apply_env_update(world, msg)
                session.env_updates_applied += 1
            except (KeyError, ValueError) as exc:
                conn.send(Error(code=ERR_BAD_UPDATE, message=str(exc)))
            return None
        if isinstance(msg, Shutdown):
            return "shutdown"
        conn.send(Error(code=ERR_PROTOCOL,
                        message=f"unexpected message {type(msg).__name__}"))
        return None

    events_seen = len(world.events)
    stop = False
    while world.clock.tick < world.scenario.duration and not stop:
        # apply anything that arrived between ticks
        for msg in pending:
            if handle(msg, -1) == "shutdown":
                stop = True
        pending = []
        if stop:
            break

        world.step()
        tick = world.clock.tick
        snap = world.snapshot()
        try:
            conn.send(TickBegin(tick=tick, agent_count=snap["ids"].shape[0]))
            for k in range(snap["ids"].shape[0]):
                conn.send(AgentState(
                    agent_id=int(snap["ids"][k]), tick=tick,
                    x=float(snap["pos"][k, 0]), y=float(snap["pos"][k, 1]),
                    vx=float(snap["vel"][k, 0]), vy=float(snap["vel"][k, 1]),
                    gait_phase=float(snap["gait"][k]),
                    anomaly=int(snap["anomaly_flag"][k])))
            for ev in world.events[events_seen:]:
                if ev["kind"] == "spawn" and ev["agent_id"] >= 0:
                    row = ev["agent_id"]
                    conn.send(SpawnEvent(
                        tick=ev["tick"], agent_id=row,
                        x=float(world.agents.position[row, 0]),
                        y=float(world.agents.position[row, 1]),
                        v0=float(world.agents.v0[row]),
                        height=float(world.agents.height[row])))
                elif ev["kind"] == "despawn":
                    conn.send(DespawnEvent(
                        tick=ev["tick"], agent_id=ev["agent_id"],
                        reason=DESPAWN_GOAL if ev.get("reason") == "goal"
                        else DESPAWN_REMOVED))
            events_seen = len(world.events)
            conn.send(TickEnd(tick=tick))
        except (BrokenPipeError, ConnectionResetError):
            session.error = "client disconnected"
            break
        session.completed_ticks = tick

        if session.mode == MODE_LOCKSTEP:
            acked = False
            while not acked and not stop:
                msgs = conn.recv_messages(blocking=True)
                if not msgs:
                    session.error = "client disconnected"
                    stop = True
                    break
                for msg in msgs:
                    verdict = handle(msg, tick)
                    if verdict == "ack":
                        acked = True
                    elif verdict == "shutdown":
                        stop = True
        else:
            pending = conn.recv_messages(blocking=False)

    if session.mode == MODE_LOCKSTEP and session.error == "client disconnected":
        # ticks past the last acknowledgement were never consumed by the
        # client: drop them so the server trajectory matches the client trace
        last = max(session.last_ack, 0)
        world.trajectory = [r for r in world.trajectory if r["tick"] <= last]
        session.completed_ticks = last

    try:
        conn.send(Shutdown())
    except (BrokenPipeError, ConnectionResetError, OSError):
        pass
