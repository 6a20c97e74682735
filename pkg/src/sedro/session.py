"""Session lifecycle: lockstep loop, binary session logs, replay verification.

Per tick the server sends queued EVENT frames, then OBS(t), then blocks for
ACT(t), steps the world, and appends one log record. The world never
advances without the agent's action. Logs capture enough to re-simulate:
header (asset paths + run parameters) plus per-tick action bytes and
observation digests.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import protocol
from .action import Action
from .caregiver import caregiver_policy
from .development import Schedule, advance_age, default_schedule
from .errors import ActionError, ProtocolError, ReplayError, SessionAborted
from .sensors import observe
from .world import DT, WorldState, hash_bytes, load_scene, step_world

LOG_MAGIC = b"SDRL"
LOG_VERSION = 1

REC_TICK = 1
REC_EVENT = 2
REC_END = 3
REC_RESET = 4

STATUS_CLEAN = 0
STATUS_ABORTED = 1
STATUS_TIMEOUT = 2

DEFAULT_TIMEOUT_S = 30.0


class Transport:
    """Length-framed message channel over a byte stream."""

    def send_frame(self, ftype: int, tick: int, payload: bytes = b"") -> None:
        self._write(protocol.encode_frame(ftype, tick, payload))

    def recv_frame(self):
        while True:
            res = protocol.parse_frame(self._buf)
            if res is not None:
                ftype, tick, payload, consumed = res
                del self._buf[:consumed]
                return ftype, tick, payload
            chunk = self._read()
            if not chunk:
                raise SessionAborted("peer closed the connection")
            self._buf.extend(chunk)

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def _read(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class SocketTransport(Transport):
    def __init__(self, sock: socket.socket, timeout_s: Optional[float] = None):
        self.sock = sock
        self._buf = bytearray()
        if timeout_s is not None:
            sock.settimeout(timeout_s)

    def _write(self, data: bytes) -> None:
        self.sock.sendall(data)

    def _read(self) -> bytes:
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            raise TimeoutError("agent timed out")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class PipeTransport(Transport):
    """Frames over a pair of binary file objects (subprocess stdio agents)."""

    def __init__(self, rfile, wfile):
        self.rfile = rfile
        self.wfile = wfile
        self._buf = bytearray()

    def _write(self, data: bytes) -> None:
        self.wfile.write(data)
        self.wfile.flush()

    def _read(self) -> bytes:
        return self.rfile.read1(65536) if hasattr(self.rfile, "read1") else self.rfile.read(65536)

    def close(self) -> None:
        for f in (self.rfile, self.wfile):
            try:
                f.close()
            except OSError:
                pass


@dataclass
class RunConfig:
    scene_path: str
    schedule_path: Optional[str] = None
    seed: Optional[int] = None
    time_scale: float = 1.0
    max_ticks: int = 1000
    timeout_s: float = DEFAULT_TIMEOUT_S
    out_path: Optional[str] = None
    scenario: Optional[str] = None
    scenario_config: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "log_version": LOG_VERSION,
            "protocol_version": protocol.PROTOCOL_VERSION,
            "scene": str(self.scene_path),
            "schedule": None if self.schedule_path is None else str(self.schedule_path),
            "seed": self.seed,
            "time_scale": self.time_scale,
            "max_ticks": self.max_ticks,
            "scenario": self.scenario,
            "scenario_config": self.scenario_config,
        }


@dataclass
class LogRecord:
    kind: int
    tick: int
    digest: int = 0
    action: bytes = b""
    event: bytes = b""
    status: int = STATUS_CLEAN


class SessionLog:
    def __init__(self, header: dict, records: list):
        self.header = header
        self.records = records

    @property
    def status(self) -> int:
        for rec in reversed(self.records):
            if rec.kind == REC_END:
                return rec.status
        return STATUS_ABORTED

    @property
    def tick_count(self) -> int:
        return sum(1 for r in self.records if r.kind == REC_TICK)

    def to_bytes(self) -> bytes:
        import json

        head = json.dumps(self.header, sort_keys=True, separators=(",", ":")).encode()
        parts = [LOG_MAGIC, bytes([LOG_VERSION]), struct.pack("<I", len(head)), head]
        for rec in self.records:
            if rec.kind == REC_TICK:
                parts.append(struct.pack("<BQQH", REC_TICK, rec.tick, rec.digest, len(rec.action)))
                parts.append(rec.action)
            elif rec.kind == REC_EVENT:
                parts.append(struct.pack("<BQI", REC_EVENT, rec.tick, len(rec.event)))
                parts.append(rec.event)
            elif rec.kind == REC_RESET:
                parts.append(struct.pack("<BQ", REC_RESET, rec.tick))
            else:
                parts.append(struct.pack("<BB", REC_END, rec.status))
        return b"".join(parts)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SessionLog":
        import json

        if len(blob) < 9 or blob[:4] != LOG_MAGIC:
            raise ReplayError("truncated header" if len(blob) < 9 else "bad log magic")
        if blob[4] != LOG_VERSION:
            raise ReplayError(f"unsupported log version {blob[4]}")
        (hlen,) = struct.unpack_from("<I", blob, 5)
        if len(blob) < 9 + hlen:
            raise ReplayError("truncated header")
        header = json.loads(blob[9 : 9 + hlen].decode())
        off = 9 + hlen
        records = []
        while off < len(blob):
            kind = blob[off]
            try:
                if kind == REC_TICK:
                    _, tick, digest, alen = struct.unpack_from("<BQQH", blob, off)
                    off += struct.calcsize("<BQQH")
                    action = blob[off : off + alen]
                    if len(action) != alen:
                        break  # truncated tail: verified up to here
                    off += alen
                    records.append(LogRecord(REC_TICK, tick, digest=digest, action=action))
                elif kind == REC_EVENT:
                    _, tick, elen = struct.unpack_from("<BQI", blob, off)
                    off += struct.calcsize("<BQI")
                    event = blob[off : off + elen]
                    if len(event) != elen:
                        break
                    off += elen
                    records.append(LogRecord(REC_EVENT, tick, event=event))
                elif kind == REC_RESET:
                    _, tick = struct.unpack_from("<BQ", blob, off)
                    off += struct.calcsize("<BQ")
                    records.append(LogRecord(REC_RESET, tick))
                elif kind == REC_END:
                    _, status = struct.unpack_from("<BB", blob, off)
                    off += 2
                    records.append(LogRecord(REC_END, 0, status=status))
                else:
                    raise ReplayError(f"unknown record kind {kind} at offset {off}")
            except struct.error:
                break  # truncated tail
        return cls(header, records)

    @classmethod
    def load(cls, path) -> "SessionLog":
        try:
            blob = Path(path).read_bytes()
        except OSError as e:
            raise ReplayError(f"cannot read log: {e}") from e
        return cls.from_bytes(blob)


class Session:
    """One live agent connection driving one world."""

    def __init__(self, config: RunConfig, controller=None, schedule: Optional[Schedule] = None):
        self.config = config
        self.world = self._build_world()
        self.schedule = schedule or (Schedule.load(config.schedule_path) if config.schedule_path else default_schedule())
        self.controller = controller
        self.records: list[LogRecord] = []
        self.pending_events: list[dict] = []
        self._ended = False
        self.negotiated_version: Optional[int] = None

    def _build_world(self) -> WorldState:
        from .scene import load_scene_file

        spec = load_scene_file(self.config.scene_path)
        if self.config.seed is not None:
            spec.raw["seed"] = self.config.seed
            spec.seed = self.config.seed
        return load_scene(spec)

    # controller / kernel API ------------------------------------------------

    def queue_event(self, event: dict) -> None:
        self.pending_events.append(event)

    def end(self) -> None:
        self._ended = True

    @property
    def age_days(self) -> float:
        return advance_age(self.world, self.config.time_scale)

    @property
    def stage(self):
        return self.schedule.stage_at(min(max(self.age_days, -84.0), 365.0))

    # lockstep ----------------------------------------------------------------

    def handshake(self, transport: Transport) -> int:
        ftype, _, payload = transport.recv_frame()
        if ftype != protocol.HELLO:
            raise ProtocolError(ProtocolError.BAD_TYPE, f"expected HELLO, got frame type {ftype}")
        versions = protocol.decode_hello(payload)
        chosen = protocol.negotiate(versions)
        transport.send_frame(protocol.HELLO, 0, protocol.encode_hello((chosen,)))
        self.negotiated_version = chosen
        return chosen

    def run(self, transport: Transport) -> SessionLog:
        status = STATUS_CLEAN
        try:
            self.handshake(transport)
        except ProtocolError as e:
            transport.send_frame(protocol.ERR, 0, protocol.encode_error(e.code, str(e)))
            log = SessionLog(self.config.header(), [LogRecord(REC_END, 0, status=STATUS_ABORTED)])
            return log

        if self.controller is not None:
            self.controller.on_session_start(self)

        try:
            while self.world.tick < self.config.max_ticks and not self._ended:
                tick = self.world.tick
                for event in self.pending_events:
                    payload = protocol.encode_event(event)
                    transport.send_frame(protocol.EVENT, tick, payload)
                    self.records.append(LogRecord(REC_EVENT, tick, event=payload))
                self.pending_events.clear()

                obs = observe(self.world, self.stage)
                obs_payload = protocol.encode_observation(obs)
                digest = hash_bytes(obs_payload)
                transport.send_frame(protocol.OBS, tick, obs_payload)

                ftype, _, payload = transport.recv_frame()
                if ftype == protocol.BYE:
                    self.records.append(LogRecord(REC_END, 0, status=STATUS_CLEAN))
                    return SessionLog(self.config.header(), self.records)
                if ftype == protocol.RESET:
                    self.records.append(LogRecord(REC_RESET, tick))
                    self.world = self._build_world()
                    if self.controller is not None:
                        self.controller.on_session_start(self)
                    continue
                if ftype != protocol.ACT:
                    raise ProtocolError(ProtocolError.BAD_TYPE, f"expected ACT, got frame type {ftype}")

                action_values = protocol.decode_action(payload)
                self.records.append(LogRecord(REC_TICK, tick, digest=digest, action=bytes(payload)))
                self._advance(action_values)
        except (ProtocolError, ActionError) as e:
            code = e.code if isinstance(e, ProtocolError) else ProtocolError.BAD_ACTION
            try:
                transport.send_frame(protocol.ERR, self.world.tick, protocol.encode_error(code, str(e)))
            except (SessionAborted, OSError, TimeoutError):
                pass
            status = STATUS_ABORTED
        except TimeoutError:
            status = STATUS_TIMEOUT
        except SessionAborted:
            status = STATUS_ABORTED
        else:
            try:
                transport.send_frame(protocol.BYE, self.world.tick)
            except (SessionAborted, OSError, TimeoutError):
                status = STATUS_ABORTED

        self.records.append(LogRecord(REC_END, 0, status=status))
        return SessionLog(self.config.header(), self.records)

    def _advance(self, action_values) -> None:
        """Step world + caregiver + development; queue lifecycle events."""
        action = Action.from_array(action_values)
        age_before = self.age_days
        stage_before = self.stage

        cmd = None
        if self.world.caregiver is not None:
            _, cmd = caregiver_policy(self.world, self.world.caregiver, stage_before, DT)
            if cmd.utterance is not None:
                self.queue_event({"kind": "utterance", "tokens": cmd.utterance})

        step_world(self.world, action, cmd, stage_before)

        age_after = self.age_days
        if age_before < 0.0 <= age_after:
            self.queue_event({"kind": "birth", "age_days": age_after})
        stage_after = self.stage
        if stage_after.stage_id != stage_before.stage_id:
            self.queue_event(
                {
                    "kind": "stage",
                    "stage_id": stage_after.stage_id,
                    "acuity": stage_after.acuity_factor,
                    "strength": stage_after.strength_factor,
                }
            )
        if self.controller is not None:
            self.controller.on_tick(self)


def serve_once(config: RunConfig, listen_addr: str, controller=None, accept_timeout_s: Optional[float] = None):
    """Bind, accept one agent connection, run one session to completion.

    Returns (session_log, bound_port). listen_addr is "host:port"; port 0
    picks an ephemeral port (printed by the CLI for test clients).
    """
    host, _, port = listen_addr.rpartition(":")
    host = host or "127.0.0.1"
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, int(port)))
    srv.listen(1)
    bound_port = srv.getsockname()[1]
    srv.settimeout(accept_timeout_s if accept_timeout_s is not None else config.timeout_s)
    try:
        conn, _ = srv.accept()
    except socket.timeout:
        srv.close()
        raise TimeoutError(f"no agent connected within {config.timeout_s}s")
    finally:
        srv.close()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    transport = SocketTransport(conn, timeout_s=config.timeout_s)
    session = Session(config, controller=controller)
    try:
        log = session.run(transport)
    finally:
        transport.close()
    if config.out_path:
        log.save(config.out_path)
    return log, bound_port


def replay(log: SessionLog, controller_factory=None):
    """Re-simulate a log; report the first divergent tick (or None).

    Divergence means the recomputed observation digest (or re-queued event
    bytes) differ from the recorded ones at some tick.
    """
    cfg = RunConfig(
        scene_path=log.header["scene"],
        schedule_path=log.header.get("schedule"),
        seed=log.header.get("seed"),
        time_scale=log.header.get("time_scale", 1.0),
        max_ticks=log.header.get("max_ticks", 0),
        scenario=log.header.get("scenario"),
        scenario_config=log.header.get("scenario_config", {}),
    )
    controller = None
    if cfg.scenario is not None:
        if controller_factory is None:
            from .evaluation import controller_for

            controller = controller_for(cfg.scenario, cfg.scenario_config, seed=cfg.seed or 0)
        else:
            controller = controller_factory(cfg)

    try:
        session = Session(cfg, controller=controller)
    except Exception as e:
        raise ReplayError(f"cannot rebuild session: {e}") from e
    if controller is not None:
        controller.on_session_start(session)

    verified = 0
    for rec in log.records:
        if rec.kind == REC_EVENT:
            if not session.pending_events:
                return rec.tick, verified
            expect = protocol.encode_event(session.pending_events.pop(0))
            if expect != rec.event:
                return rec.tick, verified
        elif rec.kind == REC_TICK:
            session.pending_events.clear()
            obs = observe(session.world, session.stage)
            digest = hash_bytes(protocol.encode_observation(obs))
            if digest != rec.digest:
                return rec.tick, verified
            session._advance(protocol.decode_action(rec.action))
            verified += 1
        elif rec.kind == REC_RESET:
            session.world = session._build_world()
            if controller is not None:
                controller.on_session_start(session)
    return None, verified
