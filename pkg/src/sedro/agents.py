"""Built-in test clients for the lockstep protocol.

These are measurement fixtures, not learners: a zero-action client, a
seeded random client, and scripted gaze oracles that reproduce the two
looking-time patterns the rod-and-box battery distinguishes. Oracles act
on EVENT-advertised stimulus descriptors, never on vision.
"""

from __future__ import annotations

import math
import socket
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .errors import ProtocolError
from .world import DT

EYE_MAX_SPEED = 5.24
EYE_GAIN = 60.0  # 1/s proportional gaze controller


class SessionEnded(Exception):
    def __init__(self, reason: str, tick: int):
        self.reason = reason
        self.tick = tick
        super().__init__(f"session ended ({reason}) at tick {tick}")


class WireClient:
    """Minimal blocking client: handshake then strict OBS/ACT alternation."""

    def __init__(self, host: str, port: int, timeout_s: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout_s)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._buf = bytearray()
        self.version = None
        self.tick = 0

    def _recv_frame(self):
        while True:
            res = protocol.parse_frame(self._buf)
            if res is not None:
                ftype, tick, payload, consumed = res
                del self._buf[:consumed]
                return ftype, tick, payload
            chunk = self.sock.recv(65536)
            if not chunk:
                raise SessionEnded("connection closed", self.tick)
            self._buf.extend(chunk)

    def _send(self, data: bytes):
        self.sock.sendall(data)

    def handshake(self, versions=protocol.SUPPORTED_VERSIONS) -> int:
        self._send(protocol.encode_frame(protocol.HELLO, 0, protocol.encode_hello(versions)))
        ftype, _, payload = self._recv_frame()
        if ftype == protocol.ERR:
            code, msg = protocol.decode_error(payload)
            raise ProtocolError(code, msg)
        if ftype != protocol.HELLO:
            raise ProtocolError(ProtocolError.BAD_TYPE, f"expected HELLO reply, got {ftype}")
        self.version = protocol.decode_hello(payload)[0]
        return self.version

    def recv_observation(self):
        """Next observation plus any EVENT dicts that preceded it."""
        events = []
        while True:
            ftype, tick, payload = self._recv_frame()
            if ftype == protocol.EVENT:
                events.append(protocol.decode_event(payload))
            elif ftype == protocol.OBS:
                self.tick = tick
                return protocol.decode_observation(payload, tick), events
            elif ftype == protocol.BYE:
                raise SessionEnded("bye", tick)
            elif ftype == protocol.ERR:
                code, msg = protocol.decode_error(payload)
                raise SessionEnded(f"server error {code}: {msg}", tick)
            else:
                raise ProtocolError(ProtocolError.BAD_TYPE, f"unexpected frame type {ftype}")

    def send_action(self, values) -> None:
        self._send(protocol.encode_frame(protocol.ACT, self.tick, protocol.encode_action(values)))

    def bye(self) -> None:
        try:
            self._send(protocol.encode_frame(protocol.BYE, self.tick))
        except OSError:
            pass

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


# -- policies -------------------------------------------------------------------


class ZeroPolicy:
    def __call__(self, obs, events) -> np.ndarray:
        return np.zeros(56)


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs, events) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, 56)


def tag_jaccard(a, b) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


@dataclass
class OracleConfig:
    base_look_s: float = 30.0
    repetition_decay: float = 0.6
    cross_scale_s: float = 30.0
    familiarity_floor: float = 0.3
    min_look_s: float = 1.0
    max_look_s: float = 55.0
    away_offset_rad: float = 0.45


@dataclass
class GazeOraclePolicy:
    """Scripted looker driven by EVENT-advertised stimulus descriptors.

    mode "novelty": looking time shrinks with similarity-weighted exposure
    (the perceptual-completion pattern: the broken rod stays interesting).
    mode "familiarity": looking time grows with it (the newborn pattern).
    mode "symmetric": fixed-duration looks, identical for every stimulus.
    """

    mode: str = "novelty"
    config: OracleConfig = field(default_factory=OracleConfig)
    exposure_s: dict = field(default_factory=dict)  # stimulus id -> seconds looked
    tags: dict = field(default_factory=dict)  # stimulus id -> tag list
    reps: dict = field(default_factory=dict)  # stimulus id -> presentations

    def __post_init__(self):
        self._phase = "habituation"
        self._phase_stimuli: list = []
        self._phase_trial = 0
        self._current: dict | None = None
        self._look_ticks_left = 0
        self._pre_aim: dict | None = None

    # planning ------------------------------------------------------------------

    def cross_exposure(self, sid: str) -> float:
        mine = self.tags.get(sid, [])
        return sum(
            seconds * tag_jaccard(mine, self.tags.get(other, []))
            for other, seconds in self.exposure_s.items()
            if other != sid
        )

    def planned_look_s(self, sid: str) -> float:
        c = self.config
        rep = self.reps.get(sid, 0)
        base = c.base_look_s * (c.repetition_decay**rep)
        if self.mode == "symmetric":
            # habituate on repetition, then identical fixed looks at test
            return base if self._phase == "habituation" else 10.0
        f = self.cross_exposure(sid)
        w = math.exp(-f / c.cross_scale_s)
        if self.mode == "familiarity":
            w = c.familiarity_floor + (1.0 - c.familiarity_floor) * (1.0 - w)
        return min(max(base * w, c.min_look_s), c.max_look_s)

    # event handling ---------------------------------------------------------------

    def handle_events(self, events) -> None:
        for ev in events:
            kind = ev.get("kind")
            if kind == "phase_start":
                self._phase = ev["phase"]
                self._phase_stimuli = ev["stimuli"]
                self._phase_trial = 0
                for s in ev["stimuli"]:
                    self.tags[s["id"]] = list(s["tags"])
                self._pre_aim = self._phase_stimuli[0] if self._phase_stimuli else None
            elif kind == "trial_start":
                stim = ev["stimulus"]
                sid = stim["id"]
                self._phase = ev["phase"]
                self.tags[sid] = list(stim["tags"])
                look = self.planned_look_s(sid)
                self.reps[sid] = self.reps.get(sid, 0) + 1
                self._current = stim
                self._look_ticks_left = round(look / DT)
            elif kind == "trial_end":
                sid = ev["stimulus_id"]
                self.exposure_s[sid] = self.exposure_s.get(sid, 0.0) + float(ev["looking_time_s"])
                self._current = None
                self._phase_trial += 1
                if self._phase_stimuli:
                    nxt = self._phase_stimuli[self._phase_trial % len(self._phase_stimuli)]
                    self._pre_aim = nxt

    # control ----------------------------------------------------------------------

    def _target_angles(self, stim: dict, sim_time: float, away: bool):
        aim = stim["aim"]
        if away:
            # fixed pitch-down target: exits the thin rod axis in under a
            # tick for every stimulus and never sweeps back across it
            return aim["yaw"], aim["pitch"] - self.config.away_offset_rad
        osc = stim.get("osc", {})
        yaw = aim["yaw"]
        amp = osc.get("yaw_amp", 0.0)
        if amp:
            yaw += amp * math.sin(2.0 * math.pi * osc.get("freq_hz", 0.0) * sim_time + osc.get("phase", 0.0))
        yaw += stim.get("segment_offset_yaw", 0.0)
        return yaw, aim["pitch"]

    def __call__(self, obs, events) -> np.ndarray:
        self.handle_events(events)
        act = np.zeros(56)
        sim_time = obs.tick * DT

        if self._current is not None:
            if self._look_ticks_left > 0:
                target = self._target_angles(self._current, sim_time, away=False)
                self._look_ticks_left -= 1
            else:
                target = self._target_angles(self._current, sim_time, away=True)
        elif self._pre_aim is not None:
            target = self._target_angles(self._pre_aim, sim_time, away=False)
        else:
            target = (0.0, 0.0)

        yaw_err = target[0] - obs.eye_pose[0]
        pitch_err = target[1] - obs.eye_pose[1]
        act[53] = min(max(EYE_GAIN * yaw_err / EYE_MAX_SPEED, -1.0), 1.0)
        act[54] = min(max(EYE_GAIN * pitch_err / EYE_MAX_SPEED, -1.0), 1.0)
        return act


POLICIES = {
    "zero": lambda seed: ZeroPolicy(),
    "random": lambda seed: RandomPolicy(seed),
    "novelty": lambda seed: GazeOraclePolicy(mode="novelty"),
    "familiarity": lambda seed: GazeOraclePolicy(mode="familiarity"),
    "symmetric": lambda seed: GazeOraclePolicy(mode="symmetric"),
}


def run_client(host: str, port: int, policy, max_steps: int | None = None, timeout_s: float = 30.0) -> int:
    """Drive a full session; returns the number of completed steps."""
    client = WireClient(host, port, timeout_s=timeout_s)
    steps = 0
    try:
        client.handshake()
        while max_steps is None or steps < max_steps:
            try:
                obs, events = client.recv_observation()
            except SessionEnded:
                break
            client.send_action(policy(obs, events))
            steps += 1
        else:
            client.bye()
    finally:
        client.close()
    return steps
