"""Scripted caregiver: a finite-state behavior machine.

The caregiver is a kinematic capsule that feeds the agent when its energy
runs low, answers sustained vocalization, and runs scheduled talk/show-toy
routines from a script file. The behavior graph is fixed:

    Idle -> Approach -> Feed -> Idle
    Idle -> Respond -> Idle
    Idle -> Talk -> Idle
    Idle -> ShowToy -> Idle

All transitions are deterministic functions of (world state, script,
world PRNG streams).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import SceneValidationError

# tunables, overridable per script file
FEED_TRIGGER = 0.3
FEED_RATE = 0.05  # energy per second of head contact
FEED_STOP = 0.95
FEED_REACH = 0.35  # metres from caregiver to head for feeding to flow
VOICE_TRIGGER = 0.5
VOICE_HOLD_S = 1.0
MOVE_SPEED = 0.5  # m/s
CAPSULE_RADIUS = 0.12
CAPSULE_HALF_LEN = 0.35


class Behavior(Enum):
    IDLE = 0
    APPROACH = 1
    FEED = 2
    TALK = 3
    SHOW_TOY = 4
    RESPOND = 5


EDGES = {
    Behavior.IDLE: {Behavior.APPROACH, Behavior.TALK, Behavior.SHOW_TOY, Behavior.RESPOND, Behavior.IDLE},
    Behavior.APPROACH: {Behavior.FEED, Behavior.APPROACH, Behavior.IDLE},
    Behavior.FEED: {Behavior.FEED, Behavior.IDLE},
    Behavior.TALK: {Behavior.TALK, Behavior.IDLE},
    Behavior.SHOW_TOY: {Behavior.SHOW_TOY, Behavior.IDLE},
    Behavior.RESPOND: {Behavior.RESPOND, Behavior.IDLE},
}


@dataclass
class Routine:
    id: str
    behavior: Behavior
    period_s: float
    offset_s: float
    duration_s: float
    params: dict


@dataclass
class CaregiverScript:
    routines: list
    utterances: list  # list of token-id lists

    @classmethod
    def load(cls, path: str | Path) -> "CaregiverScript":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SceneValidationError(str(path), f"cannot read caregiver script: {e}") from e
        return cls.parse(raw, source=str(path))

    @classmethod
    def parse(cls, raw: dict, source: str = "<script>") -> "CaregiverScript":
        utterances = raw.get("utterances", [])
        if not utterances:
            raise SceneValidationError(f"{source}.utterances", "script must define at least one utterance")
        for i, u in enumerate(utterances):
            if not u or not all(isinstance(t, int) for t in u):
                raise SceneValidationError(f"{source}.utterances[{i}]", "utterance must be non-empty token ids")
        routines = []
        for i, r in enumerate(raw.get("routines", [])):
            try:
                behavior = Behavior[r["behavior"].upper()]
            except KeyError:
                raise SceneValidationError(f"{source}.routines[{i}].behavior", f"unknown behavior {r.get('behavior')!r}")
            sched = r.get("schedule", {})
            routines.append(
                Routine(
                    id=str(r["id"]),
                    behavior=behavior,
                    period_s=float(sched.get("period_s", 0.0)),
                    offset_s=float(sched.get("offset_s", 0.0)),
                    duration_s=float(r.get("duration_s", 3.0)),
                    params=r.get("params", {}),
                )
            )
        return cls(routines=routines, utterances=[list(u) for u in utterances])


@dataclass
class CaregiverState:
    position: list  # capsule base midpoint, mutated in place
    home: tuple
    behavior: Behavior = Behavior.IDLE
    behavior_timer: float = 0.0
    utterance_cursor: int = 0
    voice_heard_s: float = 0.0
    feed_mission: bool = False
    respond_pending: bool = False
    active_routine: str | None = None
    fired_slots: dict = field(default_factory=dict)  # routine id -> last fired slot index


@dataclass
class CaregiverCommand:
    move_to: tuple | None = None
    feed_amount: float = 0.0
    utterance: list | None = None
    move_objects: list = field(default_factory=list)  # (object id, position) kinematic placements
    wake_objects: list = field(default_factory=list)


def emit_utterance(script: CaregiverScript, cursor: int):
    """Next utterance token ids and the wrapped cursor."""
    if not script.utterances:
        raise SceneValidationError("utterances", "empty utterance script")
    tokens = list(script.utterances[cursor % len(script.utterances)])
    return tokens, (cursor + 1) % len(script.utterances)


def _du(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def _step_toward(pos, target, dist: float):
    d = _du(pos, target)
    if d <= dist or d == 0.0:
        return tuple(target)
    f = dist / d
    return (pos[0] + (target[0] - pos[0]) * f, pos[1] + (target[1] - pos[1]) * f, pos[2] + (target[2] - pos[2]) * f)


def caregiver_policy(world, state: CaregiverState, stage, dt: float):
    """One deterministic FSM step. Returns (state, command).

    The state object is mutated and returned for convenience; the command
    captures every world-facing effect (motion, feeding, speech, toy moves)
    so the world stepper stays the single writer.
    """
    cmd = CaregiverCommand()
    script: CaregiverScript = world.caregiver_script
    head = world.head_position()
    energy = world.intero.energy
    sim_time = world.tick * world.dt

    # sustained-vocalization detector runs in every behavior
    if world.voice_level > VOICE_TRIGGER:
        state.voice_heard_s += dt
    else:
        state.voice_heard_s = 0.0
    if state.voice_heard_s >= VOICE_HOLD_S and state.behavior == Behavior.IDLE:
        state.respond_pending = True

    b = state.behavior
    if b == Behavior.IDLE:
        routine = _due_routine(script, state, stage, sim_time)
        if energy < FEED_TRIGGER:
            state.feed_mission = True
            _enter(state, Behavior.APPROACH)
        elif state.respond_pending:
            state.respond_pending = False
            _enter(state, Behavior.RESPOND)
        elif routine is not None:
            state.active_routine = routine.id
            _enter(state, routine.behavior)
        else:
            # drift back to the home position between jobs
            if _du(state.position, state.home) > 1e-9:
                cmd.move_to = _step_toward(state.position, state.home, MOVE_SPEED * dt)

    elif b == Behavior.APPROACH:
        target = (head[0], head[1] - 0.25, head[2] + 0.05)
        cmd.move_to = _step_toward(state.position, target, MOVE_SPEED * dt)
        if _du(cmd.move_to, head) <= FEED_REACH:
            _enter(state, Behavior.FEED)

    elif b == Behavior.FEED:
        if _du(state.position, head) <= FEED_REACH:
            # hold the bottle against the face; contact drives touch sensing
            cmd.move_objects.append(("bottle", (head[0] + 0.055, head[1], head[2] + 0.055)))
            cmd.feed_amount = FEED_RATE * dt
        if energy >= FEED_STOP:
            state.feed_mission = False
            cmd.move_objects.append(("bottle", _bottle_home(world)))
            _enter(state, Behavior.IDLE)

    elif b == Behavior.RESPOND:
        target = (head[0], head[1] - 0.3, head[2] + 0.1)
        cmd.move_to = _step_toward(state.position, target, MOVE_SPEED * dt)
        if _du(cmd.move_to, head) <= 0.45:
            tokens, state.utterance_cursor = emit_utterance(script, state.utterance_cursor)
            cmd.utterance = tokens
            _enter(state, Behavior.IDLE)

    elif b == Behavior.TALK:
        if state.behavior_timer == 0.0:
            tokens, state.utterance_cursor = emit_utterance(script, state.utterance_cursor)
            cmd.utterance = tokens
        state.behavior_timer += dt
        routine = _routine_by_id(script, state.active_routine)
        if state.behavior_timer >= (routine.duration_s if routine else 3.0):
            state.active_routine = None
            _enter(state, Behavior.IDLE)

    elif b == Behavior.SHOW_TOY:
        routine = _routine_by_id(script, state.active_routine)
        duration = routine.duration_s if routine else 5.0
        toy_id = (routine.params.get("object") if routine else None) or "toy_ball"
        t = state.behavior_timer
        # small horizontal circle above the agent's chest
        cx, cy, cz = head[0], head[1] + 0.15, head[2] + 0.25
        r = 0.08
        w = 2.0 * math.pi / max(duration, 1e-6)
        cmd.move_objects.append((toy_id, (cx + r * math.cos(w * t), cy + r * math.sin(w * t), cz)))
        state.behavior_timer += dt
        if state.behavior_timer >= duration:
            state.active_routine = None
            cmd.wake_objects.append(toy_id)
            _enter(state, Behavior.IDLE)

    return state, cmd


def _enter(state: CaregiverState, behavior: Behavior) -> None:
    if behavior not in EDGES[state.behavior]:
        raise RuntimeError(f"illegal caregiver transition {state.behavior} -> {behavior}")
    state.behavior = behavior
    state.behavior_timer = 0.0


def _routine_by_id(script: CaregiverScript, rid: str | None):
    for r in script.routines:
        if r.id == rid:
            return r
    return None


def _due_routine(script: CaregiverScript, state: CaregiverState, stage, sim_time: float):
    """First routine whose schedule slot has arrived and not yet fired."""
    active = getattr(stage, "caregiver_routines", None)
    for r in script.routines:
        if r.period_s <= 0.0:
            continue
        if active is not None and r.id not in active:
            continue
        slot = int((sim_time - r.offset_s) // r.period_s) if sim_time >= r.offset_s else -1
        if slot >= 0 and state.fired_slots.get(r.id, -1) < slot:
            state.fired_slots[r.id] = slot
            return r
    return None


def _bottle_home(world) -> tuple:
    obj = world.find_object("bottle")
    if obj is not None and obj.base_position is not None:
        return obj.base_position
    return (1.0, 0.5, 0.5)
