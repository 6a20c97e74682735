"""Scene specification: JSON loading, validation, and scene objects.

A scene file describes the static room, any dynamic props, the agent's
starting pose, and references to the body spec and caregiver script.
Objects with mass 0 are static unless they carry a motion script, in which
case they follow it kinematically (used for evaluation stimuli).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .body import BodySpec, data_dir, default_body
from .errors import SceneValidationError
from .math3d import quat_norm_error, quat_normalize

SHAPES = ("sphere", "capsule", "box")


@dataclass
class Material:
    friction: float = 0.6
    restitution: float = 0.1
    stiffness_scale: float = 1.0


@dataclass
class MotionScript:
    """Kinematic oscillation: pose = base + axis * amplitude * sin(2*pi*f*t + phase)."""

    axis: tuple
    amplitude: float
    frequency_hz: float
    phase: float = 0.0

    def offset(self, t: float) -> tuple:
        s = self.amplitude * math.sin(2.0 * math.pi * self.frequency_hz * t + self.phase)
        return (self.axis[0] * s, self.axis[1] * s, self.axis[2] * s)


@dataclass
class SceneObject:
    id: str
    shape: str
    position: list  # [x, y, z] floats, mutated in place by the stepper
    orientation: list  # [w, x, y, z]
    half_extents: tuple  # box: (hx,hy,hz); sphere: (r,0,0); capsule: (r, half_len, 0)
    mass: float
    material: Material
    color: tuple  # (r, g, b) 0..255
    tags: frozenset
    linear_velocity: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    angular_velocity: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    hollow: bool = False  # sphere interior acts as an enclosure
    collides: bool = True
    motion: MotionScript | None = None
    base_position: tuple | None = None  # anchor for kinematic motion
    asleep: bool = False

    still_ticks: int = 0

    @property
    def static(self) -> bool:
        return self.mass == 0.0 and self.motion is None

    @property
    def kinematic(self) -> bool:
        return self.mass == 0.0 and self.motion is not None


@dataclass
class SceneSpec:
    seed: int
    scene_id: str
    gravity: tuple
    objects: list
    body_spec_ref: str | None
    caregiver_script_ref: str | None
    body_position: tuple
    body_orientation: tuple
    initial_joints: dict
    start_age_days: float
    background_color: tuple
    raw: dict

    @property
    def has_caregiver(self) -> bool:
        return self.caregiver_script_ref is not None


def _need(raw: dict, key: str, where: str):
    if key not in raw:
        raise SceneValidationError(f"{where}.{key}", "missing required field")
    return raw[key]


def _finite3(v, where: str) -> tuple:
    if not (isinstance(v, (list, tuple)) and len(v) == 3):
        raise SceneValidationError(where, f"expected 3 numbers, got {v!r}")
    out = tuple(float(x) for x in v)
    if not all(math.isfinite(x) for x in out):
        raise SceneValidationError(where, f"non-finite value {v!r}")
    return out


def parse_object(raw: dict, where: str) -> SceneObject:
    oid = _need(raw, "id", where)
    shape = _need(raw, "shape", where)
    if shape not in SHAPES:
        raise SceneValidationError(f"{where}.shape", f"unknown shape {shape!r} (known: {SHAPES})")
    pos = _finite3(_need(raw, "position", where), f"{where}.position")
    quat_raw = raw.get("orientation", [1.0, 0.0, 0.0, 0.0])
    if len(quat_raw) != 4 or not all(math.isfinite(float(q)) for q in quat_raw):
        raise SceneValidationError(f"{where}.orientation", f"bad quaternion {quat_raw!r}")
    quat = tuple(float(q) for q in quat_raw)
    if quat_norm_error(quat) > 1e-3:
        raise SceneValidationError(f"{where}.orientation", "quaternion norm too far from 1")
    quat = quat_normalize(quat)

    if shape == "sphere":
        r = float(_need(raw, "radius", where))
        if r <= 0:
            raise SceneValidationError(f"{where}.radius", "must be positive")
        half = (r, 0.0, 0.0)
    elif shape == "capsule":
        r = float(_need(raw, "radius", where))
        hl = float(_need(raw, "half_length", where))
        if r <= 0 or hl <= 0:
            raise SceneValidationError(f"{where}.radius", "radius/half_length must be positive")
        half = (r, hl, 0.0)
    else:
        half = _finite3(_need(raw, "half_extents", where), f"{where}.half_extents")
        if min(half) <= 0:
            raise SceneValidationError(f"{where}.half_extents", "must be positive")

    mass = float(raw.get("mass", 0.0))
    if mass < 0 or not math.isfinite(mass):
        raise SceneValidationError(f"{where}.mass", f"bad mass {mass!r}")

    mat_raw = raw.get("material", {})
    material = Material(
        friction=float(mat_raw.get("friction", 0.6)),
        restitution=float(mat_raw.get("restitution", 0.1)),
        stiffness_scale=float(mat_raw.get("stiffness_scale", 1.0)),
    )

    color_raw = raw.get("color", [128, 128, 128])
    color = tuple(int(c) for c in color_raw)
    if len(color) != 3 or not all(0 <= c <= 255 for c in color):
        raise SceneValidationError(f"{where}.color", f"bad color {color_raw!r}")

    motion = None
    if "motion" in raw and raw["motion"] is not None:
        m = raw["motion"]
        if m.get("kind", "oscillate") != "oscillate":
            raise SceneValidationError(f"{where}.motion.kind", f"unknown kind {m.get('kind')!r}")
        motion = MotionScript(
            axis=_finite3(_need(m, "axis", f"{where}.motion"), f"{where}.motion.axis"),
            amplitude=float(_need(m, "amplitude", f"{where}.motion")),
            frequency_hz=float(_need(m, "frequency_hz", f"{where}.motion")),
            phase=float(m.get("phase", 0.0)),
        )
        if mass != 0.0:
            raise SceneValidationError(f"{where}.motion", "motion scripts require mass 0")

    return SceneObject(
        id=str(oid),
        shape=shape,
        position=list(pos),
        orientation=list(quat),
        half_extents=half,
        mass=mass,
        material=material,
        color=color,
        tags=frozenset(str(t) for t in raw.get("tags", [])),
        hollow=bool(raw.get("hollow", False)),
        collides=bool(raw.get("collides", True)),
        motion=motion,
        base_position=pos if motion else None,
    )


def object_to_raw(obj: SceneObject) -> dict:
    """Structural JSON form of an object (poses excluded; those are dynamic)."""
    raw: dict = {
        "id": obj.id,
        "shape": obj.shape,
        "position": list(obj.position),
        "mass": obj.mass,
        "material": {
            "friction": obj.material.friction,
            "restitution": obj.material.restitution,
            "stiffness_scale": obj.material.stiffness_scale,
        },
        "color": list(obj.color),
        "tags": sorted(obj.tags),
        "hollow": obj.hollow,
        "collides": obj.collides,
    }
    if obj.shape == "sphere":
        raw["radius"] = obj.half_extents[0]
    elif obj.shape == "capsule":
        raw["radius"] = obj.half_extents[0]
        raw["half_length"] = obj.half_extents[1]
    else:
        raw["half_extents"] = list(obj.half_extents)
    if obj.motion is not None:
        raw["motion"] = {
            "kind": "oscillate",
            "axis": list(obj.motion.axis),
            "amplitude": obj.motion.amplitude,
            "frequency_hz": obj.motion.frequency_hz,
            "phase": obj.motion.phase,
        }
        raw["position"] = list(obj.base_position)
    return raw


def parse_scene(raw: dict, source: str = "<scene>") -> SceneSpec:
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise SceneValidationError("seed", f"seed must be a non-negative integer, got {seed!r}")
    scene_id = _need(raw, "scene_id", "scene")
    gravity = _finite3(raw.get("gravity", [0.0, 0.0, -9.81]), "gravity")

    objects = []
    seen = set()
    for i, o in enumerate(raw.get("objects", [])):
        obj = parse_object(o, f"objects[{i}]")
        if obj.id in seen:
            raise SceneValidationError(f"objects[{i}].id", f"duplicate object id {obj.id!r}")
        seen.add(obj.id)
        objects.append(obj)

    agent = raw.get("agent", {})
    body_pos = _finite3(agent.get("position", [0.0, 0.0, 0.1]), "agent.position")
    body_quat = tuple(float(q) for q in agent.get("orientation", [1.0, 0.0, 0.0, 0.0]))
    if quat_norm_error(body_quat) > 1e-3:
        raise SceneValidationError("agent.orientation", "quaternion norm too far from 1")
    initial_joints = {str(k): float(v) for k, v in agent.get("initial_joints", {}).items()}

    bg = raw.get("background_color", [0, 0, 0])
    return SceneSpec(
        seed=seed,
        scene_id=str(scene_id),
        gravity=gravity,
        objects=objects,
        body_spec_ref=raw.get("body_spec_ref"),
        caregiver_script_ref=raw.get("caregiver_script_ref"),
        body_position=body_pos,
        body_orientation=quat_normalize(body_quat),
        initial_joints=initial_joints,
        start_age_days=float(raw.get("start_age_days", 0.0)),
        background_color=tuple(int(c) for c in bg),
        raw=raw,
    )


def resolve_asset(ref: str | None, base: Path | None = None) -> Path | None:
    """Resolve an asset reference against its scene file, then the data dir."""
    if ref is None:
        return None
    p = Path(ref)
    if p.is_absolute():
        return p
    if base is not None and (base / p).exists():
        return base / p
    return data_dir() / p


def load_scene_file(path: str | Path) -> SceneSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise SceneValidationError(str(path), f"cannot read scene: {e}") from e
    except json.JSONDecodeError as e:
        raise SceneValidationError(str(path), f"invalid JSON: {e}") from e
    spec = parse_scene(raw, source=str(path))
    spec.raw["__dir__"] = str(path.parent)
    return spec


def scene_body_spec(spec: SceneSpec) -> BodySpec:
    if spec.body_spec_ref is None:
        return default_body()
    base = Path(spec.raw["__dir__"]) if "__dir__" in spec.raw else None
    return BodySpec.load(resolve_asset(spec.body_spec_ref, base))
