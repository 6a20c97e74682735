"""sedro: a deterministic, headless simulation kernel for developmental-robotics experiments."""

__version__ = "0.1.0"

from .action import Action, apply_action
from .body import BodySpec, default_body
from .development import Schedule, StageParams, advance_age, default_schedule, stage_at
from .intero import InteroState, update_interoception
from .scene import SceneObject, SceneSpec, load_scene_file, parse_scene
from .sensors import Observation, observe, sense_retina, sense_touch, sense_vestibular
from .world import (
    DT,
    WorldState,
    deserialize,
    load_scene,
    raycast,
    serialize,
    state_hash,
    step_world,
)

__all__ = [
    "Action",
    "BodySpec",
    "DT",
    "InteroState",
    "Observation",
    "SceneObject",
    "SceneSpec",
    "Schedule",
    "StageParams",
    "WorldState",
    "advance_age",
    "apply_action",
    "default_body",
    "default_schedule",
    "deserialize",
    "load_scene",
    "load_scene_file",
    "observe",
    "parse_scene",
    "raycast",
    "sense_retina",
    "sense_touch",
    "sense_vestibular",
    "serialize",
    "stage_at",
    "state_hash",
    "step_world",
    "update_interoception",
]
