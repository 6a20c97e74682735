"""Motor command ingestion: clamping, validation, and torque gating."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .body import BodySpec, NUM_EYE, NUM_MUSCLES
from .errors import ActionError


@dataclass
class Action:
    """56-channel motor command: 53 muscle torques + 3 eye velocities, all in [-1, 1]."""

    muscle: np.ndarray
    eye: np.ndarray

    @classmethod
    def zero(cls) -> "Action":
        return cls(np.zeros(NUM_MUSCLES), np.zeros(NUM_EYE))

    @classmethod
    def from_array(cls, values) -> "Action":
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (NUM_MUSCLES + NUM_EYE,):
            raise ActionError(None, f"action must have {NUM_MUSCLES + NUM_EYE} channels, got {arr.shape}")
        validate_action(arr)
        arr = np.clip(arr, -1.0, 1.0)
        return cls(arr[:NUM_MUSCLES].copy(), arr[NUM_MUSCLES:].copy())

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.muscle, self.eye])


def validate_action(arr: np.ndarray) -> None:
    """Reject non-finite channels, naming the first offender."""
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = int(np.argmax(bad))
        raise ActionError(idx, f"non-finite action value at channel {idx}")


def apply_action(action: Action, stage, body: BodySpec):
    """Gate a clamped action into physical commands.

    Returns (joint torques [N*m] x53, eye angular velocities [rad/s] x3).
    Muscle torque is scaled by the stage's strength factor; eye speed is not
    developmentally gated.
    """
    strength = 1.0 if stage is None else float(stage.strength_factor)
    torques = action.muscle * body.j_max_torque * strength
    eye_vel = action.eye * body.eye_max_speed
    return torques, eye_vel


def clamp01(x: float) -> float:
    if math.isnan(x):
        return 0.0
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)
