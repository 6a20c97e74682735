"""Developmental staging: simulated age to sensory/motor gating.

A schedule file partitions the timeline from -84 days (gestation) to +365
days into stages. Acuity and strength ramp linearly inside each stage and
never step downward across a boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .body import ASSET_DIR
from .errors import SceneValidationError
from .world import DT, WorldState

AGE_MIN = -84.0
AGE_MAX = 365.0


@dataclass(frozen=True)
class StageParams:
    stage_id: str
    age_start: float
    age_end: float
    acuity_factor: float
    strength_factor: float
    scene_id: str
    caregiver_routines: frozenset


@dataclass(frozen=True)
class _StageRecord:
    stage_id: str
    start: float
    end: float
    acuity: tuple  # (value at start, value at end)
    strength: tuple
    scene_id: str
    routines: frozenset


class Schedule:
    """Validated, immutable stage table."""

    def __init__(self, records: list):
        if not records:
            raise SceneValidationError("schedule", "no stages")
        records = sorted(records, key=lambda r: r.start)
        if records[0].start != AGE_MIN or records[-1].end != AGE_MAX:
            raise SceneValidationError(
                "schedule", f"stages must cover [{AGE_MIN}, {AGE_MAX}], got [{records[0].start}, {records[-1].end}]"
            )
        for a, b in zip(records, records[1:]):
            if a.end != b.start:
                raise SceneValidationError("schedule", f"gap or overlap between {a.stage_id!r} and {b.stage_id!r}")
        prev_acu = prev_str = 0.0
        for r in records:
            for name, pair in (("acuity", r.acuity), ("strength", r.strength)):
                for v in pair:
                    if not 0.0 < v <= 1.0:
                        raise SceneValidationError(f"schedule.{r.stage_id}.{name}", f"factor {v} outside (0, 1]")
                if pair[1] < pair[0]:
                    raise SceneValidationError(f"schedule.{r.stage_id}.{name}", "factor decreases within stage")
            if r.acuity[0] < prev_acu or r.strength[0] < prev_str:
                raise SceneValidationError(f"schedule.{r.stage_id}", "factor decreases across stage boundary")
            prev_acu, prev_str = r.acuity[1], r.strength[1]
        self.records = records

    @classmethod
    def parse(cls, raw, source: str = "<schedule>") -> "Schedule":
        stages = raw["stages"] if isinstance(raw, dict) else raw
        records = []
        for i, s in enumerate(stages):
            try:
                records.append(
                    _StageRecord(
                        stage_id=str(s["stage_id"]),
                        start=float(s["start_day"]),
                        end=float(s["end_day"]),
                        acuity=(float(s["acuity"][0]), float(s["acuity"][1])),
                        strength=(float(s["strength"][0]), float(s["strength"][1])),
                        scene_id=str(s["scene_id"]),
                        routines=frozenset(s.get("caregiver_routines", [])),
                    )
                )
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise SceneValidationError(f"{source}.stages[{i}]", f"malformed stage record: {e}") from e
        return cls(records)

    @classmethod
    def load(cls, path: str | Path) -> "Schedule":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SceneValidationError(str(path), f"cannot read schedule: {e}") from e
        return cls.parse(raw, source=str(path))

    def stage_at(self, sim_age: float) -> StageParams:
        """Stage containing sim_age (days), factors interpolated at that age."""
        if not AGE_MIN <= sim_age <= AGE_MAX:
            raise ValueError(f"sim_age {sim_age} outside [{AGE_MIN}, {AGE_MAX}] days")
        for r in self.records:
            last = r is self.records[-1]
            if r.start <= sim_age < r.end or (last and sim_age == r.end):
                f = (sim_age - r.start) / (r.end - r.start)
                return StageParams(
                    stage_id=r.stage_id,
                    age_start=r.start,
                    age_end=r.end,
                    acuity_factor=r.acuity[0] + (r.acuity[1] - r.acuity[0]) * f,
                    strength_factor=r.strength[0] + (r.strength[1] - r.strength[0]) * f,
                    scene_id=r.scene_id,
                    caregiver_routines=r.routines,
                )
        raise AssertionError("unreachable: schedule covers the valid range")


_default_schedule: Schedule | None = None


def default_schedule() -> Schedule:
    global _default_schedule
    if _default_schedule is None:
        _default_schedule = Schedule.load(ASSET_DIR / "schedule_default.json")
    return _default_schedule


def stage_at(sim_age: float, schedule: Schedule | None = None) -> StageParams:
    return (schedule or default_schedule()).stage_at(sim_age)


def advance_age(world: WorldState, time_scale: float, start_age: float | None = None) -> float:
    """Simulated age in days at the world's current tick.

    time_scale >= 1 compresses developmental time relative to physics time.
    """
    if time_scale < 1.0:
        raise ValueError("time_scale must be >= 1")
    age0 = world.spec.start_age_days if start_age is None else start_age
    return age0 + (world.tick * DT * time_scale) / 86400.0
