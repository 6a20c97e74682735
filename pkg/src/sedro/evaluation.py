"""Habituation battery: infant-controlled trials, looking-time measurement,
and the rod-and-box perceptual-completion scenario.

A scenario is a session controller: it patches stimulus objects into the
scene, advertises them to the agent through EVENT frames, accumulates
per-tick gaze booleans into trials, and applies the habituation criterion.
Looking time is dt times the number of gaze-on ticks, exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

from .math3d import quat_rotate_inv
from .scene import Material, MotionScript, SceneObject
from .sensors import eye_position, gaze_ray
from .world import DT, WorldState, raycast

LOOK_AWAY = "look_away"
CAP = "cap"


@dataclass(frozen=True)
class HabituationCriterion:
    """Windowed-ratio habituation rule over trial looking times."""

    window: int = 3
    ratio: float = 0.5
    min_trials: int = 6
    max_trials: int = 14
    lookaway_end_s: float = 2.0
    trial_cap_s: float = 60.0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must be in (0,1), got {self.ratio}")
        if not self.window <= self.min_trials <= self.max_trials:
            raise ValueError("need window <= min_trials <= max_trials")


@dataclass
class Trial:
    index: int
    phase: str
    stimulus_id: str
    looking_time_s: float
    ended_by: str
    n_ticks: int


@dataclass
class HabituationReport:
    scenario: str
    seed: int
    config: dict
    habituation_trials: list
    habituated_at: Optional[int]
    test_trials: list
    novelty_preference: Optional[float]
    no_looking: bool
    gaze_csv: Optional[str] = None


def habituation_reached(looking_times, criterion: HabituationCriterion) -> bool:
    """True iff the last `window` mean dropped below ratio x first `window` mean."""
    n = len(looking_times)
    if n < criterion.min_trials:
        return False
    w = criterion.window
    first = sum(looking_times[:w]) / w
    last = sum(looking_times[-w:]) / w
    return last < criterion.ratio * first


def gaze_on_stimulus(state: WorldState, stimulus_tags, cone_deg: float = 0.0) -> bool:
    """Does the central fovea ray hit an object carrying any stimulus tag?

    With cone_deg > 0, additionally counts stimulus objects whose center
    lies within that half-angle of the gaze axis.
    """
    tags = frozenset(stimulus_tags)
    origin, direction = gaze_ray(state)
    hit = raycast(state, origin, direction)
    if hit is not None:
        obj = state.find_object(hit.object_id)
        if obj is not None and tags & obj.tags:
            return True
    if cone_deg > 0.0:
        cos_lim = math.cos(math.radians(cone_deg))
        for obj in state.objects:
            if not (tags & obj.tags):
                continue
            d = (
                obj.position[0] - origin[0],
                obj.position[1] - origin[1],
                obj.position[2] - origin[2],
            )
            norm = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
            if norm > 1e-9:
                cosang = (d[0] * direction[0] + d[1] * direction[1] + d[2] * direction[2]) / norm
                if cosang >= cos_lim:
                    return True
    return False


# -- rod-and-box scenario ------------------------------------------------------

DEFAULT_ROD_BOX_CONFIG = {
    "rod_length_m": 0.3,
    "rod_radius_m": 0.018,
    "box_width_m": 0.12,
    "box_height_m": 0.1,
    "oscillation_amplitude_m": 0.08,
    "oscillation_hz": 0.5,
    "display_distance_m": 0.6,
    "box_standoff_m": 0.08,
    "test_trials": 6,
    "blank_s": 2.0,
    "gaze_cone_deg": 0.0,
    "criterion": {},
}

HABITUATION = "habituation"
TEST = "test"

OCCLUDED = "occluded_rod"
COMPLETE = "complete_rod"
BROKEN = "broken_rod"


class RodAndBoxController:
    """Session controller implementing the full rod-and-box procedure.

    Phases: a lead-in blank, habituation trials with the occluded moving
    rod until the criterion fires (or max_trials), then 6 alternating test
    trials (complete rod vs broken rod, first one counterbalanced by seed
    parity). Interoceptive decay is frozen for the whole scenario.
    """

    def __init__(self, config: dict | None = None, seed: int = 0):
        cfg = dict(DEFAULT_ROD_BOX_CONFIG)
        cfg.update(config or {})
        self.config = cfg
        self.seed = seed
        self.criterion = HabituationCriterion(**cfg["criterion"])
        self.trials: list[Trial] = []
        self.gaze_traces: list[list[int]] = []
        self.habituated_at: Optional[int] = None
        self.done = False
        self._phase = HABITUATION
        self._phase_trial = 0
        self._state = "blank"
        self._clock_ticks = 0
        self._lookaway_ticks = 0
        self._look_ticks = 0
        self._trace: list[int] = []
        self._current: Optional[dict] = None
        self._display: Optional[tuple] = None
        self._blank_ticks = round(self.config["blank_s"] / DT)
        self._lookaway_end_ticks = round(self.criterion.lookaway_end_s / DT)
        self._cap_ticks = round(self.criterion.trial_cap_s / DT)

    # geometry -----------------------------------------------------------------

    def _descriptor(self, stimulus_id: str, world: WorldState) -> dict:
        cfg = self.config
        cx, cy, cz = self._display
        eye = eye_position(world)
        _, head_quat = world.head_pose()

        def bearing(p):
            d = (p[0] - eye[0], p[1] - eye[1], p[2] - eye[2])
            dh = quat_rotate_inv(head_quat, d)
            yaw = math.atan2(dh[1], dh[0])
            norm = math.sqrt(dh[0] ** 2 + dh[1] ** 2 + dh[2] ** 2)
            pitch = -math.asin(dh[2] / norm)
            return yaw, pitch

        yaw0, pitch0 = bearing((cx, cy, cz))
        depth = cfg["display_distance_m"]
        amp_yaw = math.atan2(cfg["oscillation_amplitude_m"], depth)
        seg_center = (cfg["box_width_m"] + (cfg["rod_length_m"] - cfg["box_width_m"]) / 2.0) / 2.0
        tags = {
            OCCLUDED: ["box", "rod"],
            COMPLETE: ["rod"],
            BROKEN: ["rod_segments"],
        }[stimulus_id]
        return {
            "id": stimulus_id,
            "tags": tags,
            "aim": {"yaw": yaw0, "pitch": pitch0},
            "osc": {"yaw_amp": amp_yaw, "freq_hz": cfg["oscillation_hz"], "phase": 0.0},
            "segment_offset_yaw": math.atan2(seg_center, depth) if stimulus_id == BROKEN else 0.0,
        }

    def _stimulus_objects(self, stimulus_id: str) -> list:
        cfg = self.config
        cx, cy, cz = self._display
        rod_hl = cfg["rod_length_m"] / 2.0
        r = cfg["rod_radius_m"]
        motion = dict(
            axis=(1.0, 0.0, 0.0),
            amplitude=cfg["oscillation_amplitude_m"],
            frequency_hz=cfg["oscillation_hz"],
            phase=0.0,
        )
        # capsule axes run along local z; rotate z onto world x
        lie_x = (math.sqrt(0.5), 0.0, math.sqrt(0.5), 0.0)
        rod_color = (210, 60, 50)
        objs = []

        def capsule(oid, x_off, half_len, tags):
            return SceneObject(
                id=oid,
                shape="capsule",
                position=[cx + x_off, cy, cz],
                orientation=list(lie_x),
                half_extents=(r, half_len, 0.0),
                mass=0.0,
                material=Material(),
                color=rod_color,
                tags=frozenset(tags + ["stimulus"]),
                collides=False,
                motion=MotionScript(**motion),
                base_position=(cx + x_off, cy, cz),
            )

        if stimulus_id == OCCLUDED:
            objs.append(capsule("stim_rod", 0.0, rod_hl, ["rod"]))
            objs.append(
                SceneObject(
                    id="stim_box",
                    shape="box",
                    position=[cx, cy, cz - cfg["box_standoff_m"]],
                    orientation=[1.0, 0.0, 0.0, 0.0],
                    half_extents=(cfg["box_width_m"] / 2.0, cfg["box_height_m"] / 2.0, 0.008),
                    mass=0.0,
                    material=Material(),
                    color=(90, 110, 200),
                    tags=frozenset(["box", "stimulus"]),
                    collides=False,
                )
            )
        elif stimulus_id == COMPLETE:
            objs.append(capsule("stim_rod", 0.0, rod_hl, ["rod"]))
        else:  # broken: two segments flanking a center gap as wide as the box
            seg_hl = (cfg["rod_length_m"] - cfg["box_width_m"]) / 4.0
            off = cfg["box_width_m"] / 2.0 + seg_hl
            objs.append(capsule("stim_seg_l", -off, seg_hl, ["rod_segments"]))
            objs.append(capsule("stim_seg_r", +off, seg_hl, ["rod_segments"]))
        return objs

    # session hooks --------------------------------------------------------------

    def on_session_start(self, session) -> None:
        world = session.world
        world.intero.frozen = True
        head = world.head_position()
        cfg = self.config
        self._display = (head[0], head[1], head[2] + cfg["display_distance_m"])
        first_test = COMPLETE if self.seed % 2 == 0 else BROKEN
        second = BROKEN if first_test == COMPLETE else COMPLETE
        self._test_order = [first_test, second]
        session.queue_event(
            {
                "kind": "phase_start",
                "phase": HABITUATION,
                "stimuli": [self._descriptor(OCCLUDED, world)],
                "trials_max": self.criterion.max_trials,
                "blank_s": cfg["blank_s"],
            }
        )
        self._state = "blank"
        self._clock_ticks = 0

    def on_tick(self, session) -> None:
        if self.done:
            return
        world = session.world
        if self._state == "blank":
            self._clock_ticks += 1
            if self._clock_ticks >= self._blank_ticks:
                self._begin_trial(session)
            return

        # presenting: accumulate looking, check end conditions
        gazing = gaze_on_stimulus(world, ["stimulus"], self.config["gaze_cone_deg"])
        self._trace.append(1 if gazing else 0)
        self._clock_ticks += 1
        if gazing:
            self._look_ticks += 1
            self._lookaway_ticks = 0
        else:
            self._lookaway_ticks += 1
        if self._lookaway_ticks >= self._lookaway_end_ticks:
            self._end_trial(session, LOOK_AWAY)
        elif self._clock_ticks >= self._cap_ticks:
            self._end_trial(session, CAP)

    # trial machinery --------------------------------------------------------------

    def _next_stimulus(self) -> str:
        if self._phase == HABITUATION:
            return OCCLUDED
        return self._test_order[self._phase_trial % 2]

    def _begin_trial(self, session) -> None:
        world = session.world
        stimulus_id = self._next_stimulus()
        for obj in self._stimulus_objects(stimulus_id):
            world.add_object(obj)
        self._current = {"id": stimulus_id}
        self._state = "present"
        self._clock_ticks = 0
        self._look_ticks = 0
        self._lookaway_ticks = 0
        self._trace = []
        session.queue_event(
            {
                "kind": "trial_start",
                "phase": self._phase,
                "trial": self._phase_trial + 1,
                "stimulus": self._descriptor(stimulus_id, world),
            }
        )

    def _end_trial(self, session, ended_by: str) -> None:
        world = session.world
        for oid in ("stim_rod", "stim_box", "stim_seg_l", "stim_seg_r"):
            world.remove_object(oid)
        trial = Trial(
            index=len(self.trials) + 1,
            phase=self._phase,
            stimulus_id=self._current["id"],
            looking_time_s=self._look_ticks * DT,
            ended_by=ended_by,
            n_ticks=self._clock_ticks,
        )
        self.trials.append(trial)
        self.gaze_traces.append(self._trace)
        self._phase_trial += 1
        session.queue_event(
            {
                "kind": "trial_end",
                "phase": self._phase,
                "trial": self._phase_trial,
                "stimulus_id": trial.stimulus_id,
                "looking_time_s": trial.looking_time_s,
                "ended_by": ended_by,
            }
        )
        self._state = "blank"
        self._clock_ticks = 0
        self._current = None

        if self._phase == HABITUATION:
            times = [t.looking_time_s for t in self.trials if t.phase == HABITUATION]
            if habituation_reached(times, self.criterion):
                self.habituated_at = len(times)
                self._enter_test(session)
            elif len(times) >= self.criterion.max_trials:
                self._finish(session)  # never habituated: no test phase
        else:
            if self._phase_trial >= self.config["test_trials"]:
                self._finish(session)

    def _enter_test(self, session) -> None:
        self._phase = TEST
        self._phase_trial = 0
        world = session.world
        session.queue_event(
            {
                "kind": "phase_start",
                "phase": TEST,
                "stimuli": [self._descriptor(s, world) for s in self._test_order],
                "trials_max": self.config["test_trials"],
                "blank_s": self.config["blank_s"],
            }
        )

    def _finish(self, session) -> None:
        self.done = True
        report = self.report()
        session.queue_event(
            {
                "kind": "scenario_end",
                "habituated_at": report.habituated_at,
                "novelty_preference": report.novelty_preference,
            }
        )
        session.end()

    # results ------------------------------------------------------------------------

    def report(self) -> HabituationReport:
        hab = [t for t in self.trials if t.phase == HABITUATION]
        test = [t for t in self.trials if t.phase == TEST]
        broken = sum(t.looking_time_s for t in test if t.stimulus_id == BROKEN)
        complete = sum(t.looking_time_s for t in test if t.stimulus_id == COMPLETE)
        total = broken + complete
        return HabituationReport(
            scenario="rod_and_box",
            seed=self.seed,
            config=self.config,
            habituation_trials=hab,
            habituated_at=self.habituated_at,
            test_trials=test,
            novelty_preference=(broken / total) if total > 0.0 else None,
            no_looking=(total <= 0.0 and bool(test)),
        )


# -- reports -------------------------------------------------------------------------


def write_report(report: HabituationReport, path, gaze_traces=None) -> Path:
    """Write <path>.json plus a tick-level gaze CSV alongside it."""
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    csv_path = path.with_suffix(".csv")
    report.gaze_csv = csv_path.name

    doc = asdict(report)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")

    with csv_path.open("w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["trial", "phase", "stimulus_id", "tick_in_trial", "gazing"])
        trials = report.habituation_trials + report.test_trials
        traces = gaze_traces or []
        for trial, trace in zip(trials, traces):
            for k, g in enumerate(trace):
                wr.writerow([trial.index, trial.phase, trial.stimulus_id, k, g])
    return path


def load_report(path) -> HabituationReport:
    doc = json.loads(Path(path).read_text())
    doc["habituation_trials"] = [Trial(**t) for t in doc["habituation_trials"]]
    doc["test_trials"] = [Trial(**t) for t in doc["test_trials"]]
    return HabituationReport(**doc)


# -- registry ---------------------------------------------------------------------------

SCENARIOS = {"rod_and_box": RodAndBoxController}


def controller_for(name: str, config: dict | None = None, seed: int = 0):
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; registered: {sorted(SCENARIOS)}")
    return SCENARIOS[name](config, seed=seed)
