"""Articulated infant body: spec file loading and forward kinematics.

The body is a 16-link tree in reduced joint coordinates. 53 motor channels
map one-to-one onto 1-DOF joints; multi-axis joints are chains of 1-DOF
rotations about fixed child-frame axes. "Abstract" joints (fingers, jaw,
vocal intensity) integrate like any other joint but do not move a link.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SceneValidationError
from .math3d import quat_mul, quat_rotate, quat_from_axis_angle

ASSET_DIR = Path(__file__).parent / "assets"

NUM_MUSCLES = 53
NUM_EYE = 3
VOICE_CHANNEL = 52


def data_dir() -> Path:
    """Default asset root; overridable via SEDRO_DATA_DIR."""
    env = os.environ.get("SEDRO_DATA_DIR")
    return Path(env) if env else ASSET_DIR


@dataclass(frozen=True)
class LinkSpec:
    id: str
    parent: int  # index into links, -1 for root
    offset: tuple
    proxy_center: tuple
    proxy_radius: float
    mass: float


@dataclass(frozen=True)
class JointSpec:
    name: str
    link: int  # child link index, -1 for abstract joints
    axis: tuple
    lo: float
    hi: float
    max_torque: float
    inertia: float
    damping: float
    abstract: bool


@dataclass(frozen=True)
class TouchSensor:
    link: int
    local: tuple
    radius: float


class BodySpec:
    """Parsed, validated body description. Immutable after load."""

    def __init__(self, raw: dict, source: str = "<body>"):
        links_raw = raw.get("links")
        joints_raw = raw.get("joints")
        if not links_raw or not joints_raw:
            raise SceneValidationError(source, "body spec needs 'links' and 'joints'")

        index = {}
        links = []
        for i, l in enumerate(links_raw):
            lid = l["id"]
            if lid in index:
                raise SceneValidationError(f"links[{i}].id", f"duplicate link id {lid!r}")
            parent = l.get("parent")
            if parent is not None and parent not in index:
                raise SceneValidationError(f"links[{i}].parent", f"unknown parent {parent!r}")
            index[lid] = i
            links.append(
                LinkSpec(
                    id=lid,
                    parent=-1 if parent is None else index[parent],
                    offset=tuple(float(v) for v in l["offset"]),
                    proxy_center=tuple(float(v) for v in l["proxy_center"]),
                    proxy_radius=float(l["proxy_radius"]),
                    mass=float(l["mass"]),
                )
            )
        self.links = links
        self.link_index = index

        joints = []
        for i, j in enumerate(joints_raw):
            lo, hi = float(j["limits"][0]), float(j["limits"][1])
            if not lo < hi:
                raise SceneValidationError(f"joints[{i}].limits", "empty limit interval")
            if j["link"] not in index:
                raise SceneValidationError(f"joints[{i}].link", f"unknown link {j['link']!r}")
            joints.append(
                JointSpec(
                    name=j["name"],
                    link=-1 if j.get("abstract") else index[j["link"]],
                    axis=tuple(float(v) for v in j["axis"]),
                    lo=lo,
                    hi=hi,
                    max_torque=float(j["max_torque"]),
                    inertia=float(j["inertia"]),
                    damping=float(j["damping"]),
                    abstract=bool(j.get("abstract", False)),
                )
            )
        if len(joints) != NUM_MUSCLES:
            raise SceneValidationError("joints", f"expected {NUM_MUSCLES} joints, got {len(joints)}")
        self.joints = joints
        self.joint_index = {j.name: i for i, j in enumerate(joints)}

        # per-link ordered list of (joint index, axis) driving that link
        self.link_joints: list[list[int]] = [[] for _ in links]
        for ji, j in enumerate(joints):
            if not j.abstract:
                self.link_joints[j.link].append(ji)

        # per-link full joint chain from the root (ancestors first)
        self.link_chain: list[list[int]] = []
        for li in range(len(links)):
            chain: list[int] = []
            node = li
            while node >= 0:
                chain = self.link_joints[node] + chain
                node = links[node].parent
            self.link_chain.append(chain)

        touch = raw["touch"]
        self.touch_sensors = [
            TouchSensor(link=index[s["link"]], local=tuple(s["local"]), radius=float(s["radius"]))
            for s in touch["sensors"]
        ]
        if len(self.touch_sensors) != 128:
            raise SceneValidationError("touch.sensors", f"expected 128, got {len(self.touch_sensors)}")
        self.touch_regions = {k: tuple(v) for k, v in touch["regions"].items()}

        # per-link sensor batches for vectorized world-position updates
        self.touch_by_link = []
        for li in range(len(links)):
            idx = [i for i, s in enumerate(self.touch_sensors) if s.link == li]
            if idx:
                locals_ = np.array([self.touch_sensors[i].local for i in idx])
                self.touch_by_link.append((li, np.array(idx, dtype=np.intp), locals_))
        self.touch_radii = np.array([s.radius for s in self.touch_sensors])
        self.touch_link_of = np.array([s.link for s in self.touch_sensors], dtype=np.intp)

        # self-touch exclusions: a sensor ignores its own link and links
        # joined to it (adjacent proxies always overlap at the joint)
        self.touch_self_mask = np.ones((len(self.touch_sensors), len(links)), dtype=bool)
        for si, s in enumerate(self.touch_sensors):
            self.touch_self_mask[si, s.link] = False
            parent = links[s.link].parent
            if parent >= 0:
                self.touch_self_mask[si, parent] = False
            for li, l in enumerate(links):
                if l.parent == s.link:
                    self.touch_self_mask[si, li] = False

        self.head_link = index[raw["head_link"]]
        eye = raw["eye"]
        self.eye_link = index[eye["link"]]
        self.eye_offset = tuple(eye["local_offset"])
        self.eye_forward = tuple(eye["forward_axis"])
        self.eye_up = tuple(eye["up_axis"])
        self.eye_max_speed = float(eye["max_speed"])
        self.eye_limits = (
            float(eye["yaw_limit"]),
            float(eye["pitch_limit"]),
            float(eye["torsion_limit"]),
        )
        self.fovea_res = int(eye["fovea_res"])
        self.fovea_fov = math.radians(float(eye["fovea_fov_deg"]))
        self.periphery_res = int(eye["periphery_res"])
        self.periphery_fov = math.radians(float(eye["periphery_fov_deg"]))

        self.total_mass = sum(l.mass for l in links)
        self.canonical_json = json.dumps(raw, sort_keys=True, separators=(",", ":"))

        # numpy views used by the integrator
        self.j_inertia = np.array([j.inertia for j in joints])
        self.j_damping = np.array([j.damping for j in joints])
        self.j_lo = np.array([j.lo for j in joints])
        self.j_hi = np.array([j.hi for j in joints])
        self.j_max_torque = np.array([j.max_torque for j in joints])

    @classmethod
    def load(cls, path: str | Path) -> "BodySpec":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SceneValidationError(str(path), f"cannot read body spec: {e}") from e
        return cls(raw, source=str(path))


_default_body: BodySpec | None = None


def default_body() -> BodySpec:
    global _default_body
    if _default_body is None:
        _default_body = BodySpec.load(ASSET_DIR / "body_infant.json")
    return _default_body


def forward_kinematics(body: BodySpec, root_pos, root_quat, joint_angles) -> list:
    """World pose (position, quaternion) of every link.

    Joint chains compose in file order about fixed child-frame axes,
    applied after the parent offset translation.
    """
    poses = [None] * len(body.links)
    for li, link in enumerate(body.links):
        if link.parent < 0:
            poses[li] = (tuple(root_pos), tuple(root_quat))
            continue
        ppos, pquat = poses[link.parent]
        off = quat_rotate(pquat, link.offset)
        pos = (ppos[0] + off[0], ppos[1] + off[1], ppos[2] + off[2])
        quat = pquat
        for ji in body.link_joints[li]:
            a = joint_angles[ji]
            if a != 0.0:
                quat = quat_mul(quat, quat_from_axis_angle(body.joints[ji].axis, a))
        poses[li] = (pos, quat)
    return poses
