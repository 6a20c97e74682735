"""Deterministic fixed-timestep world kernel.

One tick advances the world by exactly dt = 1/50 s:
  * the agent's 53 joints integrate with semi-implicit Euler (implicit
    per-joint damping) and hard limit clamps,
  * the floating pelvis integrates as a rigid aggregate under gravity and
    penalty contacts collected over per-link proxy spheres,
  * free scene objects integrate the same way against static geometry,
  * kinematic objects follow their motion scripts exactly.

Everything is 64-bit IEEE-754 with fixed evaluation order, so identical
inputs produce bit-identical states. Settled bodies go to sleep (exact
zero velocities) which both stabilizes long rollouts and makes quiescent
ticks cheap.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from typing import Optional

import numpy as np

from .action import Action, apply_action, clamp01, validate_action
from .body import BodySpec, VOICE_CHANNEL, forward_kinematics
from .caregiver import CAPSULE_HALF_LEN, CAPSULE_RADIUS, CaregiverCommand, CaregiverScript, CaregiverState
from .errors import SceneValidationError
from .intero import InteroState, update_interoception
from .math3d import quat_integrate, quat_normalize, quat_rotate, quat_to_matrix
from .scene import SceneObject, SceneSpec, load_scene_file, parse_scene, resolve_asset, scene_body_spec

DT = 0.02  # fixed tick length, 1/50 s
SCHEMA_VERSION = 1

# contact model defaults (overridable per scene via "physics")
K_CONTACT = 5000.0  # N/m
C_CONTACT = 50.0  # N*s/m
KT_FRICTION = 200.0  # N*s/m tangential
PEN_REF = 0.003  # m, cubic stiffening reference depth
AGG_INERTIA = 0.06  # kg*m^2, aggregate body rotational inertia
SLEEP_VEL = 5e-3  # m/s (and rad/s for joints)
SLEEP_OMEGA = 5e-2  # rad/s
SLEEP_TICKS = 25


class Hit:
    __slots__ = ("object_id", "distance", "normal", "color")

    def __init__(self, object_id: str, distance: float, normal, color):
        self.object_id = object_id
        self.distance = distance
        self.normal = normal
        self.color = color

    def __repr__(self):
        return f"Hit({self.object_id!r}, d={self.distance:.6f})"


class WorldState:
    """Complete simulation state; stepped in place, one writer at a time."""

    dt = DT

    def __init__(self, spec: SceneSpec, body: BodySpec, script: Optional[CaregiverScript]):
        self.spec = spec
        self.body = body
        self.scene_id = spec.scene_id
        self.seed = spec.seed
        self.gravity = spec.gravity
        self.tick = 0
        self.objects: list[SceneObject] = list(spec.objects)

        nj = len(body.joints)
        self.joint_angles = np.zeros(nj)
        self.joint_vels = np.zeros(nj)
        for name, angle in spec.initial_joints.items():
            if name not in body.joint_index:
                raise SceneValidationError(f"agent.initial_joints.{name}", "unknown joint")
            ji = body.joint_index[name]
            self.joint_angles[ji] = min(max(angle, body.joints[ji].lo), body.joints[ji].hi)
        self.eye_angles = np.zeros(3)
        self.root_pos = np.array(spec.body_position, dtype=np.float64)
        self.root_quat = spec.body_orientation
        self.root_vel = np.zeros(3)
        self.root_omega = np.zeros(3)
        self.voice_level = 0.0
        self.asleep = False
        self._still_ticks = 0

        self.intero = InteroState()
        self.caregiver_script = script
        self.caregiver: Optional[CaregiverState] = None
        if script is not None:
            home = tuple(spec.raw.get("caregiver_home", [1.2, 0.0, 0.45]))
            self.caregiver = CaregiverState(position=list(home), home=home)

        self._fk_key = None
        self._link_poses = None
        self._head_pos = None
        self.head_vel = (0.0, 0.0, 0.0)
        self.prev_head_vel = (0.0, 0.0, 0.0)

        phys = spec.raw.get("physics", {})
        self.k_contact = float(phys.get("stiffness", K_CONTACT))
        self.c_contact = float(phys.get("damping", C_CONTACT))
        self.kt_friction = float(phys.get("tangential_damping", KT_FRICTION))

        self._object_index = {o.id: i for i, o in enumerate(self.objects)}
        self._static_cache = None
        self._scene_rev = 0
        self._sensor_cache = None
        self._proxy_locals = np.array([body.links[i].proxy_center for i in range(len(body.links))])
        self._proxy_radii = np.array([body.links[i].proxy_radius for i in range(len(body.links))])
        self._link_masses = np.array([body.links[i].mass for i in range(len(body.links))])
        self.total_mass = body.total_mass
        self._update_head_tracking(reset=True)

    # -- structural helpers -------------------------------------------------

    @property
    def sim_time(self) -> float:
        return self.tick * DT

    def find_object(self, oid: str) -> Optional[SceneObject]:
        i = self._object_index.get(oid)
        return None if i is None else self.objects[i]

    def add_object(self, obj: SceneObject) -> None:
        if obj.id in self._object_index:
            raise SceneValidationError("object.id", f"duplicate object id {obj.id!r}")
        self._object_index[obj.id] = len(self.objects)
        self.objects.append(obj)
        self._static_cache = None
        self._scene_rev += 1
        if obj.collides:
            self.wake()

    def remove_object(self, oid: str) -> None:
        i = self._object_index.pop(oid, None)
        if i is None:
            return
        collided = self.objects[i].collides
        del self.objects[i]
        self._object_index = {o.id: j for j, o in enumerate(self.objects)}
        self._static_cache = None
        self._scene_rev += 1
        if collided:
            self.wake()

    def wake(self) -> None:
        self.asleep = False
        self._still_ticks = 0

    def link_poses(self) -> list:
        key = (self.root_pos.tobytes(), self.root_quat, self.joint_angles.tobytes())
        if self._fk_key != key:
            self._link_poses = forward_kinematics(self.body, self.root_pos, self.root_quat, self.joint_angles)
            self._fk_key = key
            self._head_pos = self._link_poses[self.body.head_link][0]
        return self._link_poses

    def head_position(self) -> tuple:
        self.link_poses()
        return self._head_pos

    def head_pose(self) -> tuple:
        return self.link_poses()[self.body.head_link]

    def proxy_positions(self) -> np.ndarray:
        """World centers of every link's contact proxy sphere, shape (L, 3)."""
        poses = self.link_poses()
        out = np.empty((len(poses), 3))
        for i, (pos, quat) in enumerate(poses):
            c = quat_rotate(quat, self._proxy_locals[i])
            out[i, 0] = pos[0] + c[0]
            out[i, 1] = pos[1] + c[1]
            out[i, 2] = pos[2] + c[2]
        return out

    def _update_head_tracking(self, reset: bool = False) -> None:
        new_pos = self.head_position()
        if reset:
            self.head_vel = (0.0, 0.0, 0.0)
            self.prev_head_vel = (0.0, 0.0, 0.0)
        else:
            old = self._head_track_pos
            vel = ((new_pos[0] - old[0]) / DT, (new_pos[1] - old[1]) / DT, (new_pos[2] - old[2]) / DT)
            self.prev_head_vel = self.head_vel
            self.head_vel = vel
        self._head_track_pos = new_pos


# -- scene loading ----------------------------------------------------------


def load_scene(spec_or_path) -> WorldState:
    """Build the tick-0 world from a scene spec (dict, SceneSpec, or path)."""
    if isinstance(spec_or_path, dict):
        spec = parse_scene(spec_or_path)
    elif isinstance(spec_or_path, SceneSpec):
        spec = spec_or_path
    else:
        spec = load_scene_file(spec_or_path)

    body = scene_body_spec(spec)
    script = None
    if spec.caregiver_script_ref is not None:
        base = None
        if "__dir__" in spec.raw:
            from pathlib import Path

            base = Path(spec.raw["__dir__"])
        script = CaregiverScript.load(resolve_asset(spec.caregiver_script_ref, base))
    return WorldState(spec, body, script)


# -- static contact geometry -------------------------------------------------


def _closest_feature(obj: SceneObject, points: np.ndarray):
    """Signed distance and outward normal from static object surface to points.

    Returns (dist, normal) with dist negative inside the solid. Hollow
    spheres measure from the inner wall for contained points.
    """
    c = np.asarray(obj.position)
    if obj.shape == "sphere":
        r = obj.half_extents[0]
        d = points - c
        dist_c = np.sqrt(np.einsum("ij,ij->i", d, d))
        safe = np.where(dist_c > 1e-12, dist_c, 1.0)
        n = d / safe[:, None]
        if obj.hollow:
            return r - dist_c, -n
        return dist_c - r, n
    if obj.shape == "capsule":
        r, hl = obj.half_extents[0], obj.half_extents[1]
        axis = np.asarray(quat_rotate(tuple(obj.orientation), (0.0, 0.0, 1.0)))
        d = points - c
        t = np.clip(d @ axis, -hl, hl)
        closest = c + t[:, None] * axis
        dd = points - closest
        dist_c = np.sqrt(np.einsum("ij,ij->i", dd, dd))
        safe = np.where(dist_c > 1e-12, dist_c, 1.0)
        return dist_c - r, dd / safe[:, None]
    # box
    rot = quat_to_matrix(tuple(obj.orientation))
    h = np.asarray(obj.half_extents)
    local = (points - c) @ rot  # world->local (rot columns are local axes in world)
    q = np.abs(local) - h
    outside = np.maximum(q, 0.0)
    out_d = np.sqrt(np.einsum("ij,ij->i", outside, outside))
    inside_d = np.minimum(np.max(q, axis=1), 0.0)
    dist = out_d + inside_d
    # normal: outside -> from closest point; inside -> nearest face axis
    n_local = np.where(q > 0.0, np.sign(local) * outside, 0.0)
    nn = np.sqrt(np.einsum("ij,ij->i", n_local, n_local))
    face_axis = np.argmax(q, axis=1)
    face_n = np.zeros_like(local)
    face_n[np.arange(len(points)), face_axis] = np.sign(local[np.arange(len(points)), face_axis])
    n_local = np.where(nn[:, None] > 1e-12, n_local / np.where(nn > 1e-12, nn, 1.0)[:, None], face_n)
    return dist, n_local @ rot.T


def _point_velocities(state: WorldState, points: np.ndarray) -> np.ndarray:
    """Rigid-aggregate velocity of body points: v + omega x r."""
    r = points - state.root_pos
    return state.root_vel + np.cross(state.root_omega, r)


# -- stepping ----------------------------------------------------------------


def step_world(state: WorldState, action, caregiver_cmd: Optional[CaregiverCommand] = None, stage=None) -> WorldState:
    """Advance exactly one tick. Mutates and returns `state`.

    `action` may be an Action or a 56-float array-like; values are clamped
    to [-1, 1]. Non-finite input rejects the tick with ActionError naming
    the channel.
    """
    if not isinstance(action, Action):
        action = Action.from_array(action)
    else:
        validate_action(action.muscle)
        validate_action(action.eye)
        action = Action(np.clip(action.muscle, -1.0, 1.0), np.clip(action.eye, -1.0, 1.0))

    torques, eye_vel = apply_action(action, stage, state.body)
    feeds = []

    # caregiver command: kinematic capsule + held objects
    if caregiver_cmd is not None and state.caregiver is not None:
        cg = state.caregiver
        if caregiver_cmd.move_to is not None:
            cg.position[0], cg.position[1], cg.position[2] = caregiver_cmd.move_to
        for oid, pos in caregiver_cmd.move_objects:
            obj = state.find_object(oid)
            if obj is not None:
                obj.position[0], obj.position[1], obj.position[2] = pos
                obj.linear_velocity[0] = obj.linear_velocity[1] = obj.linear_velocity[2] = 0.0
                obj.asleep = True  # held: kinematic while scripted
        for oid in caregiver_cmd.wake_objects:
            obj = state.find_object(oid)
            if obj is not None:
                obj.asleep = False
        if caregiver_cmd.feed_amount > 0.0:
            feeds.append(caregiver_cmd.feed_amount)

    next_time = (state.tick + 1) * DT
    for obj in state.objects:
        if obj.motion is not None:
            off = obj.motion.offset(next_time)
            bp = obj.base_position
            obj.position[0] = bp[0] + off[0]
            obj.position[1] = bp[1] + off[1]
            obj.position[2] = bp[2] + off[2]

    _step_body(state, torques)
    _step_objects(state)

    # eyes: velocity control with hard angle limits, never strength-gated
    lim = state.body.eye_limits
    for i in range(3):
        a = state.eye_angles[i] + eye_vel[i] * DT
        state.eye_angles[i] = -lim[i] if a < -lim[i] else (lim[i] if a > lim[i] else a)

    state.voice_level = clamp01(float(action.muscle[VOICE_CHANNEL]))
    update_interoception(state.intero, feeds, DT)

    state.tick += 1
    state._update_head_tracking()
    return state


def _gated_nonzero(torques: np.ndarray) -> bool:
    return bool(np.any(torques != 0.0))


def _step_body(state: WorldState, torques: np.ndarray) -> None:
    body = state.body
    if state.asleep:
        if _gated_nonzero(torques) or _dynamic_object_near_body(state):
            state.wake()
        else:
            return

    # joint integration: implicit damping keeps any inertia/damping pair stable
    prev_angles = state.joint_angles
    inv_i = DT / body.j_inertia
    vels = (state.joint_vels + torques * inv_i) / (1.0 + body.j_damping * inv_i)
    angles = state.joint_angles + vels * DT
    low = angles < body.j_lo
    high = angles > body.j_hi
    if low.any():
        angles = np.where(low, body.j_lo, angles)
        vels = np.where(low, np.maximum(vels, 0.0), vels)
    if high.any():
        angles = np.where(high, body.j_hi, angles)
        vels = np.where(high, np.minimum(vels, 0.0), vels)
    state.joint_angles = angles
    state.joint_vels = vels

    # aggregate root: gravity, then sequential implicit contact impulses
    # over the link proxies (implicit spring-damper per contact point is
    # unconditionally stable at any stiffness)
    points = state.proxy_positions()
    com = (state._link_masses @ points) / state.total_mass
    rel = points - com
    inertia = max(float(state._link_masses @ np.einsum("ij,ij->i", rel, rel)), 0.01)

    m = state.total_mass
    v = state.root_vel + np.asarray(state.gravity) * DT
    w = state.root_omega.copy()

    for obj in state.objects:
        if not obj.collides or not (obj.static or obj.kinematic):
            continue
        dist, normal = _closest_feature(obj, points)
        pen = state._proxy_radii - dist
        idx = np.nonzero(pen > 0.0)[0]
        if idx.size == 0:
            continue
        k0 = state.k_contact * obj.material.stiffness_scale
        c0 = state.c_contact * (1.0 - obj.material.restitution)
        mu = obj.material.friction
        for i in idx:
            p = float(pen[i])
            n = normal[i]
            r = points[i] - com
            v_pt = v + np.cross(w, r)
            vn = float(v_pt @ n)
            rxn = np.cross(r, n)
            m_eff = 1.0 / (1.0 / m + float(rxn @ rxn) / inertia)
            k = k0 * (1.0 + (p / PEN_REF) ** 2)  # stiffen deep contacts
            num = vn + DT * k * p / m_eff
            den = 1.0 + DT * (DT * k + c0) / m_eff
            lam = m_eff * (num / den - vn)
            if lam <= 0.0:
                continue
            imp = lam * n
            v = v + imp / m
            w = w + np.cross(r, imp) / inertia
            # Coulomb-clamped tangential impulse
            v_pt = v + np.cross(w, r)
            vt = v_pt - float(v_pt @ n) * n
            vt_mag = math.sqrt(float(vt @ vt))
            if vt_mag > 1e-9:
                t_dir = vt / vt_mag
                rxt = np.cross(r, t_dir)
                m_eff_t = 1.0 / (1.0 / m + float(rxt @ rxt) / inertia)
                lam_t = min(mu * lam, m_eff_t * vt_mag)
                imp_t = -lam_t * t_dir
                v = v + imp_t / m
                w = w + np.cross(r, imp_t) / inertia

    state.root_vel = v
    state.root_pos = state.root_pos + v * DT
    state.root_omega = w
    state.root_quat = quat_integrate(state.root_quat, tuple(w), DT)

    _enforce_penetration_cap(state, prev_angles)

    # sleep bookkeeping: exact stillness after a settling streak
    if (
        not _gated_nonzero(torques)
        and float(np.max(np.abs(state.joint_vels))) < SLEEP_VEL
        and float(np.max(np.abs(state.root_vel))) < SLEEP_VEL
        and float(np.max(np.abs(state.root_omega))) < SLEEP_OMEGA
    ):
        state._still_ticks += 1
        if state._still_ticks >= SLEEP_TICKS:
            state.asleep = True
            state.joint_vels[:] = 0.0
            state.root_vel[:] = 0.0
            state.root_omega[:] = 0.0
    else:
        state._still_ticks = 0


PEN_MAX = 0.0045  # positional backstop, slightly under the 5 mm contract


def _static_penetrations(state: WorldState, points: np.ndarray) -> np.ndarray:
    """Deepest penetration of each body proxy into any static/kinematic solid."""
    worst = np.full(points.shape[0], -np.inf)
    for obj in state.objects:
        if not obj.collides or not (obj.static or obj.kinematic):
            continue
        dist, _ = _closest_feature(obj, points)
        np.maximum(worst, state._proxy_radii - dist, out=worst)
    return worst


def _enforce_penetration_cap(state: WorldState, prev_angles: np.ndarray) -> None:
    """Positional backstop: no link proxy ends a tick deeper than PEN_MAX.

    Joint motion that drove a link too deep is rolled back by bisection on
    that link's chain (the limb "hits" and stops); any residual violation
    (root sinking) is resolved by projecting the root along the deepest
    contact normal. Purely state-dependent, hence deterministic.
    """
    body = state.body
    pen = _static_penetrations(state, state.proxy_positions())
    if float(pen.max()) <= PEN_MAX:
        return

    delta = state.joint_angles - prev_angles
    for li in np.nonzero(pen > PEN_MAX)[0]:
        chain = body.link_chain[li]
        if not chain or not np.any(delta[chain]):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(7):
            mid = 0.5 * (lo + hi)
            state.joint_angles[chain] = prev_angles[chain] + mid * delta[chain]
            state._fk_key = None
            p = _link_penetration(state, li)
            if p > PEN_MAX:
                hi = mid
            else:
                lo = mid
        state.joint_angles[chain] = prev_angles[chain] + lo * delta[chain]
        state.joint_vels[chain] = 0.0
        state._fk_key = None

    # residual: push the whole body out along the deepest contact normal
    for _ in range(3):
        points = state.proxy_positions()
        worst_pen = -np.inf
        worst_n = None
        for obj in state.objects:
            if not obj.collides or not (obj.static or obj.kinematic):
                continue
            dist, normal = _closest_feature(obj, points)
            p = state._proxy_radii - dist
            i = int(np.argmax(p))
            if p[i] > worst_pen:
                worst_pen = float(p[i])
                worst_n = normal[i]
        if worst_pen <= PEN_MAX or worst_n is None:
            return
        state.root_pos = state.root_pos + worst_n * (worst_pen - PEN_MAX)
        state._fk_key = None


def _link_penetration(state: WorldState, li: int) -> float:
    poses = state.link_poses()
    pos, quat = poses[li]
    c = quat_rotate(quat, state._proxy_locals[li])
    pt = np.array([[pos[0] + c[0], pos[1] + c[1], pos[2] + c[2]]])
    worst = -np.inf
    r = state._proxy_radii[li]
    for obj in state.objects:
        if not obj.collides or not (obj.static or obj.kinematic):
            continue
        dist, _ = _closest_feature(obj, pt)
        worst = max(worst, r - float(dist[0]))
    return worst


def _dynamic_object_near_body(state: WorldState) -> bool:
    """Cheap wake test: any awake dynamic object inside the body's bounding sphere."""
    for obj in state.objects:
        if obj.mass > 0.0 and not obj.asleep and obj.collides:
            d = (
                (obj.position[0] - state.root_pos[0]) ** 2
                + (obj.position[1] - state.root_pos[1]) ** 2
                + (obj.position[2] - state.root_pos[2]) ** 2
            )
            if d < 0.45**2:
                return True
    return False


def _step_objects(state: WorldState) -> None:
    g = state.gravity
    body_points = None
    body_radii = state._proxy_radii
    for obj in state.objects:
        if obj.mass <= 0.0 or obj.asleep:
            continue
        m = obj.mass
        pts, radii = _contact_points(obj)
        vel = np.asarray(obj.linear_velocity) + np.asarray(g) * DT
        for other in state.objects:
            if other is obj or not other.collides or not (other.static or other.kinematic):
                continue
            dist, normal = _closest_feature(other, pts)
            pen = radii - dist
            idx = np.nonzero(pen > 0.0)[0]
            if idx.size == 0:
                continue
            k0 = state.k_contact * other.material.stiffness_scale
            c0 = state.c_contact * (1.0 - other.material.restitution)
            mu = other.material.friction
            for i in idx:
                n = normal[i]
                vn = float(vel @ n)
                num = vn + DT * k0 * float(pen[i]) / m
                den = 1.0 + DT * (DT * k0 + c0) / m
                lam = m * (num / den - vn)
                if lam <= 0.0:
                    continue
                vel = vel + (lam / m) * n
                vt = vel - float(vel @ n) * n
                vt_mag = math.sqrt(float(vt @ vt))
                if vt_mag > 1e-9:
                    lam_t = min(mu * lam, m * vt_mag)
                    vel = vel - (lam_t / m) * (vt / vt_mag)
        # soft push-out against the agent body (applied to the object only)
        if obj.collides:
            if body_points is None:
                body_points = state.proxy_positions()
            d = body_points - np.asarray(obj.position)
            dist_c = np.sqrt(np.einsum("ij,ij->i", d, d))
            pen = (body_radii + _bound_radius(obj)) - dist_c
            idx = np.nonzero(pen > 0.0)[0]
            for i in idx:
                if dist_c[i] > 1e-9:
                    n = -d[i] / dist_c[i]
                    vn = float(vel @ n)
                    num = vn + DT * state.k_contact * float(pen[i]) / m
                    den = 1.0 + DT * (DT * state.k_contact + state.c_contact) / m
                    lam = m * (num / den - vn)
                    if lam > 0.0:
                        vel = vel + (lam / m) * n

        new_vel = vel
        obj.linear_velocity[0], obj.linear_velocity[1], obj.linear_velocity[2] = new_vel
        obj.position[0] += new_vel[0] * DT
        obj.position[1] += new_vel[1] * DT
        obj.position[2] += new_vel[2] * DT
        om = obj.angular_velocity
        if om[0] != 0.0 or om[1] != 0.0 or om[2] != 0.0:
            obj.orientation[:] = quat_integrate(tuple(obj.orientation), tuple(om), DT)
        else:
            obj.orientation[:] = quat_normalize(tuple(obj.orientation))

        if (
            float(np.max(np.abs(new_vel))) < SLEEP_VEL
            and abs(om[0]) < SLEEP_VEL
            and abs(om[1]) < SLEEP_VEL
            and abs(om[2]) < SLEEP_VEL
        ):
            obj.still_ticks += 1
            if obj.still_ticks >= SLEEP_TICKS:
                obj.asleep = True
                obj.linear_velocity[0] = obj.linear_velocity[1] = obj.linear_velocity[2] = 0.0
        else:
            obj.still_ticks = 0


def _contact_points(obj: SceneObject):
    """Sample points + radii representing a dynamic object for contact."""
    c = np.asarray(obj.position)
    if obj.shape == "sphere":
        return c[None, :], np.array([obj.half_extents[0]])
    if obj.shape == "capsule":
        r, hl = obj.half_extents[0], obj.half_extents[1]
        axis = np.asarray(quat_rotate(tuple(obj.orientation), (0.0, 0.0, 1.0)))
        return np.stack([c - hl * axis, c, c + hl * axis]), np.array([r, r, r])
    rot = quat_to_matrix(tuple(obj.orientation))
    h = obj.half_extents
    corners = np.array(
        [[sx * h[0], sy * h[1], sz * h[2]] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    return c + corners @ rot.T, np.zeros(8)


def _bound_radius(obj: SceneObject) -> float:
    if obj.shape == "sphere":
        return obj.half_extents[0]
    if obj.shape == "capsule":
        return obj.half_extents[0]
    return min(obj.half_extents)


# -- raycasting ---------------------------------------------------------------


def _ray_sphere(origin, direction, center, radius: float, hollow: bool):
    oc = (origin[0] - center[0], origin[1] - center[1], origin[2] - center[2])
    b = oc[0] * direction[0] + oc[1] * direction[1] + oc[2] * direction[2]
    cc = oc[0] ** 2 + oc[1] ** 2 + oc[2] ** 2 - radius * radius
    disc = b * b - cc
    if disc < 0.0:
        return None
    s = math.sqrt(disc)
    if hollow:
        t = -b + s  # inner wall from inside
        if cc > 0.0 or t <= 1e-9:
            return None
    else:
        t = -b - s
        if t <= 1e-9:
            return None
    return t


def _ray_box(origin, direction, obj: SceneObject):
    rot = quat_to_matrix(tuple(obj.orientation))
    o = rot.T @ (np.asarray(origin) - np.asarray(obj.position))
    d = rot.T @ np.asarray(direction)
    h = obj.half_extents
    tmin, tmax = -math.inf, math.inf
    axis_min = 0
    for a in range(3):
        if abs(d[a]) < 1e-12:
            if abs(o[a]) > h[a]:
                return None
            continue
        t1 = (-h[a] - o[a]) / d[a]
        t2 = (h[a] - o[a]) / d[a]
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
            axis_min = a
        tmax = min(tmax, t2)
        if tmin > tmax:
            return None
    if tmin <= 1e-9:
        return None
    n_local = np.zeros(3)
    n_local[axis_min] = -math.copysign(1.0, d[axis_min])
    return tmin, rot @ n_local


def _ray_capsule(origin, direction, obj: SceneObject):
    r, hl = obj.half_extents[0], obj.half_extents[1]
    axis = np.asarray(quat_rotate(tuple(obj.orientation), (0.0, 0.0, 1.0)))
    c = np.asarray(obj.position)
    o = np.asarray(origin) - c
    d = np.asarray(direction)
    # infinite cylinder about axis
    d_perp = d - (d @ axis) * axis
    o_perp = o - (o @ axis) * axis
    a = float(d_perp @ d_perp)
    best = None
    if a > 1e-12:
        b = float(o_perp @ d_perp)
        cq = float(o_perp @ o_perp) - r * r
        disc = b * b - a * cq
        if disc >= 0.0:
            t = (-b - math.sqrt(disc)) / a
            if t > 1e-9:
                axial = float((o + t * d) @ axis)
                if -hl <= axial <= hl:
                    p = o + t * d
                    n = (p - axial * axis) / r
                    best = (t, n)
    for end in (-hl, hl):
        cap_c = c + end * axis
        t = _ray_sphere(origin, direction, tuple(cap_c), r, False)
        if t is not None and (best is None or t < best[0]):
            p = np.asarray(origin) + t * np.asarray(direction)
            best = (t, (p - cap_c) / r)
    return best


def raycast(state: WorldState, origin, direction, include_caregiver: bool = True):
    """Nearest hit along a ray, or None. Direction must be unit length.

    Ties at identical distance resolve to the lowest object id.
    """
    n = math.sqrt(direction[0] ** 2 + direction[1] ** 2 + direction[2] ** 2)
    if n == 0.0:
        raise ValueError("raycast direction must be non-zero")
    if abs(n - 1.0) > 1e-6:
        raise ValueError("raycast direction must be normalized within 1e-6")

    best: Optional[Hit] = None
    for obj in state.objects:
        res = _raycast_object(origin, direction, obj)
        if res is None:
            continue
        t, normal = res
        if best is None or t < best.distance - 1e-12 or (abs(t - best.distance) <= 1e-12 and obj.id < best.object_id):
            best = Hit(obj.id, t, tuple(normal), obj.color)
    if include_caregiver and state.caregiver is not None:
        cg_obj = caregiver_capsule(state)
        res = _raycast_object(origin, direction, cg_obj)
        if res is not None:
            t, normal = res
            if best is None or t < best.distance - 1e-12:
                best = Hit("caregiver", t, tuple(normal), cg_obj.color)
    return best


def caregiver_capsule(state: WorldState) -> SceneObject:
    """Kinematic capsule standing in for the caregiver's body."""
    from .scene import Material

    return SceneObject(
        id="caregiver",
        shape="capsule",
        position=list(state.caregiver.position),
        orientation=[1.0, 0.0, 0.0, 0.0],
        half_extents=(CAPSULE_RADIUS, CAPSULE_HALF_LEN, 0.0),
        mass=0.0,
        material=Material(),
        color=(210, 180, 160),
        tags=frozenset({"caregiver"}),
        collides=False,
    )


def _raycast_object(origin, direction, obj: SceneObject):
    if obj.shape == "sphere":
        t = _ray_sphere(origin, direction, tuple(obj.position), obj.half_extents[0], obj.hollow)
        if t is None:
            return None
        p = (origin[0] + t * direction[0], origin[1] + t * direction[1], origin[2] + t * direction[2])
        r = obj.half_extents[0]
        n = (
            (p[0] - obj.position[0]) / r,
            (p[1] - obj.position[1]) / r,
            (p[2] - obj.position[2]) / r,
        )
        if obj.hollow:
            n = (-n[0], -n[1], -n[2])
        return t, n
    if obj.shape == "box":
        return _ray_box(origin, direction, obj)
    return _ray_capsule(origin, direction, obj)


# -- canonical serialization and hashing --------------------------------------

_HDR = struct.Struct("<HQ")


def dynamic_state_bytes(state: WorldState) -> bytes:
    """Canonical little-endian serialization of every dynamic field."""
    parts = [_HDR.pack(SCHEMA_VERSION, state.tick)]

    def f64s(*vals):
        parts.append(struct.pack(f"<{len(vals)}d", *vals))

    f64s(*state.root_pos)
    f64s(*state.root_quat)
    f64s(*state.root_vel)
    f64s(*state.root_omega)
    parts.append(state.joint_angles.astype("<f8").tobytes())
    parts.append(state.joint_vels.astype("<f8").tobytes())
    f64s(*state.eye_angles)
    f64s(state.voice_level)
    f64s(*state.head_vel)
    f64s(*state.prev_head_vel)
    parts.append(struct.pack("<BI", 1 if state.asleep else 0, state._still_ticks))

    f64s(state.intero.energy, state.intero.decay_rate)
    parts.append(struct.pack("<B", 1 if state.intero.frozen else 0))

    if state.caregiver is None:
        parts.append(b"\x00")
    else:
        cg = state.caregiver
        parts.append(b"\x01")
        f64s(*cg.position)
        parts.append(
            struct.pack(
                "<BIddBB",
                cg.behavior.value,
                cg.utterance_cursor,
                cg.behavior_timer,
                cg.voice_heard_s,
                1 if cg.feed_mission else 0,
                1 if cg.respond_pending else 0,
            )
        )
        ar = (cg.active_routine or "").encode()
        parts.append(struct.pack("<H", len(ar)) + ar)
        slots = sorted(cg.fired_slots.items())
        parts.append(struct.pack("<I", len(slots)))
        for rid, slot in slots:
            rb = rid.encode()
            parts.append(struct.pack("<H", len(rb)) + rb + struct.pack("<q", slot))

    parts.append(struct.pack("<I", len(state.objects)))
    for obj in state.objects:
        ob = obj.id.encode()
        parts.append(struct.pack("<H", len(ob)) + ob)
        f64s(*obj.position)
        f64s(*obj.orientation)
        f64s(*obj.linear_velocity)
        f64s(*obj.angular_velocity)
        parts.append(struct.pack("<BI", 1 if obj.asleep else 0, obj.still_ticks))

    parts.append(struct.pack("<Q", state.seed))
    return b"".join(parts)


def state_hash(state: WorldState) -> int:
    """64-bit digest of the canonical dynamic state."""
    return hash_bytes(dynamic_state_bytes(state))


def hash_bytes(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def serialize(state: WorldState) -> bytes:
    """Self-contained snapshot: scene + body + script JSON, then dynamic bytes."""
    from .scene import object_to_raw

    scene_raw = {k: v for k, v in state.spec.raw.items() if k not in ("__dir__", "objects")}
    scene_raw["objects"] = [object_to_raw(o) for o in state.objects]
    scene_raw.pop("body_spec_ref", None)
    scene_raw.pop("caregiver_script_ref", None)
    if state.caregiver_script is not None:
        scene_raw["caregiver_script_ref"] = "__inline__"
    head = {
        "schema": SCHEMA_VERSION,
        "scene": scene_raw,
        "body": json.loads(state.body.canonical_json),
        "script": None if state.caregiver_script is None else _script_raw(state.caregiver_script),
    }
    head_bytes = json.dumps(head, sort_keys=True, separators=(",", ":")).encode()
    dyn = dynamic_state_bytes(state)
    return b"SDWS" + struct.pack("<I", len(head_bytes)) + head_bytes + dyn


def _script_raw(script: CaregiverScript) -> dict:
    return {
        "utterances": script.utterances,
        "routines": [
            {
                "id": r.id,
                "behavior": r.behavior.name.lower(),
                "schedule": {"period_s": r.period_s, "offset_s": r.offset_s},
                "duration_s": r.duration_s,
                "params": r.params,
            }
            for r in script.routines
        ],
    }


def deserialize(blob: bytes) -> WorldState:
    if blob[:4] != b"SDWS":
        raise ValueError("not a world snapshot")
    (hlen,) = struct.unpack_from("<I", blob, 4)
    head = json.loads(blob[8 : 8 + hlen].decode())
    spec = parse_scene(head["scene"])
    body = BodySpec(head["body"])
    script = None
    if head.get("script") is not None:
        script = CaregiverScript.parse(head["script"])
    state = WorldState(spec, body, script)
    _restore_dynamic(state, blob[8 + hlen :])
    return state


def _restore_dynamic(state: WorldState, dyn: bytes) -> None:
    off = 0
    schema, tick = _HDR.unpack_from(dyn, off)
    if schema != SCHEMA_VERSION:
        raise ValueError(f"snapshot schema {schema} != {SCHEMA_VERSION}")
    off += _HDR.size
    state.tick = tick

    def rd(n):
        nonlocal off
        vals = struct.unpack_from(f"<{n}d", dyn, off)
        off += 8 * n
        return vals

    def rb():
        nonlocal off
        (v,) = struct.unpack_from("<B", dyn, off)
        off += 1
        return v

    state.root_pos = np.array(rd(3))
    state.root_quat = tuple(rd(4))
    state.root_vel = np.array(rd(3))
    state.root_omega = np.array(rd(3))
    nj = len(state.body.joints)
    state.joint_angles = np.frombuffer(dyn[off : off + 8 * nj], dtype="<f8").astype(np.float64)
    off += 8 * nj
    state.joint_vels = np.frombuffer(dyn[off : off + 8 * nj], dtype="<f8").astype(np.float64)
    off += 8 * nj
    state.eye_angles = np.array(rd(3))
    (state.voice_level,) = rd(1)
    state.head_vel = tuple(rd(3))
    state.prev_head_vel = tuple(rd(3))
    asleep, still = struct.unpack_from("<BI", dyn, off)
    off += struct.calcsize("<BI")
    state.asleep = bool(asleep)
    state._still_ticks = still

    e, dr = rd(2)
    state.intero.energy = e
    state.intero.decay_rate = dr
    state.intero.frozen = bool(rb())

    if rb():
        cg = state.caregiver
        cg.position[:] = rd(3)
        b, cursor, btimer, vh, fm, rp = struct.unpack_from("<BIddBB", dyn, off)
        off += struct.calcsize("<BIddBB")
        from .caregiver import Behavior

        cg.behavior = Behavior(b)
        cg.utterance_cursor = cursor
        cg.behavior_timer = btimer
        cg.voice_heard_s = vh
        cg.feed_mission = bool(fm)
        cg.respond_pending = bool(rp)
        (ln,) = struct.unpack_from("<H", dyn, off)
        off += 2
        cg.active_routine = dyn[off : off + ln].decode() or None
        off += ln
        (nslots,) = struct.unpack_from("<I", dyn, off)
        off += 4
        cg.fired_slots = {}
        for _ in range(nslots):
            (ln,) = struct.unpack_from("<H", dyn, off)
            off += 2
            rid = dyn[off : off + ln].decode()
            off += ln
            (slot,) = struct.unpack_from("<q", dyn, off)
            off += 8
            cg.fired_slots[rid] = slot

    (nobj,) = struct.unpack_from("<I", dyn, off)
    off += 4
    for _ in range(nobj):
        (ln,) = struct.unpack_from("<H", dyn, off)
        off += 2
        oid = dyn[off : off + ln].decode()
        off += ln
        obj = state.find_object(oid)
        pos = rd(3)
        quat = rd(4)
        lv = rd(3)
        av = rd(3)
        sl, ostill = struct.unpack_from("<BI", dyn, off)
        off += struct.calcsize("<BI")
        if obj is not None:
            obj.position[:] = pos
            obj.orientation[:] = quat
            obj.linear_velocity[:] = lv
            obj.angular_velocity[:] = av
            obj.asleep = bool(sl)
            obj.still_ticks = ostill
    (state.seed,) = struct.unpack_from("<Q", dyn, off)
    state._fk_key = None
    state._head_track_pos = state.head_position()
