"""Per-tick sensing: foveated retina, binary touch, vestibular, interoception.

All sensors are pure functions of world state; none mutates it. The retina
is a software raycaster: a grid of rays per image, flat-shaded by object
color, with developmental acuity applied by rendering at a reduced grid
and nearest-neighbor upsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .body import NUM_MUSCLES
from .math3d import quat_mul, quat_from_axis_angle, quat_rotate, quat_rotate_inv, quat_to_matrix
from .scene import SceneObject
from .world import WorldState, caregiver_capsule

TOUCH_BITS = 128
INTERO_CHANNELS = 4


@dataclass
class Observation:
    """One tick's sensory bundle, shapes fixed per protocol version."""

    fovea: np.ndarray  # (32, 32, 3) uint8
    periphery: np.ndarray  # (16, 16, 3) uint8
    touch: np.ndarray  # (128,) uint8, strictly 0/1
    proprio: np.ndarray  # (106,) float: 53 angles then 53 velocities
    eye_pose: np.ndarray  # (3,) rad
    vestibular: np.ndarray  # (6,): head linear acceleration, gravity direction (head frame)
    interoception: np.ndarray  # (4,): energy then reserved zeros
    tick: int


def eye_orientation(state: WorldState):
    """World orientation of the gaze frame (forward = +x of this frame)."""
    _, head_quat = state.head_pose()
    yaw, pitch = float(state.eye_angles[0]), float(state.eye_angles[1])
    q = head_quat
    if yaw != 0.0:
        q = quat_mul(q, quat_from_axis_angle(state.body.eye_up, yaw))
    if pitch != 0.0:
        q = quat_mul(q, quat_from_axis_angle((0.0, 1.0, 0.0), pitch))
    return q


def eye_position(state: WorldState):
    head_pos, head_quat = state.head_pose()
    off = quat_rotate(head_quat, state.body.eye_offset)
    return (head_pos[0] + off[0], head_pos[1] + off[1], head_pos[2] + off[2])


def gaze_ray(state: WorldState):
    q = eye_orientation(state)
    fwd = quat_rotate(q, state.body.eye_forward)
    return eye_position(state), fwd


def _ray_grid(res: int, fov: float) -> np.ndarray:
    """Unit directions for a res x res square image plane, camera frame (+x forward)."""
    half = math.tan(0.5 * fov)
    coords = (2.0 * (np.arange(res) + 0.5) / res - 1.0) * half
    v, u = np.meshgrid(-coords, coords, indexing="ij")  # v: down the image, u: right
    dirs = np.stack([np.ones_like(u), -u, v], axis=-1)  # +y left, +z up
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs.reshape(-1, 3)


_GRID_CACHE: dict = {}


def _grid(res: int, fov: float) -> np.ndarray:
    key = (res, round(fov, 9))
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = _ray_grid(res, fov)
    return _GRID_CACHE[key]


def _bound_radius(obj: SceneObject) -> float:
    if obj.shape == "sphere":
        return obj.half_extents[0]
    if obj.shape == "capsule":
        return obj.half_extents[0] + obj.half_extents[1]
    return math.sqrt(obj.half_extents[0] ** 2 + obj.half_extents[1] ** 2 + obj.half_extents[2] ** 2)


def _visible(obj: SceneObject, o: np.ndarray, fwd: np.ndarray, half_diag: float) -> bool:
    """Cone cull: can any part of the object fall inside the view cone?"""
    if obj.hollow:
        return True
    c = obj.position
    dx, dy, dz = c[0] - o[0], c[1] - o[1], c[2] - o[2]
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    r = _bound_radius(obj)
    if dist <= r:
        return True
    ang = math.acos(max(-1.0, min(1.0, (dx * fwd[0] + dy * fwd[1] + dz * fwd[2]) / dist)))
    return ang - math.asin(min(1.0, r / dist)) <= half_diag


def _render(state: WorldState, origin, rot: np.ndarray, res: int, fov: float) -> np.ndarray:
    """Flat-shaded render: nearest object color per ray, background elsewhere."""
    dirs = _grid(res, fov) @ rot.T
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    hit_idx = np.full(n, -1, dtype=np.intp)
    o = np.asarray(origin)
    fwd = rot[:, 0]
    # view-cone half angle including the square image diagonal
    half_diag = math.atan(math.tan(0.5 * fov) * math.sqrt(2.0)) + 0.01

    objs = list(state.objects)
    if state.caregiver is not None:
        objs.append(caregiver_capsule(state))

    spheres = [(i, ob) for i, ob in enumerate(objs) if ob.shape == "sphere" and _visible(ob, o, fwd, half_diag)]
    boxes = [(i, ob) for i, ob in enumerate(objs) if ob.shape == "box" and _visible(ob, o, fwd, half_diag)]
    capsules = [(i, ob) for i, ob in enumerate(objs) if ob.shape == "capsule" and _visible(ob, o, fwd, half_diag)]

    if spheres:
        centers = np.array([ob.position for _, ob in spheres])
        radii = np.array([ob.half_extents[0] for _, ob in spheres])
        hollow = np.array([ob.hollow for _, ob in spheres])
        oc = o - centers  # (S, 3)
        b = dirs @ oc.T  # (N, S)
        cc = np.einsum("ij,ij->i", oc, oc) - radii * radii  # (S,)
        disc = b * b - cc
        ok = disc >= 0.0
        s = np.sqrt(np.where(ok, disc, 0.0))
        t = np.where(hollow, -b + s, -b - s)
        ok &= t > 1e-9
        ok &= ~hollow | (cc <= 0.0)
        t = np.where(ok, t, np.inf)
        ti = np.argmin(t, axis=1)
        tv = t[np.arange(n), ti]
        closer = tv < best_t
        best_t = np.where(closer, tv, best_t)
        sph_ids = np.array([i for i, _ in spheres], dtype=np.intp)
        hit_idx = np.where(closer, sph_ids[ti], hit_idx)

    if boxes:
        rots = np.stack([quat_to_matrix(tuple(ob.orientation)) for _, ob in boxes])  # (B,3,3)
        centers = np.array([ob.position for _, ob in boxes])
        halves = np.array([ob.half_extents for _, ob in boxes])
        ol = np.einsum("bk,bkj->bj", (o - centers), rots)  # (B,3)
        dl = np.einsum("nk,bkj->nbj", dirs, rots)  # (N,B,3)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dl
            t1 = (-halves - ol) * inv
            t2 = (halves - ol) * inv
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        par = np.abs(dl) < 1e-12
        inside = np.abs(ol)[None, :, :] <= halves[None, :, :]
        lo = np.where(par, -np.inf, lo)
        hi = np.where(par, np.inf, hi)
        tmin = lo.max(axis=2)
        tmax = hi.min(axis=2)
        bad_par = (par & ~inside).any(axis=2)
        ok = (tmin <= tmax) & (tmin > 1e-9) & ~bad_par
        t = np.where(ok, tmin, np.inf)
        ti = np.argmin(t, axis=1)
        tv = t[np.arange(n), ti]
        closer = tv < best_t
        best_t = np.where(closer, tv, best_t)
        box_ids = np.array([i for i, _ in boxes], dtype=np.intp)
        hit_idx = np.where(closer, box_ids[ti], hit_idx)

    for i, obj in capsules:
        t = _intersect_batch(o, dirs, obj)
        closer = t < best_t
        if closer.any():
            best_t = np.where(closer, t, best_t)
            hit_idx = np.where(closer, i, hit_idx)

    bg = state.spec.background_color
    palette = np.array([ob.color for ob in objs] + [bg], dtype=np.uint8)
    color = palette[hit_idx]
    return color.reshape(res, res, 3)


def _intersect_batch(o: np.ndarray, dirs: np.ndarray, obj: SceneObject) -> np.ndarray:
    """Per-ray hit distance against one object (inf = miss)."""
    inf = np.inf
    if obj.shape == "sphere":
        c = np.asarray(obj.position)
        r = obj.half_extents[0]
        oc = o - c
        b = dirs @ oc
        cc = float(oc @ oc) - r * r
        disc = b * b - cc
        ok = disc >= 0.0
        s = np.sqrt(np.where(ok, disc, 0.0))
        if obj.hollow:
            t = -b + s
            ok &= (cc <= 0.0) & (t > 1e-9)
        else:
            t = -b - s
            ok &= t > 1e-9
        return np.where(ok, t, inf)
    if obj.shape == "box":
        rot = quat_to_matrix(tuple(obj.orientation))
        ol = rot.T @ (o - np.asarray(obj.position))
        dl = dirs @ rot
        h = np.asarray(obj.half_extents)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dl
            t1 = (-h - ol) * inv
            t2 = (h - ol) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        par = np.abs(dl) < 1e-12
        inside_slab = np.abs(ol) <= h
        bad_par = (par & ~inside_slab).any(axis=1)
        ok = (tmin <= tmax) & (tmin > 1e-9) & ~bad_par
        return np.where(ok, tmin, inf)
    # capsule: cylinder body + end caps
    r, hl = obj.half_extents[0], obj.half_extents[1]
    axis = np.asarray(quat_rotate(tuple(obj.orientation), (0.0, 0.0, 1.0)))
    c = np.asarray(obj.position)
    oc = o - c
    d_ax = dirs @ axis
    o_ax = float(oc @ axis)
    d_perp = dirs - d_ax[:, None] * axis
    o_perp = oc - o_ax * axis
    a = np.einsum("ij,ij->i", d_perp, d_perp)
    b = d_perp @ o_perp
    cq = float(o_perp @ o_perp) - r * r
    disc = b * b - a * cq
    ok = (disc >= 0.0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_cyl = np.where(ok, (-b - sq) / np.where(a > 1e-12, a, 1.0), np.inf)
    axial = o_ax + t_cyl * d_ax
    t_cyl = np.where((t_cyl > 1e-9) & (np.abs(axial) <= hl), t_cyl, np.inf)
    best = t_cyl
    for end in (-hl, hl):
        ce = c + end * axis
        oce = o - ce
        be = dirs @ oce
        cce = float(oce @ oce) - r * r
        de = be * be - cce
        oke = de >= 0.0
        te = np.where(oke, -be - np.sqrt(np.where(oke, de, 0.0)), np.inf)
        te = np.where(te > 1e-9, te, np.inf)
        best = np.minimum(best, te)
    return best


def sense_retina(state: WorldState, acuity: float = 1.0):
    """Fovea (32x32, 20 deg) and periphery (16x16, 120 deg) along the gaze.

    Acuity in (0, 1] renders at ceil(res * acuity) and upsamples, so low
    acuity gives a blocky retina with at most ceil(res*a)^2 distinct values.
    """
    if not 0.0 < acuity <= 1.0:
        raise ValueError(f"acuity must be in (0, 1], got {acuity}")
    body = state.body
    origin = eye_position(state)
    rot = quat_to_matrix(eye_orientation(state))

    def image(res: int, fov: float) -> np.ndarray:
        eff = max(1, math.ceil(res * acuity))
        img = _render(state, origin, rot, eff, fov)
        if eff == res:
            return img
        idx = (np.arange(res) * eff) // res
        return img[idx][:, idx]

    return image(body.fovea_res, body.fovea_fov), image(body.periphery_res, body.periphery_fov)


def sense_touch(state: WorldState) -> np.ndarray:
    """128 binary contacts: bit i set iff anything solid lies within sensor i's radius."""
    body = state.body
    poses = state.link_poses()
    n = len(body.touch_sensors)
    pts = np.empty((n, 3))
    for li, idx, locals_ in body.touch_by_link:
        pos, quat = poses[li]
        rot = quat_to_matrix(quat)
        pts[idx] = np.asarray(pos) + locals_ @ rot.T
    radii = body.touch_radii
    max_r = float(radii.max())

    bits = np.zeros(n, dtype=np.uint8)
    from .world import _closest_feature

    # anything clearly beyond the body's reach cannot touch a sensor
    root = state.root_pos
    reach = 0.55 + max_r
    objs = []
    for obj in state.objects:
        d = (
            (obj.position[0] - root[0]) ** 2
            + (obj.position[1] - root[1]) ** 2
            + (obj.position[2] - root[2]) ** 2
        )
        if d <= (reach + _bound_radius(obj)) ** 2:
            objs.append(obj)
    if state.caregiver is not None:
        objs.append(caregiver_capsule(state))
    for obj in objs:
        dist, _ = _closest_feature(obj, pts)
        bits |= (dist <= radii).astype(np.uint8)

    # self-touch: other links' proxy spheres, one distance matrix
    proxies = state.proxy_positions()
    diff = pts[:, None, :] - proxies[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) - state._proxy_radii[None, :]
    near = (dist <= radii[:, None]) & body.touch_self_mask
    bits |= near.any(axis=1).astype(np.uint8)
    return bits


def sense_vestibular(state: WorldState) -> np.ndarray:
    """Head-frame linear acceleration (finite difference) and gravity direction."""
    _, head_quat = state.head_pose()
    hv, pv = state.head_vel, state.prev_head_vel
    acc_w = ((hv[0] - pv[0]) / state.dt, (hv[1] - pv[1]) / state.dt, (hv[2] - pv[2]) / state.dt)
    acc = quat_rotate_inv(head_quat, acc_w)
    g = state.gravity
    gn = math.sqrt(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)
    if gn == 0.0:
        gdir = (0.0, 0.0, 0.0)
    else:
        gdir = quat_rotate_inv(head_quat, (g[0] / gn, g[1] / gn, g[2] / gn))
    return np.array([acc[0], acc[1], acc[2], gdir[0], gdir[1], gdir[2]])


def _pose_token(state: WorldState, acuity: float) -> bytes:
    """Bytes identifying everything the pose-dependent sensors can see.

    Static objects never move, so only movable poses, the body posture,
    the eyes, and the scene revision participate.
    """
    import struct

    parts = [
        struct.pack("<dI", acuity, state._scene_rev),
        state.root_pos.tobytes(),
        struct.pack("<4d", *state.root_quat),
        state.joint_angles.tobytes(),
        state.eye_angles.tobytes(),
        struct.pack("<6d", *state.head_vel, *state.prev_head_vel),
    ]
    for obj in state.objects:
        if obj.mass > 0.0 or obj.motion is not None:
            parts.append(struct.pack("<7d", *obj.position, *obj.orientation))
    if state.caregiver is not None:
        parts.append(struct.pack("<3d", *state.caregiver.position))
    return b"".join(parts)


def observe(state: WorldState, stage=None) -> Observation:
    """Assemble the full observation for the current tick.

    Pose-dependent fields (retina, touch, vestibular) are cached against a
    token of every movable pose: on quiescent ticks only proprio and
    interoception are rebuilt.
    """
    acuity = 1.0 if stage is None else float(stage.acuity_factor)
    token = _pose_token(state, acuity)
    cached = state._sensor_cache
    if cached is not None and cached[0] == token:
        fovea, periphery, touch, vestibular = cached[1]
    else:
        fovea, periphery = sense_retina(state, acuity)
        touch = sense_touch(state)
        vestibular = sense_vestibular(state)
        state._sensor_cache = (token, (fovea, periphery, touch, vestibular))
    proprio = np.concatenate([state.joint_angles, state.joint_vels])
    intero = np.zeros(INTERO_CHANNELS)
    intero[0] = state.intero.energy
    return Observation(
        fovea=fovea,
        periphery=periphery,
        touch=touch,
        proprio=proprio,
        eye_pose=state.eye_angles.copy(),
        vestibular=vestibular,
        interoception=intero,
        tick=state.tick,
    )
