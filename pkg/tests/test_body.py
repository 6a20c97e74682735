import math

import numpy as np

from sedro.body import NUM_MUSCLES, default_body, forward_kinematics
from sedro.math3d import quat_from_axis_angle, quat_mul, quat_rotate


def test_counts_and_mass():
    body = default_body()
    assert len(body.joints) == NUM_MUSCLES == 53
    assert len(body.links) == 16
    assert len(body.touch_sensors) == 128
    assert abs(body.total_mass - 5.5) < 1e-9


def test_channel_allocation():
    body = default_body()
    names = [j.name for j in body.joints]
    assert names[52] == "voice"
    assert names[51] == "jaw"
    assert sum(1 for n in names if n.startswith("finger_l")) == 9
    assert sum(1 for n in names if n.startswith("finger_r")) == 9
    assert sum(1 for j in body.joints if j.abstract) == 20  # 18 fingers + jaw + voice


def test_touch_region_layout():
    body = default_body()
    sizes = {k: hi - lo for k, (lo, hi) in body.touch_regions.items()}
    assert sizes["face"] == 32
    assert sizes["hand_l"] == sizes["hand_r"] == 16
    assert sizes["arm_l"] == sizes["arm_r"] == 8
    assert sizes["leg_l"] == sizes["leg_r"] == 8
    assert sizes["torso_front"] == sizes["torso_back"] == 16
    assert sum(sizes.values()) == 128


def sensor_density(body, region, links):
    lo, hi = body.touch_regions[region]
    count = hi - lo
    area = sum(4 * math.pi * body.links[body.link_index[l]].proxy_radius ** 2 for l in links)
    return count / area


def test_face_and_hand_density_exceed_torso():
    # density computed over the host links' proxy areas, straight from the file
    body = default_body()
    face = sensor_density(body, "face", ["head"]) / 2.0  # face covers a hemisphere
    torso = (
        sensor_density(body, "torso_front", ["abdomen", "chest"])
        + sensor_density(body, "torso_back", ["abdomen", "chest"])
    ) / 2.0
    hand = sensor_density(body, "hand_l", ["hand_l"])
    assert face > torso
    assert hand > torso


def test_fk_root_only():
    body = default_body()
    poses = forward_kinematics(body, (1.0, 2.0, 3.0), (1.0, 0.0, 0.0, 0.0), np.zeros(53))
    assert poses[0][0] == (1.0, 2.0, 3.0)
    # chained offsets accumulate up the spine
    head = poses[body.head_link][0]
    assert head[2] > 3.0 + 0.2


def test_fk_matches_manual_chain():
    body = default_body()
    angles = np.zeros(53)
    ji = body.joint_index["neck_y"]
    angles[ji] = 0.5
    root_q = quat_from_axis_angle((0, 0, 1), 0.3)
    poses = forward_kinematics(body, (0.0, 0.0, 0.0), root_q, angles)

    # manual: head offset chain through pelvis->abdomen->chest, then neck_y rotation
    p = np.zeros(3)
    for lid in ("abdomen", "chest", "head"):
        link = body.links[body.link_index[lid]]
        p = p + np.asarray(quat_rotate(root_q, link.offset))
    head_pos, head_quat = poses[body.head_link]
    assert np.allclose(head_pos, p, atol=1e-12)
    expect_q = quat_mul(root_q, quat_from_axis_angle((0, 1, 0), 0.5))
    assert np.allclose(head_quat, expect_q, atol=1e-12)


def test_fk_never_stale_through_world(nursery_path):
    from sedro import Action, load_scene, step_world

    w = load_scene(nursery_path)
    rng = np.random.default_rng(3)
    for _ in range(50):
        step_world(w, rng.uniform(-1, 1, 56))
        fresh = forward_kinematics(w.body, w.root_pos, w.root_quat, w.joint_angles)
        cached = w.link_poses()
        for (pa, qa), (pb, qb) in zip(fresh, cached):
            assert pa == pb and qa == qb
