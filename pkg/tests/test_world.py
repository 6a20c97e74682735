import math

import numpy as np
import pytest

from sedro import Action, deserialize, load_scene, raycast, serialize, state_hash, step_world
from sedro.errors import ActionError, SceneValidationError
from sedro.world import DT, PEN_MAX, _closest_feature, dynamic_state_bytes

G = 9.81


def drop_spec(height=10.0, radius=0.1):
    return {
        "scene_id": "droptest",
        "seed": 1,
        "gravity": [0.0, 0.0, -G],
        "agent": {"position": [5.0, 5.0, 5.0]},
        "objects": [
            {"id": "ball", "shape": "sphere", "position": [0.0, 0.0, height], "radius": radius, "mass": 1.0}
        ],
    }


class TestIntegrator:
    @pytest.mark.parametrize("steps", [1, 2, 5, 10, 50, 137, 500])
    def test_ballistic_matches_semi_implicit_closed_form(self, steps):
        # independent oracle: explicit per-step summation of the update rule
        v, z = 0.0, 10.0
        for _ in range(steps):
            v = v - G * DT
            z = z + v * DT
        oracle_fall = 10.0 - z

        closed = G * DT * DT * steps * (steps + 1) / 2.0
        assert abs(oracle_fall - closed) / closed < 1e-12

        w = load_scene(drop_spec())
        ball = w.find_object("ball")
        for _ in range(steps):
            step_world(w, Action.zero())
        fall = 10.0 - ball.position[2]
        assert abs(fall - closed) / closed <= 1e-9

    def test_fifty_step_value_from_contract(self):
        w = load_scene(drop_spec())
        ball = w.find_object("ball")
        for _ in range(50):
            step_world(w, Action.zero())
        assert abs((10.0 - ball.position[2]) - 5.0031) < 1e-9


class TestStaticEquilibrium:
    def test_settled_agent_unchanged_except_tick(self, nursery_path):
        w = load_scene(nursery_path)
        for _ in range(300):
            step_world(w, Action.zero())
        assert w.asleep
        tick0 = w.tick
        root_pos = w.root_pos.copy()
        root_quat = tuple(w.root_quat)
        angles = w.joint_angles.copy()
        obj_poses = {o.id: (list(o.position), list(o.orientation)) for o in w.objects}
        energy0 = w.intero.energy

        step_world(w, Action.zero())

        assert w.tick == tick0 + 1
        assert np.array_equal(w.root_pos, root_pos)
        assert tuple(w.root_quat) == root_quat
        assert np.array_equal(w.joint_angles, angles)
        assert np.all(w.joint_vels == 0.0) and np.all(w.root_vel == 0.0)
        for o in w.objects:
            assert list(o.position) == obj_poses[o.id][0]
            assert list(o.orientation) == obj_poses[o.id][1]
        # interoception decays with sim time; contact support carries the rest
        assert energy0 - w.intero.energy == pytest.approx(w.intero.decay_rate * DT)


class TestDeterminism:
    def test_same_trace_same_hash(self, nursery_path):
        hashes = []
        for _ in range(2):
            w = load_scene(nursery_path)
            rng = np.random.default_rng(123)
            for _ in range(500):
                step_world(w, rng.uniform(-1, 1, 56))
            hashes.append(state_hash(w))
        assert hashes[0] == hashes[1]

    def test_hash_sensitive_to_torque(self, nursery_path):
        w1 = load_scene(nursery_path)
        w2 = load_scene(nursery_path)
        step_world(w1, Action.zero())
        act = np.zeros(56)
        act[0] = 1.0
        step_world(w2, act)
        assert state_hash(w1) != state_hash(w2)

    def test_golden_nursery_tick0_hash(self, nursery_path):
        # pinned by the first verified build; guards serialization drift
        w = load_scene(nursery_path)
        assert state_hash(w) == GOLDEN_NURSERY_TICK0_HASH


# recorded once from the first verified build (see test above)
GOLDEN_NURSERY_TICK0_HASH = 0x3d92ad8b8f7e368f


class TestJointSafety:
    def test_limits_hold_under_random_torques(self, nursery_path):
        w = load_scene(nursery_path)
        lo, hi = w.body.j_lo, w.body.j_hi
        rng = np.random.default_rng(7)
        for _ in range(1000):
            step_world(w, rng.uniform(-1, 1, 56))
            assert np.all(w.joint_angles >= lo - 1e-12)
            assert np.all(w.joint_angles <= hi + 1e-12)

    def test_quaternion_norm_after_steps(self, nursery_path):
        w = load_scene(nursery_path)
        rng = np.random.default_rng(8)
        for _ in range(200):
            step_world(w, rng.uniform(-1, 1, 56))
        assert abs(math.sqrt(sum(q * q for q in w.root_quat)) - 1.0) < 1e-9
        for obj in w.objects:
            n = math.sqrt(sum(q * q for q in obj.orientation))
            assert abs(n - 1.0) < 1e-9


class TestPenetration:
    @pytest.mark.parametrize("scene", ["nursery", "womb", "eval_room"])
    def test_under_random_torques(self, scene):
        from sedro.body import ASSET_DIR

        w = load_scene(ASSET_DIR / "scenes" / f"{scene}.json")
        rng = np.random.default_rng(42)
        worst = -1.0
        for _ in range(600):
            step_world(w, rng.uniform(-1, 1, 56))
            pts = w.proxy_positions()
            for obj in w.objects:
                if (obj.static or obj.kinematic) and obj.collides:
                    dist, _ = _closest_feature(obj, pts)
                    worst = max(worst, float((w._proxy_radii - dist).max()))
        assert worst <= 0.005, f"worst penetration {worst * 1000:.2f} mm"


class TestEnergySanity:
    def test_joint_kinetic_energy_non_increasing_when_passive(self):
        spec = {
            "scene_id": "void",
            "seed": 3,
            "gravity": [0.0, 0.0, 0.0],
            "agent": {"position": [0.0, 0.0, 0.0]},
            "objects": [],
        }
        w = load_scene(spec)
        act = np.zeros(56)
        act[:20] = 1.0
        for _ in range(30):
            step_world(w, act)  # spin some joints up
        inertia = w.body.j_inertia
        prev = float(np.sum(inertia * w.joint_vels**2))
        for _ in range(200):
            step_world(w, Action.zero())
            ke = float(np.sum(inertia * w.joint_vels**2))
            assert ke <= prev + 1e-15
            prev = ke


class TestRaycast:
    def scene_with(self, objects):
        return load_scene({"scene_id": "ray", "seed": 0, "agent": {"position": [9, 9, 9]}, "objects": objects})

    def test_unit_sphere_head_on(self):
        w = self.scene_with(
            [{"id": "s", "shape": "sphere", "position": [5.0, 0.0, 0.0], "radius": 1.0, "mass": 0.0}]
        )
        hit = raycast(w, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert hit is not None and hit.object_id == "s"
        assert abs(hit.distance - 4.0) < 1e-12
        assert np.allclose(hit.normal, (-1.0, 0.0, 0.0))

    def test_miss(self):
        w = self.scene_with(
            [{"id": "s", "shape": "sphere", "position": [5.0, 0.0, 0.0], "radius": 1.0, "mass": 0.0}]
        )
        assert raycast(w, (0.0, 0.0, 0.0), (-1.0, 0.0, 0.0)) is None

    def test_tangent_grazing(self):
        # sphere center at distance d from origin, ray tangent: hit at sqrt(d^2 - r^2)
        w = self.scene_with(
            [{"id": "s", "shape": "sphere", "position": [3.0, 1.0, 0.0], "radius": 1.0, "mass": 0.0}]
        )
        d = math.sqrt(10.0)
        hit = raycast(w, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert hit is not None
        assert abs(hit.distance - math.sqrt(d * d - 1.0)) < 1e-9

    def test_tie_breaks_to_lowest_id(self):
        objs = [
            {"id": "b", "shape": "sphere", "position": [5.0, 0.0, 0.0], "radius": 1.0, "mass": 0.0},
            {"id": "a", "shape": "sphere", "position": [5.0, 0.0, 0.0], "radius": 1.0, "mass": 0.0},
        ]
        w = self.scene_with(objs)
        hit = raycast(w, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert hit.object_id == "a"

    def test_zero_direction_rejected(self):
        w = self.scene_with([])
        with pytest.raises(ValueError):
            raycast(w, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            raycast(w, (0.0, 0.0, 0.0), (0.5, 0.0, 0.0))

    def test_box_and_capsule_hits(self):
        w = self.scene_with(
            [
                {"id": "box", "shape": "box", "position": [4.0, 0.0, 0.0], "half_extents": [1, 1, 1], "mass": 0.0},
                {"id": "cap", "shape": "capsule", "position": [0.0, 5.0, 0.0], "radius": 0.5, "half_length": 1.0, "mass": 0.0},
            ]
        )
        hb = raycast(w, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert hb.object_id == "box" and abs(hb.distance - 3.0) < 1e-12
        hc = raycast(w, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
        assert hc.object_id == "cap" and abs(hc.distance - 4.5) < 1e-12

    def test_hollow_sphere_interior(self):
        w = self.scene_with(
            [{"id": "shell", "shape": "sphere", "position": [0.0, 0.0, 0.0], "radius": 2.0, "mass": 0.0, "hollow": True}]
        )
        hit = raycast(w, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert hit.object_id == "shell" and abs(hit.distance - 2.0) < 1e-12


class TestStepContract:
    def test_nonfinite_action_rejected_with_channel(self, nursery_path):
        w = load_scene(nursery_path)
        act = np.zeros(56)
        act[17] = float("nan")
        with pytest.raises(ActionError) as ei:
            step_world(w, act)
        assert ei.value.channel == 17
        assert "17" in str(ei.value)

    def test_wrong_length_rejected(self, nursery_path):
        w = load_scene(nursery_path)
        with pytest.raises(ActionError):
            step_world(w, np.zeros(55))

    def test_out_of_range_clamped(self, nursery_path):
        w = load_scene(nursery_path)
        act = np.zeros(56)
        act[7] = 1.7
        step_world(w, act)  # clamped, not rejected

    def test_static_objects_never_move(self, nursery_path):
        w = load_scene(nursery_path)
        before = {o.id: list(o.position) for o in w.objects if o.static}
        rng = np.random.default_rng(5)
        for _ in range(300):
            step_world(w, rng.uniform(-1, 1, 56))
        for o in w.objects:
            if o.id in before:
                assert o.position == before[o.id]

    def test_kinematic_motion_exact(self):
        spec = {
            "scene_id": "kin",
            "seed": 0,
            "gravity": [0, 0, -9.81],
            "agent": {"position": [9, 9, 9]},
            "objects": [
                {
                    "id": "osc",
                    "shape": "sphere",
                    "position": [1.0, 2.0, 3.0],
                    "radius": 0.1,
                    "mass": 0.0,
                    "motion": {"kind": "oscillate", "axis": [1, 0, 0], "amplitude": 0.5, "frequency_hz": 0.25},
                }
            ],
        }
        w = load_scene(spec)
        o = w.find_object("osc")
        for k in range(1, 120):
            step_world(w, Action.zero())
            expect = 1.0 + 0.5 * math.sin(2 * math.pi * 0.25 * (k * DT))
            assert o.position[0] == expect
            assert o.position[1] == 2.0 and o.position[2] == 3.0


class TestSerialization:
    def test_round_trip_hash(self, nursery_path):
        w = load_scene(nursery_path)
        rng = np.random.default_rng(11)
        for _ in range(50):
            step_world(w, rng.uniform(-1, 1, 56))
        w2 = deserialize(serialize(w))
        assert state_hash(w2) == state_hash(w)

    def test_round_trip_evolves_identically(self, womb_path):
        w = load_scene(womb_path)
        for _ in range(30):
            step_world(w, Action.zero())
        w2 = deserialize(serialize(w))
        rng1 = np.random.default_rng(2)
        rng2 = np.random.default_rng(2)
        for _ in range(50):
            step_world(w, rng1.uniform(-1, 1, 56))
            step_world(w2, rng2.uniform(-1, 1, 56))
        assert state_hash(w) == state_hash(w2)


class TestLoadScene:
    def test_duplicate_id_names_offender(self):
        spec = {
            "scene_id": "dup",
            "seed": 0,
            "objects": [
                {"id": "x", "shape": "sphere", "position": [0, 0, 0], "radius": 1},
                {"id": "x", "shape": "sphere", "position": [1, 0, 0], "radius": 1},
            ],
        }
        with pytest.raises(SceneValidationError) as ei:
            load_scene(spec)
        assert "x" in str(ei.value)

    def test_womb_scene_contents(self, womb_path):
        w = load_scene(womb_path)
        assert w.scene_id == "womb"
        assert [o.id for o in w.objects] == ["enclosure"]

    def test_nursery_scene_contents(self, nursery_path):
        w = load_scene(nursery_path)
        assert w.tick == 0
        ids = {o.id for o in w.objects}
        assert {"mattress", "toy_ball", "bottle"} <= ids

    def test_unknown_shape(self):
        spec = {"scene_id": "s", "seed": 0, "objects": [{"id": "x", "shape": "cone", "position": [0, 0, 0]}]}
        with pytest.raises(SceneValidationError) as ei:
            load_scene(spec)
        assert "cone" in str(ei.value)

    def test_nonfinite_pose(self):
        spec = {
            "scene_id": "s",
            "seed": 0,
            "objects": [{"id": "x", "shape": "sphere", "position": [0, float("inf"), 0], "radius": 1}],
        }
        with pytest.raises(SceneValidationError):
            load_scene(spec)
