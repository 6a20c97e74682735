#!/usr/bin/env python3
"""Regenerate src/sedro/assets/body_infant.json.

Run from the repo root. The output is committed; edit the tables here and
rerun rather than hand-editing the JSON.
"""

import json
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "src/sedro/assets/body_infant.json"

# Body frame convention: +z runs pelvis -> head, +x is ventral (belly),
# +y is the body's left. A supine pose rotates +x to world-up.
#
# link: (id, parent, offset, proxy_center, proxy_radius, mass)
# torso proxy centers carry small ventral (+x) offsets so the dorsal
# surfaces share the plane x = -0.055 and a supine body lies flat
LINKS = [
    ("pelvis", None, (0, 0, 0), (0, 0, 0), 0.055, 0.80),
    ("abdomen", "pelvis", (0, 0, 0.055), (0.002, 0, 0.01), 0.057, 0.90),
    ("chest", "abdomen", (0, 0, 0.075), (0.005, 0, 0.01), 0.060, 1.00),
    ("head", "chest", (0, 0, 0.105), (0.007, 0, 0.01), 0.062, 1.00),
    ("upper_arm_l", "chest", (0, 0.078, 0.055), (0, 0, -0.042), 0.022, 0.18),
    ("forearm_l", "upper_arm_l", (0, 0, -0.085), (0, 0, -0.035), 0.020, 0.12),
    ("hand_l", "forearm_l", (0, 0, -0.072), (0, 0, -0.024), 0.021, 0.06),
    ("upper_arm_r", "chest", (0, -0.078, 0.055), (0, 0, -0.042), 0.022, 0.18),
    ("forearm_r", "upper_arm_r", (0, 0, -0.085), (0, 0, -0.035), 0.020, 0.12),
    ("hand_r", "forearm_r", (0, 0, -0.072), (0, 0, -0.024), 0.021, 0.06),
    ("thigh_l", "pelvis", (0, 0.045, -0.045), (0, 0, -0.050), 0.030, 0.30),
    ("shank_l", "thigh_l", (0, 0, -0.100), (0, 0, -0.045), 0.025, 0.20),
    ("foot_l", "shank_l", (0, 0, -0.090), (0.020, 0, -0.008), 0.020, 0.04),
    ("thigh_r", "pelvis", (0, -0.045, -0.045), (0, 0, -0.050), 0.030, 0.30),
    ("shank_r", "thigh_r", (0, 0, -0.100), (0, 0, -0.045), 0.025, 0.20),
    ("foot_r", "shank_r", (0, 0, -0.090), (0.020, 0, -0.008), 0.020, 0.04),
]


def joint(name, link, axis, limits, max_torque, inertia, abstract=False):
    return {
        "name": name,
        "link": link,
        "axis": axis,
        "limits": list(limits),
        "max_torque": max_torque,
        "inertia": inertia,
        "damping": 0.5,
        "abstract": abstract,
    }


def three_dof(prefix, link, limits, max_torque, inertia):
    return [
        joint(f"{prefix}_x", link, [1, 0, 0], limits, max_torque, inertia),
        joint(f"{prefix}_y", link, [0, 1, 0], limits, max_torque, inertia),
        joint(f"{prefix}_z", link, [0, 0, 1], limits, max_torque, inertia),
    ]


def fingers(side):
    # nine abstract finger channels per hand; they carry state but no links
    return [
        joint(f"finger_{side}{i}", f"hand_{side}", [1, 0, 0], (0.0, 1.5), 0.05, 0.002, abstract=True)
        for i in range(9)
    ]


JOINTS = (
    three_dof("spine_lower", "abdomen", (-0.5, 0.5), 1.2, 0.020)
    + three_dof("spine_upper", "chest", (-0.5, 0.5), 1.2, 0.020)
    + three_dof("neck", "head", (-0.8, 0.8), 0.6, 0.012)
    + three_dof("shoulder_l", "upper_arm_l", (-1.6, 1.6), 0.6, 0.008)
    + [joint("elbow_l", "forearm_l", [0, 1, 0], (0.0, 2.4), 0.4, 0.005)]
    + [
        joint("wrist_l_x", "hand_l", [1, 0, 0], (-0.8, 0.8), 0.2, 0.003),
        joint("wrist_l_z", "hand_l", [0, 0, 1], (-0.6, 0.6), 0.2, 0.003),
    ]
    + fingers("l")
    + three_dof("shoulder_r", "upper_arm_r", (-1.6, 1.6), 0.6, 0.008)
    + [joint("elbow_r", "forearm_r", [0, 1, 0], (0.0, 2.4), 0.4, 0.005)]
    + [
        joint("wrist_r_x", "hand_r", [1, 0, 0], (-0.8, 0.8), 0.2, 0.003),
        joint("wrist_r_z", "hand_r", [0, 0, 1], (-0.6, 0.6), 0.2, 0.003),
    ]
    + fingers("r")
    + three_dof("hip_l", "thigh_l", (-1.5, 1.5), 1.0, 0.015)
    + [joint("knee_l", "shank_l", [0, 1, 0], (0.0, 2.4), 0.8, 0.010)]
    + [
        joint("ankle_l_x", "foot_l", [1, 0, 0], (-0.7, 0.7), 0.3, 0.004),
        joint("ankle_l_y", "foot_l", [0, 1, 0], (-0.7, 0.7), 0.3, 0.004),
    ]
    + three_dof("hip_r", "thigh_r", (-1.5, 1.5), 1.0, 0.015)
    + [joint("knee_r", "shank_r", [0, 1, 0], (0.0, 2.4), 0.8, 0.010)]
    + [
        joint("ankle_r_x", "foot_r", [1, 0, 0], (-0.7, 0.7), 0.3, 0.004),
        joint("ankle_r_y", "foot_r", [0, 1, 0], (-0.7, 0.7), 0.3, 0.004),
    ]
    + [joint("jaw", "head", [0, 1, 0], (0.0, 0.5), 0.1, 0.003, abstract=True)]
    + [joint("voice", "head", [1, 0, 0], (0.0, 1.0), 1.0, 0.005, abstract=True)]
)

assert len(JOINTS) == 53, len(JOINTS)


def ring(link, center, radius, count, plane, sense=0.015, hemi=None):
    """Sensors spread on a circle of the proxy sphere surface."""
    out = []
    ax1, ax2 = plane
    for k in range(count):
        a = 2.0 * math.pi * k / count
        p = list(center)
        p[ax1] += radius * math.cos(a)
        p[ax2] += radius * math.sin(a)
        if hemi is not None:
            axis, sign = hemi
            p[axis] = center[axis] + sign * abs(radius * 0.85)
            p[ax1] = center[ax1] + 0.55 * radius * math.cos(a)
            p[ax2] = center[ax2] + 0.55 * radius * math.sin(a)
        out.append({"link": link, "local": [round(v, 5) for v in p], "radius": sense})
    return out


def face_sensors():
    # 32 on the ventral (face) hemisphere of the head proxy
    out = []
    c = (0, 0, 0.01)
    r = 0.062
    for lat, n in [(0.25, 6), (0.6, 10), (0.95, 10), (1.25, 6)]:
        for k in range(n):
            a = 2.0 * math.pi * k / n
            # face points along +x: spherical coords about the +x axis
            cx = r * math.cos(lat)
            rr = r * math.sin(lat)
            out.append(
                {
                    "link": "head",
                    "local": [round(c[0] + cx, 5), round(c[1] + rr * math.cos(a), 5), round(c[2] + rr * math.sin(a), 5)],
                    "radius": 0.015,
                }
            )
    return out


def hand_sensors(side):
    # 16 per hand on the palm side (-x, faces the mattress when supine)
    out = []
    c = (0, 0, -0.024)
    for i in range(4):
        for j in range(4):
            out.append(
                {
                    "link": f"hand_{side}",
                    "local": [
                        -0.018,
                        round(-0.012 + 0.008 * i, 5),
                        round(c[2] - 0.012 + 0.008 * j, 5),
                    ],
                    "radius": 0.015,
                }
            )
    return out


def arm_sensors(side):
    out = []
    for link, z in [(f"upper_arm_{side}", -0.042), (f"forearm_{side}", -0.035)]:
        for k in range(4):
            a = 2.0 * math.pi * k / 4
            out.append(
                {
                    "link": link,
                    "local": [round(0.02 * math.cos(a), 5), round(0.02 * math.sin(a), 5), z],
                    "radius": 0.015,
                }
            )
    return out


def leg_sensors(side):
    out = []
    for link, r, z in [(f"thigh_{side}", 0.028, -0.05), (f"shank_{side}", 0.024, -0.045)]:
        for k in range(4):
            a = 2.0 * math.pi * k / 4
            out.append(
                {
                    "link": link,
                    "local": [round(r * math.cos(a), 5), round(r * math.sin(a), 5), z],
                    "radius": 0.015,
                }
            )
    return out


def torso_sensors(sign):
    # 16 per side: 8 on abdomen, 8 on chest, at x = +-proxy radius
    out = []
    for link, r in [("abdomen", 0.057), ("chest", 0.060)]:
        for i in range(2):
            for j in range(4):
                out.append(
                    {
                        "link": link,
                        "local": [
                            round(sign * r * 0.95, 5),
                            round(-0.03 + 0.02 * j + 0.01 * i, 5),
                            round(-0.01 + 0.03 * i, 5),
                        ],
                        "radius": 0.015,
                    }
                )
    return out


TOUCH_REGIONS = [
    ("face", face_sensors()),
    ("hand_l", hand_sensors("l")),
    ("hand_r", hand_sensors("r")),
    ("arm_l", arm_sensors("l")),
    ("arm_r", arm_sensors("r")),
    ("leg_l", leg_sensors("l")),
    ("leg_r", leg_sensors("r")),
    ("torso_front", torso_sensors(+1)),
    ("torso_back", torso_sensors(-1)),
]

sensors = []
regions = {}
for name, group in TOUCH_REGIONS:
    regions[name] = [len(sensors), len(sensors) + len(group)]
    sensors.extend(group)
assert len(sensors) == 128, len(sensors)

spec = {
    "schema": 1,
    "total_mass": round(sum(l[5] for l in LINKS), 3),
    "links": [
        {
            "id": lid,
            "parent": parent,
            "offset": list(off),
            "proxy_center": list(pc),
            "proxy_radius": pr,
            "mass": m,
        }
        for lid, parent, off, pc, pr, m in LINKS
    ],
    "joints": JOINTS,
    "touch": {"sensors": sensors, "regions": regions},
    "head_link": "head",
    "eye": {
        "link": "head",
        "local_offset": [0.055, 0.0, 0.015],
        "forward_axis": [1, 0, 0],
        "up_axis": [0, 0, 1],
        "max_speed": 5.24,
        "yaw_limit": 0.7,
        "pitch_limit": 0.7,
        "torsion_limit": 0.35,
        "fovea_res": 32,
        "fovea_fov_deg": 20.0,
        "periphery_res": 16,
        "periphery_fov_deg": 120.0,
    },
}

assert abs(spec["total_mass"] - 5.5) < 1e-9, spec["total_mass"]

OUT.write_text(json.dumps(spec, indent=1) + "\n")
print(f"wrote {OUT} ({len(JOINTS)} joints, {len(sensors)} touch sensors, mass {spec['total_mass']} kg)")
