#!/usr/bin/env python3
"""Regenerate the golden wire fixtures in src/sedro/assets/golden/.

The fixtures pin the byte-exact wire contract. The observation content is
a fixed arithmetic pattern (not simulator output) so the fixtures only
change when the wire format itself changes.
"""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from sedro import protocol
from sedro.sensors import Observation

OUT = pathlib.Path(__file__).resolve().parents[1] / "src/sedro/assets/golden"
OUT.mkdir(parents=True, exist_ok=True)


def pattern_observation(tick: int = 3) -> Observation:
    i, j = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    fovea = np.stack([(i * 31 + j * 7 + c * 3) % 256 for c in range(3)], axis=-1).astype(np.uint8)
    i, j = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    periphery = np.stack([(i * 13 + j * 5 + c * 11) % 256 for c in range(3)], axis=-1).astype(np.uint8)
    touch = (np.arange(128) % 3 == 0).astype(np.uint8)
    proprio = (np.arange(106) * 0.01 - 0.25).astype(np.float64)
    eye = np.array([0.1, -0.2, 0.05])
    vest = np.array([0.0, 0.0, 0.25, 0.0, 0.0, -1.0])
    intero = np.array([0.75, 0.0, 0.0, 0.0])
    return Observation(fovea, periphery, touch, proprio, eye, vest, intero, tick)


def pattern_action() -> np.ndarray:
    return np.clip(np.sin(np.arange(56) * 0.37), -1.0, 1.0)


FIXTURES = {
    "hello_client.bin": protocol.encode_frame(protocol.HELLO, 0, protocol.encode_hello((1,))),
    "hello_server.bin": protocol.encode_frame(protocol.HELLO, 0, protocol.encode_hello((1,))),
    "obs_tick3.bin": protocol.encode_frame(protocol.OBS, 3, protocol.encode_observation(pattern_observation())),
    "act_tick3.bin": protocol.encode_frame(protocol.ACT, 3, protocol.encode_action(pattern_action())),
    "event_utterance.bin": protocol.encode_frame(
        protocol.EVENT, 7, protocol.encode_event({"kind": "utterance", "tokens": [12, 4, 7, 4]})
    ),
    "err_bad_magic.bin": protocol.encode_frame(
        protocol.ERR, 0, protocol.encode_error(1, "bad magic b'XXXX', expected b'SDRO'")
    ),
    "bye.bin": protocol.encode_frame(protocol.BYE, 99),
}

manifest = {}
for name, blob in FIXTURES.items():
    (OUT / name).write_bytes(blob)
    manifest[name] = {"bytes": len(blob)}
(OUT / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
print(f"wrote {len(FIXTURES)} fixtures to {OUT}")
