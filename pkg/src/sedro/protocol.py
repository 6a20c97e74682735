"""Versioned binary lockstep protocol.

Frame layout (all integers little-endian, no padding):

    [length: u32] [type: u8] [tick: u64] [payload: length-9 bytes]

The length field counts the type byte, the tick, and the payload. Frame
types: HELLO=1 OBS=2 ACT=3 RESET=4 EVENT=5 BYE=6 ERR=7.

HELLO payload: magic "SDRO", u8 version count, that many u8 versions.
OBS payload (version 1, 4332 bytes): fovea 32x32x3 u8, periphery 16x16x3
u8, touch 16 bytes (bit i -> byte i//8, LSB first), proprio 106 f32,
eye_pose 3 f32, vestibular 6 f32, interoception 4 f32.
ACT payload: 56 f32 (53 muscle + 3 eye). EVENT payload: UTF-8 JSON.
ERR payload: u16 code + UTF-8 message.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ProtocolError
from .sensors import Observation

MAGIC = b"SDRO"
PROTOCOL_VERSION = 1
SUPPORTED_VERSIONS = (1,)

HELLO = 1
OBS = 2
ACT = 3
RESET = 4
EVENT = 5
BYE = 6
ERR = 7

FRAME_TYPES = {HELLO, OBS, ACT, RESET, EVENT, BYE, ERR}
HEADER = struct.Struct("<IBQ")  # length, type, tick
FRAME_OVERHEAD = 9  # type + tick, counted by the length field
MAX_FRAME = 16 * 1024 * 1024

FOVEA_BYTES = 32 * 32 * 3
PERIPHERY_BYTES = 16 * 16 * 3
TOUCH_BYTES = 16
PROPRIO_BYTES = 106 * 4
EYE_BYTES = 3 * 4
VESTIBULAR_BYTES = 6 * 4
INTERO_BYTES = 4 * 4
OBS_PAYLOAD_SIZE = (
    FOVEA_BYTES + PERIPHERY_BYTES + TOUCH_BYTES + PROPRIO_BYTES + EYE_BYTES + VESTIBULAR_BYTES + INTERO_BYTES
)
ACT_PAYLOAD_SIZE = 56 * 4


def encode_frame(ftype: int, tick: int, payload: bytes = b"") -> bytes:
    return HEADER.pack(FRAME_OVERHEAD + len(payload), ftype, tick) + payload


def parse_frame(buf: bytes):
    """(type, tick, payload, bytes consumed) or None if incomplete."""
    if len(buf) < HEADER.size:
        return None
    length, ftype, tick = HEADER.unpack_from(buf)
    if length < FRAME_OVERHEAD or length > MAX_FRAME:
        raise ProtocolError(ProtocolError.BAD_LENGTH, f"frame length {length} outside [9, {MAX_FRAME}]")
    total = 4 + length
    if len(buf) < total:
        return None
    if ftype not in FRAME_TYPES:
        raise ProtocolError(ProtocolError.BAD_TYPE, f"unknown frame type {ftype}")
    return ftype, tick, bytes(buf[HEADER.size : total]), total


def encode_hello(versions=SUPPORTED_VERSIONS) -> bytes:
    return MAGIC + bytes([len(versions)]) + bytes(versions)


def decode_hello(payload: bytes):
    if len(payload) < 5 or payload[:4] != MAGIC:
        raise ProtocolError(ProtocolError.BAD_MAGIC, f"bad magic {payload[:4]!r}, expected {MAGIC!r}")
    n = payload[4]
    if len(payload) != 5 + n or n == 0:
        raise ProtocolError(ProtocolError.BAD_LENGTH, f"malformed HELLO version list (n={n}, len={len(payload)})")
    return list(payload[5 : 5 + n])


def negotiate(client_versions, server_versions=SUPPORTED_VERSIONS) -> int:
    """Highest version both sides support."""
    mutual = set(client_versions) & set(server_versions)
    if not mutual:
        raise ProtocolError(
            ProtocolError.NO_MUTUAL_VERSION,
            f"no mutual protocol version: client {sorted(client_versions)}, server {sorted(server_versions)}",
        )
    return max(mutual)


def encode_error(code: int, message: str) -> bytes:
    return struct.pack("<H", code) + message.encode()


def decode_error(payload: bytes):
    (code,) = struct.unpack_from("<H", payload)
    return code, payload[2:].decode()


def encode_event(event: dict) -> bytes:
    return json.dumps(event, sort_keys=True, separators=(",", ":")).encode()


def decode_event(payload: bytes) -> dict:
    return json.loads(payload.decode())


def encode_observation(obs: Observation) -> bytes:
    parts = [
        obs.fovea.astype(np.uint8).tobytes(),
        obs.periphery.astype(np.uint8).tobytes(),
        np.packbits(obs.touch.astype(np.uint8), bitorder="little").tobytes(),
        obs.proprio.astype("<f4").tobytes(),
        obs.eye_pose.astype("<f4").tobytes(),
        obs.vestibular.astype("<f4").tobytes(),
        obs.interoception.astype("<f4").tobytes(),
    ]
    payload = b"".join(parts)
    assert len(payload) == OBS_PAYLOAD_SIZE, len(payload)
    return payload


def decode_observation(payload: bytes, tick: int = 0) -> Observation:
    if len(payload) != OBS_PAYLOAD_SIZE:
        raise ProtocolError(
            ProtocolError.BAD_LENGTH, f"OBS payload: expected {OBS_PAYLOAD_SIZE} bytes, got {len(payload)}"
        )
    off = 0

    def take(n):
        nonlocal off
        chunk = payload[off : off + n]
        off += n
        return chunk

    fovea = np.frombuffer(take(FOVEA_BYTES), dtype=np.uint8).reshape(32, 32, 3)
    periphery = np.frombuffer(take(PERIPHERY_BYTES), dtype=np.uint8).reshape(16, 16, 3)
    touch = np.unpackbits(np.frombuffer(take(TOUCH_BYTES), dtype=np.uint8), bitorder="little")
    proprio = np.frombuffer(take(PROPRIO_BYTES), dtype="<f4").astype(np.float64)
    eye = np.frombuffer(take(EYE_BYTES), dtype="<f4").astype(np.float64)
    vest = np.frombuffer(take(VESTIBULAR_BYTES), dtype="<f4").astype(np.float64)
    intero = np.frombuffer(take(INTERO_BYTES), dtype="<f4").astype(np.float64)
    return Observation(
        fovea=fovea,
        periphery=periphery,
        touch=touch,
        proprio=proprio,
        eye_pose=eye,
        vestibular=vest,
        interoception=intero,
        tick=tick,
    )


def encode_action(values) -> bytes:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (56,):
        raise ProtocolError(ProtocolError.BAD_ACTION, f"ACT: expected 56 channels, got {arr.shape}")
    return arr.astype("<f4").tobytes()


def decode_action(payload: bytes) -> np.ndarray:
    if len(payload) != ACT_PAYLOAD_SIZE:
        raise ProtocolError(
            ProtocolError.BAD_LENGTH, f"ACT payload: expected {ACT_PAYLOAD_SIZE} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float64)


class FrameReader:
    """Incremental frame splitter over an arbitrary byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        frames = []
        while True:
            res = parse_frame(self._buf)
            if res is None:
                return frames
            ftype, tick, payload, consumed = res
            del self._buf[:consumed]
            frames.append((ftype, tick, payload))
