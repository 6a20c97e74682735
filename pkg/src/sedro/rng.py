"""Counter-based pseudo-random generator.

Draws are keyed by (seed, tick, stream, index) through a splitmix64-style
mixer, so any consumer can pull values in any order without perturbing the
others. Two worlds with the same seed see identical streams regardless of
how many draws each subsystem makes.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

# stream ids, kept stable across versions
STREAM_SCENE = 1
STREAM_CAREGIVER = 2
STREAM_EVAL = 3


def _mix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def draw_u64(seed: int, tick: int, stream: int, index: int) -> int:
    """One 64-bit draw, a pure function of the full key."""
    h = _mix(seed & MASK64)
    h = _mix(h ^ (tick & MASK64))
    h = _mix(h ^ (stream & MASK64))
    h = _mix(h ^ (index & MASK64))
    return h


def draw_unit(seed: int, tick: int, stream: int, index: int) -> float:
    """Uniform float in [0, 1) with 53 bits of precision."""
    return (draw_u64(seed, tick, stream, index) >> 11) * (1.0 / (1 << 53))


class StreamRng:
    """Stateful view over one (seed, tick, stream) draw sequence."""

    def __init__(self, seed: int, tick: int, stream: int):
        self.seed = seed
        self.tick = tick
        self.stream = stream
        self.index = 0

    def u64(self) -> int:
        v = draw_u64(self.seed, self.tick, self.stream, self.index)
        self.index += 1
        return v

    def unit(self) -> float:
        v = draw_unit(self.seed, self.tick, self.stream, self.index)
        self.index += 1
        return v

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.unit()
