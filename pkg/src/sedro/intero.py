"""Interoceptive state: the agent's energy reservoir.

Energy decays linearly with simulated time and is replenished by feed
events. The kernel never turns energy into reward; that is the learning
agent's business.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# a full tank lasts four simulated hours
DEFAULT_DECAY_RATE = 1.0 / 14400.0


@dataclass
class InteroState:
    energy: float = 1.0
    decay_rate: float = DEFAULT_DECAY_RATE
    frozen: bool = False  # evaluation scenarios freeze decay
    pending_feed: list = field(default_factory=list)


def update_interoception(intero: InteroState, feeds, dt: float) -> InteroState:
    """Advance one tick: energy <- clamp(energy - decay*dt + sum(feeds), 0, 1)."""
    e = intero.energy
    if not intero.frozen:
        e -= intero.decay_rate * dt
    for amount in feeds:
        if amount > 0.0:
            e += amount
    intero.energy = 0.0 if e < 0.0 else (1.0 if e > 1.0 else e)
    return intero
