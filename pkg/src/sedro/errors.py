"""Exception types shared across the kernel."""

from __future__ import annotations


class SceneValidationError(ValueError):
    """A scene, body, schedule or script file failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ActionError(ValueError):
    """An action vector violated the step contract (wrong size, non-finite)."""

    def __init__(self, channel: int | None, message: str):
        self.channel = channel
        super().__init__(message)


class ProtocolError(Exception):
    """Wire-level violation: bad magic, bad size, unknown frame type."""

    # error codes carried in ERR frames
    BAD_MAGIC = 1
    NO_MUTUAL_VERSION = 2
    BAD_LENGTH = 3
    BAD_TYPE = 4
    BAD_ACTION = 5
    INTERNAL = 6

    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


class SessionAborted(Exception):
    """The peer vanished or timed out mid-session."""


class ReplayError(Exception):
    """A session log could not be replayed (missing assets, corrupt framing)."""
