"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class SceneLayoutError(Exception):
    """Base class for all engine errors."""


class GraphError(SceneLayoutError):
    """Structural violation in a scene graph operation."""


class DuplicateIdError(GraphError):
    pass


class UnknownIdError(GraphError):
    pass


class UnknownEndpointError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class SelfEdgeError(GraphError):
    pass


class RelationTokenError(SceneLayoutError):
    """A relation token outside the closed vocabulary."""

    def __init__(self, token: str):
        super().__init__(f"unknown relation token: {token!r}")
        self.token = token


class ReplyParseError(SceneLayoutError):
    """A model reply did not match the expected skeleton."""


class BackendError(SceneLayoutError):
    """Chat backend failure: network, timeout, or replay miss."""


class ReplayMissError(BackendError):
    """Replay mode received a request with no recorded reply."""


class SceneFileError(SceneLayoutError):
    """Malformed or rejected scene/config/trajectory file."""


class ConfigError(SceneLayoutError):
    """Invalid configuration value, reported with its field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class RenderError(SceneLayoutError):
    """View capture misuse (empty frame, unframed rig, bad subject set)."""
