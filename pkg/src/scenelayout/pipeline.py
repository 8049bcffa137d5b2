"""Glue shared by the CLI and the service: backends, scorers, scene building."""

from __future__ import annotations

import logging

from .backend import (
    ChatBackend,
    HttpChatBackend,
    MllmScorer,
    RecordedSession,
    query_size,
)
from .errors import ConfigError, ReplyParseError
from .graph import FeatureVector, ObjectNode, RelationEdge, SceneGraph, set_relation
from .prompts import build_prompt1, parse_graph_reply
from .scoring import OracleScorer, Scorer, band_table_with_overrides
from .sceneio import EngineConfig
from .views import CameraRig, MontageCapturer

logger = logging.getLogger(__name__)


def build_backend(config: EngineConfig) -> ChatBackend | None:
    """The configured chat backend: replay file, live endpoint, or none."""
    if config.replay_path:
        return RecordedSession.replay_file(config.replay_path)
    if config.backend.endpoint:
        live = HttpChatBackend(config.backend)
        if config.record_path:
            return RecordedSession.recording(config.record_path, live)
        return live
    return None


def make_scorer(config: EngineConfig, backend: ChatBackend | None) -> Scorer:
    if config.scorer == "oracle":
        table = band_table_with_overrides(config.band_overrides) if config.band_overrides else None
        return OracleScorer(table)
    if config.scorer == "mllm":
        if backend is None:
            raise ConfigError("config.scorer", "mllm scorer needs a backend or replay file")
        return MllmScorer(backend)
    raise ConfigError("config.scorer", f"unknown scorer {config.scorer!r}")


def make_capturer(config: EngineConfig) -> MontageCapturer:
    rig = CameraRig(margin=config.camera.margin, quad_size=config.camera.quad_size)
    return MontageCapturer(rig)


def build_scene_from_prompt(prompt: str, backend: ChatBackend | None,
                            size_overrides: dict[str, tuple[float, float, float]] | None = None,
                            ) -> SceneGraph:
    """Scene construction: parse the graph reply, size each node, start coincident.

    All nodes start at the origin at scale 1; edge optimization spreads them.
    """
    if backend is None:
        raise ConfigError("config", "generate needs a backend endpoint or replay file")
    if not prompt.strip():
        raise ReplyParseError("scene prompt must be non-empty")
    reply = backend.complete(build_prompt1(prompt))
    spec = parse_graph_reply(reply)
    overrides = size_overrides or {}
    nodes = []
    for node_id, label, node_prompt in zip(spec.node_ids, spec.labels, spec.node_prompts):
        if label in overrides:
            base = overrides[label]
            provenance = "config"
        else:
            estimate = query_size(backend, label, node_prompt)
            base = estimate.extents
            provenance = estimate.provenance
        nodes.append(ObjectNode(
            id=node_id, label=label, node_prompt=node_prompt,
            feature=FeatureVector(), base_size=base, size_provenance=provenance,
        ))
    graph = SceneGraph(nodes=tuple(nodes), edges=(), scene_prompt=prompt)
    for src, kind, dst in spec.edges:
        graph = set_relation(graph, RelationEdge(src=src, dst=dst, kind=kind))
    return graph
