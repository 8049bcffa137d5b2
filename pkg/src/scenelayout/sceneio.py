"""Scene/config/trajectory files and geometry export.

All files are JSON. Serialization is canonical: keys sorted, floats written
with 17 significant digits, two-space indent, trailing newline. Canonical
bytes make golden tests and replay determinism checks trivially strict.
Parsers are strict the other way: unknown fields are rejected so a future
format version cannot silently load as this one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .backend import BackendSettings
from .errors import ConfigError, RelationTokenError, SceneFileError
from .graph import (
    FeatureVector,
    ObjectNode,
    RelationEdge,
    RelationKind,
    SceneGraph,
    Subgraph,
)
from .optimizer import OptimizerConfig

SCENE_FILE_VERSION = 1
TRAJECTORY_FILE_VERSION = 1


def canonical_json(value: Any) -> str:
    """Deterministic JSON text: sorted keys, floats at 17 significant digits."""
    return _emit(value, 0) + "\n"


def _emit(value: Any, depth: int) -> str:
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [
            f"{inner}{json.dumps(str(key))}: {_emit(value[key], depth + 1)}"
            for key in sorted(value)
        ]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        parts = [f"{inner}{_emit(item, depth + 1)}" for item in value]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SceneFileError(f"cannot serialize non-finite float {value!r}")
        text = format(value, ".17g")
        if not any(c in text for c in ".eE"):
            text += ".0"
        return text
    raise SceneFileError(f"cannot serialize {type(value).__name__} value")


def _check_fields(obj: dict, path: str, required: tuple[str, ...],
                  optional: tuple[str, ...] = ()) -> None:
    if not isinstance(obj, dict):
        raise SceneFileError(f"{path}: expected an object")
    for key in required:
        if key not in obj:
            raise SceneFileError(f"{path}: missing field {key!r}")
    for key in obj:
        if key not in required and key not in optional:
            raise SceneFileError(
                f"{path}: unknown field {key!r} (not part of file version {SCENE_FILE_VERSION})"
            )


def _number(obj: dict, path: str, key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneFileError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def feature_to_dict(feature: FeatureVector) -> dict:
    return {"x": feature.x, "y": feature.y, "z": feature.z,
            "s": feature.s, "r": feature.r}


def feature_from_dict(obj: dict, path: str) -> FeatureVector:
    _check_fields(obj, path, required=("x", "y", "z", "s", "r"))
    try:
        return FeatureVector(**{k: _number(obj, path, k) for k in ("x", "y", "z", "s", "r")})
    except ValueError as exc:
        raise SceneFileError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class SceneFile:
    """On-disk scene: the graph plus optional component anchors."""

    graph: SceneGraph
    subgraphs: tuple[Subgraph, ...] | None = None


def scene_to_dict(scene: SceneFile | SceneGraph) -> dict:
    if isinstance(scene, SceneGraph):
        scene = SceneFile(graph=scene)
    graph = scene.graph
    doc: dict[str, Any] = {
        "version": SCENE_FILE_VERSION,
        "scene_prompt": graph.scene_prompt,
        "nodes": [
            {
                "id": node.id,
                "label": node.label,
                "node_prompt": node.node_prompt,
                "feature": feature_to_dict(node.feature),
                "base_size": {"w": node.base_size[0], "d": node.base_size[1],
                              "h": node.base_size[2]},
                "size_provenance": node.size_provenance,
            }
            for node in graph.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in graph.edges
        ],
    }
    if scene.subgraphs is not None:
        doc["subgraphs"] = [
            {"members": list(part.member_ids), "anchor": feature_to_dict(part.anchor)}
            for part in scene.subgraphs
        ]
    return doc


def scene_from_dict(doc: Any) -> SceneFile:
    _check_fields(doc, "scene", required=("version", "scene_prompt", "nodes", "edges"),
                  optional=("subgraphs",))
    if doc["version"] != SCENE_FILE_VERSION:
        raise SceneFileError(
            f"scene.version: unsupported version {doc['version']!r}, "
            f"this build reads version {SCENE_FILE_VERSION}"
        )
    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        path = f"scene.nodes[{i}]"
        _check_fields(raw, path, required=("id", "label", "node_prompt", "feature",
                                           "base_size", "size_provenance"))
        base = raw["base_size"]
        _check_fields(base, f"{path}.base_size", required=("w", "d", "h"))
        try:
            nodes.append(ObjectNode(
                id=str(raw["id"]),
                label=str(raw["label"]),
                node_prompt=str(raw["node_prompt"]),
                feature=feature_from_dict(raw["feature"], f"{path}.feature"),
                base_size=(_number(base, f"{path}.base_size", "w"),
                           _number(base, f"{path}.base_size", "d"),
                           _number(base, f"{path}.base_size", "h")),
                size_provenance=str(raw["size_provenance"]),
            ))
        except ValueError as exc:
            raise SceneFileError(f"{path}: {exc}") from exc
    edges = []
    for i, raw in enumerate(doc["edges"]):
        path = f"scene.edges[{i}]"
        _check_fields(raw, path, required=("src", "dst", "kind"))
        try:
            kind = RelationKind.parse(str(raw["kind"]))
        except RelationTokenError as exc:
            raise SceneFileError(f"{path}.kind: {exc}") from exc
        edges.append(RelationEdge(src=str(raw["src"]), dst=str(raw["dst"]), kind=kind))
    try:
        graph = SceneGraph(nodes=tuple(nodes), edges=tuple(edges),
                           scene_prompt=str(doc["scene_prompt"]))
    except Exception as exc:
        raise SceneFileError(f"scene: {exc}") from exc
    subgraphs = None
    if "subgraphs" in doc:
        subgraphs = []
        for i, raw in enumerate(doc["subgraphs"]):
            path = f"scene.subgraphs[{i}]"
            _check_fields(raw, path, required=("members", "anchor"))
            subgraphs.append(Subgraph(
                member_ids=tuple(str(m) for m in raw["members"]),
                anchor=feature_from_dict(raw["anchor"], f"{path}.anchor"),
            ))
        subgraphs = tuple(subgraphs)
    return SceneFile(graph=graph, subgraphs=subgraphs)


def _load_json(path: str | Path, what: str) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFileError(
            f"malformed {what} file {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def save_scene(scene: SceneFile | SceneGraph, path: str | Path) -> None:
    Path(path).write_text(canonical_json(scene_to_dict(scene)), encoding="utf-8")


def load_scene(path: str | Path) -> SceneFile:
    return scene_from_dict(_load_json(path, "scene"))


def trajectory_to_dict(trajectory) -> dict:
    first = trajectory.keyframes[0][1]
    return {
        "version": TRAJECTORY_FILE_VERSION,
        "scene_prompt": first.scene_prompt,
        "nodes": [
            {
                "id": node.id,
                "label": node.label,
                "node_prompt": node.node_prompt,
                "base_size": {"w": node.base_size[0], "d": node.base_size[1],
                              "h": node.base_size[2]},
                "size_provenance": node.size_provenance,
            }
            for node in first.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in first.edges
        ],
        "keyframes": [
            {
                "t": t,
                "poses": {node.id: feature_to_dict(node.feature) for node in graph.nodes},
            }
            for t, graph in trajectory.keyframes
        ],
    }


def save_trajectory(trajectory, path: str | Path) -> None:
    Path(path).write_text(canonical_json(trajectory_to_dict(trajectory)), encoding="utf-8")


@dataclass
class CameraSettings:
    margin: float = 0.10
    quad_size: int = 256


@dataclass
class EngineConfig:
    """Everything configurable from one file: optimizer, scorer, bands, IO."""

    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    scorer: str = "oracle"
    band_overrides: dict[str, dict] = field(default_factory=dict)
    camera: CameraSettings = field(default_factory=CameraSettings)
    backend: BackendSettings = field(default_factory=BackendSettings)
    replay_path: str = ""
    record_path: str = ""
    size_overrides: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    bind: str = "127.0.0.1:8080"

    @classmethod
    def from_dict(cls, doc: dict) -> "EngineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config", "expected a JSON object")
        known = {
            "optimizer", "scorer", "bands", "camera", "backend",
            "replay_path", "record_path", "size_overrides", "bind",
        }
        for key in doc:
            if key not in known:
                raise ConfigError(f"config.{key}", "unknown field")
        config = cls()
        if "optimizer" in doc:
            config.optimizer = _optimizer_from_dict(doc["optimizer"])
        if "scorer" in doc:
            if doc["scorer"] not in ("oracle", "mllm"):
                raise ConfigError("config.scorer", f"must be 'oracle' or 'mllm', got {doc['scorer']!r}")
            config.scorer = doc["scorer"]
        if "bands" in doc:
            if not isinstance(doc["bands"], dict):
                raise ConfigError("config.bands", "expected an object of per-kind overrides")
            config.band_overrides = doc["bands"]
        if "camera" in doc:
            camera = doc["camera"]
            allowed = {"margin", "quad_size"}
            for key in camera:
                if key not in allowed:
                    raise ConfigError(f"config.camera.{key}", "unknown field")
            config.camera = CameraSettings(
                margin=float(camera.get("margin", 0.10)),
                quad_size=int(camera.get("quad_size", 256)),
            )
            if config.camera.margin < 0:
                raise ConfigError("config.camera.margin", "must be >= 0")
            if config.camera.quad_size < 64:
                raise ConfigError("config.camera.quad_size", "must be >= 64")
        if "backend" in doc:
            backend = doc["backend"]
            allowed = {"endpoint", "model", "api_key", "timeout_s", "retries", "max_in_flight"}
            for key in backend:
                if key not in allowed:
                    raise ConfigError(f"config.backend.{key}", "unknown field")
            config.backend = BackendSettings(
                endpoint=str(backend.get("endpoint", "")),
                model=str(backend.get("model", "")),
                api_key=str(backend.get("api_key", "")),
                timeout_s=float(backend.get("timeout_s", 60.0)),
                retries=int(backend.get("retries", 2)),
                max_in_flight=int(backend.get("max_in_flight", 2)),
            )
        for key in ("replay_path", "record_path", "bind"):
            if key in doc:
                setattr(config, key, str(doc[key]))
        if "size_overrides" in doc:
            overrides = doc["size_overrides"]
            if not isinstance(overrides, dict):
                raise ConfigError("config.size_overrides", "expected an object")
            parsed = {}
            for label, extents in overrides.items():
                if (not isinstance(extents, list) or len(extents) != 3
                        or any(not isinstance(v, (int, float)) or v <= 0 for v in extents)):
                    raise ConfigError(f"config.size_overrides.{label}",
                                      "expected three positive numbers")
                parsed[label] = tuple(float(v) for v in extents)
            config.size_overrides = parsed
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        return cls.from_dict(_load_json(path, "config"))


def _optimizer_from_dict(doc: dict) -> OptimizerConfig:
    allowed = {
        "weights", "step_translation", "step_scale", "step_yaw",
        "convergence_threshold", "max_edge_iterations", "max_placement_iterations",
    }
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"config.optimizer.{key}", "unknown field")
    kwargs: dict[str, Any] = {}
    if "weights" in doc:
        kwargs["weights"] = tuple(float(w) for w in doc["weights"])
    for key in ("step_translation", "step_scale", "step_yaw", "convergence_threshold"):
        if key in doc:
            kwargs[key] = float(doc[key])
    for key in ("max_edge_iterations", "max_placement_iterations"):
        if key in doc:
            kwargs[key] = int(doc[key])
    try:
        return replace(OptimizerConfig(), **kwargs)
    except ValueError as exc:
        raise ConfigError("config.optimizer", str(exc)) from exc


# Box triangles as quads of the corner layout in geometry.OrientedBox.corners.
_BOX_FACES = (
    (0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (2, 3, 7, 6), (1, 2, 6, 5), (3, 0, 4, 7),
)


def export_geometry(graph: SceneGraph, path: str | Path, fmt: str = "obj") -> None:
    """Write one world-transformed oriented box (8 verts, 12 tris) per node."""
    from .geometry import world_box

    if fmt not in ("obj", "ply"):
        raise ValueError(f"format must be 'obj' or 'ply', got {fmt!r}")
    boxes = [(node.id, world_box(node)) for node in graph.nodes]
    if fmt == "obj":
        lines = ["# scene proxy boxes"]
        offset = 0
        for node_id, box in boxes:
            lines.append(f"g node_{node_id}")
            lines.append(f"# node {node_id}")
            for corner in box.corners():
                lines.append("v " + " ".join(format(c, ".9g") for c in corner))
            for face in _BOX_FACES:
                a, b, c, d = (offset + k + 1 for k in face)
                lines.append(f"f {a} {b} {c}")
                lines.append(f"f {a} {c} {d}")
            offset += 8
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    vertex_lines = []
    face_lines = []
    comments = []
    offset = 0
    for node_id, box in boxes:
        comments.append(f"comment node {node_id} vertices {offset}..{offset + 7}")
        for corner in box.corners():
            vertex_lines.append(" ".join(format(c, ".9g") for c in corner))
        for face in _BOX_FACES:
            a, b, c, d = (offset + k for k in face)
            face_lines.append(f"3 {a} {b} {c}")
            face_lines.append(f"3 {a} {c} {d}")
        offset += 8
    header = [
        "ply", "format ascii 1.0", *comments,
        f"element vertex {len(vertex_lines)}",
        "property float x", "property float y", "property float z",
        f"element face {len(face_lines)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    Path(path).write_text("\n".join(header + vertex_lines + face_lines) + "\n",
                          encoding="utf-8")
