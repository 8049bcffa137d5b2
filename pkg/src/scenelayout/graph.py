"""Scene-graph data model and structural algorithms.

A scene is a directed graph: nodes are objects carrying a layout feature
vector (position, uniform scale, yaw), edges are spatial relations whose
source node is the one the optimizer is allowed to move. Graph values are
immutable snapshots; every mutation returns a new graph.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

from .errors import (
    DuplicateEdgeError,
    DuplicateIdError,
    RelationTokenError,
    SelfEdgeError,
    UnknownEndpointError,
    UnknownIdError,
)

logger = logging.getLogger(__name__)


def normalize_yaw(degrees: float) -> float:
    """Wrap an angle in degrees into [-180, 180)."""
    wrapped = math.fmod(degrees + 180.0, 360.0)
    if wrapped < 0.0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class FeatureVector:
    """Layout state of one object: world position (m), uniform scale, yaw (deg).

    Yaw is about the world z-axis and stored normalized to [-180, 180).
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    s: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "s", "r"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"feature component {name} must be finite, got {value!r}")
        if self.s <= 0.0:
            raise ValueError(f"scale must be positive, got {self.s!r}")
        object.__setattr__(self, "r", normalize_yaw(self.r))

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class ObjectNode:
    """One object in the scene.

    base_size is the axis-aligned (width, depth, height) extent in meters at
    scale 1; the world extent is feature.s * base_size.
    """

    id: str
    label: str
    node_prompt: str = ""
    feature: FeatureVector = field(default_factory=FeatureVector)
    base_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    size_provenance: str = "default"

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be non-empty")
        if not self.label:
            raise ValueError("node label must be non-empty")
        if len(self.base_size) != 3 or any(v <= 0.0 for v in self.base_size):
            raise ValueError(f"base_size must be three positive extents, got {self.base_size!r}")
        object.__setattr__(self, "base_size", tuple(float(v) for v in self.base_size))


class RelationKind(enum.Enum):
    """Closed vocabulary of directed spatial relations."""

    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    FRONT = "front"
    BELOW = "below"
    IN = "in"

    @classmethod
    def parse(cls, token: str) -> "RelationKind":
        """Parse a canonical relation token; unknown tokens raise RelationTokenError."""
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise RelationTokenError(token) from None


class EdgeDirection(enum.Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"


@dataclass(frozen=True)
class RelationEdge:
    """Directed relation: src is the in-degree node (the one that gets moved)."""

    src: str
    dst: str
    kind: RelationKind

    def __post_init__(self):
        if self.src == self.dst:
            raise SelfEdgeError(f"self-edge on {self.src!r} rejected")

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class SceneGraph:
    """Immutable scene graph. Node insertion order is preserved and is the
    determinism anchor for partitioning and optimization order."""

    nodes: tuple[ObjectNode, ...] = ()
    edges: tuple[RelationEdge, ...] = ()
    scene_prompt: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        by_id: dict[str, ObjectNode] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise DuplicateIdError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
        seen_pairs: set[tuple[str, str]] = set()
        for edge in self.edges:
            for endpoint in (edge.src, edge.dst):
                if endpoint not in by_id:
                    raise UnknownEndpointError(f"edge endpoint {endpoint!r} not in graph")
            if edge.key in seen_pairs:
                raise DuplicateEdgeError(f"duplicate edge {edge.src!r} -> {edge.dst!r}")
            seen_pairs.add(edge.key)
        object.__setattr__(self, "_by_id", by_id)

    def node(self, node_id: str) -> ObjectNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownIdError(f"unknown node id {node_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._by_id

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(node.id for node in self.nodes)

    def node_index(self, node_id: str) -> int:
        for i, node in enumerate(self.nodes):
            if node.id == node_id:
                return i
        raise UnknownIdError(f"unknown node id {node_id!r}")

    def with_feature(self, node_id: str, feature: FeatureVector) -> "SceneGraph":
        """Return a graph identical to this one with one node's feature replaced."""
        self.node(node_id)
        nodes = tuple(
            replace(node, feature=feature) if node.id == node_id else node
            for node in self.nodes
        )
        return SceneGraph(nodes=nodes, edges=self.edges, scene_prompt=self.scene_prompt)


@dataclass(frozen=True)
class Subgraph:
    """A weakly-connected component plus its rigid placement anchor."""

    member_ids: tuple[str, ...]
    anchor: FeatureVector = field(default_factory=FeatureVector)

    def __post_init__(self):
        if not self.member_ids:
            raise ValueError("subgraph must have at least one member")
        object.__setattr__(self, "member_ids", tuple(self.member_ids))


def add_node(graph: SceneGraph, node: ObjectNode) -> SceneGraph:
    """Append a node; edges are unchanged."""
    if graph.has_node(node.id):
        raise DuplicateIdError(f"duplicate node id {node.id!r}")
    return SceneGraph(nodes=graph.nodes + (node,), edges=graph.edges,
                      scene_prompt=graph.scene_prompt)


def remove_node(graph: SceneGraph, node_id: str) -> tuple[SceneGraph, tuple[str, ...]]:
    """Remove a node and all incident edges.

    Returns the new graph and the ids of former neighbors, in first-contact
    edge order, for re-optimization scheduling.
    """
    graph.node(node_id)
    neighbors: list[str] = []
    kept_edges = []
    for edge in graph.edges:
        if edge.src == node_id or edge.dst == node_id:
            other = edge.dst if edge.src == node_id else edge.src
            if other not in neighbors:
                neighbors.append(other)
        else:
            kept_edges.append(edge)
    nodes = tuple(node for node in graph.nodes if node.id != node_id)
    new_graph = SceneGraph(nodes=nodes, edges=tuple(kept_edges),
                           scene_prompt=graph.scene_prompt)
    return new_graph, tuple(neighbors)


def add_edge(graph: SceneGraph, edge: RelationEdge) -> SceneGraph:
    """Append an edge; both endpoints must exist and the ordered pair be new."""
    for endpoint in (edge.src, edge.dst):
        if not graph.has_node(endpoint):
            raise UnknownEndpointError(f"edge endpoint {endpoint!r} not in graph")
    if any(e.key == edge.key for e in graph.edges):
        raise DuplicateEdgeError(f"duplicate edge {edge.src!r} -> {edge.dst!r}")
    return SceneGraph(nodes=graph.nodes, edges=graph.edges + (edge,),
                      scene_prompt=graph.scene_prompt)


def set_relation(graph: SceneGraph, edge: RelationEdge) -> SceneGraph:
    """Add an edge, or replace the relation kind of an existing ordered pair.

    A second relation between the same ordered pair replaces the first; the
    replacement is logged because it usually points at an ambiguous prompt.
    """
    for existing in graph.edges:
        if existing.key == edge.key:
            if existing.kind is not edge.kind:
                logger.warning(
                    "replacing relation %s->%s: %s -> %s",
                    edge.src, edge.dst, existing.kind.value, edge.kind.value,
                )
            edges = tuple(edge if e.key == edge.key else e for e in graph.edges)
            return SceneGraph(nodes=graph.nodes, edges=edges,
                              scene_prompt=graph.scene_prompt)
    return add_edge(graph, edge)


def neighbors(graph: SceneGraph, node_id: str) -> list[tuple[str, RelationEdge, EdgeDirection]]:
    """All incident edges of a node with incidence direction, in edge order."""
    graph.node(node_id)
    found = []
    for edge in graph.edges:
        if edge.src == node_id:
            found.append((edge.dst, edge, EdgeDirection.OUTGOING))
        elif edge.dst == node_id:
            found.append((edge.src, edge, EdgeDirection.INCOMING))
    return found


def bfs_order(graph: SceneGraph, seed: str, allowed: set[str] | None = None) -> list[str]:
    """Breadth-first node order over the undirected view of the edges.

    Neighbor expansion follows edge-insertion order so the result is
    deterministic for equal graphs.
    """
    visited = [seed]
    seen = {seed}
    queue = deque([seed])
    while queue:
        current = queue.popleft()
        for other, _edge, _direction in neighbors(graph, current):
            if other in seen:
                continue
            if allowed is not None and other not in allowed:
                continue
            seen.add(other)
            visited.append(other)
            queue.append(other)
    return visited


def partition_subgraphs(graph: SceneGraph) -> list[Subgraph]:
    """Split the graph into weakly-connected components via BFS.

    Components are ordered by their smallest node-insertion index; members
    are listed in BFS order seeded at that node. Anchors start at identity.
    """
    assigned: set[str] = set()
    parts: list[Subgraph] = []
    for node in graph.nodes:
        if node.id in assigned:
            continue
        members = bfs_order(graph, node.id)
        assigned.update(members)
        parts.append(Subgraph(member_ids=tuple(members)))
    return parts


def subgraph_edges(graph: SceneGraph, subgraph: Subgraph) -> list[RelationEdge]:
    """Edges with both endpoints inside the subgraph, discovered in BFS order.

    BFS runs from the subgraph seed; while visiting a node, each incident
    not-yet-listed edge whose other endpoint is a member is appended. Cross
    edges (both endpoints already visited) are therefore included exactly once.
    """
    members = set(subgraph.member_ids)
    listed: set[tuple[str, str]] = set()
    ordered: list[RelationEdge] = []
    for node_id in bfs_order(graph, subgraph.member_ids[0], allowed=members):
        for _other, edge, _direction in neighbors(graph, node_id):
            if edge.key in listed:
                continue
            if edge.src in members and edge.dst in members:
                listed.add(edge.key)
                ordered.append(edge)
    return ordered
