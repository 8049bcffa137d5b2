"""Natural-language scene modification and temporal trajectory generation.

Modifications run in two phases: a plan built from the model's classification
of the request (or a replay fixture), then structural application followed by
re-optimization of the edges the change disturbed. Trajectories retarget the
graph from state prompts, record every accepted optimizer step, and resample
the recording into evenly spaced keyframes.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

from .backend import ChatBackend, query_modification, query_size, query_state_prompts
from .errors import ReplyParseError, UnknownIdError
from .graph import (
    FeatureVector,
    ObjectNode,
    RelationEdge,
    RelationKind,
    SceneGraph,
    add_node,
    neighbors,
    normalize_yaw,
    remove_node,
    set_relation,
)
from .optimizer import (
    DEFAULT_CONFIG,
    EdgeTrace,
    OptimizerConfig,
    ProgressCallback,
    Recorder,
    SceneReport,
    Scorer,
    optimize_edge,
    optimize_scene,
)

logger = logging.getLogger(__name__)


class ModificationKind(enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    REPOSITION = "reposition"
    RETARGET = "retarget"


@dataclass(frozen=True)
class ModificationPlan:
    """A validated structural change plus the node ids needing re-optimization."""

    kind: ModificationKind
    node: ObjectNode | None = None
    node_id: str | None = None
    new_edges: tuple[RelationEdge, ...] = ()
    offset: tuple[float, float, float] | None = None
    affected_ids: tuple[str, ...] = ()


def plan_modification(graph: SceneGraph, sentence: str,
                      backend: ChatBackend) -> ModificationPlan:
    """Classify a request against the current graph and build its plan.

    Add plans come back with the new node fully specified: the model names it,
    provides its generation prompt, and is asked for its real-world size.
    """
    reply = query_modification(graph, sentence, backend)
    if reply.action == "none":
        raise ReplyParseError(f"no spatial modification detected in {sentence!r}")
    if not reply.node:
        raise ReplyParseError("modification reply names no node")
    if reply.action == "remove":
        if not graph.has_node(reply.node):
            raise UnknownIdError(f"unknown node id {reply.node!r}")
        affected = tuple(other for other, _e, _d in neighbors(graph, reply.node))
        return ModificationPlan(kind=ModificationKind.REMOVE, node_id=reply.node,
                                affected_ids=affected)
    if reply.action == "reposition":
        if not graph.has_node(reply.node):
            raise UnknownIdError(f"unknown node id {reply.node!r}")
        if reply.offset is None:
            raise ReplyParseError("reposition reply carries no offset")
        return ModificationPlan(kind=ModificationKind.REPOSITION, node_id=reply.node,
                                offset=reply.offset, affected_ids=(reply.node,))
    # Add: attach near the first referenced partner so edge optimization has
    # a sensible starting pose.
    edges = []
    for src, kind, dst in reply.edges:
        for endpoint in (src, dst):
            if endpoint != reply.node and not graph.has_node(endpoint):
                raise UnknownIdError(f"unknown node id {endpoint!r}")
        edges.append(RelationEdge(src=src, dst=dst, kind=kind))
    partner = next(
        (e.dst if e.src == reply.node else e.src for e in edges), None
    )
    start = graph.node(partner).feature if partner else FeatureVector()
    size = query_size(backend, reply.node, reply.node_prompt or "")
    node = ObjectNode(
        id=reply.node,
        label=reply.node,
        node_prompt=reply.node_prompt or reply.node,
        feature=FeatureVector(x=start.x, y=start.y, z=start.z),
        base_size=size.extents,
        size_provenance=size.provenance,
    )
    affected = tuple(dict.fromkeys([reply.node] + [e.src for e in edges] + [e.dst for e in edges]))
    return ModificationPlan(kind=ModificationKind.ADD, node=node,
                            new_edges=tuple(edges), affected_ids=affected)


def apply_modification(graph: SceneGraph, plan: ModificationPlan, scorer: Scorer,
                       capturer=None, config: OptimizerConfig = DEFAULT_CONFIG,
                       on_event: ProgressCallback | None = None,
                       recorder: Recorder | None = None) -> tuple[SceneGraph, SceneReport]:
    """Apply a plan structurally, then re-optimize what it disturbed.

    After a removal only edges whose source is a former neighbor re-run, so
    nodes that never related to the removed one keep their exact features.
    Additions and repositions re-run every edge incident to an affected id.
    """
    report = SceneReport()
    if plan.kind is ModificationKind.REMOVE:
        graph, former_neighbors = remove_node(graph, plan.node_id)
        retarget = [e for e in graph.edges if e.src in former_neighbors]
    elif plan.kind is ModificationKind.ADD:
        graph = add_node(graph, plan.node)
        for edge in plan.new_edges:
            graph = set_relation(graph, edge)
        retarget = [
            e for e in graph.edges
            if e.src in plan.affected_ids or e.dst in plan.affected_ids
        ]
    elif plan.kind is ModificationKind.REPOSITION:
        feature = graph.node(plan.node_id).feature
        dx, dy, dz = plan.offset
        graph = graph.with_feature(plan.node_id, FeatureVector(
            x=feature.x + dx, y=feature.y + dy, z=feature.z + dz,
            s=feature.s, r=feature.r,
        ))
        if recorder:
            recorder(graph)
        retarget = [
            e for e in graph.edges
            if e.src == plan.node_id or e.dst == plan.node_id
        ]
    else:
        raise ValueError(f"apply_modification cannot run a {plan.kind} plan directly")
    for edge in retarget:
        graph, trace = optimize_edge(graph, edge, scorer, capturer, config,
                                     on_event=on_event, recorder=recorder)
        report.edge_traces.append(trace)
    return graph, report


@dataclass(frozen=True)
class Trajectory:
    """Timestamped scene snapshots; endpoints equal the pre/post states exactly."""

    keyframes: tuple[tuple[float, SceneGraph], ...]

    def __post_init__(self):
        if len(self.keyframes) < 2:
            raise ValueError("trajectory needs at least two keyframes")
        times = [t for t, _ in self.keyframes]
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ValueError("trajectory must start at t=0 and end at t=1")
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        structure = [(g.node_ids, tuple(e.key for e in g.edges)) for _, g in self.keyframes]
        if any(s != structure[0] for s in structure[1:]):
            raise ValueError("keyframes must share one node/edge structure")


def _interpolate_features(a: FeatureVector, b: FeatureVector, alpha: float) -> FeatureVector:
    """Linear position, log-linear scale, shortest-arc yaw."""
    yaw_delta = normalize_yaw(b.r - a.r)
    return FeatureVector(
        x=a.x + alpha * (b.x - a.x),
        y=a.y + alpha * (b.y - a.y),
        z=a.z + alpha * (b.z - a.z),
        s=math.exp(math.log(a.s) + alpha * (math.log(b.s) - math.log(a.s))),
        r=normalize_yaw(a.r + alpha * yaw_delta),
    )


def _interpolate_graphs(a: SceneGraph, b: SceneGraph, alpha: float) -> SceneGraph:
    graph = a
    for node in a.nodes:
        graph = graph.with_feature(
            node.id, _interpolate_features(node.feature, b.node(node.id).feature, alpha)
        )
    return graph


def resample_snapshots(snapshots: list[SceneGraph], n_keyframes: int) -> Trajectory:
    """Evenly spaced keyframes over a recorded snapshot sequence.

    Interior keyframes interpolate between the bracketing snapshots; the first
    and last keyframes reuse the recorded endpoint graphs unchanged.
    """
    if n_keyframes < 2:
        raise ValueError(f"need at least two keyframes, got {n_keyframes}")
    if not snapshots:
        raise ValueError("no snapshots to resample")
    if len(snapshots) == 1:
        snapshots = [snapshots[0], snapshots[0]]
    keyframes: list[tuple[float, SceneGraph]] = []
    last = len(snapshots) - 1
    for j in range(n_keyframes):
        t = j / (n_keyframes - 1)
        position = t * last
        index = int(math.floor(position))
        if index >= last:
            keyframes.append((t, snapshots[last]))
            continue
        alpha = position - index
        if alpha == 0.0:
            keyframes.append((t, snapshots[index]))
        else:
            keyframes.append((t, _interpolate_graphs(snapshots[index],
                                                     snapshots[index + 1], alpha)))
    return Trajectory(keyframes=tuple(keyframes))


def generate_trajectory(graph: SceneGraph, sentence: str, scorer: Scorer,
                        backend: ChatBackend, capturer=None,
                        config: OptimizerConfig = DEFAULT_CONFIG,
                        n_keyframes: int = 8,
                        on_event: ProgressCallback | None = None) -> tuple[SceneGraph, Trajectory]:
    """Retarget the graph from state prompts and animate the optimization.

    Every accepted optimizer step appends a snapshot; the recording is then
    resampled to n_keyframes. A transformation that is already satisfied
    collapses to two identical keyframes.
    """
    if n_keyframes < 2:
        raise ValueError(f"need at least two keyframes, got {n_keyframes}")
    state_reply = query_state_prompts(graph, sentence, backend)
    for src, kind, dst in state_reply.target_edges:
        graph = set_relation(graph, RelationEdge(src=src, dst=dst, kind=kind))
    snapshots: list[SceneGraph] = [graph]
    final, _report = optimize_scene(
        graph, scorer, capturer, config,
        on_event=on_event, recorder=snapshots.append,
    )
    if snapshots[-1] != final:
        snapshots.append(final)
    if len(snapshots) < 2:
        return final, resample_snapshots(snapshots, 2)
    return final, resample_snapshots(snapshots, n_keyframes)
