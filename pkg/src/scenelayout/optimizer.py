"""Hierarchical score-driven layout optimization: edge, subgraph, graph.

The scores returned by a scorer are treated as signed descent directions per
channel, never as an analytic gradient: scale moves in log space, translation
along the current per-axis separation sign in characteristic-length units,
yaw in fractions of a half turn. Only the in-degree (source) node of an edge
is ever moved by edge optimization; at the subgraph level, nodes whose pose
was derived from an earlier edge follow their reference node rigidly when it
moves again.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .errors import SceneLayoutError, UnknownIdError
from .geometry import OrientedBox, characteristic_length, group_bounding_box, world_box
from .graph import (
    FeatureVector,
    ObjectNode,
    RelationEdge,
    SceneGraph,
    Subgraph,
    bfs_order,
    normalize_yaw,
    partition_subgraphs,
    subgraph_edges,
)
from .scoring import (
    OracleScorer,
    RelationKind,
    RelationTarget,
    ScoreContext,
    ScoreRequest,
    ScoreVector,
    Scorer,
    edge_context,
    oracle_score,
)
from .views import MontageCapturer

logger = logging.getLogger(__name__)

Recorder = Callable[[SceneGraph], None]


@dataclass(frozen=True)
class OptimizerConfig:
    """Step sizes, loss weights, and termination limits.

    Translation steps are in characteristic lengths per unit normalized score,
    scale steps in log-scale units, yaw steps in fractions of 180 degrees.
    """

    weights: tuple[float, float, float, float, float] = (0.2, 0.2, 0.2, 0.2, 0.2)
    step_translation: float = 0.5
    step_scale: float = 0.5
    step_yaw: float = 0.25
    convergence_threshold: float = 0.05
    max_edge_iterations: int = 10
    max_placement_iterations: int = 10

    def __post_init__(self):
        if len(self.weights) != 5 or any(w < 0.0 for w in self.weights):
            raise ValueError(f"weights must be five non-negative values, got {self.weights!r}")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)!r}")
        for name in ("step_translation", "step_scale", "step_yaw", "convergence_threshold"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_edge_iterations < 1 or self.max_placement_iterations < 1:
            raise ValueError("iteration caps must be >= 1")


DEFAULT_CONFIG = OptimizerConfig()


class EdgeStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    SCORER_ERROR = "scorer_error"


@dataclass(frozen=True)
class IterationRecord:
    index: int
    scores: ScoreVector
    loss: float
    before: FeatureVector
    after: FeatureVector


@dataclass(frozen=True)
class EdgeTrace:
    subject: str
    iterations: tuple[IterationRecord, ...]
    status: EdgeStatus
    edge: RelationEdge | None = None
    level: str = "edge"
    error: str | None = None

    @property
    def final_loss(self) -> float | None:
        return self.iterations[-1].loss if self.iterations else None


@dataclass(frozen=True)
class PlacementTrace:
    subgraph_index: int
    iterations: tuple[IterationRecord, ...]
    status: EdgeStatus


@dataclass(frozen=True)
class ProgressEvent:
    """One optimizer iteration, as streamed to UIs."""

    level: str  # edge | refine | place
    subject: str
    iteration: int
    scores: ScoreVector
    loss: float

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "subject": self.subject,
            "iteration": self.iteration,
            "scores": list(self.scores.as_tuple()),
            "loss": self.loss,
        }


ProgressCallback = Callable[[ProgressEvent], None]


@dataclass(frozen=True)
class GlobalEnergy:
    """Energy breakdown: per-subgraph internal terms plus the cross penalty."""

    subgraph_terms: tuple[tuple[tuple[str, ...], float], ...]
    cross_penalty: float = 0.0

    @property
    def total(self) -> float:
        return sum(term for _, term in self.subgraph_terms) + self.cross_penalty

    def to_dict(self) -> dict:
        return {
            "subgraphs": [
                {"members": list(members), "energy": term}
                for members, term in self.subgraph_terms
            ],
            "cross_penalty": self.cross_penalty,
            "total": self.total,
        }


@dataclass
class SceneReport:
    """Everything observable about one optimize_scene run."""

    edge_traces: list[EdgeTrace] = field(default_factory=list)
    placement_traces: list[PlacementTrace] = field(default_factory=list)
    energy_before: GlobalEnergy | None = None
    energy_after: GlobalEnergy | None = None
    anchors: list[FeatureVector] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def total_iterations(self) -> int:
        return sum(len(t.iterations) for t in self.edge_traces) + sum(
            len(t.iterations) for t in self.placement_traces
        )


def loss(scores: ScoreVector, config: OptimizerConfig = DEFAULT_CONFIG) -> float:
    """Weighted mean of normalized score magnitudes."""
    return sum(w * abs(s) for w, s in zip(config.weights, scores.as_tuple())) / 100.0


def _updated_feature(feature: FeatureVector, scores: ScoreVector, d: float,
                     direction: tuple[float, float, float],
                     config: OptimizerConfig) -> FeatureVector:
    q = [s / 100.0 for s in scores.as_tuple()]
    return FeatureVector(
        x=feature.x + config.step_translation * q[1] * d * direction[0],
        y=feature.y + config.step_translation * q[2] * d * direction[1],
        z=feature.z + config.step_translation * q[3] * d * direction[2],
        s=feature.s * math.exp(-config.step_scale * q[0]),
        r=normalize_yaw(feature.r - config.step_yaw * q[4] * 180.0),
    )


def _separation_signs(a_center, b_center) -> tuple[float, float, float]:
    return tuple(-1.0 if a_center[k] - b_center[k] < 0.0 else 1.0 for k in range(3))


def apply_scores(src: ObjectNode, dst: ObjectNode, scores: ScoreVector,
                 config: OptimizerConfig = DEFAULT_CONFIG) -> FeatureVector:
    """One descent step on the source node's feature; the reference never moves.

    Positive translation scores push the source away from the reference along
    the current separation sign (ties resolve to +1), negative pull it in.
    Positive scale scores shrink; positive yaw scores rotate clockwise.
    """
    a = world_box(src)
    b = world_box(dst)
    d = characteristic_length(a, b)
    direction = _separation_signs(a.center, b.center)
    return _updated_feature(src.feature, scores, d, direction, config)


def _make_request(graph: SceneGraph, x1_ids: Sequence[str], x2_ids: Sequence[str],
                  context: ScoreContext, scorer: Scorer, capturer) -> ScoreRequest:
    montages = None
    if scorer.needs_views:
        capture = capturer or MontageCapturer()
        montages = capture(graph, list(x1_ids), list(x2_ids))
    x1_desc = ", ".join(_describe(graph, i) for i in x1_ids)
    x2_desc = ", ".join(_describe(graph, i) for i in x2_ids)
    return ScoreRequest(
        x1_description=x1_desc,
        x2_description=x2_desc,
        scene_prompt=graph.scene_prompt,
        montages=montages,
        context=context,
    )


def _describe(graph: SceneGraph, node_id: str) -> str:
    node = graph.node(node_id)
    return node.node_prompt or node.label


def optimize_edge(graph: SceneGraph, edge: RelationEdge, scorer: Scorer,
                  capturer=None, config: OptimizerConfig = DEFAULT_CONFIG,
                  on_event: ProgressCallback | None = None,
                  recorder: Recorder | None = None,
                  level: str = "edge") -> tuple[SceneGraph, EdgeTrace]:
    """Iteratively score one edge and move its source until the loss converges.

    Nodes other than edge.src are never touched; the returned graph shares
    their node objects with the input.
    """
    if not any(e.key == edge.key for e in graph.edges):
        raise UnknownIdError(f"edge {edge.src!r} -> {edge.dst!r} not in graph")
    subject = f"{edge.src}->{edge.dst}"
    records: list[IterationRecord] = []
    status = EdgeStatus.MAX_ITERS
    error: str | None = None
    for iteration in range(1, config.max_edge_iterations + 1):
        before = graph.node(edge.src).feature
        try:
            request = _make_request(graph, [edge.src], [edge.dst],
                                    edge_context(graph, edge), scorer, capturer)
            scores = scorer.score(request)
        except SceneLayoutError as exc:
            status = EdgeStatus.SCORER_ERROR
            error = str(exc)
            logger.warning("scorer failed on %s at iteration %d: %s", subject, iteration, exc)
            break
        value = loss(scores, config)
        if on_event:
            on_event(ProgressEvent(level, subject, iteration, scores, value))
        if value < config.convergence_threshold:
            records.append(IterationRecord(iteration, scores, value, before, before))
            status = EdgeStatus.CONVERGED
            break
        after = apply_scores(graph.node(edge.src), graph.node(edge.dst), scores, config)
        graph = graph.with_feature(edge.src, after)
        records.append(IterationRecord(iteration, scores, value, before, after))
        if recorder:
            recorder(graph)
    return graph, EdgeTrace(subject=subject, edge=edge, iterations=tuple(records),
                            status=status, level=level, error=error)


def _followers(attached: dict[str, str], mover: str) -> list[str]:
    """Nodes whose pose was derived, directly or transitively, from the mover."""
    reverse: dict[str, list[str]] = {}
    for src, dst in attached.items():
        reverse.setdefault(dst, []).append(src)
    found: list[str] = []
    queue = list(reverse.get(mover, ()))
    seen = {mover}
    while queue:
        node = queue.pop(0)
        if node in seen:
            continue
        seen.add(node)
        found.append(node)
        queue.extend(reverse.get(node, ()))
    return found


def _follow_rigidly(graph: SceneGraph, follower_ids: Iterable[str],
                    before: FeatureVector, after: FeatureVector) -> SceneGraph:
    """Carry followers along a mover's translation and scale change.

    Positions scale about the mover's previous position and translate with it;
    follower yaw is untouched so world-axis relation bands survive exactly.
    """
    rho = after.s / before.s
    for node_id in follower_ids:
        f = graph.node(node_id).feature
        moved = FeatureVector(
            x=after.x + rho * (f.x - before.x),
            y=after.y + rho * (f.y - before.y),
            z=after.z + rho * (f.z - before.z),
            s=f.s * rho,
            r=f.r,
        )
        graph = graph.with_feature(node_id, moved)
    return graph


def optimize_subgraph(graph: SceneGraph, subgraph: Subgraph, scorer: Scorer,
                      capturer=None, config: OptimizerConfig = DEFAULT_CONFIG,
                      on_event: ProgressCallback | None = None,
                      recorder: Recorder | None = None) -> tuple[SceneGraph, list[EdgeTrace]]:
    """Optimize a component's internal edges in BFS order, then refine members.

    After an edge is optimized its source is attached to its reference: when a
    later edge moves that reference, attached nodes follow rigidly, keeping
    already-established relative placements intact.
    """
    traces: list[EdgeTrace] = []
    if len(subgraph.member_ids) < 2:
        return graph, traces
    members = set(subgraph.member_ids)
    attached: dict[str, str] = {}
    for edge in subgraph_edges(graph, subgraph):
        before = graph.node(edge.src).feature
        graph, trace = optimize_edge(graph, edge, scorer, capturer, config,
                                     on_event=on_event, recorder=recorder)
        traces.append(trace)
        after = graph.node(edge.src).feature
        if after != before:
            follower_ids = [n for n in _followers(attached, edge.src) if n != edge.dst]
            if follower_ids:
                graph = _follow_rigidly(graph, follower_ids, before, after)
                if recorder:
                    recorder(graph)
        attached[edge.src] = edge.dst
    order = bfs_order(graph, subgraph.member_ids[0], allowed=members)
    if scorer.refine_per_edge:
        for node_id in order:
            for edge in graph.edges:
                if edge.src == node_id and edge.dst in members:
                    graph, trace = optimize_edge(graph, edge, scorer, capturer, config,
                                                 on_event=on_event, recorder=recorder,
                                                 level="refine")
                    traces.append(trace)
    else:
        for node_id in order:
            others = [n for n in order if n != node_id]
            graph, trace = _refine_against_group(graph, node_id, others, scorer,
                                                 capturer, config, on_event, recorder)
            traces.append(trace)
    return graph, traces


def _refine_against_group(graph: SceneGraph, node_id: str, other_ids: list[str],
                          scorer: Scorer, capturer, config: OptimizerConfig,
                          on_event: ProgressCallback | None,
                          recorder: Recorder | None) -> tuple[SceneGraph, EdgeTrace]:
    """Placement-partition refinement: one node scored against the rest."""
    subject = f"{node_id}~group"
    records: list[IterationRecord] = []
    status = EdgeStatus.MAX_ITERS
    error = None
    for iteration in range(1, config.max_placement_iterations + 1):
        node = graph.node(node_id)
        box = world_box(node)
        group = group_bounding_box([world_box(graph.node(i)) for i in other_ids])
        context = ScoreContext(mover_box=box, reference_box=group,
                               mover_scale=node.feature.s, relation=None)
        before = node.feature
        try:
            request = _make_request(graph, [node_id], other_ids, context, scorer, capturer)
            scores = scorer.score(request)
        except SceneLayoutError as exc:
            status = EdgeStatus.SCORER_ERROR
            error = str(exc)
            break
        value = loss(scores, config)
        if on_event:
            on_event(ProgressEvent("refine", subject, iteration, scores, value))
        if value < config.convergence_threshold:
            records.append(IterationRecord(iteration, scores, value, before, before))
            status = EdgeStatus.CONVERGED
            break
        d = characteristic_length(box, group)
        direction = _separation_signs(box.center, group.center)
        after = _updated_feature(before, scores, d, direction, config)
        graph = graph.with_feature(node_id, after)
        records.append(IterationRecord(iteration, scores, value, before, after))
        if recorder:
            recorder(graph)
    return graph, EdgeTrace(subject=subject, iterations=tuple(records),
                            status=status, level="refine", error=error)


def subgraph_bounding_radius(graph: SceneGraph, subgraph: Subgraph) -> float:
    """Radius of a sphere around the member-centroid containing every member box."""
    positions = [graph.node(i).feature.position for i in subgraph.member_ids]
    cx = sum(p[0] for p in positions) / len(positions)
    cy = sum(p[1] for p in positions) / len(positions)
    cz = sum(p[2] for p in positions) / len(positions)
    radius = 0.0
    for node_id in subgraph.member_ids:
        box = world_box(graph.node(node_id))
        offset = math.dist(box.center, (cx, cy, cz))
        radius = max(radius, offset + box.sphere_diameter / 2.0)
    return radius


def fallback_grid_placements(graph: SceneGraph,
                             subgraphs: Sequence[Subgraph]) -> list[FeatureVector]:
    """Deterministic row placement: successive centroids spaced on x by
    1.5 * (r_i + r_j) of the neighboring subgraphs' bounding radii."""
    placements: list[FeatureVector] = []
    radii = [subgraph_bounding_radius(graph, part) for part in subgraphs]
    cursor = 0.0
    for index, part in enumerate(subgraphs):
        if index > 0:
            cursor += 1.5 * (radii[index - 1] + radii[index])
        positions = [graph.node(i).feature.position for i in part.member_ids]
        centroid_x = sum(p[0] for p in positions) / len(positions)
        placements.append(FeatureVector(x=cursor - centroid_x, y=0.0, z=0.0, s=1.0, r=0.0))
    return placements


def _subgraph_centroid(graph: SceneGraph, member_ids: Sequence[str]) -> tuple[float, float, float]:
    positions = [graph.node(i).feature.position for i in member_ids]
    n = len(positions)
    return (
        sum(p[0] for p in positions) / n,
        sum(p[1] for p in positions) / n,
        sum(p[2] for p in positions) / n,
    )


def _transform_members(graph: SceneGraph, member_ids: Sequence[str],
                       pivot: tuple[float, float, float],
                       delta: FeatureVector) -> SceneGraph:
    """Apply a similarity map (translate, uniform scale, yaw about pivot) to members."""
    rad = math.radians(delta.r)
    cos_r, sin_r = math.cos(rad), math.sin(rad)
    for node_id in member_ids:
        f = graph.node(node_id).feature
        ox, oy, oz = f.x - pivot[0], f.y - pivot[1], f.z - pivot[2]
        rx = cos_r * ox - sin_r * oy
        ry = sin_r * ox + cos_r * oy
        moved = FeatureVector(
            x=pivot[0] + delta.x + delta.s * rx,
            y=pivot[1] + delta.y + delta.s * ry,
            z=pivot[2] + delta.z + delta.s * oz,
            s=f.s * delta.s,
            r=normalize_yaw(f.r + delta.r),
        )
        graph = graph.with_feature(node_id, moved)
    return graph


def place_subgraphs(graph: SceneGraph, subgraphs: Sequence[Subgraph],
                    placements: Sequence[FeatureVector], scorer: Scorer,
                    capturer=None, config: OptimizerConfig = DEFAULT_CONFIG,
                    on_event: ProgressCallback | None = None,
                    recorder: Recorder | None = None,
                    refine: bool = True) -> tuple[SceneGraph, list[Subgraph], list[PlacementTrace]]:
    """Place each component rigidly from its anchor estimate, then refine.

    Every anchor update moves all members through the same similarity map
    (rotation and scale about the component centroid), so relative member
    geometry is preserved exactly up to the anchor scale factor. Graphs with a
    single component skip refinement.
    """
    if len(placements) != len(subgraphs):
        raise ValueError(f"{len(subgraphs)} subgraphs but {len(placements)} placements")
    placed: list[Subgraph] = []
    for part, placement in zip(subgraphs, placements):
        pivot = _subgraph_centroid(graph, part.member_ids)
        graph = _transform_members(graph, part.member_ids, pivot, placement)
        placed.append(replace(part, anchor=placement))
    if recorder and any(p != FeatureVector() for p in placements):
        recorder(graph)
    traces: list[PlacementTrace] = []
    if len(subgraphs) < 2 or not refine:
        return graph, placed, traces
    for index, part in enumerate(placed):
        records: list[IterationRecord] = []
        status = EdgeStatus.MAX_ITERS
        anchor = part.anchor
        member_ids = part.member_ids
        other_ids = [i for p in placed for i in p.member_ids if i not in member_ids]
        subject = f"subgraph-{index}"
        for iteration in range(1, config.max_placement_iterations + 1):
            group = group_bounding_box([world_box(graph.node(i)) for i in member_ids])
            rest = group_bounding_box([world_box(graph.node(i)) for i in other_ids])
            context = ScoreContext(mover_box=group, reference_box=rest, relation=None)
            before_anchor = anchor
            try:
                request = _make_request(graph, member_ids, other_ids, context,
                                        scorer, capturer)
                scores = scorer.score(request)
            except SceneLayoutError as exc:
                status = EdgeStatus.SCORER_ERROR
                logger.warning("placement scorer failed on %s: %s", subject, exc)
                break
            value = loss(scores, config)
            if on_event:
                on_event(ProgressEvent("place", subject, iteration, scores, value))
            if value < config.convergence_threshold:
                records.append(IterationRecord(iteration, scores, value,
                                               before_anchor, before_anchor))
                status = EdgeStatus.CONVERGED
                break
            d = characteristic_length(group, rest)
            direction = _separation_signs(group.center, rest.center)
            q = [s / 100.0 for s in scores.as_tuple()]
            delta = FeatureVector(
                x=config.step_translation * q[1] * d * direction[0],
                y=config.step_translation * q[2] * d * direction[1],
                z=config.step_translation * q[3] * d * direction[2],
                s=math.exp(-config.step_scale * q[0]),
                r=-config.step_yaw * q[4] * 180.0,
            )
            pivot = _subgraph_centroid(graph, member_ids)
            graph = _transform_members(graph, member_ids, pivot, delta)
            anchor = FeatureVector(x=anchor.x + delta.x, y=anchor.y + delta.y,
                                   z=anchor.z + delta.z, s=anchor.s * delta.s,
                                   r=normalize_yaw(anchor.r + delta.r))
            records.append(IterationRecord(iteration, scores, value, before_anchor, anchor))
            if recorder:
                recorder(graph)
        placed[index] = replace(part, anchor=anchor)
        traces.append(PlacementTrace(subgraph_index=index, iterations=tuple(records),
                                     status=status))
    return graph, placed, traces


def scene_energy(graph: SceneGraph, config: OptimizerConfig = DEFAULT_CONFIG,
                 table: dict[RelationKind, RelationTarget] | None = None) -> GlobalEnergy:
    """Oracle-loss energy: per-component internal sums plus the cross penalty.

    The partition has no inter-component edges by construction, so the cross
    penalty is zero unless anchor-level relations are someday declared.
    """
    terms = []
    internal_keys: set[tuple[str, str]] = set()
    for part in partition_subgraphs(graph):
        edges = subgraph_edges(graph, part)
        internal_keys.update(e.key for e in edges)
        energy = sum(loss(oracle_score(graph, e, table), config) for e in edges)
        terms.append((tuple(part.member_ids), energy))
    psi = sum(
        loss(oracle_score(graph, e, table), config)
        for e in graph.edges
        if e.key not in internal_keys
    )
    return GlobalEnergy(subgraph_terms=tuple(terms), cross_penalty=psi)


PlacementProvider = Callable[[SceneGraph, Sequence[Subgraph]], Sequence[FeatureVector]]


def optimize_scene(graph: SceneGraph, scorer: Scorer, capturer=None,
                   config: OptimizerConfig = DEFAULT_CONFIG,
                   on_event: ProgressCallback | None = None,
                   recorder: Recorder | None = None,
                   placement_provider: PlacementProvider | None = None,
                   edge_level: bool = True,
                   placement_refinement: bool = True) -> tuple[SceneGraph, SceneReport]:
    """Full pipeline: partition, per-component optimization, rigid placement.

    Scorer failures on one edge are isolated: the trace records the error and
    the remaining edges still run.
    """
    report = SceneReport()
    report.energy_before = scene_energy(graph, config)
    parts = partition_subgraphs(graph)
    if not parts:
        report.energy_after = report.energy_before
        return graph, report
    if edge_level:
        for part in parts:
            graph, traces = optimize_subgraph(graph, part, scorer, capturer, config,
                                              on_event=on_event, recorder=recorder)
            report.edge_traces.extend(traces)
            report.errors.extend(
                f"{t.subject}: {t.error}"
                for t in traces
                if t.status is EdgeStatus.SCORER_ERROR
            )
    if len(parts) >= 2:
        provider = placement_provider or fallback_grid_placements
        placements = list(provider(graph, parts))
        graph, placed, place_traces = place_subgraphs(
            graph, parts, placements, scorer, capturer, config,
            on_event=on_event, recorder=recorder, refine=placement_refinement,
        )
        report.placement_traces.extend(place_traces)
        report.anchors = [p.anchor for p in placed]
    else:
        report.anchors = [p.anchor for p in parts]
    report.energy_after = scene_energy(graph, config)
    return graph, report


def default_scorer() -> OracleScorer:
    return OracleScorer()
