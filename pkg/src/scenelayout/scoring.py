"""Five-score relation contract and the geometric oracle scorer.

Every scorer maps one optimization step to five signed scores in [-100, 100]:

    s1  scale of the moved object (positive: too big)
    s2  left-right placement      (positive: too close on x)
    s3  forward-backward placement (positive: too close on y)
    s4  up-down placement          (positive: too close on z)
    s5  yaw                        (positive: should rotate clockwise)

The oracle scorer realizes the contract from box geometry and explicit band
tables, giving the engine a deterministic stand-in for a multimodal model.

Band semantics: each channel is zero inside its band. Outside, the violation
magnitude is the distance to the band midpoint in characteristic-length units
(so one update step always re-enters the band instead of stalling on its
edge), and is floored at RelationTarget.violation_floor. With the default
uniform loss weights and 0.05 convergence threshold, the floor makes
"converged" imply "every band satisfied".
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Protocol, runtime_checkable

from .errors import UnknownIdError
from .geometry import OrientedBox, characteristic_length, signed_gap, world_box
from .graph import RelationEdge, RelationKind, SceneGraph, normalize_yaw
from .views import ViewMontage

logger = logging.getLogger(__name__)

SCORE_LIMIT = 100.0


@dataclass(frozen=True)
class ScoreVector:
    """The five signed scores of one step; components clamped to [-100, 100]."""

    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    s4: float = 0.0
    s5: float = 0.0

    def __post_init__(self):
        for name in ("s1", "s2", "s3", "s4", "s5"):
            value = getattr(self, name)
            if not math.isfinite(value) or abs(value) > SCORE_LIMIT:
                raise ValueError(f"{name}={value!r} outside [-100, 100]")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.s1, self.s2, self.s3, self.s4, self.s5)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.as_tuple())


ZERO_SCORES = ScoreVector()


def clamp_scores(raw) -> ScoreVector:
    """Clamp five raw values into a ScoreVector; NaN becomes 0 with a warning."""
    values = list(raw)
    if len(values) != 5:
        raise ValueError(f"expected five scores, got {len(values)}")
    cleaned = []
    for i, value in enumerate(values, start=1):
        value = float(value)
        if math.isnan(value):
            logger.warning("score-%d is NaN, treating as 0", i)
            value = 0.0
        if value > SCORE_LIMIT:
            logger.warning("score-%d=%s above 100, clamping", i, value)
            value = SCORE_LIMIT
        elif value < -SCORE_LIMIT:
            logger.warning("score-%d=%s below -100, clamping", i, value)
            value = -SCORE_LIMIT
        cleaned.append(value)
    return ScoreVector(*cleaned)


@dataclass(frozen=True)
class RelationTarget:
    """Geometric semantics of one relation kind.

    axis/sign give the required signed center displacement src - dst along the
    target axis (None for containment). gap_band and align_band are fractions
    of the pair's characteristic length D; scale_band constrains the scale
    ratio src.s / dst.s; yaw_facing relations want the source heading toward
    the reference within yaw_band degrees.
    """

    axis: int | None
    sign: int
    gap_band: tuple[float, float]
    align_band: float = 0.25
    scale_band: tuple[float, float] = (0.8, 1.25)
    contains: bool = False
    yaw_facing: bool = False
    yaw_band: float = 10.0
    violation_floor: float = 30.0

    def __post_init__(self):
        lo, hi = self.gap_band
        if lo > hi:
            raise ValueError(f"gap band inverted: {self.gap_band}")
        slo, shi = self.scale_band
        if not (0.0 < slo <= shi):
            raise ValueError(f"scale band must be positive and ordered: {self.scale_band}")

    @property
    def gap_mid(self) -> float:
        return (self.gap_band[0] + self.gap_band[1]) / 2.0

    @property
    def scale_mid(self) -> float:
        return math.sqrt(self.scale_band[0] * self.scale_band[1])


_SIDE_GAP = (0.05, 0.50)
_STACK_GAP = (0.0, 0.25)

_DEFAULT_TARGETS: dict[RelationKind, RelationTarget] = {
    RelationKind.LEFT: RelationTarget(axis=0, sign=-1, gap_band=_SIDE_GAP, yaw_facing=True),
    RelationKind.RIGHT: RelationTarget(axis=0, sign=+1, gap_band=_SIDE_GAP, yaw_facing=True),
    RelationKind.FRONT: RelationTarget(axis=1, sign=-1, gap_band=_SIDE_GAP, yaw_facing=True),
    RelationKind.UP: RelationTarget(axis=2, sign=+1, gap_band=_STACK_GAP),
    RelationKind.BELOW: RelationTarget(axis=2, sign=-1, gap_band=_STACK_GAP),
    # "down" shares the below-the-reference semantics.
    RelationKind.DOWN: RelationTarget(axis=2, sign=-1, gap_band=_STACK_GAP),
    RelationKind.IN: RelationTarget(axis=None, sign=0, gap_band=(0.0, 0.0),
                                    contains=True, scale_band=(0.45, 0.8)),
}

# Generic spacing target used when two groups are placed relative to each
# other without a declared relation (subgraph placement refinement).
PLACEMENT_GAP_BAND = (0.05, 1.0)


def relation_semantics(kind: RelationKind,
                       table: dict[RelationKind, RelationTarget] | None = None) -> RelationTarget:
    """The target geometry for a relation kind, with optional overrides."""
    if table and kind in table:
        return table[kind]
    return _DEFAULT_TARGETS[kind]


def band_table_with_overrides(
    overrides: dict[str, dict[str, object]]
) -> dict[RelationKind, RelationTarget]:
    """Build a full target table from per-kind field overrides (config input)."""
    table = dict(_DEFAULT_TARGETS)
    for token, fields in overrides.items():
        kind = RelationKind.parse(token)
        base = table[kind]
        updates = {}
        for name, value in fields.items():
            if name in ("gap_band", "scale_band"):
                updates[name] = (float(value[0]), float(value[1]))
            elif name in ("align_band", "yaw_band", "violation_floor"):
                updates[name] = float(value)
            else:
                raise ValueError(f"unknown band override field {name!r} for {token!r}")
        table[kind] = replace(base, **updates)
    return table


@dataclass(frozen=True)
class ScoreContext:
    """Geometric ground truth for one step: the moved side vs the reference."""

    mover_box: OrientedBox
    reference_box: OrientedBox
    mover_scale: float = 1.0
    reference_scale: float = 1.0
    relation: RelationKind | None = None


@dataclass(frozen=True)
class ScoreRequest:
    """Everything a scorer may consume for one step.

    View-based scorers read the montage triplet and the descriptions; the
    geometric oracle reads only the context.
    """

    x1_description: str
    x2_description: str
    scene_prompt: str
    montages: tuple[ViewMontage, ViewMontage, ViewMontage] | None = None
    context: ScoreContext | None = None


@runtime_checkable
class Scorer(Protocol):
    needs_views: bool
    refine_per_edge: bool

    def score(self, request: ScoreRequest) -> ScoreVector: ...


def _sign0(value: float) -> float:
    """Sign with the optimizer's tie rule: sign(0) = +1."""
    return -1.0 if value < 0.0 else 1.0


def _floored(magnitude: float, floor: float) -> float:
    return min(max(magnitude, floor), SCORE_LIMIT)


def _axis_score(delta: float, delta_target: float, d: float, floor: float) -> float:
    """Score for one translation channel, from current and target center offsets.

    Positive means the mover sits too close to (or past) the reference along
    its current displacement sign and must move outward; negative means too
    far, pulling it inward. The magnitude is the remaining distance to the
    target offset in units of D.
    """
    magnitude = _floored(abs(delta - delta_target) / d * SCORE_LIMIT, floor)
    return math.copysign(magnitude, delta_target - delta) * _sign0(delta)


def score_context(context: ScoreContext,
                  table: dict[RelationKind, RelationTarget] | None = None) -> ScoreVector:
    """Five oracle scores for a step, from geometry alone."""
    if context.relation is None:
        return _placement_scores(context)
    target = relation_semantics(context.relation, table)
    a, b = context.mover_box, context.reference_box
    d = characteristic_length(a, b)
    scores = [0.0] * 5

    # Scale ratio channel.
    sigma = context.mover_scale / context.reference_scale
    lo, hi = target.scale_band
    if not (lo <= sigma <= hi):
        magnitude = _floored(
            abs(math.log(sigma / target.scale_mid)) / math.log(4.0) * SCORE_LIMIT,
            target.violation_floor,
        )
        scores[0] = magnitude if sigma > hi else -magnitude
    # Translation channels.
    for axis in range(3):
        delta = a.center[axis] - b.center[axis]
        halves = a.axis_half_width(axis) + b.axis_half_width(axis)
        if target.contains:
            allowed = max(0.0, b.axis_half_width(axis) - a.axis_half_width(axis))
            if abs(delta) > allowed:
                magnitude = _floored(abs(delta) / d * SCORE_LIMIT, target.violation_floor)
                scores[1 + axis] = math.copysign(magnitude, -delta) * _sign0(delta)
        elif axis == target.axis:
            gap = abs(delta) - halves
            in_band = (
                _sign0(delta) == float(target.sign)
                and target.gap_band[0] * d <= gap <= target.gap_band[1] * d
            )
            if not in_band:
                delta_target = target.sign * (halves + target.gap_mid * d)
                scores[1 + axis] = _axis_score(delta, delta_target, d,
                                               target.violation_floor)
        else:
            if abs(delta) > target.align_band * d:
                scores[1 + axis] = _axis_score(delta, 0.0, d, target.violation_floor)
    # Yaw channel: heading toward the reference, for side-by-side relations.
    if target.yaw_facing:
        bearing = math.degrees(math.atan2(b.center[1] - a.center[1],
                                          b.center[0] - a.center[0]))
        needed_ccw = normalize_yaw(bearing - a.yaw)
        if abs(needed_ccw) > target.yaw_band:
            scores[4] = max(-SCORE_LIMIT, min(SCORE_LIMIT,
                                              -needed_ccw / 180.0 * SCORE_LIMIT))
    return ScoreVector(*scores)


def _placement_scores(context: ScoreContext) -> ScoreVector:
    """Generic group-vs-group spacing: keep the dominant-axis gap in band.

    Emits translation only; rigid placement must not rotate or rescale groups,
    otherwise already-satisfied internal relations would break.
    """
    a, b = context.mover_box, context.reference_box
    d = characteristic_length(a, b)
    gaps = [signed_gap(a, b, axis) for axis in range(3)]
    axis = max(range(3), key=lambda k: gaps[k])
    gap = gaps[axis]
    lo, hi = PLACEMENT_GAP_BAND
    scores = [0.0] * 5
    if not (lo * d <= gap <= hi * d):
        mid = (lo + hi) / 2.0 * d
        magnitude = _floored(abs(gap - mid) / d * SCORE_LIMIT, 30.0)
        scores[1 + axis] = magnitude if gap < lo * d else -magnitude
    return ScoreVector(*scores)


def bands_satisfied(context: ScoreContext,
                    table: dict[RelationKind, RelationTarget] | None = None) -> bool:
    """Whether every band constraint of the context's relation holds.

    Yaw is not a band: it has a preference, not a membership constraint.
    """
    if context.relation is None:
        a, b = context.mover_box, context.reference_box
        d = characteristic_length(a, b)
        gap = max(signed_gap(a, b, axis) for axis in range(3))
        return PLACEMENT_GAP_BAND[0] * d <= gap <= PLACEMENT_GAP_BAND[1] * d
    target = relation_semantics(context.relation, table)
    a, b = context.mover_box, context.reference_box
    d = characteristic_length(a, b)
    sigma = context.mover_scale / context.reference_scale
    if not (target.scale_band[0] <= sigma <= target.scale_band[1]):
        return False
    for axis in range(3):
        delta = a.center[axis] - b.center[axis]
        if target.contains:
            allowed = max(0.0, b.axis_half_width(axis) - a.axis_half_width(axis))
            if abs(delta) > allowed:
                return False
        elif axis == target.axis:
            gap = abs(delta) - (a.axis_half_width(axis) + b.axis_half_width(axis))
            if _sign0(delta) != float(target.sign):
                return False
            if not (target.gap_band[0] * d <= gap <= target.gap_band[1] * d):
                return False
        else:
            if abs(delta) > target.align_band * d:
                return False
    return True


def edge_context(graph: SceneGraph, edge: RelationEdge) -> ScoreContext:
    """Build the oracle context for an edge: src is the mover, dst the reference."""
    src = graph.node(edge.src)
    dst = graph.node(edge.dst)
    return ScoreContext(
        mover_box=world_box(src),
        reference_box=world_box(dst),
        mover_scale=src.feature.s,
        reference_scale=dst.feature.s,
        relation=edge.kind,
    )


def oracle_score(graph: SceneGraph, edge: RelationEdge,
                 table: dict[RelationKind, RelationTarget] | None = None) -> ScoreVector:
    """Five scores for an edge's current geometry."""
    if not any(e.key == edge.key for e in graph.edges):
        raise UnknownIdError(f"edge {edge.src!r} -> {edge.dst!r} not in graph")
    return score_context(edge_context(graph, edge), table)


class OracleScorer:
    """Deterministic scorer reading geometry instead of montages."""

    needs_views = False
    refine_per_edge = True

    def __init__(self, table: dict[RelationKind, RelationTarget] | None = None):
        self.table = table

    def score(self, request: ScoreRequest) -> ScoreVector:
        if request.context is None:
            raise ValueError("oracle scorer needs a geometric context")
        return score_context(request.context, self.table)
