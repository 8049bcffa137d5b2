"""Relation semantics and the geometric oracle scorer."""

from __future__ import annotations

import math
import random

import pytest

from scenelayout.geometry import characteristic_length, world_box
from scenelayout.graph import FeatureVector, RelationEdge, RelationKind, SceneGraph
from scenelayout.optimizer import apply_scores
from scenelayout.scoring import (
    OracleScorer,
    ScoreContext,
    ScoreRequest,
    ScoreVector,
    bands_satisfied,
    clamp_scores,
    edge_context,
    oracle_score,
    relation_semantics,
)

from conftest import make_node

DIRECTIONAL = [RelationKind.LEFT, RelationKind.RIGHT, RelationKind.FRONT,
               RelationKind.UP, RelationKind.BELOW, RelationKind.DOWN]

AXIS_OF = {RelationKind.LEFT: 0, RelationKind.RIGHT: 0, RelationKind.FRONT: 1,
           RelationKind.UP: 2, RelationKind.BELOW: 2, RelationKind.DOWN: 2}
SIGN_OF = {RelationKind.LEFT: -1, RelationKind.RIGHT: +1, RelationKind.FRONT: -1,
           RelationKind.UP: +1, RelationKind.BELOW: -1, RelationKind.DOWN: -1}


def pair_graph(kind: RelationKind, src_feature: FeatureVector,
               src_size=(1.0, 1.0, 1.0), dst_size=(1.0, 1.0, 1.0)) -> SceneGraph:
    return SceneGraph(
        nodes=(make_node("src", base_size=src_size, feature=src_feature),
               make_node("dst", base_size=dst_size)),
        edges=(RelationEdge("src", "dst", kind),),
    )


def satisfying_feature(kind: RelationKind, src_size=(1.0, 1.0, 1.0),
                       dst_size=(1.0, 1.0, 1.0)) -> FeatureVector:
    """Construct a pose meeting every band at its midpoint, facing the reference."""
    target = relation_semantics(kind)
    a = world_box(make_node("src", base_size=src_size))
    b = world_box(make_node("dst", base_size=dst_size))
    d = characteristic_length(a, b)
    if kind is RelationKind.IN:
        return FeatureVector(s=relation_semantics(kind).scale_mid)
    axis = AXIS_OF[kind]
    halves = a.half_extents[axis] + b.half_extents[axis]
    offset = SIGN_OF[kind] * (halves + target.gap_mid * d)
    position = [0.0, 0.0, 0.0]
    position[axis] = offset
    # Face the reference: bearing from src toward dst center.
    yaw = math.degrees(math.atan2(-position[1], -position[0])) if axis != 2 else 0.0
    return FeatureVector(x=position[0], y=position[1], z=position[2], s=1.0, r=yaw)


class TestRelationSemantics:
    def test_left_axis_and_sign(self):
        target = relation_semantics(RelationKind.LEFT)
        assert target.axis == 0 and target.sign == -1
        assert not target.contains

    def test_right_mirrors_left(self):
        left = relation_semantics(RelationKind.LEFT)
        right = relation_semantics(RelationKind.RIGHT)
        assert right.axis == left.axis
        assert right.sign == -left.sign
        assert right.gap_band == left.gap_band
        assert right.scale_band == left.scale_band

    def test_below_mirrors_up(self):
        up = relation_semantics(RelationKind.UP)
        below = relation_semantics(RelationKind.BELOW)
        assert (up.axis, below.axis) == (2, 2)
        assert below.sign == -up.sign
        assert below.gap_band == up.gap_band

    def test_front_wants_smaller_y(self):
        target = relation_semantics(RelationKind.FRONT)
        assert target.axis == 1 and target.sign == -1

    def test_in_is_containment(self):
        target = relation_semantics(RelationKind.IN)
        assert target.contains
        assert target.scale_band[1] <= 0.8


class TestClampScores:
    def test_componentwise_clamp(self):
        scores = clamp_scores([150, -20, 0, 99, -400])
        assert scores.as_tuple() == (100.0, -20.0, 0.0, 99.0, -100.0)

    def test_zero_passthrough(self):
        assert clamp_scores([0, 0, 0, 0, 0]).as_tuple() == (0.0,) * 5

    def test_nan_becomes_zero_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            scores = clamp_scores([float("nan"), 0, 0, 0, 0])
        assert scores.as_tuple() == (0.0,) * 5
        assert "NaN" in caplog.text

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            clamp_scores([1, 2, 3])


class TestOracleScoreExamples:
    def test_satisfying_configuration_scores_zero(self):
        for kind in DIRECTIONAL + [RelationKind.IN]:
            sizes = ((0.6, 0.6, 0.6), (1.5, 1.5, 1.5)) if kind is RelationKind.IN \
                else ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0))
            graph = pair_graph(kind, satisfying_feature(kind, *sizes), *sizes)
            scores = oracle_score(graph, graph.edges[0])
            assert scores.is_zero, f"{kind} expected zero, got {scores}"
            assert bands_satisfied(edge_context(graph, graph.edges[0]))

    def test_overlap_on_target_axis_scores_positive(self):
        # src overlapping dst from the correct side: "too close".
        graph = pair_graph(RelationKind.LEFT, FeatureVector(x=-0.6))
        scores = oracle_score(graph, graph.edges[0])
        assert scores.s2 > 0

    def test_far_away_saturates_negative(self):
        graph = pair_graph(RelationKind.LEFT, FeatureVector(x=-10.0 * 1.732))
        scores = oracle_score(graph, graph.edges[0])
        assert scores.s2 == -100.0

    def test_wrong_side_pulls_inward(self):
        graph = pair_graph(RelationKind.LEFT, FeatureVector(x=+2.0))
        scores = oracle_score(graph, graph.edges[0])
        assert scores.s2 < 0
        # Applying the update must move src toward (and past) the reference.
        updated = apply_scores(graph.node("src"), graph.node("dst"), scores)
        assert updated.x < 2.0

    def test_unknown_edge_rejected(self):
        graph = pair_graph(RelationKind.LEFT, FeatureVector())
        with pytest.raises(Exception):
            oracle_score(graph, RelationEdge("dst", "src", RelationKind.LEFT))


class TestOracleProperties:
    def test_zero_iff_bands_satisfied_randomized(self):
        rng = random.Random(42)
        for _ in range(300):
            kind = rng.choice(DIRECTIONAL)
            sizes = tuple(rng.uniform(0.4, 1.4) for _ in range(3))
            dst_sizes = tuple(rng.uniform(0.4, 1.4) for _ in range(3))
            if rng.random() < 0.5:
                feature = satisfying_feature(kind, sizes, dst_sizes)
            else:
                feature = FeatureVector(
                    x=rng.uniform(-3, 3), y=rng.uniform(-3, 3), z=rng.uniform(-3, 3),
                    s=rng.uniform(0.4, 2.5), r=rng.uniform(-180, 179),
                )
            graph = pair_graph(kind, feature, sizes, dst_sizes)
            context = edge_context(graph, graph.edges[0])
            scores = oracle_score(graph, graph.edges[0])
            translation_and_scale = (scores.s1, scores.s2, scores.s3, scores.s4)
            if bands_satisfied(context):
                assert all(v == 0.0 for v in translation_and_scale)
            else:
                assert any(v != 0.0 for v in translation_and_scale)

    def test_mirror_left_right(self):
        # Mirrored geometry with the mirrored relation scores identically and
        # the applied world update is exactly negated on x.
        for x in (-0.6, -1.4, -4.0):
            left = pair_graph(RelationKind.LEFT, FeatureVector(x=x))
            right = pair_graph(RelationKind.RIGHT, FeatureVector(x=-x))
            score_left = oracle_score(left, left.edges[0])
            score_right = oracle_score(right, right.edges[0])
            assert score_left.s2 == pytest.approx(score_right.s2)
            moved_left = apply_scores(left.node("src"), left.node("dst"), score_left)
            moved_right = apply_scores(right.node("src"), right.node("dst"), score_right)
            delta_left = moved_left.x - x
            delta_right = moved_right.x - (-x)
            assert delta_left == pytest.approx(-delta_right)

    def test_mirror_up_below(self):
        for z in (0.7, 1.05, 3.0):
            up = pair_graph(RelationKind.UP, FeatureVector(z=z))
            below = pair_graph(RelationKind.BELOW, FeatureVector(z=-z))
            assert oracle_score(up, up.edges[0]).s4 == pytest.approx(
                oracle_score(below, below.edges[0]).s4
            )

    def test_monotone_moving_away_from_too_close(self):
        previous = None
        for gap_x in [x / 20.0 for x in range(12, 80)]:
            graph = pair_graph(RelationKind.LEFT, FeatureVector(x=-gap_x))
            s2 = oracle_score(graph, graph.edges[0]).s2
            if previous is not None:
                assert s2 <= previous + 1e-12
            previous = s2

    def test_scale_doubling_turns_positive(self):
        feature = satisfying_feature(RelationKind.LEFT)
        graph = pair_graph(RelationKind.LEFT, feature)
        assert oracle_score(graph, graph.edges[0]).s1 == 0.0
        doubled = FeatureVector(x=feature.x, y=feature.y, z=feature.z,
                                s=2.0 * feature.s, r=feature.r)
        graph2 = pair_graph(RelationKind.LEFT, doubled)
        assert oracle_score(graph2, graph2.edges[0]).s1 > 0

    def test_yaw_prefers_facing_the_reference(self):
        # src sits left of dst; facing means heading +x (bearing 0).
        feature = satisfying_feature(RelationKind.LEFT)
        rotated = FeatureVector(x=feature.x, y=feature.y, z=feature.z, s=1.0, r=90.0)
        graph = pair_graph(RelationKind.LEFT, rotated)
        scores = oracle_score(graph, graph.edges[0])
        # Needs -90 (clockwise) which Prompt-2 convention marks positive.
        assert scores.s5 == pytest.approx(50.0)
        counter = FeatureVector(x=feature.x, y=feature.y, z=feature.z, s=1.0, r=-90.0)
        graph2 = pair_graph(RelationKind.LEFT, counter)
        assert oracle_score(graph2, graph2.edges[0]).s5 == pytest.approx(-50.0)

    def test_vertical_relations_have_no_yaw_preference(self):
        graph = pair_graph(RelationKind.UP, FeatureVector(z=1.2, r=135.0))
        assert oracle_score(graph, graph.edges[0]).s5 == 0.0


class TestOracleScorerContract:
    def test_scorer_reads_context_not_views(self):
        scorer = OracleScorer()
        assert scorer.needs_views is False
        graph = pair_graph(RelationKind.LEFT, FeatureVector(x=-0.6))
        request = ScoreRequest(
            x1_description="src", x2_description="dst", scene_prompt="",
            montages=None, context=edge_context(graph, graph.edges[0]),
        )
        scores = scorer.score(request)
        assert scores == oracle_score(graph, graph.edges[0])

    def test_scorer_requires_context(self):
        with pytest.raises(ValueError):
            OracleScorer().score(ScoreRequest("a", "b", "", None, None))

    def test_placement_context_pushes_overlapping_groups_apart(self):
        a = world_box(make_node("a"))
        b = world_box(make_node("b", feature=FeatureVector(x=0.2)))
        context = ScoreContext(mover_box=a, reference_box=b, relation=None)
        scores = OracleScorer().score(ScoreRequest("a", "b", "", None, context))
        assert scores.s2 > 0
        assert scores.s1 == scores.s5 == 0.0

    def test_placement_context_pulls_distant_groups_together(self):
        a = world_box(make_node("a"))
        b = world_box(make_node("b", feature=FeatureVector(x=40.0)))
        context = ScoreContext(mover_box=a, reference_box=b, relation=None)
        scores = OracleScorer().score(ScoreRequest("a", "b", "", None, context))
        assert scores.s2 == -100.0


class TestScoreVector:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ScoreVector(s1=101.0)

    def test_is_zero(self):
        assert ScoreVector().is_zero
        assert not ScoreVector(s3=1.0).is_zero
