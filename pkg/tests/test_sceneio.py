"""Scene files, config files, and geometry export."""

from __future__ import annotations

import json
import math
import random

import pytest

from scenelayout.errors import ConfigError, SceneFileError
from scenelayout.graph import FeatureVector, RelationEdge, RelationKind, SceneGraph
from scenelayout.sceneio import (
    EngineConfig,
    SceneFile,
    canonical_json,
    export_geometry,
    load_scene,
    save_scene,
    save_trajectory,
    scene_from_dict,
    scene_to_dict,
)

from conftest import make_node, random_graph


def fixture_graph() -> SceneGraph:
    return SceneGraph(
        nodes=(
            make_node("apple", base_size=(0.08, 0.08, 0.09),
                      feature=FeatureVector(x=-0.3, y=0.1, z=0.0, s=1.2, r=-35.0)),
            make_node("banana", base_size=(0.2, 0.05, 0.05)),
            make_node("toy", base_size=(0.12, 0.06, 0.05),
                      feature=FeatureVector(x=1.0, y=0.0, z=0.4)),
        ),
        edges=(RelationEdge("apple", "banana", RelationKind.LEFT),
               RelationEdge("toy", "banana", RelationKind.RIGHT)),
        scene_prompt="fruit on a table",
    )


class TestCanonicalJson:
    def test_sorted_keys_and_float_format(self):
        text = canonical_json({"b": 0.1, "a": 2.0})
        assert text.index('"a"') < text.index('"b"')
        assert "0.10000000000000001" in text
        assert "2.0" in text

    def test_round_trips_doubles_exactly(self):
        rng = random.Random(5)
        values = [rng.uniform(-1e3, 1e3) for _ in range(200)]
        parsed = json.loads(canonical_json(values))
        assert parsed == values


class TestSceneRoundTrip:
    def test_save_load_identity_on_fixture(self, tmp_path):
        graph = fixture_graph()
        path = tmp_path / "scene.json"
        save_scene(graph, path)
        assert load_scene(path).graph == graph

    def test_serialization_is_stable(self, tmp_path):
        graph = fixture_graph()
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_scene(graph, first)
        save_scene(load_scene(first).graph, second)
        assert first.read_bytes() == second.read_bytes()

    def test_random_graphs_round_trip(self, tmp_path):
        rng = random.Random(31)
        for i in range(25):
            graph = random_graph(rng)
            path = tmp_path / f"scene{i}.json"
            save_scene(graph, path)
            assert load_scene(path).graph == graph

    def test_subgraph_anchors_round_trip(self, tmp_path):
        from scenelayout.graph import Subgraph, partition_subgraphs

        graph = fixture_graph()
        scene = SceneFile(graph=graph, subgraphs=tuple(partition_subgraphs(graph)))
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.subgraphs == scene.subgraphs


class TestStrictParsing:
    def test_unknown_kind_names_token(self, tmp_path):
        doc = scene_to_dict(fixture_graph())
        doc["edges"][0]["kind"] = "inside"
        with pytest.raises(SceneFileError) as exc_info:
            scene_from_dict(doc)
        assert "inside" in str(exc_info.value)

    def test_unknown_field_rejected_with_version(self):
        doc = scene_to_dict(fixture_graph())
        doc["nodes"][0]["material"] = "wood"
        with pytest.raises(SceneFileError) as exc_info:
            scene_from_dict(doc)
        message = str(exc_info.value)
        assert "material" in message and "version 1" in message

    def test_unsupported_version(self):
        doc = scene_to_dict(fixture_graph())
        doc["version"] = 99
        with pytest.raises(SceneFileError) as exc_info:
            scene_from_dict(doc)
        assert "99" in str(exc_info.value)

    def test_empty_file_is_malformed(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SceneFileError) as exc_info:
            load_scene(path)
        assert "line 1" in str(exc_info.value)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"version": 1,\n  "nodes": [}', encoding="utf-8")
        with pytest.raises(SceneFileError) as exc_info:
            load_scene(path)
        assert "line 2" in str(exc_info.value)

    def test_duplicate_node_ids_rejected(self):
        doc = scene_to_dict(fixture_graph())
        doc["nodes"][1] = dict(doc["nodes"][0])
        with pytest.raises(SceneFileError):
            scene_from_dict(doc)


class TestExportGeometry:
    def test_obj_unit_cube_vertices(self, tmp_path):
        graph = SceneGraph(nodes=(make_node("cube"),))
        path = tmp_path / "scene.obj"
        export_geometry(graph, path, "obj")
        lines = path.read_text().splitlines()
        verts = [tuple(float(v) for v in line.split()[1:])
                 for line in lines if line.startswith("v ")]
        assert len(verts) == 8
        for vert in verts:
            assert all(abs(abs(c) - 0.5) < 1e-9 for c in vert)
        assert sum(1 for line in lines if line.startswith("f ")) == 12
        assert any(line == "g node_cube" for line in lines)

    def test_vertex_count_scales_with_nodes(self, tmp_path):
        graph = fixture_graph()
        path = tmp_path / "scene.obj"
        export_geometry(graph, path, "obj")
        lines = path.read_text().splitlines()
        assert sum(1 for line in lines if line.startswith("v ")) == 8 * len(graph.nodes)

    def test_yawed_cube_matches_hand_rotation(self, tmp_path):
        # Oracle: rotate the yaw-0 vertices by the z rotation matrix by hand.
        graph0 = SceneGraph(nodes=(make_node("cube"),))
        graph90 = SceneGraph(nodes=(
            make_node("cube", feature=FeatureVector(r=90.0)),
        ))
        path0 = tmp_path / "zero.obj"
        path90 = tmp_path / "ninety.obj"
        export_geometry(graph0, path0, "obj")
        export_geometry(graph90, path90, "obj")

        def verts(path):
            return [tuple(float(v) for v in line.split()[1:])
                    for line in path.read_text().splitlines() if line.startswith("v ")]

        rotated = [(-y, x, z) for x, y, z in verts(path0)]
        for got, expected in zip(verts(path90), rotated):
            assert got == pytest.approx(expected, abs=1e-9)

    def test_ply_header(self, tmp_path):
        graph = fixture_graph()
        path = tmp_path / "scene.ply"
        export_geometry(graph, path, "ply")
        lines = path.read_text().splitlines()
        assert lines[0] == "ply"
        assert f"element vertex {8 * len(graph.nodes)}" in lines
        assert f"element face {12 * len(graph.nodes)}" in lines
        assert any(line.startswith("comment node apple") for line in lines)


class TestTrajectoryExport:
    def test_schema_and_poses(self, tmp_path):
        from scenelayout.dynamics import resample_snapshots

        base = SceneGraph(nodes=(make_node("a"),))
        snapshots = [base.with_feature("a", FeatureVector(x=float(i))) for i in range(3)]
        trajectory = resample_snapshots(snapshots, 3)
        path = tmp_path / "traj.json"
        save_trajectory(trajectory, path)
        doc = json.loads(path.read_text())
        assert doc["version"] == 1
        assert [kf["t"] for kf in doc["keyframes"]] == [0.0, 0.5, 1.0]
        assert doc["keyframes"][2]["poses"]["a"]["x"] == 2.0


class TestEngineConfig:
    def test_defaults(self):
        config = EngineConfig.from_dict({})
        assert config.scorer == "oracle"
        assert config.optimizer.convergence_threshold == 0.05

    def test_full_document(self):
        config = EngineConfig.from_dict({
            "optimizer": {"step_translation": 0.25, "max_edge_iterations": 20},
            "scorer": "oracle",
            "bands": {"left": {"gap_band": [0.1, 0.4]}},
            "camera": {"margin": 0.2, "quad_size": 128},
            "backend": {"endpoint": "http://localhost:9999/v1/chat", "model": "test"},
            "replay_path": "session.jsonl",
            "size_overrides": {"lamp": [0.4, 0.4, 0.9]},
            "bind": "127.0.0.1:9001",
        })
        assert config.optimizer.step_translation == 0.25
        assert config.camera.quad_size == 128
        assert config.size_overrides["lamp"] == (0.4, 0.4, 0.9)

    def test_unknown_field_path_reported(self):
        with pytest.raises(ConfigError) as exc_info:
            EngineConfig.from_dict({"optimiser": {}})
        assert "config.optimiser" in str(exc_info.value)

    def test_invalid_nested_value_path(self):
        with pytest.raises(ConfigError) as exc_info:
            EngineConfig.from_dict({"camera": {"quad_size": 16}})
        assert "config.camera.quad_size" in str(exc_info.value)

    def test_invalid_scorer(self):
        with pytest.raises(ConfigError):
            EngineConfig.from_dict({"scorer": "magic"})

    def test_band_overrides_feed_relation_table(self):
        from scenelayout.scoring import band_table_with_overrides

        table = band_table_with_overrides({"left": {"gap_band": [0.1, 0.4]}})
        assert table[RelationKind.LEFT].gap_band == (0.1, 0.4)
        assert table[RelationKind.RIGHT].gap_band == (0.05, 0.50)
