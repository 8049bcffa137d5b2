"""Command-line contract: flows and exit codes."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from scenelayout.backend import record_reply
from scenelayout.cli import main
from scenelayout.graph import RelationEdge, RelationKind, SceneGraph
from scenelayout.optimizer import optimize_scene
from scenelayout.prompts import build_prompt1, build_size_prompt, build_state_prompt
from scenelayout.sceneio import load_scene, save_scene
from scenelayout.scoring import OracleScorer

from conftest import make_node


@pytest.fixture
def runner():
    return CliRunner()


def fruit_session(tmp_path):
    session = tmp_path / "session.jsonl"
    record_reply(session, build_prompt1("an apple left of a banana"),
                 "nodes = [apple, banana], node-prompts = [a red apple, a yellow banana]\n"
                 "edges = [apple left banana]")
    record_reply(session, build_size_prompt("apple", "a red apple"),
                 "8 cm in width, 8 cm in length and 9 cm in height")
    record_reply(session, build_size_prompt("banana", "a yellow banana"),
                 "20 cm in width, 5 cm in length and 5 cm in height")
    return session


class TestGenerate:
    def test_replay_generate_writes_scene(self, runner, tmp_path):
        session = fruit_session(tmp_path)
        out = tmp_path / "scene.json"
        result = runner.invoke(main, ["generate", "--prompt", "an apple left of a banana",
                                      "--out", str(out), "--replay", str(session)])
        assert result.exit_code == 0, result.output
        scene = load_scene(out)
        assert scene.graph.node_ids == ("apple", "banana")
        assert scene.graph.node("apple").base_size == pytest.approx((0.08, 0.08, 0.09))
        assert len(scene.graph.edges) == 1

    def test_replay_generate_twice_is_byte_identical(self, runner, tmp_path):
        session = fruit_session(tmp_path)
        out1 = tmp_path / "one.json"
        out2 = tmp_path / "two.json"
        for out in (out1, out2):
            result = runner.invoke(main, ["generate", "--prompt", "an apple left of a banana",
                                          "--out", str(out), "--replay", str(session)])
            assert result.exit_code == 0, result.output
        assert out1.read_bytes() == out2.read_bytes()

    def test_replay_miss_exits_backend_error(self, runner, tmp_path):
        session = tmp_path / "incomplete.jsonl"
        record_reply(session, build_prompt1("an apple left of a banana"),
                     "nodes = [apple, banana], node-prompts = [a red apple, a yellow banana]\n"
                     "edges = [apple left banana]")
        result = runner.invoke(main, ["generate", "--prompt", "an apple left of a banana",
                                      "--out", str(tmp_path / "x.json"),
                                      "--replay", str(session)])
        assert result.exit_code == 2

    def test_unparseable_reply_exits_parse_error(self, runner, tmp_path):
        session = tmp_path / "bad.jsonl"
        record_reply(session, build_prompt1("a scene"), "I cannot answer that.")
        result = runner.invoke(main, ["generate", "--prompt", "a scene",
                                      "--out", str(tmp_path / "x.json"),
                                      "--replay", str(session)])
        assert result.exit_code == 3

    def test_report_dir_written(self, runner, tmp_path):
        session = fruit_session(tmp_path)
        report_dir = tmp_path / "report"
        result = runner.invoke(main, ["generate", "--prompt", "an apple left of a banana",
                                      "--out", str(tmp_path / "scene.json"),
                                      "--replay", str(session),
                                      "--report-dir", str(report_dir)])
        assert result.exit_code == 0, result.output
        assert (report_dir / "traces.csv").exists()
        assert (report_dir / "loss_curves.png").exists()
        assert (report_dir / "energy.png").exists()


def satisfied_scene(tmp_path):
    graph = SceneGraph(
        nodes=(make_node("apple", base_size=(0.4, 0.4, 0.4)),
               make_node("banana", base_size=(0.5, 0.3, 0.3))),
        edges=(RelationEdge("apple", "banana", RelationKind.LEFT),),
        scene_prompt="fruit",
    )
    optimized, _ = optimize_scene(graph, OracleScorer())
    path = tmp_path / "scene.json"
    save_scene(optimized, path)
    return path


class TestEnergy:
    def test_satisfied_scene_prints_zero_total(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        result = runner.invoke(main, ["energy", "--scene", str(path)])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["total"] == 0.0

    def test_malformed_scene_exits_parse_error(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{", encoding="utf-8")
        result = runner.invoke(main, ["energy", "--scene", str(path)])
        assert result.exit_code == 3


class TestRender:
    def test_render_all_writes_ppm(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        out = tmp_path / "montage.ppm"
        result = runner.invoke(main, ["render", "--scene", str(path), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.read_bytes().startswith(b"P6\n")

    def test_render_png_by_extension(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        out = tmp_path / "montage.png"
        result = runner.invoke(main, ["render", "--scene", str(path),
                                      "--subject", "apple", "--out", str(out)])
        assert result.exit_code == 0
        assert out.read_bytes().startswith(b"\x89PNG")

    def test_unknown_subject_exits_parse_error(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        result = runner.invoke(main, ["render", "--scene", str(path),
                                      "--subject", "ghost",
                                      "--out", str(tmp_path / "m.ppm")])
        assert result.exit_code == 3
        assert "ghost" in result.output

    def test_render_deterministic(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        out1 = tmp_path / "a.ppm"
        out2 = tmp_path / "b.ppm"
        for out in (out1, out2):
            assert runner.invoke(main, ["render", "--scene", str(path),
                                        "--out", str(out)]).exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestAnimate:
    def test_trajectory_written(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        scene = load_scene(path)
        session = tmp_path / "state.jsonl"
        sentence = "the apple moves onto the banana"
        record_reply(session, build_state_prompt(list(scene.graph.node_ids), sentence),
                     "states = [apple: resting on the banana]\nedges = [apple on banana]")
        out = tmp_path / "trajectory.json"
        result = runner.invoke(main, ["animate", "--scene", str(path),
                                      "--prompt", sentence, "--keyframes", "5",
                                      "--out", str(out), "--replay", str(session)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        times = [kf["t"] for kf in doc["keyframes"]]
        assert times[0] == 0.0 and times[-1] == 1.0
        assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))


class TestModify:
    def test_remove_round_trip(self, runner, tmp_path):
        from scenelayout.prompts import build_modification_prompt

        path = satisfied_scene(tmp_path)
        session = tmp_path / "mod.jsonl"
        record_reply(session,
                     build_modification_prompt(["apple", "banana"], "remove the banana"),
                     "action = remove\nnode = banana")
        out = tmp_path / "modified.json"
        result = runner.invoke(main, ["modify", "--scene", str(path),
                                      "--prompt", "remove the banana",
                                      "--out", str(out), "--replay", str(session)])
        assert result.exit_code == 0, result.output
        assert load_scene(out).graph.node_ids == ("apple",)


class TestExport:
    def test_obj_export(self, runner, tmp_path):
        path = satisfied_scene(tmp_path)
        out = tmp_path / "scene.obj"
        result = runner.invoke(main, ["export", "--scene", str(path), "--out", str(out)])
        assert result.exit_code == 0
        assert out.read_text().count("\nv ") == 16  # 8 verts per node
