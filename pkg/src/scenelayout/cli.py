"""Command-line entry points.

Exit codes: 0 success, 2 backend failure, 3 parse/validation failure.
"""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click

from .backend import query_subgraph_placement
from .dynamics import apply_modification, generate_trajectory, plan_modification
from .errors import BackendError, SceneLayoutError
from .geometry import world_box
from .optimizer import optimize_scene
from .pipeline import build_backend, build_scene_from_prompt, make_capturer, make_scorer
from .report import write_run_report
from .sceneio import (
    EngineConfig,
    SceneFile,
    canonical_json,
    export_geometry,
    load_scene,
    save_scene,
    save_trajectory,
)
from .service import SceneService, serve_http
from .views import frame_cameras, render_montage

logger = logging.getLogger(__name__)

EXIT_BACKEND = 2
EXIT_PARSE = 3


def _engine_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BackendError as exc:
            click.echo(f"backend error: {exc}", err=True)
            sys.exit(EXIT_BACKEND)
        except (SceneLayoutError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_PARSE)
    return wrapper


def _load_config(config_path: str | None, scorer: str | None, replay: str | None,
                 record: str | None) -> EngineConfig:
    config = EngineConfig.from_file(config_path) if config_path else EngineConfig()
    if scorer:
        config.scorer = scorer
    if replay:
        config.replay_path = replay
    if record:
        config.record_path = record
    return config


def _common_options(func):
    func = click.option("--config", "config_path", type=click.Path(exists=True),
                        envvar="SCENELAYOUT_CONFIG", default=None,
                        help="Engine config JSON.")(func)
    func = click.option("--scorer", type=click.Choice(["oracle", "mllm"]), default=None,
                        help="Scorer override.")(func)
    func = click.option("--replay", type=click.Path(exists=True), default=None,
                        help="Replay session file (no network).")(func)
    func = click.option("--record", type=click.Path(), default=None,
                        help="Record live replies into a session file.")(func)
    return func


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Scene layout engine: text to optimized 3D object layout."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--prompt", required=True, help="Scene sentence.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Scene JSON output.")
@click.option("--report-dir", type=click.Path(), default=None,
              help="Write traces.csv and figures here.")
@_common_options
@_engine_errors
def generate(prompt: str, out_path: str, report_dir: str | None, config_path: str | None,
             scorer: str | None, replay: str | None, record: str | None):
    """Build a scene graph from a sentence and optimize its layout."""
    config = _load_config(config_path, scorer, replay, record)
    backend = build_backend(config)
    graph = build_scene_from_prompt(prompt, backend, config.size_overrides)
    engine_scorer = make_scorer(config, backend)
    graph, run_report = optimize_scene(
        graph, engine_scorer, make_capturer(config), config.optimizer,
        placement_provider=lambda g, parts: query_subgraph_placement(g, parts, backend),
    )
    save_scene(graph, out_path)
    if report_dir:
        write_run_report(run_report, report_dir)
    click.echo(f"scene written to {out_path}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--prompt", required=True, help="Modification sentence.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report-dir", type=click.Path(), default=None)
@_common_options
@_engine_errors
def modify(scene_path: str, prompt: str, out_path: str, report_dir: str | None,
           config_path: str | None, scorer: str | None, replay: str | None,
           record: str | None):
    """Apply a natural-language edit and re-optimize the affected edges."""
    config = _load_config(config_path, scorer, replay, record)
    backend = build_backend(config)
    if backend is None:
        raise BackendError("modify needs a backend endpoint or replay file")
    scene = load_scene(scene_path)
    plan = plan_modification(scene.graph, prompt, backend)
    graph, run_report = apply_modification(
        scene.graph, plan, make_scorer(config, backend), make_capturer(config),
        config.optimizer,
    )
    save_scene(graph, out_path)
    if report_dir:
        write_run_report(run_report, report_dir)
    click.echo(f"scene written to {out_path}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--prompt", required=True, help="Transformation sentence.")
@click.option("--keyframes", default=8, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@_common_options
@_engine_errors
def animate(scene_path: str, prompt: str, keyframes: int, out_path: str,
            config_path: str | None, scorer: str | None, replay: str | None,
            record: str | None):
    """Retarget the scene from state prompts and export the motion keyframes."""
    config = _load_config(config_path, scorer, replay, record)
    backend = build_backend(config)
    if backend is None:
        raise BackendError("animate needs a backend endpoint or replay file")
    scene = load_scene(scene_path)
    _final, trajectory = generate_trajectory(
        scene.graph, prompt, make_scorer(config, backend), backend,
        make_capturer(config), config.optimizer, n_keyframes=keyframes,
    )
    save_trajectory(trajectory, out_path)
    click.echo(f"trajectory written to {out_path}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--subject", default="all", show_default=True,
              help="Comma-separated node ids, or 'all'.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output image (.ppm or .png).")
@click.option("--config", "config_path", type=click.Path(exists=True),
              envvar="SCENELAYOUT_CONFIG", default=None)
@_engine_errors
def render(scene_path: str, subject: str, out_path: str, config_path: str | None):
    """Render the four-view montage of a node subset."""
    config = EngineConfig.from_file(config_path) if config_path else EngineConfig()
    scene = load_scene(scene_path)
    graph = scene.graph
    all_ids = list(graph.node_ids)
    if not all_ids:
        raise SceneLayoutError("scene is empty, nothing to render")
    if subject == "all":
        subject_ids = all_ids
    else:
        subject_ids = [token.strip() for token in subject.split(",") if token.strip()]
        for node_id in subject_ids:
            graph.node(node_id)
    rig = frame_cameras([world_box(graph.node(i)) for i in all_ids],
                        make_capturer(config).rig)
    montage = render_montage(graph, subject_ids, all_ids, rig)
    data = montage.to_png() if out_path.lower().endswith(".png") else montage.to_ppm()
    Path(out_path).write_bytes(data)
    click.echo(f"montage written to {out_path}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@_engine_errors
def energy(scene_path: str):
    """Print the scene energy breakdown as JSON."""
    scene = load_scene(scene_path)
    from .optimizer import scene_energy

    click.echo(canonical_json(scene_energy(scene.graph).to_dict()), nl=False)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["obj", "ply"]), default="obj",
              show_default=True)
@_engine_errors
def export(scene_path: str, out_path: str, fmt: str):
    """Export the proxy boxes as a mesh."""
    scene = load_scene(scene_path)
    export_geometry(scene.graph, out_path, fmt)
    click.echo(f"geometry written to {out_path}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--bind", default="127.0.0.1:8080", show_default=True)
@_common_options
@_engine_errors
def serve(scene_path: str, bind: str, config_path: str | None, scorer: str | None,
          replay: str | None, record: str | None):
    """Serve the scene over HTTP for the companion UI."""
    config = _load_config(config_path, scorer, replay, record)
    scene = load_scene(scene_path)
    service = SceneService(scene, config)
    server = serve_http(service, bind)
    click.echo(f"serving on http://{server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
