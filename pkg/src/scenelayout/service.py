"""HTTP service exposing the scene to the companion UI.

One scene, many readers, one mutating job at a time. Mutations run on a
worker thread against a snapshot and commit under the state lock, bumping the
revision counter exactly once per committed mutation. Optimizer progress and
revision bumps stream to every subscriber over server-sent events.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .dynamics import apply_modification, plan_modification
from .errors import SceneLayoutError, UnknownIdError
from .geometry import world_box
from .optimizer import optimize_edge, optimize_scene, scene_energy
from .pipeline import build_backend, build_scene_from_prompt, make_capturer, make_scorer
from .sceneio import EngineConfig, SceneFile, scene_to_dict
from .views import frame_cameras, render_montage

logger = logging.getLogger(__name__)


class JobConflict(Exception):
    def __init__(self, active_job_id: str):
        super().__init__(f"a mutating job is already running: {active_job_id}")
        self.active_job_id = active_job_id


@dataclass
class Job:
    id: str
    kind: str
    status: str = "running"  # running | done | failed
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {"id": self.id, "kind": self.kind, "status": self.status}
        if self.error:
            doc["error"] = self.error
        return doc


class SceneService:
    """Service core; the HTTP handler is a thin shell over these methods."""

    def __init__(self, scene: SceneFile, config: EngineConfig | None = None,
                 scorer=None, backend=None, capturer=None):
        self.config = config or EngineConfig()
        self.backend = backend if backend is not None else build_backend(self.config)
        self.scorer = scorer or make_scorer(self.config, self.backend)
        self.capturer = capturer or make_capturer(self.config)
        self._graph = scene.graph
        self._revision = 1
        self._state_lock = threading.Lock()
        self._job_lock = threading.Lock()
        self._active_job: Job | None = None
        self._job_counter = 0
        self._subscribers: list[queue.Queue] = []
        self._subscribers_lock = threading.Lock()

    # -- reads ---------------------------------------------------------------

    @property
    def revision(self) -> int:
        with self._state_lock:
            return self._revision

    def scene_payload(self) -> dict:
        with self._state_lock:
            return {"revision": self._revision, "scene": scene_to_dict(self._graph)}

    def energy_payload(self) -> dict:
        with self._state_lock:
            graph = self._graph
            revision = self._revision
        return {"revision": revision, "energy": scene_energy(graph, self.config.optimizer).to_dict()}

    def views_png(self, subject: str) -> bytes:
        with self._state_lock:
            graph = self._graph
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
                            make_capturer(self.config).rig)
        montage = render_montage(graph, subject_ids, all_ids, rig)
        return montage.to_png()

    # -- events ---------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        subscriber: queue.Queue = queue.Queue()
        with self._subscribers_lock:
            self._subscribers.append(subscriber)
        subscriber.put(("hello", {"revision": self.revision}))
        return subscriber

    def unsubscribe(self, subscriber: queue.Queue) -> None:
        with self._subscribers_lock:
            if subscriber in self._subscribers:
                self._subscribers.remove(subscriber)

    def _broadcast(self, name: str, data: dict) -> None:
        with self._subscribers_lock:
            targets = list(self._subscribers)
        for target in targets:
            target.put((name, data))

    # -- mutations -------------------------------------------------------------

    def submit(self, kind: str, payload: dict) -> Job:
        """Start a mutating job, or raise JobConflict while one is active."""
        runner = {
            "generate": self._run_generate,
            "modify": self._run_modify,
            "optimize": self._run_optimize,
        }[kind]
        self._validate(kind, payload)
        with self._job_lock:
            if self._active_job is not None and self._active_job.status == "running":
                raise JobConflict(self._active_job.id)
            self._job_counter += 1
            job = Job(id=f"job-{self._job_counter}", kind=kind)
            self._active_job = job
        thread = threading.Thread(target=self._run_job, args=(job, runner, payload),
                                  name=job.id, daemon=True)
        thread.start()
        return job

    def _validate(self, kind: str, payload: dict) -> None:
        if kind in ("generate", "modify"):
            prompt = payload.get("prompt", "")
            if not isinstance(prompt, str) or not prompt.strip():
                raise ValueError("payload needs a non-empty 'prompt'")
        if kind == "optimize":
            level = payload.get("level")
            if level not in ("edge", "scene"):
                raise ValueError("payload needs level 'edge' or 'scene'")
            if level == "edge":
                edge = payload.get("edge") or {}
                if "src" not in edge or "dst" not in edge:
                    raise ValueError("edge optimization needs edge {src, dst}")
                with self._state_lock:
                    graph = self._graph
                if not any(e.src == edge["src"] and e.dst == edge["dst"] for e in graph.edges):
                    raise UnknownIdError(f"edge {edge['src']!r} -> {edge['dst']!r} not in scene")

    def _run_job(self, job: Job, runner, payload: dict) -> None:
        try:
            new_graph = runner(payload)
        except Exception as exc:  # noqa: BLE001 - job failures are reported, not raised
            logger.warning("job %s failed: %s", job.id, exc)
            job.status = "failed"
            job.error = str(exc)
            self._broadcast("job", job.to_dict())
            return
        with self._state_lock:
            self._graph = new_graph
            self._revision += 1
            revision = self._revision
        job.status = "done"
        self._broadcast("job", job.to_dict())
        self._broadcast("revision", {"revision": revision})

    def _snapshot(self):
        with self._state_lock:
            return self._graph

    def _run_generate(self, payload: dict):
        graph = build_scene_from_prompt(payload["prompt"], self.backend,
                                        self.config.size_overrides)
        new_graph, _report = optimize_scene(
            graph, self.scorer, self.capturer, self.config.optimizer,
            on_event=self._progress,
        )
        return new_graph

    def _run_modify(self, payload: dict):
        graph = self._snapshot()
        if self.backend is None:
            raise SceneLayoutError("modify needs a backend endpoint or replay file")
        plan = plan_modification(graph, payload["prompt"], self.backend)
        new_graph, _report = apply_modification(
            graph, plan, self.scorer, self.capturer, self.config.optimizer,
            on_event=self._progress,
        )
        return new_graph

    def _run_optimize(self, payload: dict):
        graph = self._snapshot()
        if payload["level"] == "scene":
            new_graph, _report = optimize_scene(
                graph, self.scorer, self.capturer, self.config.optimizer,
                on_event=self._progress,
            )
            return new_graph
        edge_ref = payload["edge"]
        edge = next(e for e in graph.edges
                    if e.src == edge_ref["src"] and e.dst == edge_ref["dst"])
        new_graph, _trace = optimize_edge(
            graph, edge, self.scorer, self.capturer, self.config.optimizer,
            on_event=self._progress,
        )
        return new_graph

    def _progress(self, event) -> None:
        self._broadcast("progress", event.to_dict())


def _make_handler(service: SceneService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # noqa: N802 - stdlib notation
            logger.debug("http: " + fmt, *args)

        def _reply(self, status: int, payload: dict | bytes,
                   content_type: str = "application/json") -> None:
            body = payload if isinstance(payload, bytes) else (
                json.dumps(payload).encode("utf-8")
            )
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json_body(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                parsed = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed JSON body: {exc.msg}") from exc
            if not isinstance(parsed, dict):
                raise ValueError("JSON body must be an object")
            return parsed

        def do_GET(self):  # noqa: N802
            parsed = urlparse(self.path)
            try:
                if parsed.path == "/api/scene":
                    self._reply(200, service.scene_payload())
                elif parsed.path == "/api/energy":
                    self._reply(200, service.energy_payload())
                elif parsed.path == "/api/views":
                    params = parse_qs(parsed.query)
                    subject = params.get("subject", ["all"])[0]
                    self._reply(200, service.views_png(subject), content_type="image/png")
                elif parsed.path == "/api/events":
                    self._stream_events()
                else:
                    self._reply(404, {"error": f"unknown path {parsed.path}"})
            except UnknownIdError as exc:
                self._reply(404, {"error": str(exc)})
            except SceneLayoutError as exc:
                self._reply(400, {"error": str(exc)})

        def do_POST(self):  # noqa: N802
            parsed = urlparse(self.path)
            kinds = {"/api/generate": "generate", "/api/modify": "modify",
                     "/api/optimize": "optimize"}
            if parsed.path not in kinds:
                self._reply(404, {"error": f"unknown path {parsed.path}"})
                return
            try:
                payload = self._json_body()
                job = service.submit(kinds[parsed.path], payload)
            except JobConflict as exc:
                self._reply(409, {"error": str(exc), "job": exc.active_job_id})
                return
            except (ValueError, UnknownIdError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            self._reply(202, {"job": job.id})

        def _write_chunk(self, data: bytes) -> None:
            self.wfile.write(f"{len(data):X}\r\n".encode("ascii") + data + b"\r\n")
            self.wfile.flush()

        def _stream_events(self) -> None:
            subscriber = service.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Transfer-Encoding", "chunked")
                self.send_header("Connection", "close")
                self.end_headers()
                while True:
                    try:
                        name, data = subscriber.get(timeout=15.0)
                    except queue.Empty:
                        self._write_chunk(b": keepalive\n\n")
                        continue
                    payload = f"event: {name}\ndata: {json.dumps(data)}\n\n"
                    self._write_chunk(payload.encode("utf-8"))
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                service.unsubscribe(subscriber)

    return Handler


def serve_http(service: SceneService, bind: str = "127.0.0.1:8080") -> ThreadingHTTPServer:
    """Bind the service; the caller runs serve_forever (or uses it in tests)."""
    host, _, port_text = bind.rpartition(":")
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port_text)),
                                 _make_handler(service))
    server.daemon_threads = True
    return server
