"""Chat-completion backends, record/replay sessions, and the model-backed ops.

The wire protocol is chat-completion-style HTTP+JSON with images as base64
data URLs, so any compatible endpoint can serve as the language or multimodal
model. Every live interaction can be recorded to a JSONL session file; replay
mode serves recorded replies by request digest and never touches the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from .errors import BackendError, ReplayMissError, ReplyParseError
from .geometry import DEFAULT_SIZE, SizeEstimate
from .graph import FeatureVector, SceneGraph, Subgraph
from .optimizer import fallback_grid_placements, subgraph_bounding_radius
from .prompts import (
    Message,
    ModificationReply,
    StateReply,
    build_modification_prompt,
    build_placement_prompt,
    build_prompt2,
    build_size_prompt,
    build_state_prompt,
    parse_modification_reply,
    parse_placement_reply,
    parse_scores,
    parse_size_reply,
    parse_state_reply,
)
from .scoring import ScoreRequest, ScoreVector

logger = logging.getLogger(__name__)


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, messages: Sequence[Message]) -> str: ...


def request_digest(messages: Sequence[Message]) -> str:
    """Stable content hash of a request, images included by their digests."""
    canonical = [
        {
            "role": m.role,
            "text": m.text,
            "images": [hashlib.sha256(img).hexdigest() for img in m.images],
        }
        for m in messages
    ]
    payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class BackendSettings:
    """Connection settings for a hosted chat endpoint."""

    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    timeout_s: float = 60.0
    retries: int = 2
    max_in_flight: int = 2


class HttpChatBackend:
    """Minimal chat-completions client with retries and an in-flight cap."""

    def __init__(self, settings: BackendSettings):
        if not settings.endpoint:
            raise BackendError("no endpoint configured")
        self.settings = settings
        self._slots = threading.BoundedSemaphore(max(1, settings.max_in_flight))

    def complete(self, messages: Sequence[Message]) -> str:
        import requests

        payload = {
            "model": self.settings.model,
            "messages": [self._wire_message(m) for m in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.settings.api_key:
            headers["Authorization"] = f"Bearer {self.settings.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.settings.retries + 1):
            try:
                with self._slots:
                    response = requests.post(
                        self.settings.endpoint, json=payload, headers=headers,
                        timeout=self.settings.timeout_s,
                    )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retryable here
                last_error = exc
                if attempt < self.settings.retries:
                    time.sleep(min(2.0 ** attempt, 8.0))
        raise BackendError(f"chat completion failed after retries: {last_error}")

    @staticmethod
    def _wire_message(message: Message) -> dict:
        if not message.images:
            return {"role": message.role, "content": message.text}
        content: list[dict] = [{"type": "text", "text": message.text}]
        for image in message.images:
            encoded = base64.b64encode(image).decode("ascii")
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{encoded}"},
            })
        return {"role": message.role, "content": content}


class RecordedSession:
    """Session file of (request digest, reply) pairs.

    Record mode wraps a live backend and appends every exchange; replay mode
    serves recorded replies and treats an unknown request as an error rather
    than ever calling out.
    """

    def __init__(self, path: str | Path, inner: ChatBackend | None = None,
                 replay: bool = True):
        self.path = Path(path)
        self.inner = inner
        self.replay = replay
        self._replies: dict[str, str] = {}
        if replay:
            self._load()

    @classmethod
    def replay_file(cls, path: str | Path) -> "RecordedSession":
        return cls(path, inner=None, replay=True)

    @classmethod
    def recording(cls, path: str | Path, inner: ChatBackend) -> "RecordedSession":
        return cls(path, inner=inner, replay=False)

    def _load(self) -> None:
        if not self.path.exists():
            raise BackendError(f"replay session file not found: {self.path}")
        with open(self.path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self._replies[entry["digest"]] = entry["reply"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise BackendError(
                        f"malformed session line {line_number} in {self.path}: {exc}"
                    ) from exc

    def complete(self, messages: Sequence[Message]) -> str:
        digest = request_digest(messages)
        if self.replay:
            try:
                return self._replies[digest]
            except KeyError:
                raise ReplayMissError(
                    f"no recorded reply for request {digest[:12]}... in {self.path}"
                ) from None
        if self.inner is None:
            raise BackendError("recording session has no inner backend")
        reply = self.inner.complete(messages)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps({"digest": digest, "reply": reply}) + "\n")
        return reply


def record_reply(path: str | Path, messages: Sequence[Message], reply: str) -> None:
    """Append one exchange to a session file (fixture construction helper)."""
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps({"digest": request_digest(messages), "reply": reply}) + "\n")


class MllmScorer:
    """Scorer backed by a multimodal chat endpoint reading the montage triplet."""

    needs_views = True
    refine_per_edge = False

    def __init__(self, backend: ChatBackend):
        self.backend = backend

    def score(self, request: ScoreRequest) -> ScoreVector:
        if request.montages is None:
            raise BackendError("view-based scorer called without montages")
        messages = build_prompt2(
            request.x1_description, request.x2_description,
            request.scene_prompt or request.x2_description, request.montages,
        )
        reply = self.backend.complete(messages)
        return parse_scores(reply)


def query_size(backend: ChatBackend | None, label: str,
               node_prompt: str = "") -> SizeEstimate:
    """Real-world extent of an object category, in meters.

    Falls back to the 1 m default cube (provenance recorded) when no backend
    is configured or the reply cannot be parsed; backend transport failures
    propagate.
    """
    if backend is None:
        return DEFAULT_SIZE
    reply = backend.complete(build_size_prompt(label, node_prompt))
    estimate = parse_size_reply(reply)
    if estimate is None:
        logger.warning("unparseable size reply for %r, using default cube", label)
        return DEFAULT_SIZE
    return estimate


def subgraph_summary(graph: SceneGraph, subgraph: Subgraph) -> str:
    labels = [graph.node(i).label for i in subgraph.member_ids]
    radius = subgraph_bounding_radius(graph, subgraph)
    return f"{len(labels)} objects ({', '.join(labels)}), bounding radius {radius:.2f} m"


def query_subgraph_placement(graph: SceneGraph, subgraphs: Sequence[Subgraph],
                             backend: ChatBackend | None) -> list[FeatureVector]:
    """Anchor estimates for each component.

    A single component needs no estimate and never calls the backend. Without
    a backend, or when the call or parse fails, the deterministic grid
    fallback engages (flagged in the log).
    """
    if not subgraphs:
        raise ValueError("need at least one subgraph")
    if len(subgraphs) == 1:
        return [FeatureVector()]
    if backend is None:
        return fallback_grid_placements(graph, subgraphs)
    summaries = [subgraph_summary(graph, part) for part in subgraphs]
    try:
        reply = backend.complete(build_placement_prompt(summaries))
        return parse_placement_reply(reply, expected=len(subgraphs))
    except (BackendError, ReplyParseError) as exc:
        logger.warning("subgraph placement query failed (%s), using grid fallback", exc)
        return fallback_grid_placements(graph, subgraphs)


def query_state_prompts(graph: SceneGraph, sentence: str,
                        backend: ChatBackend) -> StateReply:
    """Final-state descriptions and target relations for a transformation."""
    labels = [node.id for node in graph.nodes]
    reply = backend.complete(build_state_prompt(labels, sentence))
    return parse_state_reply(reply, known_labels=labels)


def query_modification(graph: SceneGraph, sentence: str,
                       backend: ChatBackend) -> ModificationReply:
    """Classify a natural-language scene edit."""
    labels = [node.id for node in graph.nodes]
    reply = backend.complete(build_modification_prompt(labels, sentence))
    return parse_modification_reply(reply, known_labels=labels)
