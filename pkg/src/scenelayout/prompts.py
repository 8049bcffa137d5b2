"""Prompt templates and strict parsers for model replies.

Two templates drive the engine: the graph-construction prompt (nodes,
node-prompts, edges from one scene sentence) and the five-score evaluation
prompt sent with the X1/X2/Xall montage triplet. Both are byte-stable
skeletons; substitution never rewrites the surrounding text. The remaining
prompts (size, placement, state, modification) are engine plumbing with
machine-parseable reply skeletons of the same house style.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import ReplyParseError
from .geometry import DEFAULT_SIZE, SizeEstimate
from .graph import FeatureVector, RelationKind
from .scoring import ScoreVector, clamp_scores

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    """One chat turn; images are PNG payloads attached in order."""

    role: str
    text: str
    images: tuple[bytes, ...] = ()


GRAPH_PROMPT_TEMPLATE = """You are an expert in computer graphics, computer vision, and scene design. Below I will send you a sentence. The sentence will describe some objects in a scene. I want you to help me construct a graph with nodes and edges, where nodes represent the objects in the scene, and edges represent the objects' connections.

Here are the guided steps to construct the structure:

First, you should analyze the sentence, identify all object categories, count the objects, and assign each object a short prompt for 3D generation. These objects are the nodes of the graph. The result of nodes should follow this format: "nodes = [obj_1, obj_2, obj_3, ...], node-prompts = [prompt of obj_1, prompt of obj_2, prompt of obj_3]" For example: "nodes = [apple, banana, toy], node-prompts = [a fresh red apple, a ripe yellow banana, a colorful toy car]".

Secondly, after collecting all nodes, you should identify all connections between objects. These connections are the edges of the graph, which should strictly be uni-directional. You should only use interaction like {left, right, up, down, front, below, in} to describe the interactions between objects. The result of edges should follow this format, where "obj_a {interaction} obj_b" means "obj_a" is in the position described by "interaction" relative to "obj_b": "edges = [obj_1 {interaction_1} obj_2, obj_2 {interaction_4} obj_3, ...]". For example: "edges = [apple left banana, toy on bed]".

You should determine the most common interaction if there are multiple choices.

The target sentence is: """

SCORE_PROMPT_TEMPLATE = """You are an expert in computer graphics, computer vision, and scene design. I will send you a sentence and 3 images, all images are four views of a scene, where the left-top is a front view, the right-top is a side view, the bottom-left is a top-down view, and the bottom-right is an angled perspective view.

These images are respectively:

1. The optimized objects: $X1$.
2. Other objects: $X2$.
3. entire scene $XALL$.

The position, rotation, and scale of $X2$ are correct in the scene. There might be some incorrect scale, location, and rotation of $X1$, which are unlikely to form a realistic layout in a scene satisfying $XALL$ in the third image. Please now modify the scene step by step:

Please evaluate whether $X1$ in the scene meets the requirement. Provide five scores from -100 to 100 based on the following criteria respectively:

1. First score is about the scale of $X1$:
    If $X1$ in the scene is at an appropriate size, give a score close to zero.
    If $X1$ in the scene is too big, give a high positive score.
    If $X1$ in the scene is too small, give a high negative score.

2. Second score is about $X1$'s location in the left-and-right direction:
    (You must not consider the side view image to rate the score; consider the x-axis in both the front-view and top-down view.)
    If $X1$ in the scene is at an appropriate location, give a score close to zero.
    If $X1$ is too close to $X2$, give a high positive score.
    If $X1$ is too far from $X2$, give a high negative score.

3. Third score is about $X1$'s location in the forward-and-backward direction:
    (You must not consider the front-view image to rate the score; consider the x-axis in the side-view and the y-axis in the top-down view.)
    If $X1$ in the scene is at an appropriate location, give a score close to zero.
    If $X1$ is too close to $X2$, give a high positive score.
    If $X1$ is too far from $X2$, give a high negative score.

4. Fourth score is about $X1$'s location in the up-and-down direction:
    (You must not consider the top-down view to rate this score; consider the y-axis in both the front-view and side-view.)
    If $X1$ in the scene is at an appropriate location, give a score close to zero.
    If $X1$ is too close to $X2$, give a high positive score.
    If $X1$ is too far from $X2$, give a high negative score.

5. Fifth score is about $X1$'s yaw rotation:
    (You should consider the top-view image.)
    If $X1$ in the scene is at an appropriate rotation, give a score close to zero.
    If $X1$ should rotate clockwise, give a positive score.
    If $X1$ should rotate counterclockwise, give a negative score.

The return should begin with:
The score-1 is: ...
The score-2 is: ...
The score-3 is: ...
The score-4 is: ...
The score-5 is: ..."""

SIZE_PROMPT_TEMPLATE = """You are an expert in interior and industrial design. Tell me the typical real-world size of the following object: $OBJECT$.

Answer in one sentence of this exact shape, using centimeters:
"the scale of $LABEL$ is <number> cm in width, <number> cm in length and <number> cm in height"."""

PLACEMENT_PROMPT_TEMPLATE = """You are an expert in computer graphics and scene layout. A scene is split into groups of already arranged objects. Propose a rough placement for each group in a shared world space, in meters and degrees.

The groups are:
$SUMMARIES$

Reply with exactly one line per group, in order, of this shape:
"group-<k>: x=<number> y=<number> z=<number> s=<number> r=<number>"
where (x, y, z) displaces the group center, s scales the group, and r rotates it about the vertical axis."""

STATE_PROMPT_TEMPLATE = """You are an expert in scene animation. A scene contains these objects: $LABELS$.
The requested transformation is: $SENTENCE$

Describe the final state of every object affected by the transformation, and the spatial relations that must hold at the end. Use only the objects listed above and only the interactions {left, right, up, down, front, below, in}.

Reply with exactly:
states = [<object>: <one-line final state>, ...]
edges = [<object> <interaction> <object>, ...]"""

MODIFICATION_PROMPT_TEMPLATE = """You are an expert in scene editing. A scene contains these objects: $LABELS$.
The requested edit is: $SENTENCE$

Classify the edit and reply with exactly these lines (omit lines that do not apply):
action = <add | remove | reposition | none>
node = <object label>
node-prompt = <one-line generation prompt, only for add>
edges = [<object> <interaction> <object>, ...]
offset = <dx> <dy> <dz>
Use action = none if the request changes no object placement. Use only interactions from {left, right, up, down, front, below, in}."""

# Relation tokens accepted from model replies beyond the canonical vocabulary.
# "on" appears in practice for stacked objects and maps to "up".
_TOKEN_ALIASES = {"on": RelationKind.UP}


def build_prompt1(scene_sentence: str) -> list[Message]:
    """The graph-construction prompt with the scene sentence substituted."""
    if not scene_sentence.strip():
        raise ReplyParseError("scene sentence must be non-empty")
    return [Message(role="user", text=GRAPH_PROMPT_TEMPLATE + scene_sentence)]


def build_prompt2(x1_desc: str, x2_desc: str, scene_desc: str,
                  montages) -> list[Message]:
    """The five-score prompt with the montage triplet attached in X1/X2/Xall order."""
    montages = list(montages)
    if len(montages) != 3:
        raise ReplyParseError(f"score prompt needs exactly three montages, got {len(montages)}")
    text = (
        SCORE_PROMPT_TEMPLATE
        .replace("$X1$", x1_desc)
        .replace("$X2$", x2_desc)
        .replace("$XALL$", scene_desc)
    )
    images = tuple(m.to_png() for m in montages)
    return [Message(role="user", text=text, images=images)]


def build_size_prompt(label: str, node_prompt: str = "") -> list[Message]:
    described = f"{label} ({node_prompt})" if node_prompt else label
    text = SIZE_PROMPT_TEMPLATE.replace("$OBJECT$", described).replace("$LABEL$", label)
    return [Message(role="user", text=text)]


def build_placement_prompt(summaries: list[str]) -> list[Message]:
    lines = "\n".join(f"group-{i + 1}: {s}" for i, s in enumerate(summaries))
    return [Message(role="user", text=PLACEMENT_PROMPT_TEMPLATE.replace("$SUMMARIES$", lines))]


def build_state_prompt(labels: list[str], sentence: str) -> list[Message]:
    if not sentence.strip():
        raise ReplyParseError("transformation sentence must be non-empty")
    text = (
        STATE_PROMPT_TEMPLATE
        .replace("$LABELS$", ", ".join(labels))
        .replace("$SENTENCE$", sentence)
    )
    return [Message(role="user", text=text)]


def build_modification_prompt(labels: list[str], sentence: str) -> list[Message]:
    if not sentence.strip():
        raise ReplyParseError("modification sentence must be non-empty")
    text = (
        MODIFICATION_PROMPT_TEMPLATE
        .replace("$LABELS$", ", ".join(labels))
        .replace("$SENTENCE$", sentence)
    )
    return [Message(role="user", text=text)]


@dataclass(frozen=True)
class GraphSpecReply:
    """Parsed graph-construction reply; node ids disambiguate repeated labels."""

    node_ids: tuple[str, ...]
    labels: tuple[str, ...]
    node_prompts: tuple[str, ...]
    edges: tuple[tuple[str, RelationKind, str], ...]
    warnings: tuple[str, ...] = field(default=())


def _section(text: str, name: str) -> str:
    match = re.search(rf"{re.escape(name)}\s*=\s*\[([^\]]*)\]", text)
    if not match:
        raise ReplyParseError(f"reply is missing the '{name} = [...]' section")
    return match.group(1)


def _split_items(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def parse_relation_token(token: str) -> tuple[RelationKind, str | None]:
    """Canonical kinds plus tolerated aliases; returns (kind, warning or None)."""
    lowered = token.strip().lower()
    if lowered in _TOKEN_ALIASES:
        kind = _TOKEN_ALIASES[lowered]
        warning = f"relation token {token!r} mapped to {kind.value!r}"
        logger.warning("%s", warning)
        return kind, warning
    try:
        return RelationKind(lowered), None
    except ValueError:
        raise ReplyParseError(f"unknown relation token: {token!r}") from None


def parse_graph_reply(text: str) -> GraphSpecReply:
    """Extract nodes, node-prompts, and edges from a graph-construction reply.

    Repeated labels get occurrence-indexed ids (apple#1, apple#2); a bare
    repeated label in an edge resolves to its first occurrence with a warning.
    """
    labels = _split_items(_section(text, "nodes"))
    prompts = _split_items(_section(text, "node-prompts"))
    if not labels:
        raise ReplyParseError("reply contains no nodes")
    if len(labels) != len(prompts):
        raise ReplyParseError(
            f"{len(labels)} nodes but {len(prompts)} node-prompts"
        )
    warnings: list[str] = []
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    seen: dict[str, int] = {}
    node_ids: list[str] = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        node_ids.append(f"{label}#{seen[label]}" if counts[label] > 1 else label)

    def resolve(label: str) -> str:
        if label in node_ids:
            return label
        if counts.get(label, 0) > 1:
            warning = f"ambiguous label {label!r} resolved to {label}#1"
            logger.warning("%s", warning)
            warnings.append(warning)
            return f"{label}#1"
        raise ReplyParseError(f"edge endpoint {label!r} does not match any node")

    edges: list[tuple[str, RelationKind, str]] = []
    for item in _split_items(_section(text, "edges")):
        src_label, token, dst_label = _split_edge_item(item, labels)
        kind, warning = parse_relation_token(token)
        if warning:
            warnings.append(warning)
        edges.append((resolve(src_label), kind, resolve(dst_label)))
    return GraphSpecReply(
        node_ids=tuple(node_ids),
        labels=tuple(labels),
        node_prompts=tuple(prompts),
        edges=tuple(edges),
        warnings=tuple(warnings),
    )


def _split_edge_item(item: str, labels: list[str]) -> tuple[str, str, str]:
    tokens = item.split()
    if len(tokens) == 3:
        return tokens[0], tokens[1], tokens[2]
    # Multi-word labels: match known labels at both ends, longest first.
    for src in sorted(labels, key=len, reverse=True):
        if not item.startswith(src + " "):
            continue
        rest = item[len(src):].strip()
        for dst in sorted(labels, key=len, reverse=True):
            if rest.endswith(" " + dst):
                middle = rest[: len(rest) - len(dst)].strip()
                if middle and " " not in middle:
                    return src, middle, dst
    raise ReplyParseError(f"cannot split edge item {item!r} into src/interaction/dst")


_SCORE_ANCHOR = re.compile(
    r"The score-([1-5]) is:\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)", re.IGNORECASE
)


def parse_scores(text: str) -> ScoreVector:
    """Read the five anchored scores, tolerating prose around them."""
    found: dict[int, float] = {}
    for match in _SCORE_ANCHOR.finditer(text):
        index = int(match.group(1))
        if index not in found:
            found[index] = float(match.group(2))
    missing = [k for k in range(1, 6) if k not in found]
    if missing:
        raise ReplyParseError(
            f"expected five score anchors, missing score-{', score-'.join(map(str, missing))}"
        )
    return clamp_scores([found[k] for k in range(1, 6)])


def format_scores(scores: ScoreVector) -> str:
    """The reply skeleton for a score vector; parse_scores inverts it exactly."""
    return "\n".join(
        f"The score-{i} is: {value!r}" for i, value in enumerate(scores.as_tuple(), start=1)
    )


_UNIT_FACTORS = {
    "mm": 0.001, "millimeter": 0.001, "millimeters": 0.001,
    "cm": 0.01, "centimeter": 0.01, "centimeters": 0.01,
    "m": 1.0, "meter": 1.0, "meters": 1.0,
}

_SIZE_PATTERN = re.compile(
    r"(-?\d+(?:\.\d+)?)\s*(mm|cm|m|millimeters?|centimeters?|meters?)\b"
    r"(?:\s+in\s+(width|length|depth|height))?",
    re.IGNORECASE,
)

_DIMENSION_SLOT = {"width": 0, "length": 1, "depth": 1, "height": 2}


def parse_size_reply(text: str) -> SizeEstimate | None:
    """Extract (width, depth, height) in meters; None when unparseable.

    Dimension keywords win when all three are present; otherwise the first
    three magnitudes are taken in width, depth, height order.
    """
    matches = _SIZE_PATTERN.findall(text)
    if len(matches) < 3:
        return None
    by_slot: dict[int, float] = {}
    ordered: list[float] = []
    for value, unit, dimension in matches:
        meters = float(value) * _UNIT_FACTORS[unit.lower()]
        if meters <= 0.0:
            return None
        ordered.append(meters)
        if dimension:
            slot = _DIMENSION_SLOT[dimension.lower()]
            by_slot.setdefault(slot, meters)
    if len(by_slot) == 3:
        extents = (by_slot[0], by_slot[1], by_slot[2])
    else:
        extents = tuple(ordered[:3])
    return SizeEstimate(*extents, provenance="llm")


_PLACEMENT_LINE = re.compile(
    r"group-(\d+)\s*:\s*x\s*=\s*(-?\d+(?:\.\d+)?)\s+y\s*=\s*(-?\d+(?:\.\d+)?)"
    r"\s+z\s*=\s*(-?\d+(?:\.\d+)?)\s+s\s*=\s*(\d+(?:\.\d+)?)\s+r\s*=\s*(-?\d+(?:\.\d+)?)",
    re.IGNORECASE,
)


def parse_placement_reply(text: str, expected: int) -> list[FeatureVector]:
    """One anchor estimate per group, in group order."""
    found: dict[int, FeatureVector] = {}
    for match in _PLACEMENT_LINE.finditer(text):
        index = int(match.group(1))
        if index in found:
            continue
        x, y, z, s, r = (float(match.group(k)) for k in range(2, 7))
        if s <= 0.0:
            raise ReplyParseError(f"group-{index} scale must be positive, got {s}")
        found[index] = FeatureVector(x=x, y=y, z=z, s=s, r=r)
    missing = [k for k in range(1, expected + 1) if k not in found]
    if missing:
        raise ReplyParseError(f"placement reply missing group-{missing[0]}")
    return [found[k] for k in range(1, expected + 1)]


@dataclass(frozen=True)
class StateReply:
    """Final-state descriptions plus the relations that must hold afterwards."""

    states: tuple[tuple[str, str], ...]
    target_edges: tuple[tuple[str, RelationKind, str], ...]
    warnings: tuple[str, ...] = ()


def parse_state_reply(text: str, known_labels: list[str]) -> StateReply:
    states_raw = _split_items(_section(text, "states"))
    states: list[tuple[str, str]] = []
    unknown: list[str] = []
    for item in states_raw:
        if ":" not in item:
            raise ReplyParseError(f"state item {item!r} is missing ':'")
        label, description = (part.strip() for part in item.split(":", 1))
        if label not in known_labels:
            unknown.append(label)
        states.append((label, description))
    warnings: list[str] = []
    edges: list[tuple[str, RelationKind, str]] = []
    for item in _split_items(_section(text, "edges")):
        src, token, dst = _split_edge_item(item, known_labels)
        for label in (src, dst):
            if label not in known_labels:
                unknown.append(label)
        kind, warning = parse_relation_token(token)
        if warning:
            warnings.append(warning)
        edges.append((src, kind, dst))
    if unknown:
        raise ReplyParseError(f"unknown labels in state reply: {sorted(set(unknown))}")
    return StateReply(states=tuple(states), target_edges=tuple(edges),
                      warnings=tuple(warnings))


@dataclass(frozen=True)
class ModificationReply:
    """Parsed scene-edit classification."""

    action: str
    node: str | None = None
    node_prompt: str | None = None
    edges: tuple[tuple[str, RelationKind, str], ...] = ()
    offset: tuple[float, float, float] | None = None
    warnings: tuple[str, ...] = ()


def parse_modification_reply(text: str, known_labels: list[str]) -> ModificationReply:
    action_match = re.search(r"action\s*=\s*(\w+)", text)
    if not action_match:
        raise ReplyParseError("modification reply is missing 'action ='")
    action = action_match.group(1).lower()
    if action not in ("add", "remove", "reposition", "none"):
        raise ReplyParseError(f"unknown modification action {action!r}")
    node = None
    node_match = re.search(r"node\s*=\s*([^\n]+)", text)
    if node_match:
        node = node_match.group(1).strip()
    prompt_match = re.search(r"node-prompt\s*=\s*([^\n]+)", text)
    node_prompt = prompt_match.group(1).strip() if prompt_match else None
    edges: list[tuple[str, RelationKind, str]] = []
    warnings: list[str] = []
    if re.search(r"edges\s*=\s*\[", text):
        labels = list(known_labels) + ([node] if node else [])
        for item in _split_items(_section(text, "edges")):
            src, token, dst = _split_edge_item(item, labels)
            kind, warning = parse_relation_token(token)
            if warning:
                warnings.append(warning)
            edges.append((src, kind, dst))
    offset = None
    offset_match = re.search(
        r"offset\s*=\s*(-?\d+(?:\.\d+)?)\s+(-?\d+(?:\.\d+)?)\s+(-?\d+(?:\.\d+)?)", text
    )
    if offset_match:
        offset = tuple(float(offset_match.group(k)) for k in range(1, 4))
    return ModificationReply(action=action, node=node, node_prompt=node_prompt,
                             edges=tuple(edges), offset=offset, warnings=tuple(warnings))


def default_size_estimate() -> SizeEstimate:
    return DEFAULT_SIZE
