"""Shared fixtures and small independent oracles used across the suite."""

from __future__ import annotations

import random

import pytest

from scenelayout.graph import FeatureVector, ObjectNode, RelationEdge, RelationKind, SceneGraph


def make_node(node_id: str, base_size=(1.0, 1.0, 1.0), feature: FeatureVector | None = None,
              label: str | None = None) -> ObjectNode:
    return ObjectNode(
        id=node_id,
        label=label or node_id,
        node_prompt=f"a {label or node_id}",
        feature=feature or FeatureVector(),
        base_size=base_size,
    )


def random_feature(rng: random.Random, span: float = 2.5) -> FeatureVector:
    return FeatureVector(
        x=rng.uniform(-span, span),
        y=rng.uniform(-span, span),
        z=rng.uniform(-span, span),
        s=rng.uniform(0.5, 2.0),
        r=rng.uniform(-180.0, 179.0),
    )


def random_graph(rng: random.Random, max_nodes: int = 8) -> SceneGraph:
    """Random DAG-ish scene graph: unique ordered pairs, no self-edges."""
    n = rng.randint(1, max_nodes)
    nodes = tuple(
        make_node(f"n{i}", base_size=tuple(rng.uniform(0.3, 1.5) for _ in range(3)),
                  feature=random_feature(rng))
        for i in range(n)
    )
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    rng.shuffle(pairs)
    edge_count = rng.randint(0, min(len(pairs), 2 * n))
    kinds = list(RelationKind)
    edges = tuple(
        RelationEdge(src=f"n{a}", dst=f"n{b}", kind=rng.choice(kinds))
        for a, b in pairs[:edge_count]
    )
    return SceneGraph(nodes=nodes, edges=edges)


class UnionFind:
    """Independent connected-components oracle."""

    def __init__(self, items):
        self.parent = {item: item for item in items}

    def find(self, item):
        while self.parent[item] != item:
            self.parent[item] = self.parent[self.parent[item]]
            item = self.parent[item]
        return item

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def components(self) -> set[frozenset]:
        groups: dict[str, set] = {}
        for item in self.parent:
            groups.setdefault(self.find(item), set()).add(item)
        return {frozenset(group) for group in groups.values()}


@pytest.fixture
def two_cubes() -> SceneGraph:
    apple = make_node("apple", base_size=(0.6, 0.6, 0.6))
    banana = make_node("banana", base_size=(0.8, 0.4, 0.4))
    edge = RelationEdge(src="apple", dst="banana", kind=RelationKind.LEFT)
    return SceneGraph(nodes=(apple, banana), edges=(edge,), scene_prompt="an apple left of a banana")


@pytest.fixture
def five_node_two_component_graph() -> SceneGraph:
    nodes = tuple(make_node(name, base_size=(0.5, 0.5, 0.5))
                  for name in ("lamp", "table", "chair", "bottle", "crate"))
    edges = (
        RelationEdge("lamp", "table", RelationKind.UP),
        RelationEdge("chair", "table", RelationKind.LEFT),
        RelationEdge("bottle", "crate", RelationKind.UP),
    )
    return SceneGraph(nodes=nodes, edges=edges, scene_prompt="a lamp scene")
