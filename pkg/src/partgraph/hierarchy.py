"""Directed three-level part hierarchy: validation, neighborhoods, label masks.

The graph has leaf parts at level 1, intermediate groupings at level 2 and a
single root at level 3. Decomposition edges run parent -> child and imply the
reverse composition edge (never stored). Dependency edges connect kinematic
pairs on the same level and are listed explicitly in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import yaml

from .errors import (
    CrossLevelDependencyError,
    CycleError,
    HierarchyError,
    LabelSchemaError,
    MultiParentError,
    UnknownLabelError,
    UnknownNodeError,
)

DECOMPOSITION = "decomposition"
COMPOSITION = "composition"
DEPENDENCY = "dependency"
RELATION_KINDS = (DECOMPOSITION, COMPOSITION, DEPENDENCY)


@dataclass(frozen=True)
class NodeInfo:
    node_id: str
    name: str
    level: int


@dataclass(frozen=True)
class HierarchySpec:
    """Raw, unvalidated hierarchy description as parsed from config."""

    nodes: tuple[NodeInfo, ...]
    decomposition_edges: tuple[tuple[str, str], ...]
    dependency_edges: tuple[tuple[str, str], ...]
    label_schema: Mapping[int, str]
    background_index: int = 0

    @staticmethod
    def from_config(cfg: Mapping) -> "HierarchySpec":
        nodes = tuple(
            NodeInfo(str(n["id"]), str(n.get("name", n["id"])), int(n["level"]))
            for n in cfg["nodes"]
        )
        dec = tuple((str(a), str(b)) for a, b in cfg.get("decomposition", []))
        dep = tuple((str(a), str(b)) for a, b in cfg.get("dependency", []))
        labels = {int(k): str(v) for k, v in cfg.get("labels", {}).items()}
        return HierarchySpec(
            nodes=nodes,
            decomposition_edges=dec,
            dependency_edges=dep,
            label_schema=labels,
            background_index=int(cfg.get("background_index", 0)),
        )

    def to_config(self) -> dict:
        return {
            "nodes": [
                {"id": n.node_id, "name": n.name, "level": n.level} for n in self.nodes
            ],
            "decomposition": [list(e) for e in self.decomposition_edges],
            "dependency": [list(e) for e in self.dependency_edges],
            "labels": {int(k): v for k, v in self.label_schema.items()},
            "background_index": self.background_index,
        }


@dataclass(frozen=True)
class NodeNeighborhood:
    """The three in-edge index sets of one node."""

    node_id: str
    parents: frozenset[str]
    children: frozenset[str]
    siblings: frozenset[str]

    @property
    def in_degree(self) -> int:
        return len(self.parents) + len(self.children) + len(self.siblings)


@dataclass(frozen=True)
class ValidatedHierarchy:
    """Frozen hierarchy with neighborhood tables precomputed.

    Ordered accessors (``children_of`` etc.) follow node declaration order so
    attention channel layouts are reproducible.
    """

    spec: HierarchySpec
    _info: dict[str, NodeInfo] = field(repr=False)
    _children: dict[str, tuple[str, ...]] = field(repr=False)
    _parents: dict[str, tuple[str, ...]] = field(repr=False)
    _siblings: dict[str, tuple[str, ...]] = field(repr=False)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.node_id for n in self.spec.nodes)

    @property
    def background_index(self) -> int:
        return self.spec.background_index

    @property
    def label_schema(self) -> dict[int, str]:
        return dict(self.spec.label_schema)

    def level_nodes(self, level: int) -> tuple[str, ...]:
        return tuple(n.node_id for n in self.spec.nodes if n.level == level)

    @property
    def leaves(self) -> tuple[str, ...]:
        return self.level_nodes(1)

    def level_of(self, v: str) -> int:
        self._require(v)
        return self._info[v].level

    def name_of(self, v: str) -> str:
        self._require(v)
        return self._info[v].name

    def children_of(self, v: str) -> tuple[str, ...]:
        self._require(v)
        return self._children[v]

    def parents_of(self, v: str) -> tuple[str, ...]:
        self._require(v)
        return self._parents[v]

    def siblings_of(self, v: str) -> tuple[str, ...]:
        self._require(v)
        return self._siblings[v]

    def label_of_leaf(self, leaf: str) -> int | None:
        for idx, node in self.spec.label_schema.items():
            if node == leaf:
                return idx
        return None

    def directed_edges(self) -> tuple[tuple[str, str, str], ...]:
        """All message-passing edges as (source, destination, kind)."""
        edges: list[tuple[str, str, str]] = []
        for u, v in self.spec.decomposition_edges:
            edges.append((u, v, DECOMPOSITION))
        for u, v in self.spec.decomposition_edges:
            edges.append((v, u, COMPOSITION))
        for u, v in self.spec.dependency_edges:
            edges.append((u, v, DEPENDENCY))
        return tuple(edges)

    def in_edges(self, v: str) -> tuple[tuple[str, str], ...]:
        """Incoming (source, kind) pairs of ``v`` in canonical order."""
        self._require(v)
        pairs = [(u, DECOMPOSITION) for u in self._parents[v]]
        pairs += [(u, COMPOSITION) for u in self._children[v]]
        pairs += [(u, DEPENDENCY) for u in self._siblings[v]]
        return tuple(pairs)

    def is_isolated(self, v: str) -> bool:
        self._require(v)
        return not (self._parents[v] or self._children[v] or self._siblings[v])

    def _require(self, v: str) -> None:
        if v not in self._info:
            raise UnknownNodeError(f"unknown node id {v!r}")


def validate(spec: HierarchySpec) -> ValidatedHierarchy:
    """Check all structural invariants and freeze neighborhood tables."""
    info: dict[str, NodeInfo] = {}
    for n in spec.nodes:
        if n.node_id in info:
            raise HierarchyError(f"duplicate node id {n.node_id!r}")
        if n.level not in (1, 2, 3):
            raise HierarchyError(f"node {n.node_id!r} has level {n.level}, expected 1..3")
        # ids become checkpoint parameter-path segments, so no dots
        if not n.node_id or "." in n.node_id:
            raise HierarchyError(f"node id {n.node_id!r} must be non-empty and dot-free")
        info[n.node_id] = n

    level2 = [n.node_id for n in spec.nodes if n.level == 2]
    level3 = [n.node_id for n in spec.nodes if n.level == 3]
    if level2 and len(level3) != 1:
        raise HierarchyError(
            f"expected exactly one level-3 root with level-2 nodes present, got {level3}"
        )

    order = [n.node_id for n in spec.nodes]
    children: dict[str, list[str]] = {v: [] for v in order}
    parents: dict[str, list[str]] = {v: [] for v in order}
    seen_dec: set[tuple[str, str]] = set()
    for u, v in spec.decomposition_edges:
        for x in (u, v):
            if x not in info:
                raise UnknownNodeError(f"decomposition edge ({u}, {v}) references unknown node {x!r}")
        if (u, v) in seen_dec:
            raise HierarchyError(f"duplicate decomposition edge ({u}, {v})")
        seen_dec.add((u, v))
        if parents[v]:
            raise MultiParentError(
                f"node {v!r} has multiple parents: {parents[v][0]!r} and {u!r}"
            )
        children[u].append(v)
        parents[v].append(u)

    _reject_cycles(order, children)

    siblings: dict[str, list[str]] = {v: [] for v in order}
    seen_dep: set[tuple[str, str]] = set()
    for u, v in spec.dependency_edges:
        for x in (u, v):
            if x not in info:
                raise UnknownNodeError(f"dependency edge ({u}, {v}) references unknown node {x!r}")
        if u == v:
            raise HierarchyError(f"dependency self-loop on {u!r}")
        if info[u].level != info[v].level:
            raise CrossLevelDependencyError(
                f"dependency edge ({u}, {v}) crosses levels {info[u].level} and {info[v].level}"
            )
        if (u, v) in seen_dep:
            raise HierarchyError(f"duplicate dependency edge ({u}, {v})")
        seen_dep.add((u, v))
        siblings[u].append(v)
    for u, v in seen_dep:
        if (v, u) not in seen_dep:
            raise HierarchyError(
                f"dependency edge ({u}, {v}) listed without its reverse ({v}, {u})"
            )

    seen_labels: dict[str, int] = {}
    for idx, node in spec.label_schema.items():
        if node not in info:
            raise LabelSchemaError(f"label {idx} maps to unknown node {node!r}")
        if info[node].level != 1:
            raise LabelSchemaError(
                f"label {idx} maps to non-leaf node {node!r} (level {info[node].level})"
            )
        if idx == spec.background_index:
            raise LabelSchemaError(
                f"label {idx} collides with background index {spec.background_index}"
            )
        if node in seen_labels:
            raise LabelSchemaError(
                f"leaf {node!r} mapped by labels {seen_labels[node]} and {idx}"
            )
        seen_labels[node] = idx

    pos = {v: i for i, v in enumerate(order)}
    return ValidatedHierarchy(
        spec=spec,
        _info=info,
        _children={v: tuple(sorted(children[v], key=pos.__getitem__)) for v in order},
        _parents={v: tuple(parents[v]) for v in order},
        _siblings={v: tuple(sorted(siblings[v], key=pos.__getitem__)) for v in order},
    )


def _reject_cycles(order: Iterable[str], children: Mapping[str, list[str]]) -> None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: WHITE for v in order}

    def visit(root: str) -> None:
        stack = [(root, iter(children[root]))]
        color[root] = GRAY
        while stack:
            v, it = stack[-1]
            child = next(it, None)
            if child is None:
                color[v] = BLACK
                stack.pop()
            elif color[child] == GRAY:
                raise CycleError(f"decomposition cycle through edge ({v}, {child})")
            elif color[child] == WHITE:
                color[child] = GRAY
                stack.append((child, iter(children[child])))

    for v in order:
        if color[v] == WHITE:
            visit(v)


def neighborhood(h: ValidatedHierarchy, v: str) -> NodeNeighborhood:
    """P_v, C_v and K_v of node ``v``; pure function of the hierarchy."""
    return NodeNeighborhood(
        node_id=v,
        parents=frozenset(h.parents_of(v)),
        children=frozenset(h.children_of(v)),
        siblings=frozenset(h.siblings_of(v)),
    )


def leaf_masks_from_labels(labels: np.ndarray, h: ValidatedHierarchy) -> dict[str, np.ndarray]:
    """One boolean (H, W) mask per leaf node from an integer label map.

    Leaves without a label index receive all-zero masks. Raises
    UnknownLabelError listing every out-of-schema value.
    """
    labels = np.asarray(labels)
    schema = h.label_schema
    valid = set(schema) | {h.background_index}
    present = set(np.unique(labels).tolist())
    bad = sorted(present - valid)
    if bad:
        raise UnknownLabelError(f"label values outside schema: {bad}")
    masks: dict[str, np.ndarray] = {leaf: np.zeros(labels.shape, dtype=bool) for leaf in h.leaves}
    for idx, leaf in schema.items():
        masks[leaf] = labels == idx
    return masks


def reconstruct_labels(masks: Mapping[str, np.ndarray], h: ValidatedHierarchy) -> np.ndarray:
    """Inverse of leaf_masks_from_labels; background where every mask is zero."""
    first = next(iter(masks.values()))
    labels = np.full(first.shape, h.background_index, dtype=np.int64)
    for idx, leaf in h.label_schema.items():
        labels[np.asarray(masks[leaf], dtype=bool)] = idx
    return labels


def load_hierarchy(path: str | Path) -> ValidatedHierarchy:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    return validate(HierarchySpec.from_config(cfg))


def builtin_hierarchy(name: str) -> ValidatedHierarchy:
    """Load one of the shipped configs, e.g. ``pascal6`` or ``synthetic6``."""
    ref = resources.files("partgraph") / "configs" / f"{name}.hierarchy"
    cfg = yaml.safe_load(ref.read_text(encoding="utf-8"))
    return validate(HierarchySpec.from_config(cfg))
