"""Directed design-graph IR: node/edge types, features, stats, dump format.

Every parser front-end (AIGER, netlist JSON, Verilog subset) produces a
DesignGraph; the GCN and the reporting tools consume it.  Graphs are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, ValidationError


class SourceKind(Enum):
    AIG = "aig"
    NETLIST = "netlist"


class NodeKind(Enum):
    """Node categories.  The enum order fixes the one-hot feature columns."""

    PRIMARY_INPUT = 0
    PRIMARY_OUTPUT = 1
    AND_GATE = 2
    INVERTER = 3
    CELL = 4
    CONSTANT = 5


# Short tokens used by the text dump format.
_KIND_TOKEN = {
    NodeKind.PRIMARY_INPUT: "PI",
    NodeKind.PRIMARY_OUTPUT: "PO",
    NodeKind.AND_GATE: "AND",
    NodeKind.INVERTER: "INV",
    NodeKind.CELL: "CELL",
    NodeKind.CONSTANT: "CONST",
}
_TOKEN_KIND = {v: k for k, v in _KIND_TOKEN.items()}

# Kinds only meaningful for a given source.
_AIG_ONLY = {NodeKind.AND_GATE, NodeKind.INVERTER}
_NETLIST_ONLY = {NodeKind.CELL}

FEATURE_DIM = len(NodeKind) + 2  # one-hot kind + log-degrees


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    in_degree: int
    out_degree: int


@dataclass(frozen=True)
class DesignGraph:
    name: str
    nodes: Tuple[Node, ...]
    edges: Tuple[Tuple[int, int], ...]
    source_kind: SourceKind

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Edge list as (src, dst) int arrays, empty arrays when edgeless."""
        if not self.edges:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        arr = np.asarray(self.edges, dtype=np.int64)
        return arr[:, 0], arr[:, 1]


def make_graph(
    name: str,
    nodes: Sequence[Tuple[str, NodeKind]],
    edges: Sequence[Tuple[int, int]],
    source_kind: SourceKind,
) -> DesignGraph:
    """Validate and freeze a graph; degrees are derived from the edge list.

    Raises ValidationError on duplicate/blank node ids, out-of-range edge
    endpoints, self-loops, kinds inconsistent with the source, or a cyclic
    AIG-sourced graph.
    """
    n = len(nodes)
    seen_ids = set()
    for node_id, kind in nodes:
        if not node_id or any(c.isspace() for c in node_id):
            raise ValidationError(f"invalid node id {node_id!r}")
        if node_id in seen_ids:
            raise ValidationError(f"duplicate node id {node_id!r}")
        seen_ids.add(node_id)
        if source_kind is SourceKind.AIG and kind in _NETLIST_ONLY:
            raise ValidationError(f"node {node_id!r}: kind {kind.name} not allowed in AIG graphs")
        if source_kind is SourceKind.NETLIST and kind in _AIG_ONLY:
            raise ValidationError(
                f"node {node_id!r}: kind {kind.name} not allowed in netlist graphs"
            )

    indeg = [0] * n
    outdeg = [0] * n
    for src, dst in edges:
        if not (0 <= src < n) or not (0 <= dst < n):
            raise ValidationError(f"edge ({src}, {dst}) references a missing node")
        if src == dst:
            raise ValidationError(f"self-loop on node index {src}")
        outdeg[src] += 1
        indeg[dst] += 1

    frozen_nodes = tuple(
        Node(node_id, kind, indeg[i], outdeg[i]) for i, (node_id, kind) in enumerate(nodes)
    )
    graph = DesignGraph(name, frozen_nodes, tuple((int(s), int(d)) for s, d in edges), source_kind)

    if source_kind is SourceKind.AIG and _longest_path(graph) is None:
        raise ValidationError("AIG-sourced graph contains a cycle")
    return graph


def _longest_path(graph: DesignGraph) -> Optional[int]:
    """Longest path length in edges via Kahn's algorithm; None if cyclic."""
    n = graph.node_count
    indeg = [node.in_degree for node in graph.nodes]
    succ: List[List[int]] = [[] for _ in range(n)]
    for src, dst in graph.edges:
        succ[src].append(dst)
    depth = [0] * n
    queue = [i for i in range(n) if indeg[i] == 0]
    visited = 0
    while queue:
        v = queue.pop()
        visited += 1
        for w in succ[v]:
            if depth[v] + 1 > depth[w]:
                depth[w] = depth[v] + 1
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if visited != n:
        return None
    return max(depth, default=0)


def build_features(graph: DesignGraph) -> np.ndarray:
    """Per-node feature rows: 6-way kind one-hot + log(1+in) + log(1+out).

    Row i belongs to node i; relabeling nodes permutes rows identically.
    """
    n = graph.node_count
    feats = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    for i, node in enumerate(graph.nodes):
        feats[i, node.kind.value] = 1.0
        feats[i, 6] = math.log1p(node.in_degree)
        feats[i, 7] = math.log1p(node.out_degree)
    return feats


@dataclass(frozen=True)
class GraphStats:
    name: str
    node_count: int
    edge_count: int
    kind_counts: Dict[str, int]
    max_fanout: int
    depth: Optional[int]  # None when the graph is cyclic

    def depth_label(self) -> str:
        return "cyclic" if self.depth is None else str(self.depth)


def graph_stats(graph: DesignGraph) -> GraphStats:
    kind_counts = Counter(node.kind.name for node in graph.nodes)
    max_fanout = max((node.out_degree for node in graph.nodes), default=0)
    return GraphStats(
        name=graph.name,
        node_count=graph.node_count,
        edge_count=graph.edge_count,
        kind_counts={k.name: kind_counts.get(k.name, 0) for k in NodeKind},
        max_fanout=max_fanout,
        depth=_longest_path(graph),
    )


def permute_graph(graph: DesignGraph, perm: Sequence[int]) -> DesignGraph:
    """Relabel nodes: node i moves to index perm[i]. Used for invariance tests."""
    n = graph.node_count
    if sorted(perm) != list(range(n)):
        raise ValidationError("perm is not a permutation of node indices")
    new_nodes: List[Tuple[str, NodeKind]] = [("", NodeKind.CELL)] * n
    for i, node in enumerate(graph.nodes):
        new_nodes[perm[i]] = (node.id, node.kind)
    new_edges = [(perm[s], perm[d]) for s, d in graph.edges]
    return make_graph(graph.name, new_nodes, new_edges, graph.source_kind)


# ---------------------------------------------------------------------------
# Canonical text dump: node table + edge list, stable ordering.

_DUMP_HEADER = "eda-graph v1"


def dump_graph(graph: DesignGraph) -> str:
    lines = [
        _DUMP_HEADER,
        f"name {graph.name}",
        f"source {graph.source_kind.value}",
        f"nodes {graph.node_count}",
    ]
    for i, node in enumerate(graph.nodes):
        lines.append(f"{i} {node.id} {_KIND_TOKEN[node.kind]}")
    lines.append(f"edges {graph.edge_count}")
    for src, dst in graph.edges:
        lines.append(f"{src} {dst}")
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> DesignGraph:
    lines = text.splitlines()
    pos = 0

    def expect(prefix: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"unexpected end of graph dump, expected {prefix!r}", pos + 1)
        line = lines[pos]
        pos += 1
        if not line.startswith(prefix):
            raise ParseError(f"expected {prefix!r}, got {line!r}", pos)
        return line[len(prefix):].strip()

    if pos >= len(lines) or lines[pos].strip() != _DUMP_HEADER:
        raise ParseError(f"missing {_DUMP_HEADER!r} header", 1)
    pos += 1
    name = expect("name ")
    source_token = expect("source ")
    try:
        source = SourceKind(source_token)
    except ValueError:
        raise ParseError(f"unknown source kind {source_token!r}", pos) from None

    try:
        n_nodes = int(expect("nodes "))
    except ValueError:
        raise ParseError("node count is not an integer", pos) from None
    nodes: List[Tuple[str, NodeKind]] = []
    for i in range(n_nodes):
        if pos >= len(lines):
            raise ParseError("node table truncated", pos + 1)
        parts = lines[pos].split()
        pos += 1
        if len(parts) != 3 or parts[0] != str(i) or parts[2] not in _TOKEN_KIND:
            raise ParseError(f"bad node line {lines[pos - 1]!r}", pos)
        nodes.append((parts[1], _TOKEN_KIND[parts[2]]))

    try:
        n_edges = int(expect("edges "))
    except ValueError:
        raise ParseError("edge count is not an integer", pos) from None
    edges: List[Tuple[int, int]] = []
    for _ in range(n_edges):
        if pos >= len(lines):
            raise ParseError("edge list truncated", pos + 1)
        parts = lines[pos].split()
        pos += 1
        try:
            src, dst = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise ParseError(f"bad edge line {lines[pos - 1]!r}", pos) from None
        edges.append((src, dst))

    return make_graph(name, nodes, edges, source)


def load_graph_file(path) -> DesignGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_graph(fh.read())
