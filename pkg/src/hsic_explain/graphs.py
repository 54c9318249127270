"""Graph containers and structural operations.

Graphs are undirected, simple (no self loops, no parallel edges), with an
optional dense feature row per node.  A graph series is an ordered tuple of
snapshots sharing the node count.  Both are immutable so they can be hashed
and used as cache keys by prediction caches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np


class GraphSchemaError(ValueError):
    """Invalid graph JSON.  `path` points at the offending element."""

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


def _canonical_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with node features.

    Edges are stored canonically: each pair ordered (u, v) with u < v, and
    the tuple sorted lexicographically.  `features` has shape
    (num_nodes, d); d may be 0 for structure-only graphs.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be >= 1")
        canon = []
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise ValueError(f"self loop at node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u},{v}) references a missing node")
            canon.append(_canonical_edge(u, v))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(canon))
        feats = self.features
        if feats is None:
            feats = np.zeros((self.num_nodes, 0))
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(self.num_nodes, -1) if feats.size else feats.reshape(self.num_nodes, 0)
        if feats.shape[0] != self.num_nodes:
            raise ValueError(
                f"features has {feats.shape[0]} rows for {self.num_nodes} nodes"
            )
        if feats.size and not np.all(np.isfinite(feats)):
            raise ValueError("features contain NaN or Inf")
        feats = np.ascontiguousarray(feats)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Sorted neighbor lists, one per node."""
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(n)) for n in adj)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return _canonical_edge(u, v) in self.edge_set

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.num_nodes, self.edges, features)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.edges == other.edges
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    def __hash__(self) -> int:
        return hash((self.num_nodes, self.edges, self.features.tobytes()))

    def connected_components(self) -> list[list[int]]:
        """Components as sorted node lists, ordered by smallest member."""
        seen = [False] * self.num_nodes
        comps = []
        for s in range(self.num_nodes):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self.adjacency[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.connected_components()) == 1

    def cut_edges(self) -> frozenset[tuple[int, int]]:
        """Edges whose removal disconnects their component (bridges).

        Iterative lowlink DFS; safe for graphs far beyond the recursion limit.
        """
        n = self.num_nodes
        disc = [-1] * n
        low = [0] * n
        out: set[tuple[int, int]] = set()
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            # stack holds (node, parent, neighbor iterator)
            stack: list[tuple[int, int, Iterator[int]]] = []
            disc[root] = low[root] = timer
            timer += 1
            stack.append((root, -1, iter(self.adjacency[root])))
            while stack:
                v, parent, it = stack[-1]
                advanced = False
                for w in it:
                    if w == parent:
                        # skip one edge back to the parent; simple graph
                        parent = -2
                        stack[-1] = (v, parent, it)
                        continue
                    if disc[w] == -1:
                        disc[w] = low[w] = timer
                        timer += 1
                        stack.append((w, v, iter(self.adjacency[w])))
                        advanced = True
                        break
                    low[v] = min(low[v], disc[w])
                if advanced:
                    continue
                stack.pop()
                if stack:
                    pv = stack[-1][0]
                    low[pv] = min(low[pv], low[v])
                    if low[v] > disc[pv]:
                        out.add(_canonical_edge(pv, v))
        return frozenset(out)


@dataclass(frozen=True)
class GraphSeries:
    """Fixed-length sequence of graph snapshots over a shared node set."""

    snapshots: tuple[Graph, ...]

    def __post_init__(self):
        if len(self.snapshots) < 1:
            raise ValueError("series needs at least one snapshot")
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        n = self.snapshots[0].num_nodes
        for i, g in enumerate(self.snapshots):
            if g.num_nodes != n:
                raise ValueError(f"snapshot {i} has {g.num_nodes} nodes, expected {n}")

    @property
    def num_nodes(self) -> int:
        return self.snapshots[0].num_nodes

    def __len__(self) -> int:
        return len(self.snapshots)

    def __hash__(self) -> int:
        return hash(self.snapshots)


@dataclass(frozen=True, order=True)
class UnitId:
    """Identity of an explainable unit: one node, edge, or (node, time) pair.

    Ordering is by (kind, index); within a single explanation every unit has
    the same kind, so ties in score break by ascending index.
    """

    kind: str
    index: tuple[int, ...]

    KINDS = ("node", "edge", "node_time")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown unit kind {self.kind!r}")
        want = 1 if self.kind == "node" else 2
        if len(self.index) != want:
            raise ValueError(f"{self.kind} unit needs {want} indices")
        if self.kind == "edge" and not self.index[0] < self.index[1]:
            raise ValueError("edge unit must be ordered (u, v) with u < v")

    @staticmethod
    def node(v: int) -> "UnitId":
        return UnitId("node", (v,))

    @staticmethod
    def edge(u: int, v: int) -> "UnitId":
        return UnitId("edge", _canonical_edge(u, v))

    @staticmethod
    def node_time(v: int, t: int) -> "UnitId":
        return UnitId("node_time", (v, t))

    @property
    def key(self) -> str:
        if self.kind == "node":
            return f"node:{self.index[0]}"
        if self.kind == "edge":
            return f"edge:{self.index[0]}-{self.index[1]}"
        return f"node:{self.index[0]}@t{self.index[1]}"

    @staticmethod
    def from_key(key: str) -> "UnitId":
        try:
            head, rest = key.split(":", 1)
            if head == "edge":
                u, v = rest.split("-")
                return UnitId.edge(int(u), int(v))
            if head == "node" and "@t" in rest:
                v, t = rest.split("@t")
                return UnitId.node_time(int(v), int(t))
            if head == "node":
                return UnitId.node(int(rest))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"unparseable unit key {key!r}") from exc
        raise ValueError(f"unparseable unit key {key!r}")


# ---------------------------------------------------------------------------
# JSON parsing and serialization


def _load_strict_json(text: str) -> object:
    def reject(token):
        raise GraphSchemaError(f"non-finite literal {token!r} not permitted")

    try:
        return json.loads(text, parse_constant=reject)
    except json.JSONDecodeError as exc:
        raise GraphSchemaError(f"invalid JSON: {exc.msg}", "$") from exc


def _graph_from_obj(obj: object, path: str = "$") -> Graph:
    if not isinstance(obj, dict):
        raise GraphSchemaError("expected an object", path)
    for key in ("num_nodes", "edges", "features"):
        if key not in obj:
            raise GraphSchemaError(f"missing required field {key!r}", path)
    n = obj["num_nodes"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise GraphSchemaError("num_nodes must be a positive integer", f"{path}.num_nodes")
    raw_edges = obj["edges"]
    if not isinstance(raw_edges, list):
        raise GraphSchemaError("edges must be an array", f"{path}.edges")
    edges = []
    seen = set()
    for i, e in enumerate(raw_edges):
        epath = f"{path}.edges[{i}]"
        if (
            not isinstance(e, list)
            or len(e) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)
        ):
            raise GraphSchemaError("edge must be a pair of integers", epath)
        u, v = e
        if u == v:
            raise GraphSchemaError(f"self loop at node {u}", epath)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphSchemaError(f"edge references missing node (num_nodes={n})", epath)
        c = _canonical_edge(u, v)
        if c in seen:
            raise GraphSchemaError(f"duplicate edge {list(c)}", epath)
        seen.add(c)
        edges.append(c)
    raw_feats = obj["features"]
    if not isinstance(raw_feats, list):
        raise GraphSchemaError("features must be an array", f"{path}.features")
    if len(raw_feats) != n:
        raise GraphSchemaError(
            f"features has {len(raw_feats)} rows for {n} nodes", f"{path}.features"
        )
    width = None
    rows = []
    for i, row in enumerate(raw_feats):
        rpath = f"{path}.features[{i}]"
        if not isinstance(row, list):
            raise GraphSchemaError("feature row must be an array", rpath)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphSchemaError(
                f"feature row has length {len(row)}, expected {width}", rpath
            )
        vals = []
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise GraphSchemaError("feature must be a number", f"{rpath}[{j}]")
            if not np.isfinite(x):
                raise GraphSchemaError("feature must be finite", f"{rpath}[{j}]")
            vals.append(float(x))
        rows.append(vals)
    feats = np.array(rows, dtype=np.float64) if width else np.zeros((n, 0))
    return Graph(n, tuple(edges), feats)


def parse_graph(text: str) -> Graph:
    """Parse a graph from its JSON document."""
    return _graph_from_obj(_load_strict_json(text))


def parse_series(text: str) -> GraphSeries:
    """Parse a graph series from its JSON document."""
    obj = _load_strict_json(text)
    if not isinstance(obj, dict) or "snapshots" not in obj:
        raise GraphSchemaError("expected an object with a snapshots field", "$")
    raw = obj["snapshots"]
    if not isinstance(raw, list) or not raw:
        raise GraphSchemaError("snapshots must be a non-empty array", "$.snapshots")
    snaps = [_graph_from_obj(s, f"$.snapshots[{i}]") for i, s in enumerate(raw)]
    n = snaps[0].num_nodes
    for i, g in enumerate(snaps):
        if g.num_nodes != n:
            raise GraphSchemaError(
                f"snapshot has {g.num_nodes} nodes, expected {n}",
                f"$.snapshots[{i}].num_nodes",
            )
    return GraphSeries(tuple(snaps))


def graph_to_obj(g: Graph) -> dict:
    return {
        "num_nodes": g.num_nodes,
        "edges": [list(e) for e in g.edges],
        "features": [[float(x) for x in row] for row in g.features],
    }


def series_to_obj(s: GraphSeries) -> dict:
    return {"snapshots": [graph_to_obj(g) for g in s.snapshots]}


def to_obj(target: Graph | GraphSeries) -> dict:
    return graph_to_obj(target) if isinstance(target, Graph) else series_to_obj(target)


def canonical_json(target: Graph | GraphSeries) -> str:
    """Deterministic serialization; equal inputs produce equal strings."""
    return json.dumps(to_obj(target), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Structural edits


def remove_nodes(g: Graph, victims: Iterable[int]) -> tuple[Graph, dict[int, int]]:
    """Delete nodes and their incident edges.

    Returns the reduced graph plus the relabeling map from surviving old
    indices to new indices (survivors keep their relative order).
    """
    vs = set(victims)
    for v in vs:
        if not (0 <= v < g.num_nodes):
            raise ValueError(f"victim node {v} out of range")
    if len(vs) >= g.num_nodes:
        raise ValueError("cannot remove every node")
    keep = [v for v in range(g.num_nodes) if v not in vs]
    relabel = {old: new for new, old in enumerate(keep)}
    edges = tuple(
        (relabel[u], relabel[v]) for u, v in g.edges if u not in vs and v not in vs
    )
    feats = g.features[keep] if g.num_features else None
    return Graph(len(keep), edges, feats), relabel


def remove_edges(g: Graph, victims: Iterable[tuple[int, int]]) -> Graph:
    """Delete edges; node set and features are untouched."""
    vs = {_canonical_edge(u, v) for u, v in victims}
    missing = vs - g.edge_set
    if missing:
        raise ValueError(f"edge {sorted(missing)[0]} not present")
    return Graph(g.num_nodes, tuple(e for e in g.edges if e not in vs), g.features)


def random_walk(g: Graph, start: int, length: int, rng: np.random.Generator) -> list[int]:
    """Uniform random walk; the result lists the visited nodes in order.

    At most length steps are taken, so the list has at most length + 1
    entries starting with `start`.  The walk stops early at a node with no
    neighbors.
    """
    if not (0 <= start < g.num_nodes):
        raise ValueError(f"start node {start} out of range")
    if length < 0:
        raise ValueError("length must be >= 0")
    path = [start]
    cur = start
    for _ in range(length):
        nbrs = g.adjacency[cur]
        if not nbrs:
            break
        cur = nbrs[rng.integers(len(nbrs))]
        path.append(cur)
    return path
