"""Undirected AS graphs built from observed paths and their connectivity metrics.

G1 holds every observed adjacency. G2 drops edges touching ROV-enforcing
ASes; G3 drops IXP edges suspected to run over a filtering routeserver.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .ingest import MeasuredPath
from .rpki import MalformedRecord, Verdict, iter_records

DIRECT = "direct"
INDIRECT = "indirect"

# components above this size use a sparse eigensolver
DENSE_EIGEN_LIMIT = 400


class EmptyGraph(ValueError):
    pass


@dataclass
class Edge:
    kind: str = DIRECT
    ixp_id: int | None = None
    valid: int = 0
    invalid: int = 0


@dataclass
class PathGraph:
    vertices: set[int] = field(default_factory=set)
    edges: dict[tuple[int, int], Edge] = field(default_factory=dict)

    def add_edge(self, u: int, v: int, kind: str = DIRECT, ixp_id: int | None = None) -> Edge:
        if u == v:
            raise ValueError(f"self-loop on {u}")
        key = (min(u, v), max(u, v))
        self.vertices.update(key)
        edge = self.edges.get(key)
        if edge is None:
            edge = self.edges[key] = Edge(kind, ixp_id)
        elif kind == DIRECT and edge.kind != DIRECT:
            # once seen as a direct adjacency the edge cannot be a routeserver edge
            edge.kind, edge.ixp_id = DIRECT, None
        return edge

    def copy_without(self, drop: Iterable[tuple[int, int]]) -> "PathGraph":
        drop = set(drop)
        g = PathGraph(set(self.vertices))
        for key, e in self.edges.items():
            if key not in drop:
                g.edges[key] = Edge(e.kind, e.ixp_id, e.valid, e.invalid)
        return g


def build_g1(paths: Iterable[MeasuredPath]) -> PathGraph:
    g = PathGraph()
    for p in paths:
        hops = list(p.hops)
        touched: dict[tuple[int, int], Edge] = {}
        for h in hops:
            if h is not None and h > 0:
                g.vertices.add(h)
        for i in range(len(hops) - 1):
            a, b = hops[i], hops[i + 1]
            if a is None or b is None or a <= 0:
                continue
            if b > 0 and a != b:
                touched[(min(a, b), max(a, b))] = g.add_edge(a, b, DIRECT)
            elif b < 0 and i + 2 < len(hops):
                c = hops[i + 2]
                if c is not None and c > 0 and c != a:
                    touched[(min(a, c), max(a, c))] = g.add_edge(a, c, INDIRECT, -b)
        for edge in touched.values():
            if p.verdict is Verdict.VALID:
                edge.valid += 1
            elif p.verdict is Verdict.INVALID:
                edge.invalid += 1
    return g


def derive_g2(g1: PathGraph, enforcing: Iterable[int]) -> PathGraph:
    enforcing = set(enforcing)
    return g1.copy_without(k for k in g1.edges if k[0] in enforcing or k[1] in enforcing)


def routeserver_edges(g: PathGraph) -> set[tuple[int, int]]:
    return {k for k, e in g.edges.items() if e.kind == INDIRECT and e.invalid == 0}


def derive_g3(g1: PathGraph, rs_edges: Iterable[tuple[int, int]] | None = None) -> PathGraph:
    if rs_edges is None:
        rs_edges = routeserver_edges(g1)
    return g1.copy_without((min(u, v), max(u, v)) for u, v in rs_edges)


@dataclass
class GraphMetrics:
    vertex_count: int
    edge_count: int
    component_count: int
    largest_component_size: int
    avg_node_degree: float
    avg_algebraic_connectivity: float
    avg_shortest_path_length: float
    avg_longest_path_length: float

    @property
    def avg_degree_2e_v(self) -> float:
        return 2 * self.edge_count / self.vertex_count


def _adjacency(g: PathGraph) -> tuple[list[int], scipy.sparse.csr_matrix]:
    order = sorted(g.vertices)
    index = {v: i for i, v in enumerate(order)}
    n = len(order)
    rows = [index[u] for u, _ in g.edges] + [index[v] for _, v in g.edges]
    cols = [index[v] for _, v in g.edges] + [index[u] for u, _ in g.edges]
    adj = scipy.sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return order, adj


def fiedler_value(adj: scipy.sparse.spmatrix) -> float:
    """Second-smallest Laplacian eigenvalue of a connected graph."""
    n = adj.shape[0]
    if n < 2:
        raise ValueError("algebraic connectivity needs at least two vertices")
    lap = scipy.sparse.csgraph.laplacian(adj.astype(float))
    if n <= DENSE_EIGEN_LIMIT:
        dense = lap.toarray()
        return float(scipy.linalg.eigh(dense, eigvals_only=True, subset_by_index=[1, 1])[0])
    vals = scipy.sparse.linalg.eigsh(lap, k=2, sigma=-1e-3, which="LM", return_eigenvectors=False)
    return float(sorted(vals)[1])


# BFS sources handled per bit-parallel sweep (64 per machine word)
SOURCE_BLOCK = 4096


def distance_totals(adj: scipy.sparse.csr_matrix) -> tuple[int, int, np.ndarray]:
    """All-pairs BFS: (sum of distances, reachable ordered pairs, eccentricities).

    Each source owns one bit; a level expands every source's frontier at
    once by OR-ing the neighbours' frontier words.
    """
    n = adj.shape[0]
    indptr, indices = adj.indptr, adj.indices
    nonempty = np.flatnonzero(np.diff(indptr))
    starts = indptr[nonempty]
    total = pairs = 0
    ecc = np.zeros(n, dtype=np.int64)
    for lo in range(0, n, SOURCE_BLOCK):
        sources = np.arange(lo, min(n, lo + SOURCE_BLOCK))
        words = (len(sources) + 63) // 64
        visited = np.zeros((n, words), dtype=np.uint64)
        offs = sources - lo
        visited[sources, offs // 64] = np.left_shift(np.uint64(1), (offs % 64).astype(np.uint64))
        frontier = visited.copy()
        depth = 0
        while True:
            depth += 1
            reached = np.zeros_like(visited)
            if len(indices):
                reached[nonempty] = np.bitwise_or.reduceat(frontier[indices], starts, axis=0)
            new = reached & ~visited
            count = int(np.bitwise_count(new).sum())
            if count == 0:
                break
            total += depth * count
            pairs += count
            alive = np.unpackbits(np.bitwise_or.reduce(new, axis=0).view(np.uint8), bitorder="little")
            ecc[sources[alive[: len(sources)].astype(bool)]] = depth
            visited |= new
            frontier = new
    return total, pairs, ecc


def metrics(g: PathGraph) -> GraphMetrics:
    """Connectivity metrics; degree is reported as edges per vertex."""
    if not g.vertices:
        raise EmptyGraph("graph has no vertices")
    order, adj = _adjacency(g)
    n = len(order)
    n_comp, labels = scipy.sparse.csgraph.connected_components(adj, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    total, pairs, ecc = distance_totals(adj)
    fiedlers = []
    for c in np.flatnonzero(sizes >= 2):
        members = np.flatnonzero(labels == c)
        fiedlers.append(fiedler_value(adj[members][:, members]))
    return GraphMetrics(
        vertex_count=n,
        edge_count=len(g.edges),
        component_count=int(n_comp),
        largest_component_size=int(sizes.max()),
        avg_node_degree=len(g.edges) / n,
        avg_algebraic_connectivity=float(np.mean(fiedlers)) if fiedlers else 0.0,
        avg_shortest_path_length=total / pairs if pairs else 0.0,
        avg_longest_path_length=float(ecc.mean()),
    )


def tree_depth(graph: PathGraph | Mapping[int, Iterable[int]], tier1: Iterable[int]) -> dict[int, int | None]:
    """Minimum hop count from any tier-1 root.

    A ``PathGraph`` is walked undirected; a mapping is treated as directed
    adjacency (e.g. provider -> customers).
    """
    roots = set(tier1)
    if not roots:
        raise ValueError("at least one tier-1 root is required")
    if isinstance(graph, PathGraph):
        adj: dict[int, set[int]] = {v: set() for v in graph.vertices}
        for u, v in graph.edges:
            adj[u].add(v)
            adj[v].add(u)
    else:
        adj = {u: set(vs) for u, vs in graph.items()}
        for vs in list(adj.values()):
            for v in vs:
                adj.setdefault(v, set())
    for r in roots:
        adj.setdefault(r, set())
    depth: dict[int, int | None] = {v: None for v in adj}
    queue = deque()
    for r in sorted(roots):
        depth[r] = 0
        queue.append(r)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if depth[v] is None:
                depth[v] = depth[u] + 1
                queue.append(v)
    return depth


METRIC_ROWS = [
    ("Vertices", "vertex_count"),
    ("Edges", "edge_count"),
    ("Components", "component_count"),
    ("Largest Component", "largest_component_size"),
    ("Avg. Node-Degree", "avg_node_degree"),
    ("Avg. Node-Degree (2E/V)", "avg_degree_2e_v"),
    ("Avg. Algebraic-Connectivity", "avg_algebraic_connectivity"),
    ("Avg. Shortest-Path Length", "avg_shortest_path_length"),
    ("Avg. Longest-Path Length", "avg_longest_path_length"),
]


def _cell(value) -> str:
    return str(value) if isinstance(value, int) else f"{value:.2f}"


def write_metrics_report(path: str | Path, table: Mapping[str, GraphMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", *table])
        for label, attr in METRIC_ROWS:
            w.writerow([label, *(_cell(getattr(m, attr)) for m in table.values())])


def format_metrics_table(table: Mapping[str, GraphMetrics]) -> str:
    width = max(len(label) for label, _ in METRIC_ROWS) + 2
    lines = ["Graph Parameters".ljust(width) + "".join(name.rjust(10) for name in table)]
    for label, attr in METRIC_ROWS:
        lines.append(label.ljust(width) + "".join(_cell(getattr(m, attr)).rjust(10) for m in table.values()))
    return "\n".join(lines)


EDGE_FIELDS = ["asn1", "asn2", "kind", "ixp_id", "valid", "invalid"]


def write_edges(path: str | Path, g: PathGraph) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for (u, v), e in sorted(g.edges.items()):
            w.writerow([u, v, e.kind, "" if e.ixp_id is None else e.ixp_id, e.valid, e.invalid])


def read_edges(path: str | Path, strict: bool = False) -> PathGraph:
    g = PathGraph()
    for lineno, line in iter_records(path, strict):
        parts = line.split(",")
        try:
            if len(parts) == 2:
                g.add_edge(int(parts[0]), int(parts[1]))
                continue
            if len(parts) != 6:
                raise ValueError(f"expected 6 fields, got {len(parts)}")
            u, v, kind, ixp, valid, invalid = parts
            if kind not in (DIRECT, INDIRECT):
                raise ValueError(f"unknown edge kind {kind!r}")
            e = g.add_edge(int(u), int(v), kind, int(ixp) if ixp else None)
            e.valid += int(valid)
            e.invalid += int(invalid)
        except ValueError as exc:
            raise MalformedRecord(str(exc), lineno, str(path)) from exc
    return g
