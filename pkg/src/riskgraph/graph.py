"""Undirected road-segment graph, adjacency and exact k-order neighborhoods."""
import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RoadGraph:
    """Road segments indexed ``0..|V|-1`` in ``node_ids`` order.

    ``edges`` holds unordered index pairs as ``(lo, hi)`` with ``lo < hi``.
    ``coords`` is an optional ``(|V|, 2)`` array of planar centroids in meters.
    """

    node_ids: tuple
    edges: frozenset
    coords: np.ndarray | None = None
    _nbrs: tuple = field(default=(), repr=False, compare=False)

    @property
    def n_nodes(self):
        return len(self.node_ids)

    def index_of(self, road_id):
        return self._index[road_id]

    @property
    def _index(self):
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {r: i for i, r in enumerate(self.node_ids)}
            object.__setattr__(self, "_index_cache", idx)
        return idx

    def neighbors(self, node):
        return self._nbrs[node]

    def degree(self, node):
        return len(self._nbrs[node])

    def node_hash(self):
        """SHA-256 of the node ordering; guards checkpoints against reordering."""
        return hashlib.sha256("\n".join(map(str, self.node_ids)).encode("utf-8")).hexdigest()


def build_graph(node_ids, edge_list, coords=None):
    node_ids = tuple(str(r) for r in node_ids)
    index = {}
    for i, r in enumerate(node_ids):
        if r in index:
            raise GraphError(f"duplicate node id {r!r}")
        index[r] = i
    edges = set()
    for a, b in edge_list:
        a, b = str(a), str(b)
        for r in (a, b):
            if r not in index:
                raise GraphError(f"unknown node id {r!r} in edge list")
        i, j = index[a], index[b]
        if i != j:
            edges.add((min(i, j), max(i, j)))
    if coords is not None:
        coords = np.asarray(coords, dtype=float).reshape(len(node_ids), 2)
    nbrs = [set() for _ in node_ids]
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    return RoadGraph(node_ids, frozenset(edges), coords,
                     tuple(frozenset(s) for s in nbrs))


def neighbors_k(graph, node, order):
    """Nodes at shortest-path distance exactly ``order`` (1 or 2) from ``node``."""
    if order not in (1, 2):
        raise GraphError(f"order must be 1 or 2, got {order!r}")
    if not 0 <= node < graph.n_nodes:
        raise GraphError(f"invalid node index {node}")
    if order == 1:
        return set(graph.neighbors(node))
    first = graph.neighbors(node)
    second = set()
    for v in first:
        second.update(graph.neighbors(v))
    return second - first - {node}


def adjacency(graph, self_loops=False):
    """Dense symmetric 0/1 matrix; identity diagonal iff ``self_loops``."""
    A = np.zeros((graph.n_nodes, graph.n_nodes))
    if graph.edges:
        idx = np.array(sorted(graph.edges))
        A[idx[:, 0], idx[:, 1]] = 1.0
        A[idx[:, 1], idx[:, 0]] = 1.0
    if self_loops:
        np.fill_diagonal(A, 1.0)
    return A


# ---------------------------------------------------------------- CSV I/O


def read_graph(nodes_path, edges_path):
    """Load ``road_id,x,y`` nodes and ``road_id_a,road_id_b`` edges."""
    ids, xy = [], []
    with open(nodes_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "road_id" not in reader.fieldnames:
            raise GraphError(f"{nodes_path}: header must start with road_id")
        for line, row in enumerate(reader, start=2):
            rid = (row.get("road_id") or "").strip()
            if not rid:
                raise GraphError(f"{nodes_path}:{line}: empty road_id")
            ids.append(rid)
            x, y = (row.get("x") or "").strip(), (row.get("y") or "").strip()
            if x and y:
                try:
                    xy.append((float(x), float(y)))
                except ValueError:
                    raise GraphError(f"{nodes_path}:{line}: bad coordinates") from None
            else:
                xy.append(None)
    coords = None
    if xy and all(c is not None for c in xy):
        coords = np.array(xy)
    edges = []
    with open(edges_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["road_id_a", "road_id_b"]:
            raise GraphError(f"{edges_path}: header must be road_id_a,road_id_b")
        for line, row in enumerate(reader, start=2):
            a, b = (row["road_id_a"] or "").strip(), (row["road_id_b"] or "").strip()
            if not a or not b:
                raise GraphError(f"{edges_path}:{line}: missing endpoint")
            edges.append((a, b))
    try:
        return build_graph(ids, edges, coords)
    except GraphError as exc:
        raise GraphError(f"{edges_path}: {exc}") from None


def write_graph(graph, nodes_path, edges_path):
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id", "x", "y"])
        for i, rid in enumerate(graph.node_ids):
            if graph.coords is None:
                w.writerow([rid, "", ""])
            else:
                w.writerow([rid, repr(float(graph.coords[i, 0])), repr(float(graph.coords[i, 1]))])
    with open(edges_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id_a", "road_id_b"])
        for i, j in sorted(graph.edges):
            w.writerow([graph.node_ids[i], graph.node_ids[j]])
