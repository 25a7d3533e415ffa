"""Graph connectivity, distances and per-component statistics."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .constants import BFS_CHUNK, DIAMETER_EXACT_CAP
from .models import ComponentDecomposition, ComponentStats, Graph

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over 0..n-1 with union by rank, path compression and set sizes."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> int:
        """Merge the sets of x and y; return the surviving root."""
        x_root = self.find(x)
        y_root = self.find(y)
        if x_root == y_root:
            return x_root
        if self.rank[x_root] < self.rank[y_root]:
            x_root, y_root = y_root, x_root
        self.parent[y_root] = x_root
        self.size[x_root] += self.size[y_root]
        if self.rank[x_root] == self.rank[y_root]:
            self.rank[x_root] += 1
        return x_root

    def same(self, x: int, y: int) -> bool:
        return self.find(x) == self.find(y)

    def component_size(self, x: int) -> int:
        return self.size[self.find(x)]

    def __repr__(self) -> str:
        return f"UnionFind(n={len(self.parent)})"


def simple_edges(g: Graph) -> np.ndarray:
    """Distinct non-loop edges as sorted (u, v) rows with u < v."""
    e = g.edges[~g.loop_mask]
    if len(e) == 0:
        return np.empty((0, 2), dtype=np.int64)
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def simple_adjacency(g: Graph) -> sparse.csr_matrix:
    """Symmetric 0/1 adjacency ignoring multiplicity and loops."""
    e = simple_edges(g)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    data = np.ones(len(rows), dtype=np.int8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(g.n, g.n))


def components(g: Graph) -> ComponentDecomposition:
    """Components sorted by decreasing size, ties broken by smallest vertex id."""
    if g.n == 0:
        return ComponentDecomposition(labels=np.empty(0, dtype=np.int64), components=[])
    count, raw = csgraph.connected_components(simple_adjacency(g), directed=False)
    sizes = np.bincount(raw, minlength=count)
    first = np.full(count, g.n, dtype=np.int64)
    np.minimum.at(first, raw, np.arange(g.n))
    order = np.lexsort((first, -sizes))
    relabel = np.empty(count, dtype=np.int64)
    relabel[order] = np.arange(count)
    labels = relabel[raw]
    members = np.argsort(labels, kind="stable")
    bounds = np.cumsum(sizes[order])[:-1]
    return ComponentDecomposition(labels=labels, components=np.split(members, bounds))


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hop distances from source; inf for unreachable vertices."""
    if not 0 <= source < g.n:
        raise ValueError(f"Source {source} outside [0, {g.n})")
    return csgraph.shortest_path(
        simple_adjacency(g), directed=False, unweighted=True, indices=source
    )


def subgraph(g: Graph, vertices: Sequence[int]) -> Graph:
    """Induced subgraph relabelled to 0..len(vertices)-1 in the given order."""
    vertices = np.asarray(vertices, dtype=np.int64)
    index = np.full(g.n, -1, dtype=np.int64)
    index[vertices] = np.arange(len(vertices))
    mapped = index[g.edges]
    keep = (mapped >= 0).all(axis=1) if len(mapped) else np.zeros(0, dtype=bool)
    return Graph(len(vertices), mapped[keep])


def _peel_forest(
    n: int,
    edges: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    count: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted ordered distance sums and diameters of forest components by leaf peeling.

    Each removed leaf contributes 2 * w_side * (W - w_side) for the edge to its
    neighbour. A leaf's unique neighbour is the XOR of its remaining neighbours.
    """
    u, v = edges[:, 0], edges[:, 1]
    deg = np.bincount(u, minlength=n) + np.bincount(v, minlength=n)
    nbr = np.zeros(n, dtype=np.int64)
    np.bitwise_xor.at(nbr, u, v)
    np.bitwise_xor.at(nbr, v, u)
    w = weights.astype(float).copy()
    total = np.bincount(labels, weights=w, minlength=count)
    dsum = np.zeros(count)
    rounds = np.zeros(count, dtype=np.int64)
    paired = np.zeros(count, dtype=bool)

    r = 0
    while True:
        leaves = np.flatnonzero(deg == 1)
        if len(leaves) == 0:
            break
        r += 1
        parent = nbr[leaves]
        mutual = deg[parent] == 1
        if mutual.any():
            paired[labels[leaves[mutual]]] = True
            keep = ~mutual | (leaves < parent)
            leaves, parent = leaves[keep], parent[keep]
        comp = labels[leaves]
        side = w[leaves]
        np.add.at(dsum, comp, 2.0 * side * (total[comp] - side))
        np.add.at(w, parent, side)
        np.subtract.at(deg, parent, 1)
        np.bitwise_xor.at(nbr, parent, leaves)
        deg[leaves] = 0
        rounds[comp] = r

    return dsum, 2 * rounds - paired.astype(np.int64)


def _bfs_profile(
    adj: sparse.csr_matrix,
    weights: np.ndarray,
    exact_cap: int,
) -> Tuple[float, int, bool]:
    """Weighted distance sum and diameter of one connected component by repeated BFS."""
    size = adj.shape[0]
    sources = np.flatnonzero(weights > 0)
    if size <= exact_cap:
        dsum, diam = 0.0, 0
        for start in range(0, size, BFS_CHUNK):
            rows = np.arange(start, min(start + BFS_CHUNK, size))
            dist = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=rows)
            diam = max(diam, int(dist.max()))
            dsum += float(weights[rows] @ dist @ weights)
        return dsum, diam, True

    # Double sweep for the diameter, sampled sources for the distance sum
    first = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=0)
    far = int(np.argmax(first))
    diam = int(csgraph.shortest_path(adj, directed=False, unweighted=True, indices=far).max())
    if len(sources) == 0:
        dsum = 0.0
    else:
        picks = sources[np.linspace(0, len(sources) - 1, min(BFS_CHUNK, len(sources))).astype(np.int64)]
        dist = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=picks)
        dsum = float(weights[picks] @ dist @ weights) * len(sources) / len(picks)
    logger.warning(f"Component of size {size} above exact cap {exact_cap}; diameter {diam} is a lower bound")
    return dsum, diam, False


def distance_profile(
    g: Graph,
    decomp: Optional[ComponentDecomposition] = None,
    weights: Optional[np.ndarray] = None,
    max_components: Optional[int] = None,
    exact_cap: int = DIAMETER_EXACT_CAP,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-component weighted distance sums, diameters and exactness flags.

    The distance sum of a component C is sum_{a, b in C} w_a w_b d(a, b) over
    ordered pairs. Distances ignore multiplicity and loops.
    """
    decomp = decomp or components(g)
    k = decomp.count if max_components is None else min(max_components, decomp.count)
    weights = np.ones(g.n) if weights is None else np.asarray(weights, dtype=float)
    labels = decomp.labels
    sizes = decomp.sizes[:k]

    edges = simple_edges(g)
    edges = edges[labels[edges[:, 0]] < k] if len(edges) else edges
    simple_counts = np.bincount(labels[edges[:, 0]], minlength=k) if len(edges) else np.zeros(k, dtype=np.int64)
    is_tree = simple_counts == sizes - 1

    dsum = np.zeros(k)
    diam = np.zeros(k, dtype=np.int64)
    exact = np.ones(k, dtype=bool)

    tree_edges = edges[is_tree[labels[edges[:, 0]]]] if len(edges) else edges
    if len(tree_edges):
        peeled_sum, peeled_diam = _peel_forest(g.n, tree_edges, labels, weights, decomp.count)
        dsum[is_tree] = peeled_sum[:k][is_tree]
        diam[is_tree] = peeled_diam[:k][is_tree]

    cyclic = np.flatnonzero(~is_tree)
    if len(cyclic):
        adj = simple_adjacency(Graph(g.n, edges))
        for c in cyclic:
            verts = decomp.components[c]
            sub = adj[verts][:, verts]
            dsum[c], diam[c], exact[c] = _bfs_profile(sub, weights[verts], exact_cap)
    return dsum, diam, exact


def component_stats(
    g: Graph,
    decomp: Optional[ComponentDecomposition] = None,
    max_components: Optional[int] = None,
) -> List[ComponentStats]:
    """ComponentStats aligned with the decomposition (optionally only the largest few)."""
    decomp = decomp or components(g)
    k = decomp.count if max_components is None else min(max_components, decomp.count)
    sizes = decomp.sizes[:k]
    if g.num_edges:
        edge_counts = np.bincount(decomp.labels[g.edges[:, 0]], minlength=decomp.count)[:k]
    else:
        edge_counts = np.zeros(k, dtype=np.int64)
    dsum, diam, exact = distance_profile(g, decomp, max_components=k)
    return [
        ComponentStats(
            size=int(sizes[c]),
            edge_count=int(edge_counts[c]),
            surplus=int(edge_counts[c] - sizes[c] + 1),
            diameter=int(diam[c]),
            distance_sum=float(dsum[c]),
            exact=bool(exact[c]),
        )
        for c in range(k)
    ]
