"""Measured metric spaces: scaling, distortion, GHP distance and blob expansion."""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csgraph

from .constants import BLOB_SAMPLE_CAP, GHP_EXACT_CAP, METRIC_TOL
from .graphcore import simple_adjacency, subgraph
from .models import BlobConfig, Graph, MeasuredMetricSpace

logger = logging.getLogger(__name__)

Correspondence = Sequence[Tuple[int, int]]


def scl(alpha: float, beta: float, X: MeasuredMetricSpace) -> MeasuredMetricSpace:
    """Distances times alpha, masses times beta."""
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"Scaling factors must be positive, got ({alpha}, {beta})")
    return MeasuredMetricSpace(dist=alpha * X.dist, mass=beta * X.mass)


def _check_correspondence(C: Correspondence, n1: int, n2: int) -> np.ndarray:
    pairs = np.asarray(list(C), dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("Correspondence is empty")
    if set(pairs[:, 0].tolist()) != set(range(n1)) or set(pairs[:, 1].tolist()) != set(range(n2)):
        raise ValueError("Not a correspondence: some point is left uncovered")
    return pairs


def distortion(C: Correspondence, X1: MeasuredMetricSpace, X2: MeasuredMetricSpace) -> float:
    """sup |d1(x1, y1) - d2(x2, y2)| over pairs (x1, x2), (y1, y2) in C."""
    pairs = _check_correspondence(C, X1.n_points, X2.n_points)
    a, b = pairs[:, 0], pairs[:, 1]
    return float(np.max(np.abs(X1.dist[np.ix_(a, a)] - X2.dist[np.ix_(b, b)])))


def _coupling_value(X1: MeasuredMetricSpace, X2: MeasuredMetricSpace, inside: np.ndarray) -> float:
    """min over couplings pi of max(||mu1 - pi_1|| + ||mu2 - pi_2||, pi(outside C)).

    Variables: pi (n1 n2), slacks s1 (n1), s2 (n2), level t.
    """
    n1, n2 = X1.n_points, X2.n_points
    npi = n1 * n2
    nvar = npi + n1 + n2 + 1
    rows, rhs = [], []

    for i in range(n1):
        row = np.zeros(nvar)
        row[i * n2:(i + 1) * n2] = -1.0
        row[npi + i] = -1.0
        rows.append(row)
        rhs.append(-X1.mass[i])
        rows.append(-row - 2 * np.eye(nvar)[npi + i])
        rhs.append(X1.mass[i])
    for j in range(n2):
        row = np.zeros(nvar)
        row[j:npi:n2] = -1.0
        row[npi + n1 + j] = -1.0
        rows.append(row)
        rhs.append(-X2.mass[j])
        rows.append(-row - 2 * np.eye(nvar)[npi + n1 + j])
        rhs.append(X2.mass[j])

    discrepancy = np.zeros(nvar)
    discrepancy[npi:npi + n1 + n2] = 1.0
    discrepancy[-1] = -1.0
    rows.append(discrepancy)
    rhs.append(0.0)
    outside = np.zeros(nvar)
    outside[:npi] = (~inside).ravel().astype(float)
    outside[-1] = -1.0
    rows.append(outside)
    rhs.append(0.0)

    cost = np.zeros(nvar)
    cost[-1] = 1.0
    result = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=(0, None), method="highs")
    if not result.success:
        raise RuntimeError(f"Coupling LP failed: {result.message}")
    return float(result.fun)


def _maximal_cliques(adj: List[int]) -> List[int]:
    """Bron-Kerbosch with pivoting over bitmask adjacency."""
    found: List[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if not p and not x:
            found.append(r)
            return
        pivot_pool = p | x
        pivot = pivot_pool.bit_length() - 1
        candidates = p & ~adj[pivot]
        while candidates:
            v = candidates.bit_length() - 1
            bit = 1 << v
            expand(r | bit, p & adj[v], x & adj[v])
            p &= ~bit
            x |= bit
            candidates &= ~bit

    expand(0, (1 << len(adj)) - 1, 0)
    return found


def ghp_exact(X1: MeasuredMetricSpace, X2: MeasuredMetricSpace) -> float:
    """Exact GHP distance of two small spaces, optimising jointly over correspondences and couplings.

    Candidate levels are the half-distortions of single pair-pairs. At each
    level the best correspondences are the maximal covering cliques of the
    compatibility graph; the level is located by bisection.
    """
    n1, n2 = X1.n_points, X2.n_points
    if n1 * n2 > GHP_EXACT_CAP:
        raise ValueError(f"Exact GHP limited to n1 * n2 <= {GHP_EXACT_CAP}, got {n1 * n2}; use ghp_bounds")
    nodes = [(i, j) for i in range(n1) for j in range(n2)]
    gap = np.abs(
        X1.dist[np.ix_([i for i, _ in nodes], [i for i, _ in nodes])]
        - X2.dist[np.ix_([j for _, j in nodes], [j for _, j in nodes])]
    )
    levels = np.unique(np.concatenate([[0.0], 0.5 * gap.ravel()]))
    cover1 = [sum(1 << k for k, (i, _) in enumerate(nodes) if i == a) for a in range(n1)]
    cover2 = [sum(1 << k for k, (_, j) in enumerate(nodes) if j == b) for b in range(n2)]
    cache: Dict[int, float] = {}

    def best_coupling(level_index: int) -> float:
        if level_index in cache:
            return cache[level_index]
        eps = levels[level_index]
        compatible = 0.5 * gap <= eps + METRIC_TOL
        adj = [sum(1 << int(m) for m in np.flatnonzero(compatible[k]) if m != k) for k in range(len(nodes))]
        value = np.inf
        for clique in _maximal_cliques(adj):
            if all(clique & c for c in cover1) and all(clique & c for c in cover2):
                inside = np.array([(clique >> k) & 1 for k in range(len(nodes))], dtype=bool).reshape(n1, n2)
                value = min(value, _coupling_value(X1, X2, inside))
        cache[level_index] = value
        return value

    # smallest level whose best coupling value drops to the level itself
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if best_coupling(mid) <= levels[mid] + METRIC_TOL:
            hi = mid
        else:
            lo = mid + 1
    value = max(levels[lo], best_coupling(lo))
    if lo > 0:
        value = min(value, max(levels[lo - 1], best_coupling(lo - 1)))
    return float(value)


def _farthest_point_order(X: MeasuredMetricSpace) -> np.ndarray:
    start = int(np.argmax(X.dist.max(axis=1)))
    order = [start]
    reach = X.dist[start].copy()
    for _ in range(X.n_points - 1):
        reach[order] = -1.0
        nxt = int(np.argmax(reach))
        order.append(nxt)
        reach = np.minimum(np.where(reach < 0, -1.0, reach), X.dist[nxt])
        reach[order] = -1.0
    return np.array(order, dtype=np.int64)


def _correspondence_value(X1: MeasuredMetricSpace, X2: MeasuredMetricSpace, pairs: np.ndarray) -> float:
    inside = np.zeros((X1.n_points, X2.n_points), dtype=bool)
    inside[pairs[:, 0], pairs[:, 1]] = True
    return max(0.5 * distortion(pairs, X1, X2), _coupling_value(X1, X2, inside))


def ghp_bounds(X1: MeasuredMetricSpace, X2: MeasuredMetricSpace) -> Tuple[float, float]:
    """Cheap lower and upper bounds on the GHP distance.

    Lower: half the diameter gap and the total-mass gap, both forced on any
    correspondence and coupling. Upper: the better of the full correspondence
    and a farthest-point matching, each with its optimal coupling.
    """
    lower = max(0.5 * abs(X1.diameter - X2.diameter), abs(X1.total_mass - X2.total_mass))
    full = np.array([(i, j) for i in range(X1.n_points) for j in range(X2.n_points)], dtype=np.int64)
    upper = _correspondence_value(X1, X2, full)

    o1, o2 = _farthest_point_order(X1), _farthest_point_order(X2)
    k = max(len(o1), len(o2))
    matched = np.array([(o1[i % len(o1)], o2[i % len(o2)]) for i in range(k)], dtype=np.int64)
    upper = min(upper, _correspondence_value(X1, X2, matched))

    if lower > upper:
        logger.warning(f"GHP bounds crossed ({lower:.6g} > {upper:.6g}); clamping lower to upper")
        lower = upper
    return lower, upper


def graph_metric_space(
    g: Graph,
    vertices: Optional[Sequence[int]] = None,
    masses: Optional[Sequence[float]] = None,
) -> MeasuredMetricSpace:
    """Graph distance on a connected vertex set, unit masses by default."""
    sub = g if vertices is None else subgraph(g, vertices)
    dist = csgraph.shortest_path(simple_adjacency(sub), directed=False, unweighted=True)
    if np.isinf(dist).any():
        raise ValueError("Vertex set is not connected")
    mass = np.ones(sub.n) if masses is None else np.asarray(masses, dtype=float)
    return MeasuredMetricSpace(dist=dist, mass=mass)


def mean_distance(X: MeasuredMetricSpace) -> float:
    """E d(A, B) for A, B independent with law mass / total."""
    p = X.mass / X.total_mass
    return float(p @ X.dist @ p)


def blob_scaling_factor(weights: Sequence[float], u: Sequence[float]) -> float:
    """sigma2^2 / (sigma2 + sum x_i^2 u_i)."""
    x = np.asarray(weights, dtype=float)
    sigma2 = float(np.sum(x ** 2))
    return sigma2 ** 2 / (sigma2 + float(np.sum(x ** 2 * np.asarray(u, dtype=float))))


def config_scaling_factor(cfg: BlobConfig) -> float:
    return blob_scaling_factor(cfg.weights, [mean_distance(b) for b in cfg.blobs])


def blob_expand(
    cfg: BlobConfig,
    rng: Optional[np.random.Generator] = None,
    sample_cap: int = BLOB_SAMPLE_CAP,
) -> Tuple[MeasuredMetricSpace, np.ndarray]:
    """Replace each superstructure vertex by its blob, joining junction points by unit edges.

    Blobs above sample_cap points keep their junction points plus a random
    sample (needs rng); each kept point carries x_i times its renormalised blob
    mass. Returns the expanded space and the blob index of every point.
    """
    g = cfg.graph
    needed: List[set] = [set() for _ in range(g.n)]
    for u, v in g.edges:
        u, v = int(u), int(v)
        if u == v:
            continue
        for a, b in ((u, v), (v, u)):
            if (a, b) not in cfg.junctions:
                raise ValueError(f"Missing junction point for blob pair ({a}, {b})")
            needed[a].add(cfg.junctions[(a, b)])

    for i, blob in enumerate(cfg.blobs):
        off_diagonal = blob.dist[~np.eye(blob.n_points, dtype=bool)]
        if np.any(off_diagonal <= 0):
            raise ValueError(f"Blob {i} has distinct points at distance zero; merge them first")

    kept: List[np.ndarray] = []
    for i, blob in enumerate(cfg.blobs):
        if blob.n_points <= sample_cap:
            kept.append(np.arange(blob.n_points))
            continue
        if rng is None:
            raise ValueError(f"Blob {i} has {blob.n_points} points; sampling needs an rng")
        rest = np.setdiff1d(np.arange(blob.n_points), sorted(needed[i]))
        extra = rng.choice(rest, size=max(0, sample_cap - len(needed[i])), replace=False)
        kept.append(np.sort(np.concatenate([sorted(needed[i]), extra]).astype(np.int64)))

    offsets = np.concatenate([[0], np.cumsum([len(k) for k in kept])])
    total = int(offsets[-1])
    weight = np.zeros((total, total))
    mass = np.zeros(total)
    owner = np.zeros(total, dtype=np.int64)
    local: List[Dict[int, int]] = []
    for i, (blob, points) in enumerate(zip(cfg.blobs, kept)):
        lo, hi = offsets[i], offsets[i + 1]
        weight[lo:hi, lo:hi] = blob.dist[np.ix_(points, points)]
        share = blob.mass[points]
        mass[lo:hi] = cfg.weights[i] * share / share.sum()
        owner[lo:hi] = i
        local.append({int(p): lo + k for k, p in enumerate(points)})

    for u, v in g.edges:
        u, v = int(u), int(v)
        if u == v:
            continue
        a = local[u][cfg.junctions[(u, v)]]
        b = local[v][cfg.junctions[(v, u)]]
        weight[a, b] = weight[b, a] = 1.0 if weight[a, b] == 0 else min(weight[a, b], 1.0)

    dist = csgraph.shortest_path(weight, method="D", directed=False)
    return MeasuredMetricSpace(dist=dist, mass=mass), owner


def space_to_json(X: MeasuredMetricSpace) -> Dict[str, Any]:
    iu = np.triu_indices(X.n_points, 1)
    return {"points": X.n_points, "dist": X.dist[iu].tolist(), "mass": X.mass.tolist()}


def space_from_json(data: Dict[str, Any]) -> MeasuredMetricSpace:
    n = int(data["points"])
    flat = np.asarray(data["dist"], dtype=float)
    if len(flat) != n * (n - 1) // 2:
        raise ValueError(f"Expected {n * (n - 1) // 2} distances for {n} points, got {len(flat)}")
    dist = np.zeros((n, n))
    dist[np.triu_indices(n, 1)] = flat
    return MeasuredMetricSpace(dist=dist + dist.T, mass=data["mass"])
