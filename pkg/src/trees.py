"""p-trees, tilted p-trees, connected G(x, q) components, Brownian excursions and the
shortcut construction of limiting components."""

import itertools
import logging
import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    CRIT_POINTS,
    ENUMERATION_MAX_M,
    ESS_TARGET,
    EXCURSION_GRID,
    MAX_PROPOSALS,
)
from .graphcore import UnionFind, components
from .limits import sample_parabolic_excursions
from .models import (
    ExcursionPath,
    Graph,
    MeasuredMetricSpace,
    PTree,
    SamplingError,
    ShortcutSpec,
    WeightedVertexSet,
)
from .samplers import gen_gxq

logger = logging.getLogger(__name__)

EdgeKey = Tuple[Tuple[int, int], ...]


def _check_p(p: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("p must be a nonempty probability vector")
    if np.any(p <= 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"p must be strictly positive and sum to 1, got {p}")
    return p / p.sum()


def edge_key(edges: Sequence[Tuple[int, int]]) -> EdgeKey:
    """Canonical multiset of undirected edges."""
    return tuple(sorted((min(u, v), max(u, v)) for u, v in edges))


# p-trees

def sample_ptree(p: Sequence[float], rng: np.random.Generator) -> PTree:
    """Ordered p-tree from an iid p-sequence.

    The first value is the root; each later first appearance of a value becomes
    a child of the value just before it. Children are put in uniform random
    order, giving P(t) = prod_v p_v^{d_v} / d_v!.
    """
    p = _check_p(p)
    m = len(p)
    children: List[List[int]] = [[] for _ in range(m)]
    seen = np.zeros(m, dtype=bool)
    prev = int(rng.choice(m, p=p))
    root = prev
    seen[root] = True
    remaining = m - 1
    while remaining:
        for j in rng.choice(m, size=max(64, 4 * m), p=p).tolist():
            if not seen[j]:
                seen[j] = True
                children[prev].append(j)
                remaining -= 1
                if not remaining:
                    break
            prev = j
    for kids in children:
        if len(kids) > 1:
            rng.shuffle(kids)
    return PTree(p=p, root=root, children=children)


def ptree_probability(t: PTree) -> float:
    """Ordered p-tree probability prod_v p_v^{d_v} / d_v!."""
    return float(np.prod([t.p[v] ** len(kids) / math.factorial(len(kids)) for v, kids in enumerate(t.children)]))


def permitted_edges(t: PTree) -> List[Tuple[int, int]]:
    """Pairs (v, j) with v the vertex being explored and j another vertex on the depth-first stack."""
    stack = [t.root]
    permitted: List[Tuple[int, int]] = []
    while stack:
        v = stack[-1]
        permitted.extend((v, j) for j in stack[:-1])
        stack.pop()
        # first child ends on top
        stack.extend(reversed(t.children[v]))
    return permitted


def log_tilt_weight(t: PTree, a: float) -> float:
    if a <= 0:
        raise ValueError(f"Tilt parameter must be positive, got {a}")
    p = t.p
    tree_part = 0.0
    for u, v in t.edges():
        r = a * p[u] * p[v]
        tree_part += math.log(math.expm1(r) / r)
    return tree_part + sum(a * p[u] * p[v] for u, v in permitted_edges(t))


def tilt_weight(t: PTree, a: float) -> float:
    """L(t): product over edges of (e^r - 1)/r times exp of r summed over permitted pairs, r = a p_i p_j."""
    return math.exp(log_tilt_weight(t, a))


def _prufer_edges(m: int) -> Iterator[List[Tuple[int, int]]]:
    if m == 1:
        yield []
        return
    if m == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(m), repeat=m - 2):
        degree = [1] * m
        for x in seq:
            degree[x] += 1
        edges = []
        for x in seq:
            leaf = min(j for j in range(m) if degree[j] == 1)
            edges.append((leaf, x))
            degree[leaf] -= 1
            degree[x] -= 1
        last = [j for j in range(m) if degree[j] == 1]
        edges.append((last[0], last[1]))
        yield edges


def enumerate_ordered_trees(p: Sequence[float]) -> List[Tuple[PTree, float]]:
    """Every ordered rooted tree on [m] with its p-tree probability (m <= 4)."""
    p = _check_p(p)
    m = len(p)
    if m > ENUMERATION_MAX_M:
        raise ValueError(f"Enumeration limited to m <= {ENUMERATION_MAX_M}, got {m}")
    out = []
    for edges in _prufer_edges(m):
        nbrs: List[List[int]] = [[] for _ in range(m)]
        for u, v in edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        for root in range(m):
            kids: List[List[int]] = [[] for _ in range(m)]
            seen, frontier = {root}, [root]
            while frontier:
                v = frontier.pop()
                for j in nbrs[v]:
                    if j not in seen:
                        seen.add(j)
                        kids[v].append(j)
                        frontier.append(j)
            for orders in itertools.product(*(itertools.permutations(k) for k in kids)):
                tree = PTree(p=p, root=root, children=[list(o) for o in orders])
                out.append((tree, ptree_probability(tree)))
    return out


def enumerate_tilted_trees(p: Sequence[float], a: float) -> List[Tuple[PTree, float]]:
    """Ordered trees with the tilted law L(t) P(t) / E[L]."""
    weighted = [(t, prob * tilt_weight(t, a)) for t, prob in enumerate_ordered_trees(p)]
    total = sum(w for _, w in weighted)
    return [(t, w / total) for t, w in weighted]


def sample_tilted_ptree(
    p: Sequence[float],
    a: float,
    rng: np.random.Generator,
    method: str = "auto",
    ess_target: float = ESS_TARGET,
) -> PTree:
    """Tilted ordered p-tree.

    method="exact" samples the enumerated law (m <= 4); "importance" resamples
    one of N p-tree proposals with probability proportional to L, doubling N
    until the effective sample size reaches ess_target.
    """
    p = _check_p(p)
    if a <= 0:
        raise ValueError(f"Tilt parameter must be positive, got {a}")
    if method == "auto":
        method = "exact" if len(p) <= ENUMERATION_MAX_M else "importance"
    if method == "exact":
        law = enumerate_tilted_trees(p, a)
        pick = rng.choice(len(law), p=np.array([w for _, w in law]))
        return law[pick][0]
    if method != "importance":
        raise ValueError(f"Unknown tilted sampling method: {method}")

    proposals: List[PTree] = []
    logw: List[float] = []
    batch = int(2 * ess_target)
    while True:
        for _ in range(batch):
            t = sample_ptree(p, rng)
            proposals.append(t)
            logw.append(log_tilt_weight(t, a))
        lw = np.asarray(logw)
        w = np.exp(lw - lw.max())
        ess = w.sum() ** 2 / np.sum(w ** 2)
        if ess >= ess_target:
            break
        if len(proposals) >= MAX_PROPOSALS:
            raise SamplingError(f"ESS {ess:.1f} below {ess_target} after {len(proposals)} proposals")
        batch = len(proposals)
        logger.debug(f"Tilted p-tree ESS {ess:.1f} < {ess_target}; doubling to {2 * len(proposals)} proposals")
    return proposals[int(rng.choice(len(proposals), p=w / w.sum()))]


# Connected components of G(x, q)

def connected_gxq(p: Sequence[float], a: float, rng: np.random.Generator, method: str = "auto") -> Graph:
    """Connected graph on [m]: tilted p-tree plus each permitted pair with probability 1 - exp(-a p_u p_v)."""
    p = _check_p(p)
    if len(p) == 1:
        return Graph(1)
    tree = sample_tilted_ptree(p, a, rng, method=method)
    edges = tree.edges()
    for u, v in permitted_edges(tree):
        if rng.random() < -math.expm1(-a * p[u] * p[v]):
            edges.append((u, v))
    return Graph.from_pairs(len(p), edges)


def enumerate_connected_graphs(p: Sequence[float], a: float) -> Dict[EdgeKey, float]:
    """Law of G(x, q) on [m] conditioned on connectivity, with q x_u x_v = a p_u p_v (m <= 4)."""
    p = _check_p(p)
    m = len(p)
    if m > ENUMERATION_MAX_M:
        raise ValueError(f"Enumeration limited to m <= {ENUMERATION_MAX_M}, got {m}")
    pairs = list(itertools.combinations(range(m), 2))
    law: Dict[EdgeKey, float] = {}
    for chosen in itertools.product((False, True), repeat=len(pairs)):
        uf = UnionFind(m)
        weight = 1.0
        edges = []
        for (u, v), on in zip(pairs, chosen):
            q_uv = -math.expm1(-a * p[u] * p[v])
            if on:
                uf.union(u, v)
                edges.append((u, v))
                weight *= q_uv
            else:
                weight *= 1 - q_uv
        if uf.size[uf.find(0)] == m:
            law[edge_key(edges)] = weight
    total = sum(law.values())
    return {k: w / total for k, w in law.items()}


def enumerate_gxq(w: WeightedVertexSet, q: float) -> Dict[EdgeKey, float]:
    """Exact law of G(x, q) over all simple graphs on a few vertices."""
    x = w.x
    pairs = list(itertools.combinations(range(len(x)), 2))
    if len(pairs) > 10:
        raise ValueError("Exhaustive G(x, q) law limited to 5 vertices")
    law: Dict[EdgeKey, float] = {}
    for chosen in itertools.product((False, True), repeat=len(pairs)):
        weight = 1.0
        edges = []
        for (u, v), on in zip(pairs, chosen):
            q_uv = -math.expm1(-q * x[u] * x[v])
            weight *= q_uv if on else 1 - q_uv
            if on:
                edges.append((u, v))
        law[edge_key(edges)] = weight
    return law


def partition_then_connect(w: WeightedVertexSet, q: float, rng: np.random.Generator) -> Graph:
    """G(x, q) by first drawing the component partition, then each component's internal graph.

    A component V gets p = x_V / sum(x_V) and a = q (sum x_V)^2.
    """
    base = gen_gxq(w, q, rng)
    decomp = components(base)
    edges: List[Tuple[int, int]] = []
    for members in decomp.components:
        if len(members) < 2:
            continue
        mass = w.x[members]
        total = float(mass.sum())
        inner = connected_gxq(mass / total, q * total ** 2, rng)
        edges.extend((int(members[u]), int(members[v])) for u, v in inner.edges)
    return Graph.from_pairs(w.n, edges)


# Excursions

def _bridge_to_excursion(bridge: np.ndarray) -> np.ndarray:
    """Vervaat transform: rotate a bridge to start at its minimum."""
    steps = len(bridge) - 1
    k = int(np.argmin(bridge[:-1]))
    idx = (k + np.arange(steps + 1)) % steps
    return bridge[idx] - bridge[k]


def sample_brownian_excursion(
    length: float,
    rng: np.random.Generator,
    grid: int = EXCURSION_GRID,
) -> ExcursionPath:
    """Brownian excursion of the given length on `grid` steps."""
    if length <= 0 or grid < 2:
        raise ValueError(f"Need positive length and at least two grid steps, got {length}, {grid}")
    dt = length / grid
    walk = np.concatenate([[0.0], np.cumsum(math.sqrt(dt) * rng.standard_normal(grid))])
    bridge = walk - np.linspace(0.0, 1.0, grid + 1) * walk[-1]
    return ExcursionPath(length=length, values=_bridge_to_excursion(bridge))


def _excursion_batch(length: float, count: int, grid: int, rng: np.random.Generator) -> np.ndarray:
    dt = length / grid
    walk = np.zeros((count, grid + 1))
    walk[:, 1:] = np.cumsum(math.sqrt(dt) * rng.standard_normal((count, grid)), axis=1)
    bridge = walk - np.linspace(0.0, 1.0, grid + 1)[None, :] * walk[:, [-1]]
    k = np.argmin(bridge[:, :-1], axis=1)
    idx = (k[:, None] + np.arange(grid + 1)[None, :]) % grid
    rows = np.arange(count)[:, None]
    return bridge[rows, idx] - bridge[np.arange(count), k][:, None]


def tilt_excursion(
    length: float,
    theta: float,
    rng: np.random.Generator,
    grid: int = EXCURSION_GRID,
    ess_target: float = ESS_TARGET,
    batch: int = 256,
) -> ExcursionPath:
    """Excursion tilted by exp(theta * area), by importance resampling over batches of proposals.

    The pick is streamed: the proposal minimising log(E) - theta * area,
    E ~ Exp(1), is a draw proportional to the tilt.
    """
    if theta < 0:
        raise ValueError(f"Tilt must be nonnegative, got {theta}")
    if theta == 0:
        return sample_brownian_excursion(length, rng, grid)
    dt = length / grid
    log_weights: List[np.ndarray] = []
    best_key, best = math.inf, None
    drawn = 0
    while True:
        paths = _excursion_batch(length, batch, grid, rng)
        areas = dt * (paths.sum(axis=1) - 0.5 * (paths[:, 0] + paths[:, -1]))
        lw = theta * areas
        keys = np.log(rng.exponential(size=batch)) - lw
        i = int(np.argmin(keys))
        if keys[i] < best_key:
            best_key, best = float(keys[i]), paths[i].copy()
        log_weights.append(lw)
        drawn += batch
        all_lw = np.concatenate(log_weights)
        wts = np.exp(all_lw - all_lw.max())
        ess = wts.sum() ** 2 / np.sum(wts ** 2)
        if ess >= ess_target:
            break
        if drawn >= MAX_PROPOSALS:
            raise SamplingError(f"Excursion tilt ESS {ess:.1f} below {ess_target} after {drawn} proposals")
        batch = drawn
    return ExcursionPath(length=length, values=best)


# Real trees and shortcuts

def _grid_index(h: ExcursionPath, positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    if np.any(positions < -1e-12) or np.any(positions > h.length + 1e-12):
        raise ValueError(f"Positions must lie in [0, {h.length}]")
    return np.clip(np.rint(positions / h.dt).astype(np.int64), 0, len(h.values) - 1)


def _tree_distances(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """d(s, t) = h(s) + h(t) - 2 min_{[s, t]} h at grid indices."""
    k = len(idx)
    dist = np.zeros((k, k))
    for a in range(k):
        lo = idx[a]
        later = idx >= lo
        running = np.minimum.accumulate(values[lo:])
        mins = running[idx[later] - lo]
        dist[a, later] = values[lo] + values[idx[later]] - 2 * mins
    full = np.maximum(dist, dist.T)
    np.fill_diagonal(full, 0.0)
    return full


def real_tree_metric(
    h: ExcursionPath,
    positions: Sequence[float],
    mass: Optional[Sequence[float]] = None,
) -> MeasuredMetricSpace:
    """Tree metric coded by h at the given positions; uniform mass summing to h.length by default."""
    idx = _grid_index(h, np.asarray(positions))
    k = len(idx)
    weights = np.full(k, h.length / k) if mass is None else np.asarray(mass, dtype=float)
    return MeasuredMetricSpace(dist=_tree_distances(h.values, idx), mass=weights)


def sample_shortcuts(g: ExcursionPath, rng: np.random.Generator) -> Tuple[np.ndarray, List[Tuple[float, float]]]:
    """Rate-one Poisson points under g and the pairs (x, r(x, y)) they identify."""
    area = g.area
    count = int(rng.poisson(area))
    if count == 0:
        return np.empty((0, 2)), []
    cells = 0.5 * (g.values[:-1] + g.values[1:]) * g.dt
    cell = rng.choice(len(cells), size=count, p=cells / cells.sum())
    x = (cell + rng.random(count)) * g.dt
    ceiling = np.interp(x, g.grid, g.values)
    y = rng.random(count) * ceiling
    pairs = []
    for xi, yi in zip(x, y):
        start = int(np.ceil(xi / g.dt))
        below = np.flatnonzero(g.values[start:] <= yi)
        target = (start + below[0]) if len(below) else len(g.values) - 1
        pairs.append((float(xi), float(target * g.dt)))
    return np.column_stack([x, y]), pairs


def shortcut_identify(
    h: ExcursionPath,
    g: ExcursionPath,
    positions: Sequence[float],
    rng: np.random.Generator,
    mass: Optional[Sequence[float]] = None,
) -> Tuple[MeasuredMetricSpace, ShortcutSpec]:
    """Tree metric of h at `positions` after gluing each Poisson-identified pair under g.

    The glued points join the point set; each gluing relaxes every distance
    through the identified pair and the result is restricted back to `positions`.
    """
    if not math.isclose(h.length, g.length):
        raise ValueError("Tree and ceiling excursions must share the same interval")
    positions = np.asarray(positions, dtype=float)
    points, pairs = sample_shortcuts(g, rng)
    spec = ShortcutSpec(h=h, g=g, points=points, pairs=pairs)
    base = real_tree_metric(h, positions, mass)
    if not pairs:
        return base, spec

    k = len(positions)
    glued = np.concatenate([positions, np.array([s for pair in pairs for s in pair])])
    dist = _tree_distances(h.values, _grid_index(h, glued))
    for i in range(len(pairs)):
        a, b = k + 2 * i, k + 2 * i + 1
        via = np.minimum(dist[:, [a]] + dist[[b], :], dist[:, [b]] + dist[[a], :])
        dist = np.minimum(dist, via)
    return MeasuredMetricSpace(dist=dist[:k, :k], mass=base.mass), spec


def sample_crit(
    lam: float,
    k: int,
    rng: np.random.Generator,
    points: int = CRIT_POINTS,
    grid: int = EXCURSION_GRID,
    horizon: Optional[float] = None,
) -> List[MeasuredMetricSpace]:
    """Point-cloud approximations of the k largest limiting components at window parameter lam.

    Component i uses h = 2 e, ceiling e, with e an excursion of length gamma_i
    tilted by exp(area).
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    lengths = sample_parabolic_excursions(lam, rng, horizon=horizon).lengths
    if len(lengths) < k:
        logger.warning(f"Only {len(lengths)} excursions found for lambda={lam}; returning fewer spaces")
    spaces = []
    for gamma in lengths[:k]:
        e = tilt_excursion(float(gamma), 1.0, rng, grid=grid)
        h = ExcursionPath(length=e.length, values=2 * e.values)
        positions = np.sort(rng.uniform(0.0, gamma, size=points))
        space, _ = shortcut_identify(h, e, positions, rng)
        spaces.append(space)
    return spaces


def sample_limit_component(
    gamma_bar: float,
    rng: np.random.Generator,
    points: int = CRIT_POINTS,
    grid: int = EXCURSION_GRID,
) -> MeasuredMetricSpace:
    """Unit-length parameterisation: h = 2 e, ceiling gamma_bar e, e tilted by exp(gamma_bar * area)."""
    if gamma_bar <= 0:
        raise ValueError(f"gamma_bar must be positive, got {gamma_bar}")
    e = tilt_excursion(1.0, gamma_bar, rng, grid=grid)
    h = ExcursionPath(length=1.0, values=2 * e.values)
    g = ExcursionPath(length=1.0, values=gamma_bar * e.values)
    positions = np.sort(rng.uniform(0.0, 1.0, size=points))
    space, _ = shortcut_identify(h, g, positions, rng)
    return space
