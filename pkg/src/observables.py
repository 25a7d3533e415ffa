"""Susceptibility functionals, size-biased orders and exploration walks."""

import logging
from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import CSV_PRECISION
from .graphcore import component_stats, components, distance_profile
from .models import (
    ComponentDecomposition,
    ComponentStats,
    Graph,
    SusceptibilityRecord,
    WalkTrace,
    WeightedVertexSet,
)
from .samplers import HalfEdgeState

logger = logging.getLogger(__name__)


def vertex_susceptibilities(
    decomp: ComponentDecomposition,
    stats: Sequence[ComponentStats],
    n: int,
    t: float = 0.0,
) -> SusceptibilityRecord:
    """Vertex-weighted susceptibilities s_k = sum |C|^k / n and D = sum D(C) / n.

    `stats` may cover only the largest components; distances of the rest are
    then left out of D and the record is marked inexact.
    """
    if n <= 0:
        raise ValueError(f"Vertex count must be positive, got {n}")
    sizes = decomp.sizes.astype(float)
    s2 = float(np.sum(sizes ** 2)) / n
    covered = len(stats) == decomp.count
    return SusceptibilityRecord(
        t=t,
        s1_bar=float(sizes.sum()) / n,
        s2_bar=s2,
        s3_bar=float(np.sum(sizes ** 3)) / n,
        g_bar=s2,
        D_bar=sum(s.distance_sum for s in stats) / n,
        s2_star=s2,
        I=int(sizes.max()) if len(sizes) else 0,
        diam_max=max((s.diameter for s in stats), default=0),
        x_bar=float(np.sum(sizes == 1)) / n,
        exact=covered and all(s.exact for s in stats),
    )


def graph_susceptibilities(g: Graph, t: float = 0.0) -> SusceptibilityRecord:
    """Vertex susceptibilities of a whole graph."""
    decomp = components(g)
    return vertex_susceptibilities(decomp, component_stats(g, decomp), g.n, t)


def free_edge_susceptibilities(
    state: HalfEdgeState,
    with_distances: bool = True,
) -> SusceptibilityRecord:
    """Free-stub susceptibilities of a dynamic configuration model.

    f_C counts alive stubs in C. D sums d(u, v) over ordered pairs of free
    stubs in the same component, a stub sitting at its vertex.
    """
    g = state.graph()
    decomp = components(g)
    n = state.n
    free = state.free_stubs().astype(float)
    f = np.bincount(decomp.labels, weights=free, minlength=decomp.count)
    sizes = decomp.sizes.astype(float)

    if with_distances and g.num_edges:
        dsum, diam, exact = distance_profile(g, decomp, weights=free)
        D_bar, diam_max, is_exact = float(dsum.sum()) / n, int(diam.max()), bool(exact.all())
    else:
        D_bar, diam_max, is_exact = 0.0, 0, not g.num_edges or not with_distances

    return SusceptibilityRecord(
        t=state.time,
        s1_bar=float(f.sum()) / n,
        s2_bar=float(np.sum(f ** 2)) / n,
        s3_bar=float(np.sum(f ** 3)) / n,
        g_bar=float(np.sum(f * sizes)) / n,
        D_bar=D_bar,
        s2_star=float(np.sum(sizes ** 2)) / n,
        I=int(sizes.max()) if len(sizes) else 0,
        diam_max=diam_max,
        x_bar=float(np.sum(sizes == 1)) / n,
        exact=is_exact,
    )


def record_to_row(record: SusceptibilityRecord) -> Dict[str, str]:
    """CSV row with CSV_PRECISION significant digits."""
    fmt = f"{{:.{CSV_PRECISION}g}}"
    return {
        "t": fmt.format(record.t),
        "s1": fmt.format(record.s1_bar),
        "s2": fmt.format(record.s2_bar),
        "s3": fmt.format(record.s3_bar),
        "g": fmt.format(record.g_bar),
        "D": fmt.format(record.D_bar),
        "s2star": fmt.format(record.s2_star),
        "I": str(record.I),
        "diam": str(record.diam_max),
    }


def size_biased_order(weights: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Sequential size-biased permutation via Exp(x_i) keys sorted increasing."""
    x = np.asarray(weights, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Size-biased order needs positive weights")
    return np.argsort(rng.exponential(1.0 / x), kind="stable")


def aldous_walk(
    w: WeightedVertexSet,
    q: float,
    rng: np.random.Generator,
) -> Tuple[Graph, WalkTrace, np.ndarray]:
    """Breadth-first size-biased construction of G(x, q).

    Exploring v decides every pair between v and the not-yet-explored
    vertices: unseen ones become children, active ones give surplus edges.
    Returns the graph, the walk (one step per vertex) and component masses in
    discovery order.
    """
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    x = w.x
    n = len(x)
    start_order = size_biased_order(x, rng)
    unseen = np.ones(n, dtype=bool)
    active = np.zeros(n, dtype=bool)

    order: List[int] = []
    kids = np.zeros(n, dtype=np.int64)
    eta = np.zeros(n)
    theta = np.zeros(n, dtype=np.int64)
    boundaries: List[int] = []
    masses: List[float] = []
    edges: List[Tuple[int, int]] = []
    queue: deque = deque()
    cursor = 0

    for step in range(n):
        if not queue:
            while not unseen[start_order[cursor]]:
                cursor += 1
            root = int(start_order[cursor])
            unseen[root] = False
            queue.append(root)
            masses.append(0.0)
        v = queue.popleft()
        active[v] = False
        order.append(v)
        masses[-1] += x[v]

        candidates = np.flatnonzero(unseen | active)
        if len(candidates):
            hit = rng.random(len(candidates)) < -np.expm1(-q * x[v] * x[candidates])
            linked = candidates[hit]
            children = linked[unseen[linked]]
            unseen[children] = False
            active[children] = True
            queue.extend(children.tolist())
            kids[step] = len(children)
            eta[step] = x[children].sum()
            theta[step] = len(linked) - len(children)
            edges.extend((v, int(j)) for j in linked)
        if not queue:
            boundaries.append(step + 1)

    # Z(i) = sum_{j <= i} (children_j - 1); component k ends at the first visit to -k
    trace = WalkTrace(
        steps=np.concatenate([[0], np.cumsum(kids - 1)]),
        boundaries=boundaries,
        surplus_marks=theta,
        order=np.array(order, dtype=np.int64),
        increments=eta,
    )
    return Graph.from_pairs(n, edges), trace, np.array(masses)


def riordan_walk(
    a: Sequence[int],
    rng: np.random.Generator,
    blob_sizes: Optional[Sequence[int]] = None,
) -> Tuple[WalkTrace, Graph, np.ndarray]:
    """Half-edge exploration over blobs carrying a_i percolated stubs.

    The stub matching is drawn up front; blobs with a_i = 0 are not walked.
    A step reveals one blob; each of its fresh stubs paired with an active stub
    or with another stub of the same blob is a back edge. With A active stubs
    and comp components started, Z = A - 2 comp moves by eta - 2 - 2 theta and
    component k closes when Z first reaches -2k.

    Returns the trace, the blob multigraph and component vertex masses
    (sum of blob_sizes, or blob counts) in discovery order.
    """
    a = np.asarray(a, dtype=np.int64).copy()
    if np.any(a < 0):
        raise ValueError("Stub counts must be nonnegative")
    total = int(a.sum())
    if total % 2:
        victim = int(np.searchsorted(np.cumsum(a), rng.integers(total), side="right"))
        a[victim] -= 1
        logger.debug(f"Odd stub total {total}; dropped one stub at blob {victim}")
    n = len(a)
    sizes = np.ones(n) if blob_sizes is None else np.asarray(blob_sizes, dtype=float)

    owner = np.repeat(np.arange(n), a)
    perm = rng.permutation(len(owner))
    partner = np.empty(len(owner), dtype=np.int64)
    partner[perm[0::2]] = perm[1::2]
    partner[perm[1::2]] = perm[0::2]
    first_stub = np.concatenate([[0], np.cumsum(a)[:-1]])

    walked = np.flatnonzero(a > 0)
    start_order = walked[size_biased_order(a[walked], rng)] if len(walked) else walked
    explored = np.zeros(n, dtype=bool)
    is_active = np.zeros(len(owner), dtype=bool)
    pending: deque = deque()
    edges: List[Tuple[int, int]] = []

    steps = [0]
    boundaries: List[int] = []
    theta_marks: List[int] = []
    eta_marks: List[int] = []
    order: List[int] = []
    masses: List[float] = []
    A, comp, cursor = 0, 0, 0

    for _ in range(len(walked)):
        entry = -1
        if A == 0:
            while explored[start_order[cursor]]:
                cursor += 1
            blob = int(start_order[cursor])
            comp += 1
            masses.append(0.0)
        else:
            while not is_active[pending[0]]:
                pending.popleft()
            s = pending.popleft()
            is_active[s] = False
            A -= 1
            entry = int(partner[s])
            blob = int(owner[entry])
            edges.append((int(owner[s]), blob))

        explored[blob] = True
        order.append(blob)
        masses[-1] += sizes[blob]
        theta = 0
        fresh = []
        for stub in range(first_stub[blob], first_stub[blob] + a[blob]):
            if stub == entry:
                continue
            mate = int(partner[stub])
            if is_active[mate]:
                is_active[mate] = False
                A -= 1
                theta += 1
                edges.append((int(owner[mate]), blob))
            elif owner[mate] == blob:
                if mate > stub:
                    theta += 1
                    edges.append((blob, blob))
            else:
                fresh.append(stub)
        for stub in fresh:
            is_active[stub] = True
            pending.append(stub)
        A += len(fresh)

        theta_marks.append(theta)
        eta_marks.append(int(a[blob]))
        steps.append(A - 2 * comp)
        if A == 0:
            boundaries.append(len(order))

    trace = WalkTrace(
        steps=np.array(steps, dtype=np.int64),
        boundaries=boundaries,
        surplus_marks=np.array(theta_marks, dtype=np.int64),
        order=np.array(order, dtype=np.int64),
        increments=np.array(eta_marks, dtype=np.int64),
    )
    return trace, Graph.from_pairs(n, edges), np.array(masses)


def assumption_diagnostics(
    w: WeightedVertexSet,
    q: float,
    u: Optional[Sequence[float]] = None,
    d_max: Optional[float] = None,
    eta0: float = 0.25,
    r0: float = 1.0,
) -> Dict[str, float]:
    """Ratios whose limits govern critical-window scaling of G(x, q).

    `u` holds mean inter-point distances of the blobs and `d_max` their largest
    diameter; without them only the weight conditions are reported.
    """
    x = w.x
    sigma2, sigma3 = w.sigma2, w.sigma3
    report = {
        "sigma2": sigma2,
        "sigma3": sigma3,
        "sigma3_over_sigma2_cubed": sigma3 / sigma2 ** 3,
        "lambda_estimate": q - 1.0 / sigma2,
        "xmax_over_sigma2": w.x_max / sigma2,
        "xmax_over_sigma2_pow": w.x_max / sigma2 ** (1.5 + eta0),
        "sigma2_pow_over_xmin": sigma2 ** r0 / w.x_min,
        "scaling_factor": sigma2,
    }
    if u is not None:
        weighted_u = float(np.sum(x ** 2 * np.asarray(u, dtype=float)))
        report["weighted_blob_distance"] = weighted_u
        report["scaling_factor"] = sigma2 ** 2 / (sigma2 + weighted_u)
        if d_max is not None:
            report["dmax_ratio"] = d_max * sigma2 ** (1.5 - eta0) / (weighted_u + sigma2)
            report["dmax_xmax_ratio"] = (
                sigma2 * w.x_max * d_max / weighted_u if weighted_u > 0 else float("inf")
            )
    return report


def blob_counts(blob_labels: np.ndarray, decomp: ComponentDecomposition) -> np.ndarray:
    """Number of distinct blobs in each component of a vertex-level decomposition."""
    pairs = np.unique(np.column_stack([decomp.labels, blob_labels]), axis=0)
    return np.bincount(pairs[:, 0], minlength=decomp.count)
