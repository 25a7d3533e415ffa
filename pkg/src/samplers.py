"""Random graph samplers: G(x, q), Erdos-Renyi, finite-type IRG, configuration model, bounded-size rules."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .constants import DENSE_PAIR_CUTOFF
from .graphcore import UnionFind
from .models import BSRRule, Graph, Kernel, ProcessRun, WeightedVertexSet

logger = logging.getLogger(__name__)


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Random stream for (master seed, replica), independent of worker scheduling."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))


def _sorted_edges(edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.empty((0, 2), dtype=np.int64)
    edges = np.sort(np.asarray(edges, dtype=np.int64), axis=1)
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def _sample_distinct(total: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform m-subset of [0, total), sorted."""
    if m <= 0:
        return np.empty(0, dtype=np.int64)
    if 2 * m > total:
        return np.sort(rng.choice(total, size=m, replace=False))
    picked = np.unique(rng.integers(0, total, size=m))
    while len(picked) < m:
        extra = rng.integers(0, total, size=m - len(picked))
        picked = np.unique(np.concatenate([picked, extra]))
    return picked


def _er_block(size: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) edges among `size` vertices, as (i, j) with i < j."""
    total = size * (size - 1) // 2
    if total == 0 or p <= 0:
        return np.empty((0, 2), dtype=np.int64)
    picks = _sample_distinct(total, int(rng.binomial(total, min(p, 1.0))), rng)
    starts = np.arange(size, dtype=np.int64)
    starts = starts * size - starts * (starts + 1) // 2
    i = np.searchsorted(starts, picks, side="right") - 1
    j = picks - starts[i] + i + 1
    return np.column_stack([i, j])


def _bipartite_block(a: int, b: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) edges between two disjoint vertex groups of sizes a and b."""
    total = a * b
    if total == 0 or p <= 0:
        return np.empty((0, 2), dtype=np.int64)
    picks = _sample_distinct(total, int(rng.binomial(total, min(p, 1.0))), rng)
    return np.column_stack([picks // b, picks % b])


def _skip_sample(x: np.ndarray, q: float, rng: np.random.Generator) -> np.ndarray:
    """Geometric jumps over weight-sorted pairs with thinning; O(n + edges)."""
    n = len(x)
    order = np.argsort(-x, kind="stable")
    xs = x[order].tolist()
    found: List[Tuple[int, int]] = []
    for i in range(n - 1):
        j = i + 1
        p = -math.expm1(-q * xs[i] * xs[j])
        while j < n and p > 0:
            if p < 1:
                r = 1.0 - rng.random()
                j += int(math.log(r) / math.log1p(-p))
            if j < n:
                pj = -math.expm1(-q * xs[i] * xs[j])
                if rng.random() < pj / p:
                    found.append((i, j))
                p = pj
                j += 1
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    return order[np.array(found, dtype=np.int64)]


def gen_gxq(w: WeightedVertexSet, q: float, rng: np.random.Generator) -> Graph:
    """G(x, q): edge {i, j} present independently with probability 1 - exp(-q x_i x_j)."""
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    x = w.x
    n = len(x)
    if np.all(x == x[0]):
        edges = _er_block(n, -math.expm1(-q * x[0] * x[0]), rng)
    elif n <= DENSE_PAIR_CUTOFF:
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(len(iu)) < -np.expm1(-q * x[iu] * x[ju])
        edges = np.column_stack([iu[keep], ju[keep]])
    else:
        edges = _skip_sample(x, q, rng)
    return Graph(n, _sorted_edges(edges))


def gen_er(n: int, t: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi graph at time t: edge probability 1 - exp(-t/n)."""
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}")
    if t == 0 or n < 2:
        return Graph(n)
    return gen_gxq(WeightedVertexSet.uniform(n, 1.0), t / n, rng)


@dataclass
class IRGWindow:
    """Which critical-window modifications to apply to a kernel at size n."""
    lam: float = 0.0  # dynamic factor 1 + lam n^{-1/3}
    delta: Optional[float] = None  # barely subcritical: kappa - n^{-delta}
    perturbed: bool = False  # kappa + A n^{-1/3}


def effective_kernel(kernel: Kernel, n: int, window: Optional[IRGWindow] = None) -> np.ndarray:
    window = window or IRGWindow()
    kappa = kernel.kappa.copy()
    if window.perturbed and kernel.A is not None:
        kappa = kappa + kernel.A * n ** (-1.0 / 3.0)
    if window.delta is not None:
        kappa = kappa - n ** (-window.delta)
    kappa = kappa * (1.0 + window.lam * n ** (-1.0 / 3.0))
    if kappa.min() < 0:
        raise ValueError(f"Kernel has negative entries at n={n}; edge probabilities would leave [0, 1]")
    return kappa


def assign_types(
    kernel: Kernel,
    n: int,
    rng: Optional[np.random.Generator] = None,
    mode: str = "iid",
    perturbed: bool = False,
) -> np.ndarray:
    """Type of each vertex, iid from mu or by rounded counts n * mu."""
    mu = kernel.mu
    if perturbed and kernel.b is not None:
        mu = mu + kernel.b * n ** (-1.0 / 3.0)
        if mu.min() <= 0:
            raise ValueError(f"Perturbed type law is not positive at n={n}")
    if mode == "iid":
        if rng is None:
            raise ValueError("iid type assignment needs an rng")
        return rng.choice(kernel.K, size=n, p=mu / mu.sum())
    if mode == "rounded":
        raw = n * mu
        counts = np.floor(raw).astype(np.int64)
        short = n - counts.sum()
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
        return np.repeat(np.arange(kernel.K), counts)
    raise ValueError(f"Unknown type assignment mode: {mode}")


def pair_uniforms(n: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform per unordered pair, row-major over i < j."""
    return rng.random(n * (n - 1) // 2)


def gen_irg(
    kernel: Kernel,
    types: np.ndarray,
    rng: np.random.Generator,
    window: Optional[IRGWindow] = None,
    coupling: Optional[np.ndarray] = None,
) -> Graph:
    """Finite-type IRG: p_ij = 1 - exp(-kappa_n(t_i, t_j)/n).

    With `coupling` (from pair_uniforms) each pair uses its shared uniform, so
    graphs built from ordered kernels are nested.
    """
    types = np.asarray(types, dtype=np.int64)
    n = len(types)
    if n and (types.min() < 0 or types.max() >= kernel.K):
        raise ValueError(f"Types must lie in [0, {kernel.K})")
    kappa = effective_kernel(kernel, n, window)

    if coupling is not None:
        iu, ju = np.triu_indices(n, 1)
        keep = coupling < -np.expm1(-kappa[types[iu], types[ju]] / n)
        return Graph(n, np.column_stack([iu[keep], ju[keep]]))

    groups = [np.flatnonzero(types == a) for a in range(kernel.K)]
    blocks = []
    for a in range(kernel.K):
        for b in range(a, kernel.K):
            p = -math.expm1(-kappa[a, b] / n)
            if a == b:
                e = _er_block(len(groups[a]), p, rng)
                blocks.append(groups[a][e])
            else:
                e = _bipartite_block(len(groups[a]), len(groups[b]), p, rng)
                blocks.append(np.column_stack([groups[a][e[:, 0]], groups[b][e[:, 1]]]))
    edges = np.concatenate(blocks) if blocks else np.empty((0, 2), dtype=np.int64)
    return Graph(n, _sorted_edges(edges))


def _check_degrees(degrees: Iterable[int]) -> np.ndarray:
    d = np.asarray(degrees, dtype=np.int64)
    if np.any(d < 0):
        raise ValueError("Degrees must be nonnegative")
    if d.sum() % 2:
        raise ValueError(f"Stub total {int(d.sum())} is odd")
    return d


def cm_uniform_match(degrees: Iterable[int], rng: np.random.Generator) -> Graph:
    """Uniform perfect matching of half-edges; loops and multi-edges kept."""
    d = _check_degrees(degrees)
    stubs = rng.permutation(np.repeat(np.arange(len(d)), d))
    return Graph(len(d), stubs.reshape(-1, 2))


class HalfEdgeState:
    """Dynamic configuration model: alive stubs, components and formed edges."""

    def __init__(self, degrees: Iterable[int]):
        self.degrees = _check_degrees(degrees)
        self.n = len(self.degrees)
        self.owner = np.repeat(np.arange(self.n), self.degrees)
        total = len(self.owner)
        # swap-remove registry: alive[position[s]] == s
        self.alive: List[int] = list(range(total))
        self.position: List[int] = list(range(total))
        self.uf = UnionFind(self.n)
        self.free: List[int] = self.degrees.tolist()  # indexed by component root
        self.edges: List[Tuple[int, int]] = []
        self.times: List[float] = []
        self.time = 0.0
        self.logger = logging.getLogger(__name__)

    @property
    def alive_count(self) -> int:
        return len(self.alive)

    def _remove(self, stub: int) -> None:
        i = self.position[stub]
        last = self.alive[-1]
        self.alive[i] = last
        self.position[last] = i
        self.alive.pop()

    def fire(self, rng: np.random.Generator) -> Tuple[int, int]:
        """A uniform alive stub rings and pairs with a uniform other alive stub."""
        m = len(self.alive)
        if m < 2:
            raise ValueError("Fewer than two alive stubs")
        s1 = self.alive[int(rng.integers(m))]
        self._remove(s1)
        s2 = self.alive[int(rng.integers(m - 1))]
        self._remove(s2)
        u, v = int(self.owner[s1]), int(self.owner[s2])
        ru, rv = self.uf.find(u), self.uf.find(v)
        root = self.uf.union(u, v)
        self.free[root] = self.free[ru] - 2 if ru == rv else self.free[ru] + self.free[rv] - 2
        self.edges.append((u, v))
        self.times.append(self.time)
        return u, v

    def free_stubs(self) -> np.ndarray:
        """Alive stubs per vertex."""
        return np.bincount(self.owner[self.alive], minlength=self.n)

    def component_free_counts(self) -> Dict[int, int]:
        roots = {self.uf.find(v) for v in range(self.n)}
        return {r: self.free[r] for r in roots}

    def graph(self) -> Graph:
        return Graph(self.n, np.array(self.edges, dtype=np.int64).reshape(-1, 2))

    def as_run(self) -> ProcessRun:
        return ProcessRun(
            n=self.n,
            times=np.array(self.times),
            edges=np.array(self.edges, dtype=np.int64).reshape(-1, 2),
            t_end=self.time,
        )


def cm_dynamic(
    degrees: Iterable[int],
    t_end: float,
    rng: np.random.Generator,
    checkpoints: Iterable[float] = (),
    on_checkpoint: Optional[Callable[[HalfEdgeState], None]] = None,
) -> HalfEdgeState:
    """Run the dynamic configuration model to time t_end (or absorption).

    With m alive stubs the next event comes after Exp(m); `on_checkpoint` sees
    the state at each requested time.
    """
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    state = HalfEdgeState(degrees)
    pending = sorted(t for t in checkpoints if t <= t_end)
    while True:
        m = state.alive_count
        t_next = state.time + rng.exponential(1.0 / m) if m >= 2 else math.inf
        while pending and pending[0] < t_next:
            state.time = pending.pop(0)
            if on_checkpoint is not None:
                on_checkpoint(state)
        if t_next > t_end or m < 2:
            if math.isfinite(t_end):
                state.time = t_end
            break
        state.time = t_next
        state.fire(rng)
    state.logger.debug(f"Dynamic CM stopped at t={state.time:.4f} with {state.alive_count} alive stubs")
    return state


def cm_percolate_stubs(degrees: Iterable[int], p: float, rng: np.random.Generator) -> Graph:
    """Keep each stub with probability p, then match uniformly.

    An odd retained total loses one uniformly chosen retained stub.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"Retention probability must be in [0, 1], got {p}")
    d = np.asarray(degrees, dtype=np.int64)
    kept = rng.binomial(d, p)
    total = int(kept.sum())
    if total % 2:
        victim = int(np.searchsorted(np.cumsum(kept), rng.integers(total), side="right"))
        kept[victim] -= 1
        logger.debug(f"Odd retained stub total {total}; dropped one stub at vertex {victim}")
    return cm_uniform_match(kept, rng)


def cm_percolate_edges(g: Graph, p: float, rng: np.random.Generator) -> Graph:
    """Retain each edge independently with probability p."""
    if not 0 <= p <= 1:
        raise ValueError(f"Retention probability must be in [0, 1], got {p}")
    keep = rng.random(g.num_edges) < p
    return Graph(g.n, g.edges[keep])


def cm_percolation_p(nu: float, lam: float, n: int) -> float:
    """Critical-window retention probability 1/nu + lam n^{-1/3}."""
    return 1.0 / nu + lam * n ** (-1.0 / 3.0)


def regular_degrees(n: int, r: int) -> np.ndarray:
    if (n * r) % 2:
        raise ValueError(f"n * r = {n * r} is odd")
    return np.full(n, r, dtype=np.int64)


def poisson_degrees(n: int, mean: float, rng: np.random.Generator, min_degree: int = 0) -> np.ndarray:
    """iid Poisson(mean) degrees conditioned to be >= min_degree, with an even total."""
    d = rng.poisson(mean, size=n)
    low = d < min_degree
    while low.any():
        d[low] = rng.poisson(mean, size=int(low.sum()))
        low = d < min_degree
    while d.sum() % 2:
        v = int(rng.integers(n))
        redraw = int(rng.poisson(mean))
        if redraw >= min_degree:
            d[v] = redraw
    return d


def bsr_run(rule: BSRRule, n: int, t_end: float, rng: np.random.Generator) -> ProcessRun:
    """Bounded-size rule process on n vertices up to time t_end.

    Events arrive at total rate n/2; each samples an ordered quadruple with
    replacement and adds (v1, v2) when the size classes lie in F, else (v3, v4).
    """
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    count = int(rng.poisson(n * t_end / 2.0))
    times = np.sort(rng.uniform(0.0, t_end, size=count))
    quads = rng.integers(0, n, size=(count, 4)).tolist()
    uf = UnionFind(n)
    F, K, omega = rule.F, rule.K, rule.omega
    edges = np.empty((count, 2), dtype=np.int64)
    first = np.empty(count, dtype=bool)

    for e, (a, b, c, d) in enumerate(quads):
        classes = tuple(
            s if s <= K else omega
            for s in (uf.size[uf.find(a)], uf.size[uf.find(b)], uf.size[uf.find(c)], uf.size[uf.find(d)])
        )
        if classes in F:
            u, v, first[e] = a, b, True
        else:
            u, v, first[e] = c, d, False
        uf.union(u, v)
        edges[e] = (u, v)

    logger.debug(f"BSR run: n={n}, t_end={t_end}, {count} events, {int(first.sum())} first-edge picks")
    return ProcessRun(n=n, times=times, edges=edges, t_end=t_end, first_choice=first)


def bf_run(n: int, t_end: float, rng: np.random.Generator) -> ProcessRun:
    """Bohman-Frieze process: first edge iff both endpoints are singletons."""
    return bsr_run(BSRRule.bohman_frieze(), n, t_end, rng)
