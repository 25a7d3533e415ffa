"""Data models for critwin."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid


class ConvergenceError(RuntimeError):
    """Iterative numerical method failed to converge."""


class SamplingError(RuntimeError):
    """Resampling scheme could not reach its target."""


def _empty_edges() -> np.ndarray:
    return np.empty((0, 2), dtype=np.int64)


@dataclass
class Graph:
    """Finite multigraph on vertices 0..n-1; loops and repeated edges allowed."""
    n: int
    edges: np.ndarray = field(default_factory=_empty_edges)  # (m, 2), construction order

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"Vertex count must be nonnegative, got {self.n}")
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ValueError(f"Edge endpoint outside [0, {self.n})")

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Tuple[int, int]]) -> "Graph":
        return cls(n=n, edges=np.array(list(pairs), dtype=np.int64).reshape(-1, 2))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def loop_mask(self) -> np.ndarray:
        return self.edges[:, 0] == self.edges[:, 1]

    def degrees(self) -> np.ndarray:
        """Vertex degrees; a loop contributes two."""
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_list(self) -> List[Tuple[int, int]]:
        return [(int(u), int(v)) for u, v in self.edges]


@dataclass
class ComponentDecomposition:
    """Connected components, largest first, ties by smallest vertex id."""
    labels: np.ndarray  # vertex -> index into components
    components: List[np.ndarray]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.components], dtype=np.int64)

    @property
    def count(self) -> int:
        return len(self.components)


@dataclass
class ComponentStats:
    """Structural statistics of one connected component."""
    size: int
    edge_count: int
    surplus: int  # edges - vertices + 1, multi-edges and loops counted
    diameter: int
    distance_sum: float  # sum over ordered vertex pairs of d(u, v)
    exact: bool = True  # False when diameter/distance_sum come from sampling


@dataclass
class WeightedVertexSet:
    """Positive vertex weights x_i for G(x, q)."""
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        if len(self.x) == 0:
            raise ValueError("Weighted vertex set must be nonempty")
        if np.any(~np.isfinite(self.x)) or np.any(self.x <= 0):
            raise ValueError("All vertex weights must be positive and finite")

    @classmethod
    def uniform(cls, n: int, value: float) -> "WeightedVertexSet":
        return cls(np.full(n, float(value)))

    @property
    def n(self) -> int:
        return len(self.x)

    def sigma(self, k: int) -> float:
        return float(np.sum(self.x ** k))

    @property
    def sigma1(self) -> float:
        return self.sigma(1)

    @property
    def sigma2(self) -> float:
        return self.sigma(2)

    @property
    def sigma3(self) -> float:
        return self.sigma(3)

    @property
    def x_max(self) -> float:
        return float(self.x.max())

    @property
    def x_min(self) -> float:
        return float(self.x.min())


@dataclass
class Kernel:
    """Finite-type kernel kappa with type law mu and optional window perturbations."""
    kappa: np.ndarray
    mu: np.ndarray
    A: Optional[np.ndarray] = None  # symmetric perturbation of kappa
    b: Optional[np.ndarray] = None  # perturbation of mu, sums to 0

    def __post_init__(self):
        self.kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        k = self.kappa.shape[0]
        if self.kappa.shape != (k, k) or len(self.mu) != k:
            raise ValueError(f"Kernel shape {self.kappa.shape} does not match mu of length {len(self.mu)}")
        if not np.allclose(self.kappa, self.kappa.T):
            raise ValueError("Kernel must be symmetric")
        if self.kappa.min() <= 0:
            raise ValueError("Kernel entries must be positive")
        if self.mu.min() <= 0 or not math.isclose(self.mu.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("Type distribution must be positive and sum to 1")
        if self.A is not None:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            if self.A.shape != (k, k) or not np.allclose(self.A, self.A.T):
                raise ValueError("Perturbation A must be a symmetric K x K matrix")
        if self.b is not None:
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if len(self.b) != k or abs(self.b.sum()) > 1e-9:
                raise ValueError("Perturbation b must have length K and sum to 0")

    @property
    def K(self) -> int:
        return len(self.mu)


@dataclass
class BSRRule:
    """Bounded-size rule: size classes 1..K plus omega (encoded as K + 1)."""
    K: int
    F: FrozenSet[Tuple[int, int, int, int]]

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"Size cutoff must be nonnegative, got {self.K}")
        self.F = frozenset(tuple(int(c) for c in quad) for quad in self.F)
        for quad in self.F:
            if len(quad) != 4 or any(c < 1 or c > self.omega for c in quad):
                raise ValueError(f"Rule entry {quad} is not in the class space of K={self.K}")

    @property
    def omega(self) -> int:
        return self.K + 1

    @property
    def classes(self) -> List[int]:
        return list(range(1, self.omega + 1))

    def size_class(self, size: int) -> int:
        return size if size <= self.K else self.omega

    def picks_first(self, classes: Tuple[int, int, int, int]) -> bool:
        return classes in self.F

    @classmethod
    def from_patterns(cls, K: int, patterns: Iterable[Sequence[Any]]) -> "BSRRule":
        """Expand patterns whose entries are ints, "w" (omega) or "*" (any class)."""
        omega = K + 1
        choices = []
        for pattern in patterns:
            options = []
            for entry in pattern:
                if entry == "*":
                    options.append(range(1, omega + 1))
                elif entry == "w":
                    options.append([omega])
                else:
                    options.append([int(entry)])
            choices.extend(
                (a, b, c, d)
                for a in options[0] for b in options[1]
                for c in options[2] for d in options[3]
            )
        return cls(K=K, F=frozenset(choices))

    @classmethod
    def bohman_frieze(cls) -> "BSRRule":
        return cls.from_patterns(1, [(1, 1, "*", "*")])


@dataclass
class ProcessRun:
    """Edges of a dynamic process in the order they formed."""
    n: int
    times: np.ndarray
    edges: np.ndarray
    t_end: float
    first_choice: Optional[np.ndarray] = None  # BSR: True when (v1, v2) was added

    def graph_at(self, t: float) -> Graph:
        k = int(np.searchsorted(self.times, t, side="right"))
        return Graph(self.n, self.edges[:k])

    @property
    def event_count(self) -> int:
        return len(self.times)


@dataclass
class SusceptibilityRecord:
    """Susceptibility observables at time t."""
    t: float
    s1_bar: float
    s2_bar: float
    s3_bar: float
    g_bar: float
    D_bar: float
    s2_star: float
    I: int
    diam_max: int
    x_bar: Optional[float] = None  # singleton density
    exact: bool = True


@dataclass
class WalkTrace:
    """Exploration walk: Z values, component boundaries and surplus marks."""
    steps: np.ndarray  # Z(0..len) with Z(0) = 0
    boundaries: List[int]  # step index at which each component finishes
    surplus_marks: np.ndarray  # back edges found at each step
    order: np.ndarray  # explored items in order
    increments: Optional[np.ndarray] = None  # eta per step (degree or child mass)

    @property
    def component_sizes(self) -> np.ndarray:
        return np.diff(np.concatenate([[0], self.boundaries])).astype(np.int64)

    def component_surplus(self) -> np.ndarray:
        edges = np.concatenate([[0], self.boundaries])
        cum = np.concatenate([[0], np.cumsum(self.surplus_marks)])
        return (cum[edges[1:]] - cum[edges[:-1]]).astype(np.int64)


@dataclass
class MeasuredMetricSpace:
    """Finite metric space with a nonnegative measure."""
    dist: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        self.dist = np.atleast_2d(np.asarray(self.dist, dtype=float))
        self.mass = np.atleast_1d(np.asarray(self.mass, dtype=float))
        if self.dist.shape != (len(self.mass), len(self.mass)):
            raise ValueError(f"Distance matrix {self.dist.shape} does not match {len(self.mass)} masses")
        if np.any(self.mass < 0):
            raise ValueError("Masses must be nonnegative")

    @property
    def n_points(self) -> int:
        return len(self.mass)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n_points else 0.0

    def validate(self, tol: float = 1e-9) -> None:
        d = self.dist
        if not np.allclose(d, d.T, atol=tol):
            raise ValueError("Distance matrix is not symmetric")
        if np.any(np.abs(np.diag(d)) > tol) or np.any(d < -tol):
            raise ValueError("Distance matrix must be nonnegative with zero diagonal")
        # d[i, j] <= d[i, k] + d[k, j] for all k
        for k in range(self.n_points):
            if np.any(d > d[:, [k]] + d[[k], :] + tol):
                raise ValueError("Distance matrix violates the triangle inequality")


@dataclass
class BlobConfig:
    """Superstructure graph with a measured metric space attached to each vertex."""
    graph: Graph
    weights: np.ndarray
    blobs: List[MeasuredMetricSpace]
    junctions: Dict[Tuple[int, int], int]  # (i, j) -> point of blob i facing j

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.blobs) != self.graph.n or len(self.weights) != self.graph.n:
            raise ValueError("Need one blob and one weight per superstructure vertex")
        for i, blob in enumerate(self.blobs):
            if not math.isclose(blob.total_mass, 1.0, abs_tol=1e-9):
                raise ValueError(f"Blob {i} measure has total mass {blob.total_mass}, expected 1")


@dataclass
class CMLimitParams:
    """Degree-law constants mu, nu, beta of the configuration model."""
    mu: float
    nu: float
    beta: float

    def __post_init__(self):
        if self.nu <= 1:
            raise ValueError(f"Need nu > 1 for a critical point, got {self.nu}")
        if self.beta <= 0:
            raise ValueError(f"Need beta > 0, got {self.beta}")

    @property
    def t_c(self) -> float:
        return 0.5 * math.log(self.nu / (self.nu - 1))

    @classmethod
    def from_pmf(cls, pk: Sequence[float]) -> "CMLimitParams":
        """Constants from a degree law p_0, p_1, ..."""
        p = np.asarray(pk, dtype=float)
        p = p / p.sum()
        k = np.arange(len(p), dtype=float)
        mu = float(np.sum(k * p))
        return cls(
            mu=mu,
            nu=float(np.sum(k * (k - 1) * p)) / mu,
            beta=float(np.sum(k * (k - 1) * (k - 2) * p)),
        )

    @classmethod
    def from_degrees(cls, degrees: Sequence[int]) -> "CMLimitParams":
        d = np.asarray(degrees, dtype=np.int64)
        return cls.from_pmf(np.bincount(d))


@dataclass
class CMLimitValues:
    """Closed-form CM limits at time t, with the near-critical ratios."""
    t: float
    s1: float
    s2: float
    s3: float
    g: float
    D: float
    s2_star: float
    y: float  # 1/s2
    z: float  # s3/s2^3
    u: float  # g/s2
    v: float  # D/s2^2


@dataclass
class IRGLimitConstants:
    """Perron data and scaling constants of a finite-type kernel."""
    M: np.ndarray
    rho: float
    u: np.ndarray
    v: np.ndarray
    alpha: float
    beta: float
    zeta: Optional[float]
    residual_right: float
    residual_left: float
    critical: bool


@dataclass
class BFSolution:
    """Bohman-Frieze ODE trajectories and the constants read off near t_c."""
    t: np.ndarray
    x: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    y: np.ndarray
    v: np.ndarray
    t_c: float
    t_c_bracket: float
    alpha: float
    beta: float
    rho: float
    v_form: str = "primary"


@dataclass
class BSREstimate:
    """Numerical estimates of t_c, alpha, beta for a general bounded-size rule."""
    t_c: float
    alpha: float
    beta: float
    estimate: bool = True


@dataclass
class ParabolicPath:
    """W(t) = B(t) + lam t - t^2/2 on a grid, and its reflection at the running minimum."""
    lam: float
    dt: float
    w: np.ndarray
    w_reflected: np.ndarray


@dataclass
class ExcursionSet:
    """Excursions of the reflected path, longest first."""
    lam: float
    lengths: np.ndarray
    areas: np.ndarray
    starts: np.ndarray
    path: Optional[ParabolicPath] = None


@dataclass
class CoalescentState:
    """Block masses of a multiplicative coalescent."""
    masses: np.ndarray
    time: float
    merges: int = 0


@dataclass
class PTree:
    """Ordered rooted labelled tree on [m] with children in planar order."""
    p: np.ndarray
    root: int
    children: List[List[int]]

    @property
    def n(self) -> int:
        return len(self.children)

    def parents(self) -> np.ndarray:
        parent = np.full(self.n, -1, dtype=np.int64)
        for v, kids in enumerate(self.children):
            for c in kids:
                parent[c] = v
        return parent

    def edges(self) -> List[Tuple[int, int]]:
        return [(v, c) for v, kids in enumerate(self.children) for c in kids]

    def key(self) -> Tuple[int, Tuple[Tuple[int, ...], ...]]:
        return self.root, tuple(tuple(kids) for kids in self.children)


@dataclass
class ExcursionPath:
    """Nonnegative path on [0, length] with zero endpoints, sampled on a uniform grid."""
    length: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.length <= 0 or len(self.values) < 2:
            raise ValueError("Excursion needs positive length and at least two grid points")

    @property
    def dt(self) -> float:
        return self.length / (len(self.values) - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.length, len(self.values))

    @property
    def area(self) -> float:
        return float(trapezoid(self.values, dx=self.dt))


@dataclass
class ShortcutSpec:
    """Poisson points under a ceiling and the point pairs they identify."""
    h: ExcursionPath
    g: ExcursionPath
    points: np.ndarray  # (k, 2) of (x, y) with y < g(x)
    pairs: List[Tuple[float, float]]  # (x, r(x, y))


@dataclass
class ExperimentConfig:
    """Parameters of a seeded sweep."""
    model: str
    params: Dict[str, Any] = field(default_factory=dict)
    n_grid: List[int] = field(default_factory=list)
    lambda_grid: List[float] = field(default_factory=lambda: [0.0])
    replicas: int = 1
    seed: int = 0
    output: str = "output/sweep.csv"
    observables: List[str] = field(default_factory=lambda: ["C1", "surplus1", "diam1"])

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError(f"Replica count must be at least 1, got {self.replicas}")
        if not self.n_grid:
            raise ValueError("n_grid must be nonempty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError(f"n_grid must be strictly increasing, got {self.n_grid}")
        if not self.lambda_grid:
            raise ValueError("lambda_grid must be nonempty")


@dataclass
class SweepResult:
    """Per-replica rows plus aggregates and fitted exponents."""
    config: ExperimentConfig
    rows: List[Dict[str, Any]]
    aggregates: List[Dict[str, Any]] = field(default_factory=list)
    exponents: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def expected_rows(self) -> int:
        return len(self.config.n_grid) * len(self.config.lambda_grid) * self.config.replicas


@dataclass
class PipelineReport:
    """Rescaled component summaries from the blob-level universality pipeline."""
    model: str
    n: int
    delta: float
    lam: float
    blob_count: int
    q: float
    masses: np.ndarray  # rescaled masses of every component, largest first
    sizes: np.ndarray  # vertex counts of the leading components
    surpluses: np.ndarray
    diameters: np.ndarray  # after the blob-expansion scaling
    blob_counts: np.ndarray
    scaling_factor: float
    diagnostics: Dict[str, float] = field(default_factory=dict)
    free_weight_ratio: Optional[float] = None
    warnings: List[str] = field(default_factory=list)


@dataclass
class WindowScaling:
    """Rescaling of distances and masses at a window parameter, and the limit parameter it maps to."""
    model: str
    distance: float  # multiply graph distances by this
    mass: float  # multiply vertex counts (or free weights) by this
    crit_lambda: float
