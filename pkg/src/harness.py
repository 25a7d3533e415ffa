"""Seeded sweeps, estimators, distribution distances and the blob-level universality pipeline."""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .constants import DEFAULT_DELTA, SCHEMA_VERSION, WORKERS_ENV_VAR
from .csv_output import write_aggregates_csv, write_sweep_csv
from .graphcore import component_stats, components, distance_profile
from .limits import (
    bf_ode_solve,
    bf_scaling,
    bf_window_time,
    bsr_ode_estimate,
    cm_blob_q,
    cm_blob_weights,
    cm_dynamic_scaling,
    cm_entrance_time,
    cm_percolation_scaling,
    irg_constants,
    irg_scaling,
    normalize_kernel,
    poisson_degree_pmf,
)
from .metric import blob_expand, blob_scaling_factor, graph_metric_space
from .models import (
    BFSolution,
    BlobConfig,
    BSREstimate,
    BSRRule,
    CMLimitParams,
    ComponentDecomposition,
    ExperimentConfig,
    Graph,
    Kernel,
    MeasuredMetricSpace,
    PipelineReport,
    SweepResult,
    WeightedVertexSet,
    WindowScaling,
)
from .observables import assumption_diagnostics
from .samplers import (
    IRGWindow,
    assign_types,
    bf_run,
    bsr_run,
    cm_dynamic,
    cm_percolate_stubs,
    cm_percolation_p,
    gen_er,
    gen_gxq,
    gen_irg,
    poisson_degrees,
    regular_degrees,
    replica_rng,
)
from .state_manager import SweepStateManager

logger = logging.getLogger(__name__)

MODELS = ("er", "cm_percolation", "cm_dynamic", "bf", "bsr", "irg")
OBSERVABLES = ("C1", "C2", "C1_scaled", "surplus1", "diam1", "s2", "components")
QUANTILES = (0.1, 0.5, 0.9)
CHECKPOINT_EVERY = 50


# Model constants


@lru_cache(maxsize=1)
def _bf_solution() -> BFSolution:
    return bf_ode_solve()


def _cm_params(params: Mapping[str, Any]) -> CMLimitParams:
    if "degree" in params:
        pk = np.zeros(int(params["degree"]) + 1)
        pk[-1] = 1.0
        return CMLimitParams.from_pmf(pk)
    if "poisson_mean" in params:
        return CMLimitParams.from_pmf(
            poisson_degree_pmf(float(params["poisson_mean"]), int(params.get("min_degree", 0)))
        )
    raise ValueError("Configuration model needs 'degree' or 'poisson_mean'")


def _cm_degrees(params: Mapping[str, Any], n: int, rng: np.random.Generator) -> np.ndarray:
    if "degree" in params:
        return regular_degrees(n, int(params["degree"]))
    return poisson_degrees(n, float(params["poisson_mean"]), rng, int(params.get("min_degree", 0)))


def _irg_kernel(params: Mapping[str, Any]) -> Kernel:
    kappa = np.asarray(params["kappa"], dtype=float)
    mu = np.asarray(params["mu"], dtype=float)
    if params.get("normalize", True):
        kappa = normalize_kernel(kappa, mu)
    return Kernel(kappa=kappa, mu=mu, A=params.get("A"), b=params.get("b"))


def _bsr_rule(params: Mapping[str, Any]) -> BSRRule:
    if "patterns" not in params:
        return BSRRule.bohman_frieze()
    return BSRRule.from_patterns(int(params["K"]), params["patterns"])


@lru_cache(maxsize=8)
def _bsr_constants(key: str) -> BSREstimate:
    return bsr_ode_estimate(_bsr_rule(json.loads(key)))


def _bsr_estimate(params: Mapping[str, Any]) -> BSREstimate:
    return _bsr_constants(json.dumps(dict(params), sort_keys=True, default=str))


def model_scaling(model: str, params: Mapping[str, Any], n: int, lam: float = 0.0) -> WindowScaling:
    """Distance and mass factors that put model components on the common critical scale."""
    if model == "er":
        return WindowScaling(model="er", distance=n ** (-1 / 3), mass=n ** (-2 / 3), crit_lambda=lam)
    if model == "cm_percolation":
        return cm_percolation_scaling(_cm_params(params), n, lam)
    if model == "cm_dynamic":
        return cm_dynamic_scaling(_cm_params(params), n, lam)
    if model == "bf":
        return bf_scaling(_bf_solution(), n, lam)
    if model == "bsr":
        est = _bsr_estimate(params)
        return WindowScaling(model="bsr", distance=n ** (-1 / 3), mass=est.beta ** (1 / 3) / n ** (2 / 3), crit_lambda=lam)
    if model == "irg":
        return irg_scaling(irg_constants(_irg_kernel(params)), n, lam)
    raise ValueError(f"Unknown model '{model}'; expected one of {MODELS}")


def simulate(model: str, params: Mapping[str, Any], n: int, lam: float, rng: np.random.Generator) -> Graph:
    """One graph of the model at window parameter lam."""
    if model == "er":
        return gen_er(n, 1.0 + lam * n ** (-1 / 3), rng)
    if model == "cm_percolation":
        degrees = _cm_degrees(params, n, rng)
        p = float(params["p"]) if "p" in params else cm_percolation_p(_cm_params(params).nu, lam, n)
        return cm_percolate_stubs(degrees, p, rng)
    if model == "cm_dynamic":
        cm = _cm_params(params)
        return cm_dynamic(_cm_degrees(params, n, rng), cm.t_c + lam * n ** (-1 / 3), rng).graph()
    if model == "bf":
        t = bf_window_time(_bf_solution(), lam, n)
        return bf_run(n, t, rng).graph_at(t)
    if model == "bsr":
        est = _bsr_estimate(params)
        t = est.t_c + est.alpha * est.beta ** (2 / 3) * lam * n ** (-1 / 3)
        return bsr_run(_bsr_rule(params), n, t, rng).graph_at(t)
    if model == "irg":
        kernel = _irg_kernel(params)
        types = assign_types(kernel, n, rng, mode=params.get("types", "rounded"))
        return gen_irg(kernel, types, rng, IRGWindow(lam=lam))
    raise ValueError(f"Unknown model '{model}'; expected one of {MODELS}")


# Sweeps


def replica_observables(g: Graph, observables: Sequence[str], scaling: WindowScaling) -> Dict[str, float]:
    unknown = set(observables) - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"Unknown observables {sorted(unknown)}; expected a subset of {OBSERVABLES}")
    decomp = components(g)
    sizes = decomp.sizes
    need_stats = {"surplus1", "diam1"} & set(observables)
    top = component_stats(g, decomp, max_components=1)[0] if need_stats else None
    values = {
        "C1": int(sizes[0]),
        "C2": int(sizes[1]) if len(sizes) > 1 else 0,
        "C1_scaled": float(sizes[0]) * scaling.mass,
        "surplus1": top.surplus if top else None,
        "diam1": top.diameter if top else None,
        "s2": float(np.sum(sizes.astype(float) ** 2)) / g.n,
        "components": decomp.count,
    }
    return {k: values[k] for k in observables}


def _replica_task(
    model: str,
    params: Dict[str, Any],
    n: int,
    lam: float,
    seed: int,
    stream: int,
    replica: int,
    observables: List[str],
) -> Dict[str, Any]:
    rng = replica_rng(seed, stream)
    g = simulate(model, params, n, lam, rng)
    row: Dict[str, Any] = {"n": n, "lambda": lam, "replica": replica}
    row.update(replica_observables(g, observables, model_scaling(model, params, n, lam)))
    return row


def resolve_workers(workers: Optional[int] = None) -> int:
    """CLI value, then the environment variable, then the CPU count."""
    if workers is not None:
        return max(1, workers)
    env = os.getenv(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring non-integer {WORKERS_ENV_VAR}={env!r}")
    return os.cpu_count() or 1


def row_key(row: Mapping[str, Any]) -> Tuple[int, float, int]:
    return int(row["n"]), float(row["lambda"]), int(row["replica"])


def aggregate_rows(rows: Sequence[Mapping[str, Any]], observables: Sequence[str]) -> List[Dict[str, Any]]:
    """Mean, median and quantiles per (n, lambda, observable)."""
    groups: Dict[Tuple[int, float], List[Mapping[str, Any]]] = {}
    for row in rows:
        groups.setdefault((int(row["n"]), float(row["lambda"])), []).append(row)
    out = []
    for (n, lam), members in sorted(groups.items()):
        for obs in observables:
            vals = np.array([r[obs] for r in members if r.get(obs) is not None], dtype=float)
            if not len(vals):
                continue
            q = np.quantile(vals, QUANTILES)
            out.append({
                "n": n,
                "lambda": lam,
                "observable": obs,
                "count": len(vals),
                "mean": float(vals.mean()),
                "median": float(np.median(vals)),
                "q10": float(q[0]),
                "q50": float(q[1]),
                "q90": float(q[2]),
            })
    return out


def run_sweep(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    state_file: Optional[str] = None,
) -> SweepResult:
    """Run every (n, lambda, replica) of the config and write CSV plus JSON summary.

    Replica streams are keyed by position in the grid, so results do not
    depend on worker scheduling. With `state_file` finished rows are
    checkpointed and reused on the next run.
    """
    if cfg.model not in MODELS:
        raise ValueError(f"Unknown model '{cfg.model}'; expected one of {MODELS}")
    workers = resolve_workers(workers)
    state = SweepStateManager(state_file) if state_file else None
    done: Dict[Tuple[int, float, int], Dict[str, Any]] = {}
    if state:
        state.load()
        if not state.matches(cfg):
            logger.warning(f"State file {state_file} belongs to a different config; starting fresh")
            state.reset(cfg)
        done = {row_key(r): r for r in state.rows()}

    tasks = []
    for i, n in enumerate(cfg.n_grid):
        for j, lam in enumerate(cfg.lambda_grid):
            for r in range(cfg.replicas):
                if (n, float(lam), r) in done:
                    continue
                stream = (i * len(cfg.lambda_grid) + j) * cfg.replicas + r
                tasks.append((cfg.model, cfg.params, n, float(lam), cfg.seed, stream, r, list(cfg.observables)))
    logger.info(f"Sweep {cfg.model}: {len(tasks)} replicas to run, {len(done)} restored, {workers} workers")

    def record(row: Dict[str, Any]) -> None:
        done[row_key(row)] = row
        if state:
            state.record(row)
            if len(done) % CHECKPOINT_EVERY == 0:
                state.save()
                logger.info(f"Checkpoint: {len(done)} rows saved")

    if workers == 1 or len(tasks) <= 1:
        for task in tasks:
            record(_replica_task(*task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replica_task, *task) for task in tasks]
            for future in as_completed(futures):
                record(future.result())
    if state:
        state.save()

    rows = [done[k] for k in sorted(done)]
    result = SweepResult(config=cfg, rows=rows, aggregates=aggregate_rows(rows, cfg.observables))
    for lam in cfg.lambda_grid:
        for obs in cfg.observables:
            pairs = [(r["n"], r[obs]) for r in rows if r["lambda"] == float(lam) and r.get(obs) is not None]
            try:
                result.exponents[f"{obs}@{float(lam):g}"] = fit_exponent(pairs)
            except ValueError as e:
                logger.debug(f"No exponent for {obs} at lambda={lam}: {e}")

    fieldnames = ["n", "lambda", "replica"] + list(cfg.observables)
    write_sweep_csv(rows, fieldnames, cfg.output)
    output = Path(cfg.output)
    write_aggregates_csv(result.aggregates, str(output.with_name(output.stem + "_aggregates.csv")))
    write_summary_json(result, str(output.with_suffix(".json")))
    return result


def write_summary_json(result: SweepResult, output_file: str) -> None:
    output_path = Path(output_file)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    summary = {
        "metadata": {
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "schema_version": SCHEMA_VERSION,
            "config": asdict(result.config),
            "rows": len(result.rows),
            "expected_rows": result.expected_rows,
        },
        "aggregates": result.aggregates,
        "exponents": {k: {"slope": s, "stderr": e} for k, (s, e) in result.exponents.items()},
    }
    with open(output_path, "w") as f:
        json.dump(summary, f, indent=2, default=str)
    logger.info(f"Wrote sweep summary to {output_file}")


# Estimators and distribution distances


def fit_exponent(pairs: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Slope and standard error of log(median statistic) against log n."""
    by_n: Dict[float, List[float]] = {}
    for n, value in pairs:
        by_n.setdefault(float(n), []).append(float(value))
    if len(by_n) < 3:
        raise ValueError(f"Need at least 3 distinct n, got {len(by_n)}")
    ns = np.array(sorted(by_n))
    medians = np.array([np.median(by_n[n]) for n in ns])
    if np.any(ns <= 0) or np.any(medians <= 0):
        raise ValueError("Exponent fit needs positive n and positive medians")
    fit = stats.linregress(np.log(ns), np.log(medians))
    return float(fit.slope), float(fit.stderr)


def ks_statistic(sample1: Sequence[float], sample2: Sequence[float]) -> float:
    if len(sample1) == 0 or len(sample2) == 0:
        raise ValueError("KS statistic needs two nonempty samples")
    return float(stats.ks_2samp(np.asarray(sample1, dtype=float), np.asarray(sample2, dtype=float)).statistic)


Pmf = Union[Sequence[float], Mapping[Hashable, float]]


def tv_distance(pmf1: Pmf, pmf2: Pmf) -> float:
    """Half the l1 distance; mappings are aligned on the union of keys, sequences padded with zeros."""
    if isinstance(pmf1, Mapping) and isinstance(pmf2, Mapping):
        if not pmf1 or not pmf2:
            raise ValueError("TV distance needs nonempty pmfs")
        keys = set(pmf1) | set(pmf2)
        return 0.5 * sum(abs(pmf1.get(k, 0.0) - pmf2.get(k, 0.0)) for k in keys)
    a, b = np.asarray(pmf1, dtype=float), np.asarray(pmf2, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("TV distance needs nonempty pmfs")
    size = max(len(a), len(b))
    a, b = np.pad(a, (0, size - len(a))), np.pad(b, (0, size - len(b)))
    return 0.5 * float(np.abs(a - b).sum())


def empirical_pmf(samples: Sequence[Hashable]) -> Dict[Hashable, float]:
    counts: Dict[Hashable, int] = {}
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
    total = len(samples)
    return {k: c / total for k, c in counts.items()}


# Universality pipeline


@dataclass
class BlobStage:
    """Barely subcritical graph with blob weights and the blob-level q."""
    graph: Graph
    decomp: ComponentDecomposition
    x: np.ndarray
    q: float
    point_weights: np.ndarray  # measure inside blobs, per vertex
    free: Optional[np.ndarray] = None  # CM free stubs per blob


def blob_stage(
    model: str,
    params: Mapping[str, Any],
    n: int,
    delta: float,
    lam: float,
    rng: np.random.Generator,
) -> BlobStage:
    """Run the model to its barely subcritical time and read off the blobs."""
    ones = np.ones(n)
    if model == "er":
        g = gen_er(n, 1.0 - n ** (-delta), rng)
        decomp = components(g)
        return BlobStage(g, decomp, decomp.sizes / n ** (2 / 3), n ** (1 / 3 - delta) + lam, ones)
    if model == "cm_dynamic":
        cm = _cm_params(params)
        state = cm_dynamic(_cm_degrees(params, n, rng), cm_entrance_time(cm, n, delta), rng)
        g = state.graph()
        decomp = components(g)
        stubs = state.free_stubs().astype(float)
        free = np.bincount(decomp.labels, weights=stubs, minlength=decomp.count)
        return BlobStage(g, decomp, cm_blob_weights(free, cm, n), cm_blob_q(cm, n, delta, lam), stubs, free)
    if model == "bf":
        sol = _bf_solution()
        t_n = sol.t_c - n ** (-delta)
        g = bf_run(n, t_n, rng).graph_at(t_n)
        decomp = components(g)
        x = sol.beta ** (1 / 3) * decomp.sizes / n ** (2 / 3)
        return BlobStage(g, decomp, x, n ** (1 / 3 - delta) / (sol.alpha * sol.beta ** (2 / 3)) + lam, ones)
    if model == "irg":
        kernel = _irg_kernel(params)
        consts = irg_constants(kernel)
        types = assign_types(kernel, n, rng, mode=params.get("types", "rounded"))
        g = gen_irg(kernel, types, rng, IRGWindow(delta=delta, perturbed=True))
        decomp = components(g)
        x = consts.beta ** (1 / 3) * decomp.sizes / n ** (2 / 3)
        q = n ** (1 / 3 - delta) / consts.beta ** (2 / 3) + irg_scaling(consts, n, lam).crit_lambda
        return BlobStage(g, decomp, x, q, ones)
    raise ValueError(f"Universality pipeline supports er, cm_dynamic, bf and irg, got '{model}'")


def _blob_space(stage: BlobStage, blob: int) -> MeasuredMetricSpace:
    verts = stage.decomp.components[blob]
    w = stage.point_weights[verts]
    if w.sum() <= 0:
        w = np.ones(len(verts))
    return graph_metric_space(stage.graph, verts, w / w.sum())


def universality_pipeline(
    model: str,
    params: Mapping[str, Any],
    n: int,
    rng: np.random.Generator,
    delta: float = DEFAULT_DELTA,
    lam: float = 0.0,
    top: int = 3,
) -> PipelineReport:
    """Blobs at the barely subcritical time, blob-level G(x, q), blob expansion and rescaling."""
    warnings: List[str] = []
    if not 1 / 6 < delta < 1 / 5:
        warnings.append(f"delta={delta} is outside (1/6, 1/5); blob-level limits are not guaranteed")
        logger.warning(warnings[-1])
    if model == "bf":
        warnings.append("bf blob weights ignore growth of blobs by small components after t_n")

    stage = blob_stage(model, params, n, delta, lam, rng)
    decomp, x = stage.decomp, stage.x
    blob_sizes = decomp.sizes
    logger.info(f"{model}: {decomp.count} blobs at n={n}, largest {int(blob_sizes[0])}, q={stage.q:.4f}")

    live = np.flatnonzero(x > 0)
    level = gen_gxq(WeightedVertexSet(x[live]), stage.q, rng)
    superstructure = Graph(decomp.count, live[level.edges] if level.num_edges else level.edges)
    clusters = components(superstructure)
    masses = np.bincount(clusters.labels, weights=x, minlength=clusters.count)
    order = np.argsort(-masses, kind="stable")

    dsum, bdiam, _ = distance_profile(stage.graph, decomp, weights=stage.point_weights)
    wsum = np.bincount(decomp.labels, weights=stage.point_weights, minlength=decomp.count)
    u = np.divide(dsum, wsum ** 2, out=np.zeros_like(dsum), where=wsum > 0)
    factor = blob_scaling_factor(x, u)
    internal = np.bincount(decomp.labels[stage.graph.edges[:, 0]], minlength=decomp.count) - blob_sizes + 1 \
        if stage.graph.num_edges else 1 - blob_sizes

    sizes, surpluses, diameters, counts = [], [], [], []
    free_ratio = None
    for rank, c in enumerate(order[:top]):
        blobs = clusters.components[c]
        local = {int(b): k for k, b in enumerate(blobs)}
        inside = clusters.labels[superstructure.edges[:, 0]] == c if superstructure.num_edges else np.zeros(0, bool)
        sub_edges = [(local[int(a)], local[int(b)]) for a, b in superstructure.edges[inside]]
        sub = Graph.from_pairs(len(blobs), sub_edges)
        spaces = [_blob_space(stage, int(b)) for b in blobs]
        junctions: Dict[Tuple[int, int], int] = {}
        for a, b in sub_edges:
            for i, j in ((a, b), (b, a)):
                if (i, j) not in junctions:
                    junctions[(i, j)] = int(rng.choice(spaces[i].n_points, p=spaces[i].mass))
        expanded, _ = blob_expand(BlobConfig(sub, x[blobs], spaces, junctions), rng)

        size = int(blob_sizes[blobs].sum())
        sizes.append(size)
        surpluses.append(len(sub_edges) - len(blobs) + 1 + int(internal[blobs].sum()))
        diameters.append(factor * expanded.diameter)
        counts.append(len(blobs))
        if rank == 0 and stage.free is not None:
            free_ratio = float(stage.free[blobs].sum()) / size

    diagnostics = assumption_diagnostics(
        WeightedVertexSet(x[live]), stage.q, u[live], float(bdiam.max()) if len(bdiam) else 0.0
    )
    return PipelineReport(
        model=model,
        n=n,
        delta=delta,
        lam=lam,
        blob_count=decomp.count,
        q=stage.q,
        masses=masses[order],
        sizes=np.array(sizes, dtype=np.int64),
        surpluses=np.array(surpluses, dtype=np.int64),
        diameters=np.array(diameters),
        blob_counts=np.array(counts, dtype=np.int64),
        scaling_factor=factor,
        diagnostics=diagnostics,
        free_weight_ratio=free_ratio,
        warnings=warnings,
    )
