#!/usr/bin/env python3
"""Run the acceptance checks and write a JSON report.

Each check simulates at desk scale and compares against closed forms, exact
enumerations or the parabolic Brownian motion limit. --quick shrinks sample
sizes for a smoke run; thresholds are unchanged, so quick failures are
possible on the statistical checks.

Usage:
    python run_acceptance.py [--quick] [--only A1,A5] [--output output/acceptance.json] [--workers 4]

Environment variables (optional):
    CRITWIN_WORKERS - worker processes for the sweeps
"""

import argparse
import logging
import sys
import time
from itertools import combinations
from typing import Any, Callable, Dict, List

import numpy as np

from src.constants import BF_ALPHA_REF, BF_BETA_REF, BF_RHO_REF, DEFAULT_DELTA
from src.graphcore import components
from src.harness import (
    empirical_pmf,
    fit_exponent,
    ks_statistic,
    run_sweep,
    tv_distance,
)
from src.limits import (
    bf_ode_solve,
    cm_drift_fields,
    cm_entrance_targets,
    cm_entrance_time,
    cm_limit_eval,
    irg_bp_expectations,
    mult_coalescent,
    normalize_kernel,
    poisson_degree_pmf,
    sample_parabolic_excursions,
)
from src.main import setup_logging, write_output
from src.metric import ghp_bounds, ghp_exact
from src.models import CMLimitParams, ExperimentConfig, Kernel, MeasuredMetricSpace, WeightedVertexSet
from src.observables import free_edge_susceptibilities, graph_susceptibilities
from src.samplers import IRGWindow, assign_types, cm_dynamic, gen_gxq, gen_irg, poisson_degrees, replica_rng
from src.trees import (
    connected_gxq,
    edge_key,
    enumerate_connected_graphs,
    enumerate_gxq,
    enumerate_ordered_trees,
    enumerate_tilted_trees,
    partition_then_connect,
    sample_ptree,
    sample_tilted_ptree,
)

logger = logging.getLogger("acceptance")

SEED = 20240601
P3 = [0.5, 0.3, 0.2]
IRG_KAPPA = [[1.5, 0.5], [0.5, 1.5]]


def _sizes(quick: bool, full: Any, small: Any) -> Any:
    return small if quick else full


def _n_grid(quick: bool) -> List[int]:
    return [2 ** k for k in (range(10, 14) if quick else range(10, 17))]


def _sweep(model: str, params: Dict[str, Any], n_grid: List[int], replicas: int,
           observables: List[str], workers: int, tag: str) -> List[Dict[str, Any]]:
    cfg = ExperimentConfig(
        model=model, params=params, n_grid=n_grid, lambda_grid=[0.0], replicas=replicas,
        seed=SEED, output=f"output/acceptance/{tag}.csv", observables=observables,
    )
    return run_sweep(cfg, workers=workers).rows


def check_a1(quick: bool, workers: int) -> Dict[str, Any]:
    sol = bf_ode_solve()
    values = {"alpha": sol.alpha, "beta": sol.beta, "rho": sol.rho, "t_c": sol.t_c}
    passed = (
        abs(sol.alpha - BF_ALPHA_REF) <= 0.010
        and abs(sol.beta - BF_BETA_REF) <= 0.010
        and abs(sol.rho - BF_RHO_REF) <= 0.010
    )
    return {"passed": passed, "values": values}


def check_a2(quick: bool, workers: int) -> Dict[str, Any]:
    params = CMLimitParams.from_pmf(poisson_degree_pmf(2.0))
    h = 1e-5
    worst = 0.0
    for t in np.linspace(h, params.t_c - 0.05, 200):
        lo, mid, hi = (cm_limit_eval(float(s), params) for s in (t - h, t, t + h))
        drift = cm_drift_fields(mid.s1, mid.s2, mid.s3, mid.g, mid.D, mid.y, mid.v)
        for attr, key in (("s2", "F2_s"), ("s3", "F3_s"), ("g", "F_g"), ("D", "F_d")):
            numeric = (getattr(hi, attr) - getattr(lo, attr)) / (2 * h)
            worst = max(worst, abs(numeric - drift[key]) / max(abs(drift[key]), 1e-12))
    return {"passed": worst < 1e-6, "values": {"max_relative_error": worst}}


def check_a3(quick: bool, workers: int) -> Dict[str, Any]:
    samples = _sizes(quick, 100_000, 20_000)
    rng = replica_rng(SEED, 3)

    exact = {t.key: prob for t, prob in enumerate_ordered_trees(P3)}
    tv_ptree = tv_distance(empirical_pmf([sample_ptree(P3, rng).key for _ in range(samples)]), exact)

    exact = {t.key: prob for t, prob in enumerate_tilted_trees(P3, 1.0)}
    tv_tilted = tv_distance(empirical_pmf([sample_tilted_ptree(P3, 1.0, rng).key for _ in range(samples)]), exact)

    exact = enumerate_connected_graphs(P3, 1.0)
    drawn = [edge_key(connected_gxq(P3, 1.0, rng).edge_list()) for _ in range(samples)]
    tv_connected = tv_distance(empirical_pmf(drawn), exact)

    w = WeightedVertexSet([0.6, 1.0, 1.4])
    exact = enumerate_gxq(w, 0.8)
    drawn = [edge_key(partition_then_connect(w, 0.8, rng).edge_list()) for _ in range(samples)]
    tv_partition = tv_distance(empirical_pmf(drawn), exact)
    direct = [edge_key(gen_gxq(w, 0.8, rng).edge_list()) for _ in range(samples)]
    tv_direct = tv_distance(empirical_pmf(drawn), empirical_pmf(direct))

    values = {
        "ptree_tv": tv_ptree,
        "tilted_ptree_tv": tv_tilted,
        "connected_gxq_tv": tv_connected,
        "partition_then_connect_tv": tv_partition,
        "partition_vs_gen_gxq_tv": tv_direct,
    }
    passed = tv_ptree < 0.02 and tv_tilted < 0.03 and tv_connected < 0.03 and tv_direct < 0.03
    return {"passed": passed, "values": values}


def _mass_partition(masses: np.ndarray) -> tuple:
    return tuple(sorted(np.round(masses, 9).tolist(), reverse=True))


def check_a4(quick: bool, workers: int) -> Dict[str, Any]:
    replicas = _sizes(quick, 100_000, 20_000)
    rng = replica_rng(SEED, 4)
    w = WeightedVertexSet.uniform(4, 1.0)
    coalescent = [_mass_partition(mult_coalescent(w.x, 0.3, rng).masses) for _ in range(replicas)]
    static = []
    for _ in range(replicas):
        g = gen_gxq(w, 0.3, rng)
        static.append(_mass_partition(components(g).sizes.astype(float)))
    tv = tv_distance(empirical_pmf(coalescent), empirical_pmf(static))
    return {"passed": tv < 0.02, "values": {"tv": tv}}


def _random_space(rng: np.random.Generator, max_points: int = 5) -> MeasuredMetricSpace:
    k = int(rng.integers(1, max_points + 1))
    pts = rng.uniform(0.0, 1.0, size=(k, 2))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    return MeasuredMetricSpace(dist=dist, mass=rng.uniform(0.2, 1.0, size=k))


def check_a5(quick: bool, workers: int) -> Dict[str, Any]:
    rng = replica_rng(SEED, 5)
    triples = _sizes(quick, 100, 15)
    worst_triangle, worst_symmetry, worst_zero = 0.0, 0.0, 0.0
    for _ in range(triples):
        X, Y, Z = (_random_space(rng) for _ in range(3))
        xy, yz, xz = ghp_exact(X, Y), ghp_exact(Y, Z), ghp_exact(X, Z)
        worst_triangle = max(worst_triangle, xz - xy - yz)
        worst_symmetry = max(worst_symmetry, abs(xy - ghp_exact(Y, X)))
        perm = rng.permutation(X.n_points)
        copy = MeasuredMetricSpace(dist=X.dist[np.ix_(perm, perm)], mass=X.mass[perm])
        worst_zero = max(worst_zero, ghp_exact(X, copy))

    instances = _sizes(quick, 200, 30)
    bracket_failures = 0
    for _ in range(instances):
        X, Y = _random_space(rng, 6), _random_space(rng, 6)
        if X.n_points * Y.n_points > 36:
            continue
        lower, upper = ghp_bounds(X, Y)
        value = ghp_exact(X, Y)
        if not lower - 1e-9 <= value <= upper + 1e-9:
            bracket_failures += 1
    values = {
        "triangle_excess": worst_triangle,
        "symmetry_gap": worst_symmetry,
        "isometric_copy_value": worst_zero,
        "bracket_failures": bracket_failures,
    }
    passed = worst_triangle <= 1e-6 and worst_symmetry <= 1e-7 and worst_zero <= 1e-7 and bracket_failures == 0
    return {"passed": passed, "values": values}


def _medians(rows: List[Dict[str, Any]], key: str) -> Dict[int, float]:
    by_n: Dict[int, List[float]] = {}
    for row in rows:
        by_n.setdefault(row["n"], []).append(row[key])
    return {n: float(np.median(v)) for n, v in by_n.items()}


def check_a6_a11(quick: bool, workers: int) -> Dict[str, Dict[str, Any]]:
    grid = _n_grid(quick)
    rows = _sweep("er", {}, grid, _sizes(quick, 200, 50), ["C1", "C1_scaled", "surplus1"], workers, "er")
    slope, stderr = fit_exponent([(r["n"], r["C1"]) for r in rows])

    n_top = grid[-1]
    count = _sizes(quick, 1000, 200)
    scaled = [r["C1_scaled"] for r in rows if r["n"] == n_top]
    if len(scaled) < count:
        extra = _sweep("er", {}, [n_top], count, ["C1_scaled"], workers, "er_top")
        scaled = [r["C1_scaled"] for r in extra]
    rng = replica_rng(SEED, 6)
    limit = []
    for _ in range(count):
        lengths = sample_parabolic_excursions(0.0, rng).lengths
        limit.append(float(lengths[0]) if len(lengths) else 0.0)
    ks = ks_statistic(scaled, limit)
    a6 = {
        "passed": 0.63 <= slope <= 0.72 and ks < 0.08,
        "values": {"slope": slope, "stderr": stderr, "ks": ks},
    }

    means = {}
    for row in rows:
        means.setdefault(row["n"], []).append(row["surplus1"])
    means = {n: float(np.mean(v)) for n, v in means.items()}
    top_mean = means[n_top]
    spread = max(means.values()) / max(min(means.values()), 1e-12)
    a11 = {
        "passed": 0.1 <= top_mean <= 3.0 and spread <= 2.0,
        "values": {"mean_surplus": means, "spread": spread},
    }
    return {"A6": a6, "A11": a11}


def check_a7(quick: bool, workers: int) -> Dict[str, Any]:
    grid = _n_grid(quick)
    rows = _sweep("cm_percolation", {"degree": 3, "p": 0.5}, grid, _sizes(quick, 200, 50),
                  ["C1", "diam1"], workers, "cm_percolation")
    slope, stderr = fit_exponent([(r["n"], r["C1"]) for r in rows])
    diam = _medians(rows, "diam1")
    ratio = diam[grid[-1]] / diam[grid[-4]]
    return {
        "passed": 0.60 <= slope <= 0.74 and 1.6 <= ratio <= 2.4,
        "values": {"slope": slope, "stderr": stderr, "diameter_ratio_8n": ratio},
    }


def check_a8(quick: bool, workers: int) -> Dict[str, Any]:
    n = _sizes(quick, 100_000, 20_000)
    replicas = _sizes(quick, 50, 10)
    delta = DEFAULT_DELTA
    params = CMLimitParams.from_pmf(poisson_degree_pmf(2.0, min_degree=1))
    targets = cm_entrance_targets(params)
    t_n = cm_entrance_time(params, n, delta)
    ratios: Dict[str, List[float]] = {"s3_over_s2_cubed": [], "D_scaled": [], "g_scaled": []}
    for r in range(replicas):
        rng = replica_rng(SEED + 8, r)
        state = cm_dynamic(poisson_degrees(n, 2.0, rng, min_degree=1), t_n, rng)
        rec = free_edge_susceptibilities(state)
        ratios["s3_over_s2_cubed"].append(rec.s3_bar / rec.s2_bar ** 3)
        ratios["D_scaled"].append(rec.D_bar / n ** (2 * delta))
        ratios["g_scaled"].append(rec.g_bar / n ** delta)
    rel = {k: abs(float(np.mean(v)) / targets[k] - 1.0) for k, v in ratios.items()}
    return {
        "passed": rel["s3_over_s2_cubed"] < 0.15 and rel["D_scaled"] < 0.20 and rel["g_scaled"] < 0.15,
        "values": {"relative_error": rel, "targets": targets},
    }


def check_a9(quick: bool, workers: int) -> Dict[str, Any]:
    mu = [0.5, 0.5]
    grid = _n_grid(quick)
    rows = _sweep("irg", {"kappa": IRG_KAPPA, "mu": mu}, grid, _sizes(quick, 200, 50), ["C1"], workers, "irg")
    slope, stderr = fit_exponent([(r["n"], r["C1"]) for r in rows])

    kernel = Kernel(kappa=normalize_kernel(np.array(IRG_KAPPA), np.array(mu)), mu=mu)
    n = _sizes(quick, 100_000, 20_000)
    expected = irg_bp_expectations(kernel, n, DEFAULT_DELTA)["ET0"]
    simulated = []
    for r in range(_sizes(quick, 20, 5)):
        rng = replica_rng(SEED + 9, r)
        g = gen_irg(kernel, assign_types(kernel, n, mode="rounded"), rng, IRGWindow(delta=DEFAULT_DELTA, perturbed=True))
        simulated.append(graph_susceptibilities(g).s2_bar)
    rel = abs(float(np.mean(simulated)) / expected - 1.0)
    return {
        "passed": 0.60 <= slope <= 0.74 and rel < 0.10,
        "values": {"slope": slope, "stderr": stderr, "ET0": expected, "simulated": float(np.mean(simulated))},
    }


def check_a10(quick: bool, workers: int) -> Dict[str, Any]:
    n = _sizes(quick, 2 ** 16, 2 ** 12)
    replicas = _sizes(quick, 500, 100)
    samples = {}
    for model, params in (("er", {}), ("cm_percolation", {"degree": 3}), ("bf", {})):
        rows = _sweep(model, params, [n], replicas, ["C1_scaled"], workers, f"universality_{model}")
        samples[model] = [r["C1_scaled"] for r in rows]
    ks = {f"{a}~{b}": ks_statistic(samples[a], samples[b]) for a, b in combinations(samples, 2)}
    return {"passed": all(v < 0.12 for v in ks.values()), "values": {"ks": ks}}


CHECKS: Dict[str, Callable[[bool, int], Dict[str, Any]]] = {
    "A1": check_a1,
    "A2": check_a2,
    "A3": check_a3,
    "A4": check_a4,
    "A5": check_a5,
    "A7": check_a7,
    "A8": check_a8,
    "A9": check_a9,
    "A10": check_a10,
}


def main() -> None:
    parser = argparse.ArgumentParser(description="Run acceptance checks A1 to A11")
    parser.add_argument("--quick", action="store_true", help="Reduced sample sizes")
    parser.add_argument("--only", default="", help="Comma-separated check ids, e.g. A1,A5")
    parser.add_argument("--output", default="output/acceptance.json")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args()

    setup_logging(args.verbose)
    wanted = {c.strip().upper() for c in args.only.split(",") if c.strip()}
    results: Dict[str, Dict[str, Any]] = {}

    def run(ids: List[str], fn: Callable[[], Dict[str, Any]]) -> None:
        if wanted and not wanted & set(ids):
            return
        started = time.perf_counter()
        try:
            out = fn()
        except (ValueError, RuntimeError) as e:
            logger.error(f"{'/'.join(ids)} raised: {e}")
            out = {i: {"passed": False, "error": str(e)} for i in ids} if len(ids) > 1 else {"passed": False, "error": str(e)}
        elapsed = time.perf_counter() - started
        batch = out if len(ids) > 1 else {ids[0]: out}
        for cid, res in batch.items():
            if wanted and cid not in wanted:
                continue
            res["seconds"] = elapsed
            results[cid] = res
            logger.info(f"{cid}: {'PASS' if res['passed'] else 'FAIL'} {res.get('values', res.get('error'))}")

    for cid, fn in CHECKS.items():
        run([cid], lambda fn=fn: fn(args.quick, args.workers))
        if cid == "A5":
            run(["A6", "A11"], lambda: check_a6_a11(args.quick, args.workers))

    write_output({"results": results}, args.output, quick=args.quick)
    failed = [cid for cid, res in results.items() if not res["passed"]]
    if failed:
        logger.error(f"Failed checks: {', '.join(failed)}")
        sys.exit(1)
    logger.info(f"All {len(results)} checks passed")


if __name__ == "__main__":
    main()
