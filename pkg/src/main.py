"""Command-line entry point for critwin."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from .constants import DEFAULT_DELTA, LIMIT_GRID_POINTS, SCHEMA_VERSION
from .csv_output import write_constants_csv, write_edge_list, write_susceptibility_csv, write_trajectory_csv
from .harness import MODELS, run_sweep, simulate, universality_pipeline
from .input_parser import load_config, load_kernel, load_space, parse_degrees, parse_edge_list, parse_grid, save_space
from .limits import bf_ode_solve, bsr_ode_estimate, cm_limit_eval, irg_constants, mult_coalescent
from .metric import ghp_bounds, ghp_exact
from .models import BSRRule, CMLimitParams, CMLimitValues, SusceptibilityRecord
from .observables import free_edge_susceptibilities, graph_susceptibilities
from .samplers import HalfEdgeState, cm_dynamic, cm_uniform_match, replica_rng
from .trees import sample_crit


def setup_logging(verbose: bool = False) -> None:
    """Configure logging."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stdout)]
    )


def write_output(payload: Dict[str, Any], output_file: str, **metadata: Any) -> None:
    """Write a JSON document with a metadata block."""
    output_path = Path(output_file)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output = {
        "metadata": {
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "schema_version": SCHEMA_VERSION,
            **metadata,
        },
        **payload,
    }
    with open(output_path, "w") as f:
        json.dump(output, f, indent=2, default=_jsonable)
    logging.info(f"Wrote {output_file}")


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def _params(raw: str) -> Dict[str, Any]:
    try:
        return json.loads(raw) if raw else {}
    except json.JSONDecodeError as e:
        raise ValueError(f"--params is not valid JSON: {e}") from e


def cmd_generate(args: argparse.Namespace) -> None:
    rng = replica_rng(args.seed)
    if args.degrees:
        g = cm_uniform_match(parse_degrees(args.degrees), rng)
    else:
        g = simulate(args.model, _params(args.params), args.n, args.lam, rng)
    write_edge_list(g, args.output)


def cmd_observe(args: argparse.Namespace) -> None:
    if args.edges:
        records = [graph_susceptibilities(parse_edge_list(args.edges))]
    else:
        times = sorted(float(t) for t in args.times.split(","))
        records: List[SusceptibilityRecord] = []

        def snapshot(state: HalfEdgeState) -> None:
            records.append(free_edge_susceptibilities(state, with_distances=not args.no_distances))

        cm_dynamic(parse_degrees(args.degrees), times[-1], replica_rng(args.seed), times, snapshot)
    write_susceptibility_csv(records, args.output)


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_sweep(cfg, workers=args.workers, state_file=args.state_file)
    for key, (slope, stderr) in result.exponents.items():
        logging.getLogger(__name__).info(f"Exponent {key}: {slope:.4f} +/- {stderr:.4f}")


def _constants_path(output_file: str) -> str:
    path = Path(output_file)
    return str(path.with_name(f"{path.stem}_constants{path.suffix or '.csv'}"))


def cmd_limits(args: argparse.Namespace) -> None:
    grid = parse_grid(args.grid) if args.grid else None
    if args.model == "cm":
        params = CMLimitParams.from_degrees(parse_degrees(args.degrees))
        if grid is None:
            grid = np.linspace(0.0, params.t_c, LIMIT_GRID_POINTS, endpoint=False)
        rows = [asdict(cm_limit_eval(float(t), params)) for t in grid]
        write_trajectory_csv(rows, [f.name for f in fields(CMLimitValues)], args.output)
        write_constants_csv({**asdict(params), "t_c": params.t_c}, _constants_path(args.output))
    elif args.model == "bf":
        if grid is None:
            t_c = bf_ode_solve(v_form=args.v_form).t_c
            grid = np.linspace(0.0, t_c, LIMIT_GRID_POINTS, endpoint=False)
        sol = bf_ode_solve(t_grid=grid, v_form=args.v_form)
        columns = ["t", "x", "s2", "s3", "y", "v"]
        rows = [dict(zip(columns, values)) for values in zip(*(getattr(sol, c) for c in columns))]
        write_trajectory_csv(rows, columns, args.output)
        write_constants_csv(
            {"t_c": sol.t_c, "alpha": sol.alpha, "beta": sol.beta, "rho": sol.rho, "v_form": sol.v_form},
            _constants_path(args.output),
        )
    elif args.model == "bsr":
        rule = BSRRule.from_patterns(args.K, json.loads(args.rule)) if args.rule else BSRRule.bohman_frieze()
        write_constants_csv({**asdict(bsr_ode_estimate(rule)), "K": rule.K}, args.output)
    else:
        write_constants_csv(asdict(irg_constants(load_kernel(args.kernel))), args.output)


def cmd_ghp(args: argparse.Namespace) -> None:
    X1, X2 = load_space(args.space1), load_space(args.space2)
    if args.bounds:
        lower, upper = ghp_bounds(X1, X2)
        print(f"{lower:.12g} {upper:.12g}")
    else:
        print(f"{ghp_exact(X1, X2):.12g}")


def cmd_coalescent(args: argparse.Namespace) -> None:
    masses = [float(m) for m in args.masses.split(",")]
    runs = []
    for r in range(args.replicas):
        state = mult_coalescent(masses, args.duration, replica_rng(args.seed, r))
        runs.append({"replica": r, "masses": state.masses, "merges": state.merges})
    write_output({"runs": runs}, args.output, masses=masses, duration=args.duration)


def cmd_crit(args: argparse.Namespace) -> None:
    spaces = sample_crit(args.lam, args.k, replica_rng(args.seed), points=args.points)
    out = Path(args.output_dir)
    for i, space in enumerate(spaces):
        save_space(space, str(out / f"crit_{i}.json"))
    logging.getLogger(__name__).info(f"Wrote {len(spaces)} limit spaces to {out}")


def cmd_pipeline(args: argparse.Namespace) -> None:
    report = universality_pipeline(
        args.model, _params(args.params), args.n, replica_rng(args.seed), delta=args.delta, lam=args.lam
    )
    write_output(asdict(report), args.output, model=args.model, n=args.n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Critical random graphs: samplers, limits and GHP tools")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None if name == "sweep" else 0, help="Master seed")
        return p

    p = add("generate", "Sample one graph and write its edge list")
    p.add_argument("--model", choices=MODELS, default="er")
    p.add_argument("--params", default="", help="Model parameters as JSON")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--lam", type=float, default=0.0, help="Window parameter")
    p.add_argument("--degrees", help="Degree file; samples a uniform configuration model instead")
    p.add_argument("--output", default="output/graph.edges")
    p.set_defaults(func=cmd_generate)

    p = add("observe", "Susceptibilities of an edge list or of a dynamic CM trajectory")
    p.add_argument("--edges", help="Edge list file")
    p.add_argument("--degrees", help="Degree file for the dynamic configuration model")
    p.add_argument("--times", default="0.5", help="Comma-separated observation times")
    p.add_argument("--no-distances", action="store_true", help="Skip the distance functional D")
    p.add_argument("--output", default="output/susceptibilities.csv")
    p.set_defaults(func=cmd_observe)

    p = add("sweep", "Run a seeded sweep from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--state-file", default=None, help="Checkpoint file for resuming")
    p.add_argument("--workers", type=int, default=None, help="Worker processes (overrides CRITWIN_WORKERS)")
    p.set_defaults(func=cmd_sweep)

    p = add("limits", "Closed-form and ODE limit constants")
    p.add_argument("--model", choices=["cm", "bf", "bsr", "irg"], required=True)
    p.add_argument("--degrees", help="Degree file (cm)")
    p.add_argument("--grid", help="Times as `t1,t2,...` or `start:stop:count` (cm, bf); default spans [0, t_c)")
    p.add_argument("--v-form", choices=["primary", "alternative"], default="primary")
    p.add_argument("--K", type=int, default=1, help="Size cap of the rule (bsr)")
    p.add_argument("--rule", help="Rule patterns as JSON (bsr)")
    p.add_argument("--kernel", help="Kernel JSON (irg)")
    p.add_argument("--output", default="output/limits.csv", help="Trajectory CSV; constants go to <stem>_constants.csv")
    p.set_defaults(func=cmd_limits)

    p = add("ghp", "GHP distance between two space JSON files")
    p.add_argument("space1")
    p.add_argument("space2")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="Exact value (default)")
    mode.add_argument("--bounds", action="store_true", help="Lower and upper bounds")
    p.set_defaults(func=cmd_ghp)

    p = add("coalescent", "Run the multiplicative coalescent")
    p.add_argument("--masses", required=True, help="Comma-separated initial masses")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--output", default="output/coalescent.json")
    p.set_defaults(func=cmd_coalescent)

    p = add("crit", "Sample limit spaces of the critical window")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--k", type=int, default=3, help="Number of components")
    p.add_argument("--points", type=int, default=256, help="Sampled points per component")
    p.add_argument("--output-dir", default="output/crit")
    p.set_defaults(func=cmd_crit)

    p = add("pipeline", "Blob-level universality pipeline for one model")
    p.add_argument("--model", choices=["er", "cm_dynamic", "bf", "irg"], required=True)
    p.add_argument("--params", default="", help="Model parameters as JSON")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--output", default="output/pipeline.json")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main() -> None:
    args = build_parser().parse_args()
    setup_logging(args.verbose)
    logger = logging.getLogger(__name__)

    if args.command == "observe" and not args.edges and not args.degrees:
        logger.error("observe needs --edges or --degrees")
        sys.exit(1)
    try:
        args.func(args)
    except (ValueError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
