"""CSV output for susceptibility trajectories, sweeps and edge lists."""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from .constants import CSV_PRECISION, SUSCEPTIBILITY_FIELDS
from .models import Graph, SusceptibilityRecord
from .observables import record_to_row


def format_value(value: Any) -> str:
    """Floats with CSV_PRECISION significant digits, None as empty."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{CSV_PRECISION}g}"
    return str(value)


def write_susceptibility_csv(
    records: Iterable[SusceptibilityRecord],
    output_file: str = "output/susceptibilities.csv"
) -> int:
    """Write one row per record.

    Returns number of rows written.
    """
    logger = logging.getLogger(__name__)
    output_path = Path(output_file)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    row_count = 0
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SUSCEPTIBILITY_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow(record_to_row(record))
            row_count += 1

    logger.info(f"Wrote {row_count} susceptibility rows to {output_file}")
    return row_count


def _write_rows(rows: Sequence[Dict[str, Any]], fieldnames: List[str], output_file: str) -> int:
    output_path = Path(output_file)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_value(row.get(k)) for k in fieldnames})
    return len(rows)


def write_sweep_csv(
    rows: Sequence[Dict[str, Any]],
    fieldnames: List[str],
    output_file: str = "output/sweep.csv"
) -> int:
    """Write per-replica sweep rows in the given order."""
    count = _write_rows(rows, fieldnames, output_file)
    logging.getLogger(__name__).info(f"Wrote {count} sweep rows to {output_file}")
    return count


def write_aggregates_csv(
    aggregates: Sequence[Dict[str, Any]],
    output_file: str = "output/sweep_aggregates.csv"
) -> int:
    fieldnames = ["n", "lambda", "observable", "count", "mean", "median", "q10", "q50", "q90"]
    count = _write_rows(aggregates, fieldnames, output_file)
    logging.getLogger(__name__).info(f"Wrote {count} aggregate rows to {output_file}")
    return count


def write_trajectory_csv(
    rows: Sequence[Dict[str, Any]],
    fieldnames: List[str],
    output_file: str = "output/limits.csv"
) -> int:
    """Write limit trajectories, one row per grid time."""
    count = _write_rows(rows, fieldnames, output_file)
    logging.getLogger(__name__).info(f"Wrote {count} trajectory rows to {output_file}")
    return count


def constant_rows(constants: Mapping[str, Any]) -> List[Dict[str, Any]]:
    """`name,value` rows; array entries become `name[i]` or `name[i][j]`."""
    rows: List[Dict[str, Any]] = []
    for name, value in constants.items():
        if isinstance(value, np.ndarray):
            for index, item in np.ndenumerate(value):
                label = name + "".join(f"[{i}]" for i in index)
                rows.append({"name": label, "value": item.item()})
        else:
            rows.append({"name": name, "value": value})
    return rows


def write_constants_csv(constants: Mapping[str, Any], output_file: str = "output/limits_constants.csv") -> int:
    count = _write_rows(constant_rows(constants), ["name", "value"], output_file)
    logging.getLogger(__name__).info(f"Wrote {count} constants to {output_file}")
    return count


def write_edge_list(g: Graph, output_file: str = "output/graph.edges") -> int:
    """Header line `n=<count>`, then one `u v` line per edge in construction order."""
    output_path = Path(output_file)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write(f"n={g.n}\n")
        for u, v in g.edges:
            f.write(f"{int(u)} {int(v)}\n")
    logging.getLogger(__name__).info(f"Wrote {g.num_edges} edges to {output_file}")
    return g.num_edges
