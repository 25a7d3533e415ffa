"""Parse degree sequences, edge lists, kernels, metric spaces and sweep configs."""

import json
import logging
import re
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .metric import space_from_json, space_to_json
from .models import ExperimentConfig, Graph, Kernel, MeasuredMetricSpace

HEADER_PATTERN = re.compile(r"n=(\d+)")


def parse_degrees(path: str) -> np.ndarray:
    """One nonnegative integer per line; `#` comments and blank lines ignored."""
    logger = logging.getLogger(__name__)
    degrees: List[int] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                d = int(line)
                if d < 0:
                    raise ValueError("negative degree")
                degrees.append(d)
            except ValueError as e:
                logger.warning(f"Skipping invalid degree on line {lineno}: {line!r} - {e}")
    logger.info(f"Loaded {len(degrees)} degrees from {path}")
    return np.array(degrees, dtype=np.int64)


def parse_edge_list(path: str, n: Optional[int] = None) -> Graph:
    """Edge list as written by write_edge_list.

    Only a first line `n=<count>` is a header; without one n = max id + 1.
    An explicit `n` overrides the header.
    """
    logger = logging.getLogger(__name__)
    pairs: List[Tuple[int, int]] = []
    header_n: Optional[int] = None
    with open(path, encoding="utf-8") as f:
        lines = [(i, raw.split("#", 1)[0].split()) for i, raw in enumerate(f, 1)]
    lines = [(i, parts) for i, parts in lines if parts]
    if lines and len(lines[0][1]) == 1:
        match = HEADER_PATTERN.fullmatch(lines[0][1][0])
        if match:
            header_n = int(match.group(1))
            lines = lines[1:]
    for lineno, parts in lines:
        try:
            if len(parts) != 2:
                raise ValueError(f"expected 2 fields, got {len(parts)}")
            u, v = int(parts[0]), int(parts[1])
            if u < 0 or v < 0:
                raise ValueError("negative vertex id")
            pairs.append((u, v))
        except ValueError as e:
            logger.warning(f"Skipping invalid edge on line {lineno}: {' '.join(parts)} - {e}")
    size = n if n is not None else header_n
    if size is None:
        size = max((max(u, v) for u, v in pairs), default=-1) + 1
    if pairs and max(max(u, v) for u, v in pairs) >= size:
        raise ValueError(f"Edge endpoint out of range for n={size}")
    logger.info(f"Loaded {len(pairs)} edges on {size} vertices from {path}")
    return Graph.from_pairs(size, pairs)


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path} is not valid JSON: {e}") from e


def load_kernel(path: str) -> Kernel:
    """JSON object with `kappa`, `mu` and optional `A`, `b`."""
    data = _load_json(path)
    try:
        return Kernel(kappa=data["kappa"], mu=data["mu"], A=data.get("A"), b=data.get("b"))
    except KeyError as e:
        raise ValueError(f"Kernel file {path} is missing {e}") from e


def load_space(path: str) -> MeasuredMetricSpace:
    space = space_from_json(_load_json(path))
    space.validate()
    return space


def save_space(space: MeasuredMetricSpace, path: str) -> None:
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        json.dump(space_to_json(space), f, indent=2)


def load_config(path: str) -> ExperimentConfig:
    """Sweep config JSON; unknown keys are logged and ignored."""
    data = _load_json(path)
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = sorted(set(data) - known)
    if extra:
        logging.getLogger(__name__).warning(f"Ignoring unknown config keys: {extra}")
    if "model" not in data:
        raise ValueError(f"Config {path} has no 'model'")
    return ExperimentConfig(**{k: v for k, v in data.items() if k in known})


def parse_grid(raw: str) -> np.ndarray:
    """Time grid from `t1,t2,...` or `start:stop:count` (stop included)."""
    raw = raw.strip()
    try:
        if ":" in raw:
            start, stop, count = raw.split(":")
            if int(count) < 1:
                raise ValueError("count must be at least 1")
            return np.linspace(float(start), float(stop), int(count))
        return np.array(sorted(float(t) for t in raw.split(",") if t.strip()))
    except ValueError as e:
        raise ValueError(f"Invalid grid {raw!r}: {e}") from e
