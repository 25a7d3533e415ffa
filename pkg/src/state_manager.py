"""Persists finished sweep rows so an interrupted sweep can resume."""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .models import ExperimentConfig

RowKey = Tuple[int, float, int]


class SweepStateManager:
    """Checkpoint of completed (n, lambda, replica) rows for one sweep config."""

    def __init__(self, state_file: str = "state/sweep.json"):
        self.state_file = Path(state_file)
        self.config: Optional[Dict[str, Any]] = None
        self.completed: Dict[RowKey, Dict[str, Any]] = {}
        self.logger = logging.getLogger(__name__)

    @staticmethod
    def _fingerprint(cfg: ExperimentConfig) -> Dict[str, Any]:
        # output path does not change the rows
        data = asdict(cfg)
        data.pop("output", None)
        return json.loads(json.dumps(data, default=str))

    @staticmethod
    def _key(row: Dict[str, Any]) -> RowKey:
        return int(row["n"]), float(row["lambda"]), int(row["replica"])

    def load(self) -> None:
        """Load checkpoint from file."""
        if self.state_file.exists():
            with open(self.state_file) as f:
                self._load_from_json(f.read())
        else:
            self.logger.info("No existing sweep state found, starting fresh")

    def _load_from_json(self, json_str: str) -> None:
        try:
            data = json.loads(json_str)
            self.config = data.get("config")
            self.completed = {self._key(row): row for row in data.get("rows", [])}
            self.logger.info(f"Loaded {len(self.completed)} completed rows")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            self.logger.error(f"Failed to parse sweep state: {e}")
            self.config, self.completed = None, {}

    def save(self) -> None:
        """Save checkpoint to file, rows ordered by key."""
        self.state_file.parent.mkdir(parents=True, exist_ok=True)
        data = {
            "config": self.config,
            "rows": [self.completed[k] for k in sorted(self.completed)],
        }
        with open(self.state_file, "w") as f:
            json.dump(data, f, indent=2, default=str)
        self.logger.debug(f"Saved {len(self.completed)} rows to {self.state_file}")

    def matches(self, cfg: ExperimentConfig) -> bool:
        """True when the checkpoint is empty or was written for this config."""
        if self.config is None:
            self.config = self._fingerprint(cfg)
            return True
        return self.config == self._fingerprint(cfg)

    def reset(self, cfg: ExperimentConfig) -> None:
        self.config = self._fingerprint(cfg)
        self.completed = {}

    def get_row(self, key: RowKey) -> Optional[Dict[str, Any]]:
        return self.completed.get(key)

    def record(self, row: Dict[str, Any]) -> None:
        self.completed[self._key(row)] = row

    def rows(self) -> List[Dict[str, Any]]:
        return [self.completed[k] for k in sorted(self.completed)]
