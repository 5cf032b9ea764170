# Run metadata + JSON-lines traces. One RunRecorder owns one run directory.
from __future__ import annotations

import json
import logging
import platform
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import pandas as pd

from longitudinal_gc import __version__
from longitudinal_gc.settings import config_digest

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ("numpy", "pandas", "scipy", "statsmodels", "torch", "networkx", "graphviz",
                    "joblib", "PyYAML", "jsonschema")


def collect_versions(packages: Iterable[str] = TRACKED_PACKAGES) -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"longitudinal_gc": __version__, "python": platform.python_version()}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class RunRecorder:
    """Single writer for a run directory: artifacts, run_meta.json and trace.jsonl."""

    def __init__(self, run_dir: Path | str, traces: bool = True):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.traces = traces
        self.trace_file = self.run_dir / "trace.jsonl"
        self.started = time.perf_counter()
        self.timings: Dict[str, float] = {}

    def path(self, name: str) -> Path:
        return self.run_dir / name

    # ---- Artifacts ----

    def write_json(self, name: str, payload: Any) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        return target

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, na_rep="", encoding="utf-8", lineterminator="\n")
        return target

    # ---- Telemetry ----

    def mark(self, stage: str) -> None:
        self.timings[stage] = round(time.perf_counter() - self.started, 3)

    def log_trace(self, record: Mapping[str, Any]) -> None:
        if not self.traces:
            return
        with open(self.trace_file, "a", encoding="utf-8") as f:
            json.dump(dict(record), f, sort_keys=True, default=str)
            f.write("\n")

    def write_meta(self, command: str, settings: Mapping[str, Any], seeds: Mapping[str, Any],
                   extra: Optional[Mapping[str, Any]] = None) -> Path:
        self.mark("total")
        payload = {
            "command": command,
            "config_digest": config_digest(settings),
            "settings": settings,
            "seeds": dict(seeds),
            "versions": collect_versions(),
            "timings_seconds": dict(self.timings),
        }
        if extra:
            payload.update(extra)
        logger.debug("Writing run metadata to %s", self.run_dir)
        return self.write_json("run_meta.json", payload)
