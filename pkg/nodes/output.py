"""Artifact writer node: CSV/JSON tables, summary and manifest."""

import json
import math
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from core.loader import dump_config
from core.state import ExperimentState, RunManifest
from schemas.tables import TableSchemas
from utils.decorators import validate_node_input

from .base import BaseNode


def code_version() -> str:
    try:
        return version("bpire-lab")
    except PackageNotFoundError:
        return "unknown"


def write_table(frame: pd.DataFrame, path: Path, name: str, fmt: str) -> Path:
    """Write one table; CSVs start with a versioned schema comment."""
    schema = TableSchemas.all().get(name)
    if fmt == "json":
        target = path / f"{name}.json"
        target.write_text(frame.to_json(orient="records", double_precision=15), encoding="utf-8")
        return target
    target = path / f"{name}.csv"
    with target.open("w", encoding="utf-8", newline="") as handle:
        if schema is not None:
            handle.write(schema.header_comment + "\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return target


def write_json(data: Dict[str, Any], target: Path) -> Path:
    target.write_text(json.dumps(data, indent=2, default=str) + "\n", encoding="utf-8")
    return target


class OutputNode(BaseNode):
    """Writes every artifact of a run, including partial ones after a failure."""

    def __init__(self):
        super().__init__("output")

    @validate_node_input(["config", "out_dir", "chunk_size"])
    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        run = config.experiment
        out_dir = Path(state["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)

        artifacts: List[str] = []
        for name, frame in sorted(state.get("tables", {}).items()):
            artifacts.append(write_table(frame, out_dir, name, run.format).name)

        complete = state.get("exit_code", 0) == 0
        units = config.walk.excursions if run.kind in ("walk", "couple") else run.replicas
        summary = {**state.get("summary", {}), "complete": complete}
        artifacts.append(write_json(summary, out_dir / "summary.json").name)

        manifest = RunManifest(
            config=dump_config(config),
            code_version=code_version(),
            seeds={
                "seed": run.seed,
                "chunks": math.ceil(units / state["chunk_size"]),
            },
            workers=state["workers"],
            chunk_size=state["chunk_size"],
            started_at=state["execution_metadata"].get("start_time", ""),
            finished_at=datetime.now(timezone.utc).isoformat(),
            complete=complete,
            exit_code=state.get("exit_code", 0),
            artifacts=artifacts,
            errors=list(state.get("errors", [])),
            warnings=list(state.get("warnings", [])),
        )
        write_json(manifest.model_dump(mode="json"), out_dir / "manifest.json")
        artifacts.append("manifest.json")

        self.logger.info(f"Wrote {len(artifacts)} artifacts to {out_dir}")
        return {"artifacts": artifacts}
