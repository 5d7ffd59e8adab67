"""Simulation nodes: BPIRE batches, walks, coupling, ladder and AR runs.

Chunk workers are module-level functions so they can be shipped to a
process pool; every worker rebuilds its StreamFactory from the seed.
"""

from functools import partial
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import InsufficientReplicasError
from core.state import ExperimentState
from schemas.models import EnvironmentSpec, ExperimentConfig
from schemas.tables import TableSchemas
from tools.branching import BatchResult, simulate_batch
from tools.classify import PathOutcome, empirical_classify, outcomes_from_batch
from tools.ladder import ladder_epochs_table, ladder_tail_estimate
from tools.parallel import ChunkTask, run_chunks
from tools.recursion import growth_event_frequency
from tools.streams import StreamFactory
from tools.walk import (
    CookieEnvironment,
    ExcursionSummary,
    excursion_rows,
    right_excursion,
    run_excursion,
    summarize_right_recurrence,
)

from .base import BaseNode


# ---------------------------------------------------------------------------
# Run parameters
# ---------------------------------------------------------------------------

def effective_spec(state: ExperimentState) -> EnvironmentSpec:
    """Environment with the run's exact threshold applied."""
    config = state["config"]
    spec = config.environment
    if config.experiment.exact_threshold is not None:
        threshold = config.experiment.exact_threshold
    elif "exact_threshold" not in spec.model_fields_set:
        threshold = state["settings"].exact_threshold
    else:
        return spec
    return spec.model_copy(update={"exact_threshold": threshold})


def run_horizons(config: ExperimentConfig) -> List[int]:
    run = config.experiment
    return sorted(set(run.horizons) | {run.horizon}) if run.horizons else [run.horizon]


def confidence_level(state: ExperimentState) -> float:
    significance = state["config"].classify.significance or state["settings"].significance
    return 1.0 - significance


def decision_band(state: ExperimentState) -> Tuple[float, float]:
    return tuple(state["config"].classify.decision_band or state["settings"].decision_band)


# ---------------------------------------------------------------------------
# Chunk workers
# ---------------------------------------------------------------------------

def bpire_chunk(
    spec: EnvironmentSpec,
    seed: int,
    horizon: int,
    mode: str,
    checkpoints: Sequence[int],
    streaming: bool,
    record_every: int,
    max_path_cells: int,
    task: ChunkTask,
) -> BatchResult:
    return simulate_batch(
        spec, horizon, task.size, StreamFactory(seed), chunk=task.chunk, mode=mode,
        record_every=record_every, checkpoints=checkpoints, streaming=streaming,
        max_path_cells=max_path_cells,
    )


def walk_chunk(
    spec: EnvironmentSpec,
    seed: int,
    horizon: int,
    coupling: bool,
    record_steps: bool,
    task: ChunkTask,
) -> Tuple[List[ExcursionSummary], List[Tuple[int, int, int]]]:
    streams = StreamFactory(seed)
    summaries, rows = [], []
    for walk_id in range(task.start, task.start + task.size):
        summaries.append(run_excursion(spec, streams, walk_id, horizon, coupling))
        if record_steps:
            path = right_excursion(CookieEnvironment(spec, streams, walk_id), horizon, coupling=False)
            rows.extend(excursion_rows(walk_id, path))
    return summaries, rows


# ---------------------------------------------------------------------------
# Table builders
# ---------------------------------------------------------------------------

def bpire_table(batch: BatchResult, first_replica: int) -> pd.DataFrame:
    """Replica-major (replica, generation, population_or_log, is_log, hit_zero_at) rows."""
    generations = batch.generations
    exact = batch.exact.T.ravel()
    logs = batch.log_value.T.ravel()
    is_log = exact < 0
    values = [repr(float(v)) if flag else str(int(e)) for e, v, flag in zip(exact, logs, is_log)]
    return pd.DataFrame({
        "replica": np.repeat(first_replica + np.arange(batch.size), len(generations)),
        "generation": np.tile(generations, batch.size),
        "population_or_log": values,
        "is_log": is_log.astype(int),
        "hit_zero_at": np.repeat(batch.hit_zero_at, len(generations)),
    }, columns=list(TableSchemas.BPIRE.columns))


def proportion_table(statistics, schema=TableSchemas.CLASSIFY) -> pd.DataFrame:
    return pd.DataFrame(
        [(s.horizon, s.fraction, s.ci_low, s.ci_high) for s in statistics],
        columns=list(schema.columns),
    )


def excursion_table(summaries: Sequence[ExcursionSummary]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (s.walk_id, s.steps, int(s.returned), int(s.left_first), int(s.coupled),
             int(s.agrees), -1 if s.extinct_at is None else s.extinct_at)
            for s in summaries
        ],
        columns=list(TableSchemas.EXCURSION.columns),
    )


def simulate_bpire(state: ExperimentState, spec: EnvironmentSpec, horizons: Sequence[int], streaming: bool):
    """Run every chunk of a BPIRE experiment; returns (task, batch) pairs by chunk id."""
    run = state["config"].experiment
    worker = partial(
        bpire_chunk, spec, run.seed, max(horizons), run.mode, list(horizons),
        streaming, run.record_every, state["settings"].max_path_cells,
    )
    return run_chunks(worker, run.replicas, state["chunk_size"], state["workers"])


def classify_batches(state: ExperimentState, results, horizons: Sequence[int]) -> Dict[str, Any]:
    """Empirical classification of simulated batches, or a warning when too few."""
    outcomes: List[PathOutcome] = []
    for _, batch in results:
        outcomes.extend(outcomes_from_batch(batch, horizons))
    try:
        report = empirical_classify(
            outcomes, horizons, "branching", decision_band(state), confidence_level(state),
            seeds=[state["config"].experiment.seed],
        )
    except InsufficientReplicasError as e:
        return {"warnings": [str(e)]}
    return {"report": report}


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------

class BranchingNode(BaseNode):
    """Simulates BPIRE replicas and summarizes hitting of zero and growth."""

    def __init__(self):
        super().__init__("bpire")

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        spec = effective_spec(state)
        horizons = run_horizons(config)
        results = simulate_bpire(state, spec, horizons, config.experiment.streaming)

        table = pd.concat([bpire_table(batch, task.start) for task, batch in results], ignore_index=True)
        approximate = int(sum(int(batch.approximate.sum()) for _, batch in results))
        summary: Dict[str, Any] = {
            "replicas": config.experiment.replicas,
            "horizon": max(horizons),
            "mode": config.experiment.mode,
            "approximate_replicas": approximate,
            "chunks": len(results),
        }
        classified = classify_batches(state, results, horizons)
        update: Dict[str, Any] = {"tables": {"bpire": table}, "warnings": classified.get("warnings", [])}
        if "report" in classified:
            summary["empirical"] = classified["report"].model_dump(mode="json")
            update["tables"]["classify"] = proportion_table(classified["report"].return_fractions)
        update["summary"] = {"bpire": summary}
        self.logger.info(f"Simulated {config.experiment.replicas} replicas over {max(horizons)} generations")
        return update


class WalkNode(BaseNode):
    """Right excursions of the cookie walk, optionally with the branching coupling."""

    def __init__(self, coupling: bool = False):
        super().__init__("couple" if coupling else "walk")
        self.coupling = coupling

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        spec = effective_spec(state)
        horizons = run_horizons(config)
        excursions = config.walk.excursions
        record_steps = config.walk.record_steps and not config.experiment.streaming

        worker = partial(walk_chunk, spec, config.experiment.seed, max(horizons), self.coupling, record_steps)
        results = run_chunks(worker, excursions, state["chunk_size"], state["workers"])
        summaries = [s for _, (chunk_summaries, _) in results for s in chunk_summaries]

        report = summarize_right_recurrence(summaries, horizons, self.coupling, confidence_level(state))
        summary: Dict[str, Any] = {"right_recurrence": report.model_dump(mode="json")}
        if self.coupling:
            summary["exact_coupling_matches"] = f"{report.exact_agreements}/{report.coupled_excursions}"
            summary["uncoupled_excursions"] = excursions - report.coupled_excursions

        update: Dict[str, Any] = {"tables": {"excursion": excursion_table(summaries)}}
        if record_steps:
            rows = [row for _, (_, chunk_rows) in results for row in chunk_rows]
            update["tables"]["walk"] = pd.DataFrame(rows, columns=list(TableSchemas.WALK.columns))

        outcomes = [PathOutcome(s.steps if s.returned else None) for s in summaries]
        try:
            empirical = empirical_classify(
                outcomes, horizons, "walk", decision_band(state), confidence_level(state),
                seeds=[config.experiment.seed],
            )
            summary["empirical"] = empirical.model_dump(mode="json")
            update["tables"]["classify"] = proportion_table(empirical.return_fractions)
        except InsufficientReplicasError as e:
            update["warnings"] = [str(e)]

        update["summary"] = {self.name: summary}
        return update


class LadderNode(BaseNode):
    """Ladder-epoch tail of the log-mean walk and per-replica epoch tables."""

    def __init__(self):
        super().__init__("ladder")

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        spec = effective_spec(state)
        streams = StreamFactory(config.experiment.seed)
        report = ladder_tail_estimate(
            spec, config.ladder.n_max, config.experiment.replicas, streams,
            chunk_size=state["chunk_size"],
            tolerance=state["settings"].criticality_tolerance,
            workers=state["workers"],
        )
        tail = pd.DataFrame(
            [(r.n, r.survival, r.standard_error, r.scaled, r.exact) for r in report.rows],
            columns=list(TableSchemas.LADDER_TAIL.columns),
        )
        update: Dict[str, Any] = {
            "tables": {"ladder_tail": tail},
            "summary": {"ladder": report.model_dump(mode="json")},
            "warnings": list(report.warnings),
        }
        if not config.experiment.streaming:
            rows = ladder_epochs_table(spec, config.experiment.horizon, config.experiment.replicas, streams)
            update["tables"]["ladder"] = pd.DataFrame(rows, columns=list(TableSchemas.LADDER.columns))
        return update


class RecursionNode(BaseNode):
    """Frequency of X_n > e^sqrt(n) for the AR recursion or the BPIRE."""

    def __init__(self):
        super().__init__("ar")

    def execute(self, state: ExperimentState) -> Dict[str, Any]:
        config = state["config"]
        spec = effective_spec(state)
        checkpoints = config.experiment.horizons or config.recursion.checkpoints
        statistics = growth_event_frequency(
            spec, checkpoints, config.experiment.replicas, StreamFactory(config.experiment.seed),
            process=config.recursion.process,
            chunk_size=state["chunk_size"],
            mode=config.experiment.mode,
            confidence=confidence_level(state),
            workers=state["workers"],
        )
        return {
            "tables": {"growth": proportion_table(statistics, TableSchemas.GROWTH)},
            "summary": {"ar": {
                "process": config.recursion.process,
                "growth_exceedance": [s.model_dump(mode="json") for s in statistics],
            }},
        }
