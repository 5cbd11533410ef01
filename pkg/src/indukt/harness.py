"""Experiment harness: many tasks × 11 trials × several runs.

Each run walks every task through eleven trials (trial n trains on the
first n−1 examples and tests on the n-th), producing one ordered RunLog.
Logs persist as NDJSON (a header line, then one trial outcome per line)
and feed the metrics here: acquisition curves and mean test accuracy.
"""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .corpus import Corpus, EXAMPLES_PER_TASK, trials
from .executor import Executor, SandboxUnavailableError
from .pipeline import (
    BudgetLedger,
    DIRECT,
    HYPOTHESIS_SEARCH,
    MODES,
    PipelineConfig,
    TrialOutcome,
    outcome_from_dict,
    outcome_to_dict,
    run_trial_direct,
    run_trial_hypothesis_search,
)
from .providers import Provider, ProviderError, ReplayMissError, request_fingerprint

SCHEMA_VERSION = 1

CUMULATIVE = "cumulative"
PER_TRIAL = "per_trial"

# a run aborts if more than this fraction of its trials hit infrastructure errors
MAX_FLAGGED_FRACTION = 0.01


class HarnessError(Exception):
    pass


@dataclass(frozen=True)
class RunLog:
    run_id: str
    mode: str
    provider_fingerprint: str
    config: dict
    outcomes: tuple[TrialOutcome, ...]
    schema_version: int = SCHEMA_VERSION

    @property
    def flagged(self) -> list[TrialOutcome]:
        return [o for o in self.outcomes if o.infrastructure_error is not None]


class _FingerprintingProvider:
    """Delegate that hashes the request/response exchanges.

    The digest identifies the provider by what it *said*, not by which
    backend said it, so a replayed run carries the same fingerprint as the
    recording it came from.  Per-exchange digests combine by XOR, which is
    order-insensitive: a run recorded on a worker pool and replayed
    sequentially still fingerprints identically.
    """

    def __init__(self, inner: Provider):
        self._inner = inner
        self._acc = 0
        self._lock = threading.Lock()

    def complete(self, request):
        texts = self._inner.complete(request)
        h = hashlib.sha256(request_fingerprint(request).encode())
        for text in texts:
            h.update(text.encode("utf-8"))
            h.update(b"\x00")
        value = int.from_bytes(h.digest(), "big")
        with self._lock:
            self._acc ^= value
        return texts

    def bind_task(self, task) -> None:
        bind = getattr(self._inner, "bind_task", None)
        if bind is not None:
            bind(task)

    @property
    def fingerprint(self) -> str:
        return format(self._acc, "064x")


ProviderOrFactory = Union[Provider, Callable[[int], Provider]]


def run_experiment(
    corpus: Corpus,
    mode: str,
    provider: ProviderOrFactory,
    executor: Executor,
    config: PipelineConfig = PipelineConfig(),
    n_runs: int = 5,
    master_seed: int = 0,
    config_snapshot: Optional[dict] = None,
    workers: int = 1,
) -> list[RunLog]:
    """Run the full protocol and return one RunLog per run.

    ``provider`` is either a Provider shared by every run or a callable
    mapping the per-run seed (master_seed + run index) to a fresh Provider.
    Trials run on a pool of ``workers`` threads only when the provider is
    stateless; task-binding providers and replay (whose response queues are
    order-sensitive) always run sequentially in (task, trial) order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    run_trial = run_trial_hypothesis_search if mode == HYPOTHESIS_SEARCH else run_trial_direct
    snapshot = dict(config_snapshot or {})
    logs = []
    for run_index in range(n_runs):
        run_seed = master_seed + run_index
        base = provider(run_seed) if callable(provider) else provider
        wrapped = _FingerprintingProvider(base)
        run_id = f"run-{run_index}"

        def one_trial(trial_spec):
            try:
                return run_trial(trial_spec, wrapped, executor, config, run_id=run_id)
            except ReplayMissError:
                raise  # fatal: the recording does not cover this run
            except (ProviderError, SandboxUnavailableError) as exc:
                return _flagged_outcome(trial_spec, mode, run_id, str(exc))

        stateful = hasattr(base, "bind_task") or getattr(base, "requires_sequential", False)
        if workers > 1 and not stateful:
            units = [spec for task in corpus for spec in trials(task)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(one_trial, units))
        else:
            outcomes = []
            for task in corpus:
                wrapped.bind_task(task)
                for trial_spec in trials(task):
                    outcomes.append(one_trial(trial_spec))
        log = RunLog(
            run_id=run_id,
            mode=mode,
            provider_fingerprint=wrapped.fingerprint,
            config=snapshot,
            outcomes=tuple(outcomes),
        )
        n_flagged = len(log.flagged)
        if n_flagged > MAX_FLAGGED_FRACTION * len(outcomes):
            raise HarnessError(
                f"{run_id}: {n_flagged}/{len(outcomes)} trials hit infrastructure "
                f"errors (limit {MAX_FLAGGED_FRACTION:.0%}); first: "
                f"{log.flagged[0].infrastructure_error}"
            )
        logs.append(log)
    return logs


def _flagged_outcome(trial_spec, mode: str, run_id: str, error: str) -> TrialOutcome:
    return TrialOutcome(
        task_id=trial_spec.task_id,
        run_id=run_id,
        trial_index=trial_spec.trial_index,
        mode=mode,
        generator_hypotheses=(),
        summaries=(),
        candidates=(),
        selected=(),
        train_solved=False,
        test_accuracy=0.0,
        test_solved_any=False,
        ledger=BudgetLedger(),
        events=(),
        infrastructure_error=error,
    )


# --- persistence ---------------------------------------------------------

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def save_runlog(log: RunLog, path) -> None:
    header = {
        "schema_version": log.schema_version,
        "run_id": log.run_id,
        "mode": log.mode,
        "provider_fingerprint": log.provider_fingerprint,
        "config": log.config,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for outcome in log.outcomes:
            fh.write(_dump(outcome_to_dict(outcome)) + "\n")


def load_runlog(path) -> RunLog:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise HarnessError(f"{path}: empty run log")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise HarnessError(
            f"{path}: schema_version {header.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    outcomes = tuple(outcome_from_dict(json.loads(line)) for line in lines[1:])
    return RunLog(
        run_id=header["run_id"],
        mode=header["mode"],
        provider_fingerprint=header["provider_fingerprint"],
        config=header["config"],
        outcomes=outcomes,
    )


# --- metrics -------------------------------------------------------------

def _task_ids(log: RunLog) -> list[str]:
    seen: dict[str, None] = {}
    for o in log.outcomes:
        seen.setdefault(o.task_id, None)
    return list(seen)


def _check_comparable(logs: Sequence[RunLog]) -> list[str]:
    if not logs:
        raise ValueError("no run logs given")
    ids = _task_ids(logs[0])
    for log in logs[1:]:
        if _task_ids(log) != ids:
            raise ValueError("run logs cover different task sets")
    return ids


def acquisition_curve(logs: Sequence[RunLog], definition: str = CUMULATIVE) -> list[float]:
    """Mean number of tasks solved (at least once, by default) per trial."""
    if definition not in (CUMULATIVE, PER_TRIAL):
        raise ValueError(f"unknown acquisition definition {definition!r}")
    task_ids = _check_comparable(logs)
    per_run: list[list[int]] = []
    for log in logs:
        solved: dict[str, set[int]] = {tid: set() for tid in task_ids}
        for o in log.outcomes:
            if o.infrastructure_error is None and o.test_solved_any:
                solved[o.task_id].add(o.trial_index)
        counts = []
        for t in range(1, EXAMPLES_PER_TASK + 1):
            if definition == CUMULATIVE:
                n = sum(1 for tid in task_ids if any(s <= t for s in solved[tid]))
            else:
                n = sum(1 for tid in task_ids if t in solved[tid])
            counts.append(n)
        per_run.append(counts)
    return [statistics.fmean(run[t] for run in per_run) for t in range(EXAMPLES_PER_TASK)]


def per_task_accuracy(
    logs: Sequence[RunLog], trial_indices: Optional[Sequence[int]] = None
) -> dict[str, float]:
    """Per-task mean of test_accuracy over trials × runs (flagged excluded)."""
    task_ids = _check_comparable(logs)
    wanted = set(trial_indices) if trial_indices is not None else None
    values: dict[str, list[float]] = {tid: [] for tid in task_ids}
    for log in logs:
        for o in log.outcomes:
            if o.infrastructure_error is not None:
                continue
            if wanted is not None and o.trial_index not in wanted:
                continue
            values[o.task_id].append(o.test_accuracy)
    return {tid: statistics.fmean(vals) for tid, vals in values.items() if vals}


def mean_test_accuracy(
    logs: Sequence[RunLog], trial_indices: Optional[Sequence[int]] = None
) -> tuple[float, float]:
    """Across-task mean and population std of per-task mean accuracy."""
    table = per_task_accuracy(logs, trial_indices)
    if not table:
        raise ValueError("no scorable outcomes")
    means = list(table.values())
    return statistics.fmean(means), statistics.pstdev(means)


@dataclass(frozen=True)
class MetricsReport:
    acquisition_definition: str
    acquisition_curve: tuple[float, ...]
    mean_test_accuracy: float
    std_test_accuracy: float
    per_task_accuracy: dict
    n_runs: int
    n_tasks: int
    n_outcomes: int
    n_flagged: int


def compute_metrics(logs: Sequence[RunLog], definition: str = CUMULATIVE) -> MetricsReport:
    curve = acquisition_curve(logs, definition)
    table = per_task_accuracy(logs)
    mean, std = mean_test_accuracy(logs)
    return MetricsReport(
        acquisition_definition=definition,
        acquisition_curve=tuple(curve),
        mean_test_accuracy=mean,
        std_test_accuracy=std,
        per_task_accuracy=dict(sorted(table.items())),
        n_runs=len(logs),
        n_tasks=len(table),
        n_outcomes=sum(len(log.outcomes) for log in logs),
        n_flagged=sum(len(log.flagged) for log in logs),
    )


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "acquisition_definition": report.acquisition_definition,
        "acquisition_curve": list(report.acquisition_curve),
        "mean_test_accuracy": report.mean_test_accuracy,
        "std_test_accuracy": report.std_test_accuracy,
        "per_task_accuracy": report.per_task_accuracy,
        "n_runs": report.n_runs,
        "n_tasks": report.n_tasks,
        "n_outcomes": report.n_outcomes,
        "n_flagged": report.n_flagged,
    }


def metrics_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(
        acquisition_definition=d["acquisition_definition"],
        acquisition_curve=tuple(d["acquisition_curve"]),
        mean_test_accuracy=d["mean_test_accuracy"],
        std_test_accuracy=d["std_test_accuracy"],
        per_task_accuracy=dict(d["per_task_accuracy"]),
        n_runs=d["n_runs"],
        n_tasks=d["n_tasks"],
        n_outcomes=d["n_outcomes"],
        n_flagged=d["n_flagged"],
    )


def export_metrics(report: MetricsReport, out_dir, fmt: str = "csv") -> list[Path]:
    """Write the metrics to ``out_dir``; returns the paths written.

    CSV schemas: acquisition_curve.csv (trial,mean_acquired),
    per_task_accuracy.csv (task_id,mean_test_accuracy), summary.csv
    (metric,value).  JSON: metrics.json, lossless round-trip via
    :func:`import_metrics`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "json":
        path = out / "metrics.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(metrics_to_dict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    elif fmt == "csv":
        path = out / "acquisition_curve.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "mean_acquired"])
            for t, value in enumerate(report.acquisition_curve, start=1):
                writer.writerow([t, value])
        written.append(path)

        path = out / "per_task_accuracy.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task_id", "mean_test_accuracy"])
            for task_id in sorted(report.per_task_accuracy):
                writer.writerow([task_id, report.per_task_accuracy[task_id]])
        written.append(path)

        path = out / "summary.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["mean_test_accuracy", report.mean_test_accuracy])
            writer.writerow(["std_test_accuracy", report.std_test_accuracy])
            writer.writerow(["acquisition_definition", report.acquisition_definition])
            writer.writerow(["n_runs", report.n_runs])
            writer.writerow(["n_tasks", report.n_tasks])
            writer.writerow(["n_outcomes", report.n_outcomes])
            writer.writerow(["n_flagged", report.n_flagged])
        written.append(path)
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")
    return written


def import_metrics(path) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        return metrics_from_dict(json.load(fh))
