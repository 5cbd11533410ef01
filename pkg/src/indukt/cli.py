"""``indukt`` command line: run, replay, metrics, analyze.

Configuration comes from flags, an optional flat key=value config file,
and defaults, in that precedence order.  Exit codes are part of the
contract: 0 success, 2 configuration error, 3 infrastructure failure,
4 replay miss.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from importlib import resources
from pathlib import Path

from . import analysis, harness
from .corpus import Corpus, CorpusError, load_corpus
from .executor import (
    BUILTIN_DSL,
    EXTERNAL_SANDBOX,
    Executor,
    ExecutorConfig,
    SandboxUnavailableError,
)
from .pipeline import DIRECT, HYPOTHESIS_SEARCH, PAPER_ACCOUNTING, PipelineConfig, STRICT_ACCOUNTING
from .providers import (
    API_KEY_ENV_VAR,
    CredentialError,
    HttpProvider,
    ProviderError,
    ReplayMissError,
    ReplayProvider,
    SyntheticProvider,
    TranscriptRecorder,
    TransportError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFRASTRUCTURE = 3
EXIT_REPLAY_MISS = 4

BUNDLED_CORPUS = "mini"


class ConfigError(Exception):
    pass


# --- configuration -------------------------------------------------------

# every settable key: (type parser, default)
_KEYS = {
    "corpus": (str, BUNDLED_CORPUS),
    "mode": (str, "hypothesis-search"),
    "provider": (str, "synthetic"),
    "endpoint": (str, ""),
    "model": (str, "default"),
    "runs": (int, 5),
    "seed": (int, 0),
    "out": (str, "out"),
    "record": (str, ""),
    "workers": (int, 1),
    "budget_accounting": (str, PAPER_ACCOUNTING),
    "max_tokens": (int, 1000),
    "p_gen": (float, 1.0),
    "p_sum": (float, 1.0),
    "p_impl": (float, 1.0),
    "executor_backend": (str, BUILTIN_DSL),
    "sandbox_cmd": (str, ""),
    "timeout_s": (float, 2.0),
    "memory_mib": (int, 256),
    "step_budget": (int, 10000),
    "rpm": (int, 0),
}


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser, _ = _KEYS[key]
        try:
            values[key] = parser(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flag > file > default for every known key."""
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, (parser, default) in _KEYS.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = parser(flag_value)
        elif key in from_file:
            resolved[key] = from_file[key]
        else:
            resolved[key] = default
    return resolved


# config keys that change what a run computes, as opposed to where its
# artifacts land; only these go into the RunLog snapshot so a faithful
# replay serializes byte-identically to its recording
SNAPSHOT_KEYS = tuple(sorted(set(_KEYS) - {"out", "record"}))


def _snapshot(config: dict) -> dict:
    return {key: config[key] for key in SNAPSHOT_KEYS}


def _mode_of(config: dict) -> str:
    mode = config["mode"].replace("-", "_")
    if mode not in (HYPOTHESIS_SEARCH, DIRECT):
        raise ConfigError(f"unknown mode {config['mode']!r}")
    return mode


def _load_corpus(config: dict) -> Corpus:
    name = config["corpus"]
    if name == BUNDLED_CORPUS:
        path = resources.files("indukt.data").joinpath("mini_corpus.json")
        return load_corpus(str(path))
    return load_corpus(name)


def _pipeline_config(config: dict) -> PipelineConfig:
    return PipelineConfig(
        max_tokens=config["max_tokens"],
        model_name=config["model"],
        budget_accounting=config["budget_accounting"],
    )


def _executor(config: dict) -> Executor:
    backend = config["executor_backend"]
    sandbox_cmd = tuple(shlex.split(config["sandbox_cmd"])) if config["sandbox_cmd"] else None
    try:
        exec_config = ExecutorConfig(
            backend=backend,
            step_budget=config["step_budget"],
            timeout_s=config["timeout_s"],
            memory_mib=config["memory_mib"],
            sandbox_cmd=sandbox_cmd,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return Executor(exec_config)


def _make_provider(config: dict, recorders: list):
    """Provider (or per-run factory) for cmd_run, validated up front."""
    kind = config["provider"]
    record_path = config["record"]

    def wrap(provider):
        if record_path:
            recorder = TranscriptRecorder(provider, record_path)
            recorders.append(recorder)
            return recorder
        return provider

    if kind == "synthetic":
        def factory(run_seed: int):
            return wrap(
                SyntheticProvider(
                    seed=run_seed,
                    p_gen=config["p_gen"],
                    p_sum=config["p_sum"],
                    p_impl=config["p_impl"],
                )
            )

        return factory
    if kind == "http":
        if not config["endpoint"]:
            raise ConfigError("http provider needs --endpoint")
        if not os.environ.get(API_KEY_ENV_VAR):
            raise ConfigError(f"http provider needs the {API_KEY_ENV_VAR} environment variable")
        return wrap(
            HttpProvider(
                endpoint=config["endpoint"],
                requests_per_minute=config["rpm"] or None,
            )
        )
    raise ConfigError(f"unknown provider {kind!r} (expected synthetic or http)")


# --- commands ------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    mode = _mode_of(config)
    corpus = _load_corpus(config)
    pipeline_config = _pipeline_config(config)
    executor = _executor(config)
    recorders: list = []
    provider = _make_provider(config, recorders)

    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        logs = harness.run_experiment(
            corpus,
            mode,
            provider,
            executor,
            pipeline_config,
            n_runs=config["runs"],
            master_seed=config["seed"],
            config_snapshot=_snapshot(config),
            workers=config["workers"],
        )
    finally:
        for recorder in recorders:
            recorder.close()
        executor.close()
    for log in logs:
        path = out_dir / f"{log.run_id}.ndjson"
        harness.save_runlog(log, path)
        print(path)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    mode = _mode_of(config)
    corpus = _load_corpus(config)
    pipeline_config = _pipeline_config(config)
    executor = _executor(config)
    try:
        provider = ReplayProvider(args.transcript)
    except (OSError, ProviderError) as exc:
        raise ConfigError(f"cannot load transcript: {exc}")

    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        logs = harness.run_experiment(
            corpus,
            mode,
            provider,
            executor,
            pipeline_config,
            n_runs=config["runs"],
            master_seed=config["seed"],
            config_snapshot=_snapshot(config),
        )
    finally:
        executor.close()
    for log in logs:
        path = out_dir / f"{log.run_id}.ndjson"
        harness.save_runlog(log, path)
        print(path)
    return EXIT_OK


def _load_logs(paths: list[str]) -> list[harness.RunLog]:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.glob("*.ndjson")))
        else:
            files.append(p)
    if not files:
        raise ConfigError("no run logs found")
    try:
        return [harness.load_runlog(f) for f in files]
    except (OSError, harness.HarnessError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot load run logs: {exc}")


def _load_literature(spec: str) -> list[dict]:
    if spec == "literature":
        raw = resources.files("indukt.data").joinpath("literature.json").read_text("utf-8")
    else:
        try:
            raw = Path(spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read overlay file {spec}: {exc}")
    try:
        data = json.loads(raw)
        rows = [
            {"system": str(r["system"]), "mean": float(r["mean"]), "std": float(r.get("std", 0.0))}
            for r in data["rows"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad overlay file {spec}: {exc}")
    return rows


def cmd_metrics(args: argparse.Namespace) -> int:
    logs = _load_logs(args.logs)
    definition = args.definition.replace("-", "_")
    try:
        report = harness.compute_metrics(logs, definition)
    except ValueError as exc:
        raise ConfigError(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = harness.export_metrics(report, out_dir, "csv")
    written += harness.export_metrics(report, out_dir, "json")

    comparison_rows = [
        {
            "system": "this_run",
            "mean": report.mean_test_accuracy,
            "std": report.std_test_accuracy,
        }
    ]
    if args.overlay:
        comparison_rows = _load_literature(args.overlay) + comparison_rows
        path = out_dir / "comparison.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("system,mean,std\n")
            for row in comparison_rows:
                fh.write(f"{row['system']},{row['mean']},{row['std']}\n")
        written.append(path)

    if not args.no_figures:
        from . import plots

        written.append(plots.plot_acquisition_curve(report, out_dir / "acquisition_curve.png"))
        written.append(
            plots.plot_accuracy_comparison(comparison_rows, out_dir / "accuracy_comparison.png")
        )
    for path in written:
        print(path)
    return EXIT_OK


def _write_csv_rows(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def cmd_analyze(args: argparse.Namespace) -> int:
    out_dir = Path(args.out if args.out is not None else "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if args.fixture:
        if args.fixture != "table2":
            raise ConfigError(f"unknown fixture {args.fixture!r}")
        table = analysis.load_table2_fixture()
        if not analysis.structural_zero_holds(table):
            raise ConfigError("fixture violates the generator-fail/summarizer-success zero")
        report = analysis.analysis_report(table)
        verdicts = None
        logs = None
    elif args.logs:
        logs = _load_logs(args.logs)
        config = resolve_config(args)
        corpus = _load_corpus(config)
        if args.judge == "exact":
            judge = analysis.make_judge()
        elif args.judge == "live":
            if not os.environ.get(API_KEY_ENV_VAR):
                raise ConfigError(
                    f"--judge live needs the {API_KEY_ENV_VAR} environment variable"
                )
            if not config["endpoint"]:
                raise ConfigError("--judge live needs --endpoint")
            judge = analysis.make_judge(
                HttpProvider(endpoint=config["endpoint"]), model_name=config["model"]
            )
        else:
            raise ConfigError(f"unknown judge {args.judge!r}")
        try:
            verdicts = analysis.verdicts_for_logs(logs, corpus, judge)
            table = analysis.build_contingency(verdicts)
        except (analysis.AnalysisError, CorpusError, KeyError) as exc:
            raise ConfigError(f"cannot analyze logs: {exc}")
        report = analysis.analysis_report(table, verdicts, logs)
    else:
        raise ConfigError("analyze needs --fixture table2 or --logs")

    report_path = out_dir / "analysis.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    path = out_dir / "contingency_table.csv"
    _write_csv_rows(
        path,
        list(analysis.MODULE_NAMES) + ["count"],
        analysis.contingency_rows(table),
    )
    written.append(path)

    path = out_dir / "module_accuracy.csv"
    _write_csv_rows(
        path,
        ["module", "successes", "total", "accuracy"],
        analysis.module_accuracy_rows(table),
    )
    written.append(path)

    if not args.no_figures:
        from . import plots

        written.append(plots.plot_module_accuracy(table, out_dir / "module_accuracy.png"))
        if logs:
            written.append(
                plots.plot_refinement_costs(
                    report["refinement_costs_train"], out_dir / "refinement_costs.png"
                )
            )
    for path in written:
        print(path)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--corpus", help=f"corpus JSON path, or '{BUNDLED_CORPUS}' for the bundled one")
    parser.add_argument("--mode", choices=["hypothesis-search", "direct"])
    parser.add_argument("--provider", choices=["synthetic", "http"])
    parser.add_argument("--endpoint", help="chat-completions URL for the http provider")
    parser.add_argument("--model", help="model name sent to the endpoint")
    parser.add_argument("--runs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--record", help="record a transcript NDJSON to this path")
    parser.add_argument("--workers", type=int, help="trial concurrency (stateless providers only)")
    parser.add_argument("--budget-accounting", dest="budget_accounting",
                        choices=[PAPER_ACCOUNTING, STRICT_ACCOUNTING])
    parser.add_argument("--max-tokens", dest="max_tokens", type=int)
    parser.add_argument("--p-gen", dest="p_gen", type=float)
    parser.add_argument("--p-sum", dest="p_sum", type=float)
    parser.add_argument("--p-impl", dest="p_impl", type=float)
    parser.add_argument("--executor-backend", dest="executor_backend",
                        choices=[BUILTIN_DSL, EXTERNAL_SANDBOX])
    parser.add_argument("--sandbox-cmd", dest="sandbox_cmd",
                        help="command line that starts the sandbox worker")
    parser.add_argument("--timeout-s", dest="timeout_s", type=float)
    parser.add_argument("--memory-mib", dest="memory_mib", type=int)
    parser.add_argument("--step-budget", dest="step_budget", type=int)
    parser.add_argument("--rpm", type=int, help="requests-per-minute ceiling for http")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="indukt",
        description="Few-shot list-function induction: run experiments, replay "
        "recordings, compute metrics, analyze module errors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment and write run logs")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-execute a run from a recorded transcript")
    p_replay.add_argument("transcript", help="transcript NDJSON recorded with --record")
    _add_config_flags(p_replay)
    p_replay.set_defaults(func=cmd_replay)

    p_metrics = sub.add_parser("metrics", help="acquisition curve and accuracy tables from run logs")
    p_metrics.add_argument("logs", nargs="+", help="run log files or directories")
    p_metrics.add_argument("--definition", choices=["cumulative", "per-trial"],
                           default="cumulative")
    p_metrics.add_argument("--overlay",
                           help="literature constants JSON ('literature' for the bundled file)")
    p_metrics.add_argument("--out", default="out")
    p_metrics.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_metrics.set_defaults(func=cmd_metrics)

    p_analyze = sub.add_parser("analyze", help="module-level error analysis")
    p_analyze.add_argument("--fixture", help="bundled contingency fixture name (table2)")
    p_analyze.add_argument("--logs", nargs="*", help="run log files or directories")
    p_analyze.add_argument("--judge", choices=["exact", "live"], default="exact")
    p_analyze.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    _add_config_flags(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CorpusError, CredentialError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayMissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REPLAY_MISS
    except (harness.HarnessError, TransportError, SandboxUnavailableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE


if __name__ == "__main__":
    sys.exit(main())
