"""CLI entry point for the collective behavior classifier.

Provides commands for validating inputs, sweeping window resolutions, running the
cross-validated experiment, generating synthetic scenarios, re-rendering reports
and labeling new trajectories.
"""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any

import structlog
import typer

from .classifier import TrainedModel
from .config import EnvSettings, PipelineConfig
from .errors import CollectiveBehaviorError, ConfigError, InputError
from .ingest import load_trajectories, write_labels, write_trajectories
from .pipeline import Experiment, predict_labels
from .reports import ReportWriter, results_payload, results_rows
from .segmentation import select_resolution
from .synthetic import generate as generate_scenario

app = typer.Typer(
    name="cbc",
    help="Collective Behavior Classifier - label group behavior from GPS trajectories",
    no_args_is_help=True,
)

logger = structlog.get_logger(__name__)

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="Path to config JSON/YAML file (default: $CBC_CONFIG)"),
]
SetOption = Annotated[
    list[str] | None,
    typer.Option("--set", help="Override a config key, e.g. --set proximity.threshold=3"),
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Master seed")]
ThreadsOption = Annotated[int | None, typer.Option("--threads", help="Worker thread cap")]
OutputOption = Annotated[
    Path | None,
    typer.Option("--output-dir", "-o", help="Directory for reports"),
]


def setup_logging(level: str = "INFO", log_format: str = "console") -> None:
    """Configure structlog logging on stderr.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR).
        log_format: Output format (json or console).

    """
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )

    processors: list[Callable[..., Any]] = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.UnicodeDecoder(),
    ]

    if log_format == "json":
        processors.append(structlog.processors.JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def load_config(
    config: Path | None,
    sets: list[str] | None = None,
    *,
    seed: int | None = None,
    threads: int | None = None,
    output_dir: Path | None = None,
    resolution: float | None = None,
) -> PipelineConfig:
    """Resolve the config file, apply flag overrides and set up logging.

    Dedicated flags are shorthands for ``--set`` on the matching key path and are
    applied after the explicit ``--set`` expressions.
    """
    env = EnvSettings()
    overrides = list(sets or [])
    if seed is not None:
        overrides.append(f"seed={seed}")
    if threads is not None:
        overrides.append(f"threads={threads}")
    if output_dir is not None:
        overrides.append(f"output_dir={json.dumps(str(output_dir))}")
    if resolution is not None:
        overrides.append(f"segmentation.resolution={resolution}")
    if env.log_level:
        overrides.append(f"logging.level={env.log_level.upper()}")

    path = config or (Path(env.config) if env.config else None)
    pipeline_config = (
        PipelineConfig.from_file(path, overrides)
        if path is not None
        else PipelineConfig.from_mapping({}, overrides)
    )
    setup_logging(pipeline_config.logging.level, pipeline_config.logging.format)
    return pipeline_config


@contextmanager
def exit_on_error() -> Iterator[None]:
    """Translate pipeline errors into an error line and their exit code."""
    try:
        yield
    except CollectiveBehaviorError as e:
        logger.debug("Command failed", error_type=type(e).__name__, exit_code=e.exit_code)
        typer.echo(f"{type(e).__name__}: {e}", err=True)
        raise typer.Exit(code=e.exit_code) from e


def _writer(config: PipelineConfig) -> ReportWriter:
    return ReportWriter(config.get_output_path(), config.seed, config.config_hash())


def _echo_results(rows: list[dict[str, Any]]) -> None:
    typer.echo(f"\n{'模型':<16}{'準確率':>18}{'加權 F1':>18}{'特徵數':>8}")
    for row in rows:
        typer.echo(
            f"{row['model']:<16}"
            f"{row['acc_mean']:>10.4f} ± {row['acc_std']:<6.4f}"
            f"{row['wf1_mean']:>10.4f} ± {row['wf1_std']:<6.4f}"
            f"{row['n_features']:>8d}",
        )


@app.command()
def validate(
    config: ConfigOption = None,
    sets: SetOption = None,
    output_dir: OutputOption = None,
) -> None:
    """Load trajectories and labels and report coverage."""
    with exit_on_error():
        pipeline_config = load_config(config, sets, output_dir=output_dir)
        experiment = Experiment.load(pipeline_config)
        alignment = experiment.alignment()
        writer = _writer(pipeline_config)
        writer.write_ingest_report(experiment.ingest_report)
        writer.write_alignment_report(alignment)

    report = experiment.ingest_report
    typer.echo(f"\n讀取 {report.rows_read} 筆, 捨棄 {report.rows_rejected} 筆")
    typer.echo(f"個體數: {experiment.trajectories.n}, 標註數: {len(experiment.labels)}")
    for entity_id, fraction in alignment.coverage.items():
        typer.echo(f"  {entity_id}: 標註涵蓋率 {fraction:.1%}")
    if alignment.orphans:
        typer.echo(f"⚠️ 無軌跡的標註: {len(alignment.orphans)} 筆")
    typer.echo("\n✅ 驗證完成")


@app.command()
def sweep(
    config: ConfigOption = None,
    sets: SetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    output_dir: OutputOption = None,
) -> None:
    """Score candidate window resolutions and select the best one."""
    with exit_on_error():
        pipeline_config = load_config(
            config,
            sets,
            seed=seed,
            threads=threads,
            output_dir=output_dir,
        )
        experiment = Experiment.load(pipeline_config)
        writer = _writer(pipeline_config)
        writer.write_ingest_report(experiment.ingest_report)
        table = experiment.sweep()
        writer.write_sweep(table)
        selected = select_resolution(table)
        writer.write_selection(selected, table)

    for row in table.rows:
        score = "失敗" if row.error else f"{row.combined_score:.4f}"
        typer.echo(f"  {row.resolution:>8g} s  {score}")
    typer.echo(f"\n✅ 選定解析度: {selected:g} 秒")


@app.command()
def run(
    config: ConfigOption = None,
    sets: SetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    output_dir: OutputOption = None,
    resolution: Annotated[
        float | None,
        typer.Option("--resolution", help="Window length in seconds (skips the sweep)"),
    ] = None,
    dump_edges: Annotated[
        bool,
        typer.Option("--dump-edges", help="Write one edge-list CSV per window"),
    ] = False,
) -> None:
    """Cross-validate the baseline and the ensemble, then train the final model."""
    with exit_on_error():
        pipeline_config = load_config(
            config,
            sets,
            seed=seed,
            threads=threads,
            output_dir=output_dir,
            resolution=resolution,
        )
        experiment = Experiment.load(pipeline_config)
        writer = _writer(pipeline_config)
        result = experiment.run(edges=writer if dump_edges else None)
        writer.write_ingest_report(experiment.ingest_report)
        writer.write_run(result)

    typer.echo(f"\n解析度: {result.resolution:g} 秒")
    _echo_results(results_rows(results_payload(result)))
    for metric, lift in result.lift.items():
        typer.echo(f"社會特徵提升 ({metric}): {lift * 100:+.2f} 點")
    typer.echo(f"\n✅ 完成! 報告已儲存至: {pipeline_config.get_output_path()}")


@app.command()
def generate(
    config: ConfigOption = None,
    sets: SetOption = None,
) -> None:
    """Write a synthetic scenario to the configured trajectory and label files."""
    with exit_on_error():
        pipeline_config = load_config(config, sets)
        trajectories, labels = generate_scenario(
            pipeline_config.synthetic,
            pipeline_config.data.label_resolution,
        )
        labels_path = pipeline_config.data.labels_path()
        if labels_path is None:
            msg = "data.labels must name the label file to write"
            raise ConfigError(msg)
        trajectories_path = write_trajectories(
            trajectories,
            pipeline_config.data.trajectories_path(),
        )
        write_labels(labels, labels_path)

    typer.echo(f"已產生 {trajectories.n} 個個體, {len(labels)} 個行為片段")
    typer.echo(f"軌跡: {trajectories_path}")
    typer.echo(f"標註: {labels_path}")


@app.command()
def report(
    config: ConfigOption = None,
    sets: SetOption = None,
    output_dir: OutputOption = None,
) -> None:
    """Re-render results.csv from a stored results.json."""
    with exit_on_error():
        pipeline_config = load_config(config, sets, output_dir=output_dir)
        results_path = pipeline_config.get_output_path() / "results.json"
        if not results_path.exists():
            msg = f"results file not found: {results_path}"
            raise InputError(msg)
        try:
            payload = json.loads(results_path.read_text(encoding="utf-8"))
            writer = ReportWriter(
                pipeline_config.get_output_path(),
                int(payload["seed"]),
                str(payload["config_hash"]),
            )
            rows = results_rows(payload)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            msg = f"cannot read {results_path}: {e}"
            raise InputError(msg) from e
        csv_path = writer.write_results_table(payload)

    _echo_results(rows)
    typer.echo(f"\n已儲存至: {csv_path}")


@app.command()
def predict(
    config: ConfigOption = None,
    sets: SetOption = None,
    threads: ThreadsOption = None,
    output_dir: OutputOption = None,
    model: Annotated[
        Path | None,
        typer.Option("--model", "-m", help="Serialized model (default: <output-dir>/model.json)"),
    ] = None,
) -> None:
    """Label every window of the configured trajectories with a trained model."""
    with exit_on_error():
        pipeline_config = load_config(config, sets, threads=threads, output_dir=output_dir)
        model_path = model or pipeline_config.get_output_path() / "model.json"
        trained = TrainedModel.load(model_path)
        trajectories, _ = load_trajectories(
            pipeline_config.data.trajectories_path(),
            pipeline_config.data.trajectory_schema,
        )
        result = predict_labels(trained, trajectories, threads=pipeline_config.threads)
        paths = _writer(pipeline_config).write_predictions(result)

    typer.echo(f"已標記 {len(result.group_rows)} 個時間窗, {len(result.entity_rows)} 筆個體預測")
    for path in paths:
        typer.echo(f"  {path}")


def main() -> None:  # pragma: no cover
    """Main entry point."""
    app()


if __name__ == "__main__":  # pragma: no cover
    main()
