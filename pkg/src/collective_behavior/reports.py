"""CSV and JSON report writers.

Every file carries the master seed and the config hash; nothing time-dependent is
written, so identical configurations produce identical bytes.
"""

from __future__ import annotations

import json
import math
from typing import TYPE_CHECKING, Any

import pandas as pd

from .models import MetricReport
from .network import EDGE_COLUMNS, edge_rows

if TYPE_CHECKING:
    from pathlib import Path

    from .models import AlignmentReport, IngestReport, ProximityGraph, ResolutionScoreTable
    from .pipeline import PredictionResult, RunResult

SELECTION_RULE = "argmax of mean(accuracy_mean, wf1_mean); ties to the smallest resolution"

RESULT_COLUMNS = ("model", "acc_mean", "acc_std", "wf1_mean", "wf1_std", "n_features")
SWEEP_COLUMNS = (
    "resolution_s",
    "accuracy_mean",
    "accuracy_std",
    "wf1_mean",
    "wf1_std",
    "combined_score",
    "status",
)


def _clean(value: Any) -> Any:
    """Replace NaN with None so the JSON stays standard."""
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_clean(v) for v in value]
    return value


def results_payload(result: RunResult) -> dict[str, Any]:
    """JSON document describing a run."""
    return {
        "resolution": result.resolution,
        "selection_rule": SELECTION_RULE,
        "variants": [
            {
                "name": v.name,
                "n_features": len(v.columns),
                "columns": list(v.columns),
                "metrics": {name: report.to_dict() for name, report in v.reports.items()},
            }
            for v in result.variants
        ],
        "lift": result.lift,
    }


def results_rows(payload: dict[str, Any]) -> list[dict[str, Any]]:
    """Flat results-table rows from a results document."""
    rows: list[dict[str, Any]] = []
    for variant in payload["variants"]:
        metrics = {
            name: MetricReport.from_dict(data) for name, data in variant["metrics"].items()
        }
        acc = metrics.get("accuracy")
        wf1 = metrics.get("weighted_f1")
        rows.append(
            {
                "model": variant["name"],
                "acc_mean": acc.mean if acc else float("nan"),
                "acc_std": acc.std if acc else float("nan"),
                "wf1_mean": wf1.mean if wf1 else float("nan"),
                "wf1_std": wf1.std if wf1 else float("nan"),
                "n_features": int(variant["n_features"]),
            },
        )
    return rows


class ReportWriter:
    """Writes stamped report files into one output directory."""

    def __init__(self, output_dir: Path, seed: int, config_hash: str) -> None:
        """Initialize the writer.

        Args:
            output_dir: Directory receiving every report.
            seed: Master seed stamped on each file.
            config_hash: Configuration hash stamped on each file.

        """
        self.output_dir = output_dir
        self.seed = seed
        self.config_hash = config_hash

    def _path(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_json(self, name: str, payload: dict[str, Any]) -> Path:
        """Write a JSON document with seed and config hash fields."""
        document = {**_clean(payload), "seed": self.seed, "config_hash": self.config_hash}
        path = self._path(name)
        path.write_text(
            json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return path

    def write_csv(
        self,
        name: str,
        rows: list[dict[str, Any]],
        columns: tuple[str, ...] | list[str],
    ) -> Path:
        """Write rows as CSV with trailing seed and config hash columns."""
        frame = pd.DataFrame(rows, columns=list(columns))
        frame["seed"] = self.seed
        frame["config_hash"] = self.config_hash
        path = self._path(name)
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    def write_ingest_report(self, report: IngestReport) -> Path:
        """Ingest counts and per-entity coverage."""
        return self.write_json("ingest_report.json", report.to_dict())

    def write_alignment_report(self, report: AlignmentReport) -> Path:
        """Label coverage of the trajectories."""
        return self.write_json("alignment_report.json", report.to_dict())

    def write_sweep(self, table: ResolutionScoreTable) -> Path:
        """Resolution sweep table, one row per candidate."""
        rows = [
            {
                "resolution_s": r.resolution,
                "accuracy_mean": r.accuracy_mean,
                "accuracy_std": r.accuracy_std,
                "wf1_mean": r.wf1_mean,
                "wf1_std": r.wf1_std,
                "combined_score": r.combined_score,
                "status": r.status.value,
            }
            for r in table.rows
        ]
        return self.write_csv("sweep.csv", rows, SWEEP_COLUMNS)

    def write_selection(self, resolution: float, table: ResolutionScoreTable) -> Path:
        """Selected resolution with the rule that picked it."""
        failures = {str(r.resolution): r.error for r in table.rows if r.error}
        return self.write_json(
            "selected_resolution.json",
            {"resolution": resolution, "selection_rule": SELECTION_RULE, "failed": failures},
        )

    def write_results(self, payload: dict[str, Any]) -> list[Path]:
        """results.json plus the results.csv derived from it."""
        json_path = self.write_json("results.json", payload)
        csv_path = self.write_results_table(payload)
        return [csv_path, json_path]

    def write_results_table(self, payload: dict[str, Any]) -> Path:
        """Results CSV, one row per model variant."""
        return self.write_csv("results.csv", results_rows(payload), RESULT_COLUMNS)

    def write_importance(self, importance: dict[str, float]) -> Path:
        """Per-feature total gain and its share, largest first."""
        total = sum(importance.values())
        ordered = sorted(importance.items(), key=lambda item: (-item[1], item[0]))
        rows = [
            {"feature": name, "gain": gain, "share": gain / total if total > 0 else 0.0}
            for name, gain in ordered
        ]
        return self.write_csv("feature_importance.csv", rows, ("feature", "gain", "share"))

    def write_schema(self, result: RunResult) -> Path:
        """Feature columns consumed by each variant."""
        return self.write_json(
            "schema.json",
            {"variants": {v.name: list(v.columns) for v in result.variants}},
        )

    def write_run(self, result: RunResult) -> list[Path]:
        """Every output of ``cbc run``."""
        paths = self.write_results(results_payload(result))
        paths.append(self.write_importance(result.importance))
        paths.append(self.write_schema(result))
        paths.append(self.write_json("model.json", result.model.to_dict()))
        if result.sweep is not None:
            paths.append(self.write_sweep(result.sweep))
        return paths

    def write_predictions(self, result: PredictionResult) -> list[Path]:
        """Per-entity and per-window predicted labels."""
        probabilities = [f"p_{c}" for c in result.class_order]
        return [
            self.write_csv(
                "predictions.csv",
                result.entity_rows,
                ["window", "start", "id", "label", *probabilities],
            ),
            self.write_csv(
                "group_predictions.csv",
                result.group_rows,
                ["window", "start", "label", "entities"],
            ),
        ]

    def write_edges(self, window_index: int, graph: ProximityGraph) -> Path:
        """Edge list of one window's proximity graph under ``edges/``."""
        return self.write_csv(
            f"edges/window_{window_index:05d}.csv",
            edge_rows(graph),
            EDGE_COLUMNS,
        )
