"""Report serialization and rendering.

A run produces one JSON report (machine-readable, deterministic byte
layout), an aligned text table, and per-fold score CSVs. Every file
embeds the config hash and seed so results stay traceable to settings.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import DataError
from .experiment import ExperimentReport

SCORE_COLUMNS = (
    "video_id",
    "identity_id",
    "label",
    "motion",
    "expression",
    "transcript",
    "audio",
    "fused",
)


def report_to_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def load_report(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"report not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    if doc.get("format") != "experiment-report" or doc.get("version") != 1:
        raise DataError(f"{path}: not a version-1 experiment report")
    return doc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _score_csv(report: ExperimentReport, fold: int, kind: str) -> str:
    lines = [
        f"# config_hash={report.config_hash} seed={report.seed} fold={fold} classifier={kind}",
        ",".join(SCORE_COLUMNS),
    ]
    for row in report.score_tables[kind][fold]:
        lines.append(",".join(_fmt(row[c]) for c in SCORE_COLUMNS))
    return "\n".join(lines) + "\n"


def render_text(doc: dict[str, Any]) -> str:
    """Human-readable result grid; deterministic for a given report."""
    out = [
        "multimodal deception detection results",
        f"config hash : {doc['config_hash']}",
        f"seed        : {doc['seed']}",
        f"mode        : {doc['mode']}",
        f"folds       : {doc['fold_plan']['k']}",
        "",
    ]
    grid = doc["grid"]
    if not grid:
        out.append("no results: the result grid is empty.")
    else:
        kinds = list(grid[0]["cells"].keys())
        name_width = max(len("feature set"), max(len(r["feature_set"]) for r in grid))
        widths = [max(len(k), 6) for k in kinds]
        header = "feature set".ljust(name_width) + "".join(
            f"  {k.rjust(w)}" for k, w in zip(kinds, widths)
        )
        out.append(header)
        out.append("-" * len(header))
        for row in grid:
            cells = "".join(
                f"  {format(row['cells'][k]['auc'], '.4f').rjust(w)}"
                for k, w in zip(kinds, widths)
            )
            out.append(row["feature_set"].ljust(name_width) + cells)
    out.append("")
    out.append("fold diagnostics (test split class balance):")
    for diag in doc["fold_diagnostics"]:
        out.append(
            f"  fold {diag['fold']}: {len(diag['test_identities'])} identities, "
            f"{diag['test_videos']} videos "
            f"({diag['positives']} positive / {diag['negatives']} negative)"
        )
    if doc["warnings"]:
        out.append("")
        out.append("warnings:")
        for note in doc["warnings"]:
            out.append(f"  - {note}")
    ref = doc["reference_results"]
    out.extend(
        [
            "",
            "reference results (courtroom-trial dataset, documentation only):",
            f"  all modalities, linear SVM      : {ref['all_modalities_linear_svm_auc']:.4f}",
            f"  ground-truth mode, logistic reg : {ref['ground_truth_mode_logistic_regression_auc']:.4f}",
            f"  mean expression detector        : {ref['expression_detector_mean_auc']:.4f}",
            f"  lips-protruded detector         : {ref['lips_protruded_detector_auc']:.4f}",
        ]
    )
    return "\n".join(out) + "\n"


def bar_series(doc: dict[str, Any]) -> str:
    """Tidy CSV of every grid cell, one row per (feature set, classifier)."""
    lines = [
        f"# config_hash={doc['config_hash']} seed={doc['seed']}",
        "feature_set,classifier,auc",
    ]
    for row in doc["grid"]:
        for kind, cell in row["cells"].items():
            lines.append(f"{row['feature_set']},{kind},{_fmt(cell['auc'])}")
    return "\n".join(lines) + "\n"


def write_report(report: ExperimentReport, output_dir: str | Path) -> dict[str, Path]:
    """Write report.json, report.txt and the per-fold score CSVs."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = output_dir / "report.json"
    json_path.write_text(report_to_json(report), encoding="utf-8")
    paths["json"] = json_path

    text_path = output_dir / "report.txt"
    text_path.write_text(render_text(report.to_json_dict()), encoding="utf-8")
    paths["text"] = text_path

    for kind, folds in report.score_tables.items():
        for fold in folds:
            rel = report.score_file_name(fold, kind)
            path = output_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(_score_csv(report, fold, kind), encoding="utf-8")
            paths[rel] = path
    return paths
