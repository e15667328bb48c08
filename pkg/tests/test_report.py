"""Report files: deterministic JSON, aligned text grid, score CSVs."""
import json

import pytest

from veracity.errors import DataError
from veracity.evaluation import FoldPlan
from veracity.experiment import ExperimentReport
from veracity.report import (
    SCORE_COLUMNS,
    bar_series,
    load_report,
    render_text,
    report_to_json,
    write_report,
)


def toy_report(rows=None, warnings=None):
    plan = FoldPlan(
        k=2,
        seed=0,
        assignments={"idA": 0, "idB": 1},
        video_folds={"vA": 0, "vB": 1},
    )
    cells = {
        "naive-bayes": {
            "auc": 0.875,
            "auc_pooled": 0.875,
            "auc_fold_mean": 0.9,
            "per_fold": [{"fold": 0, "auc": 0.8}, {"fold": 1, "auc": 1.0}],
            "score_files": ["scores/fold00_naive-bayes.csv", "scores/fold01_naive-bayes.csv"],
        }
    }
    default_rows = [{"feature_set": "motion", "modalities": ["motion"], "cells": cells}]
    return ExperimentReport(
        config={"seed": 0},
        config_hash="cafe0123cafe0123",
        seed=0,
        mode="predicted",
        plan=plan,
        rows=default_rows if rows is None else rows,
        fold_diagnostics=[
            {"fold": 0, "test_identities": ["idA"], "test_videos": 1, "positives": 1, "negatives": 0},
            {"fold": 1, "test_identities": ["idB"], "test_videos": 1, "positives": 0, "negatives": 1},
        ],
        hyperparameters={"naive-bayes": {"var_smoothing": 1e-9}},
        warnings=[] if warnings is None else warnings,
        score_tables={
            "naive-bayes": {
                0: [
                    {
                        "video_id": "vA",
                        "identity_id": "idA",
                        "label": 1,
                        "motion": 0.5,
                        "expression": None,
                        "transcript": None,
                        "audio": None,
                        "fused": 0.625,
                    }
                ],
                1: [
                    {
                        "video_id": "vB",
                        "identity_id": "idB",
                        "label": 0,
                        "motion": -0.25,
                        "expression": None,
                        "transcript": None,
                        "audio": None,
                        "fused": -0.125,
                    }
                ],
            }
        },
    )


class TestJson:
    def test_byte_layout(self):
        report = toy_report()
        text = report_to_json(report)
        assert text.endswith("\n")
        assert text == report_to_json(report)
        doc = json.loads(text)
        assert doc == report.to_json_dict()
        assert list(doc) == sorted(doc)

    def test_load_round_trip(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text(report_to_json(toy_report()), encoding="utf-8")
        doc = load_report(path)
        assert doc["config_hash"] == "cafe0123cafe0123"

    def test_load_rejects_foreign(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text('{"format": "experiment-report", "version": 2}')
        with pytest.raises(DataError, match="version-1 experiment report"):
            load_report(path)

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{")
        with pytest.raises(DataError, match="invalid JSON"):
            load_report(path)

    def test_load_missing(self, tmp_path):
        with pytest.raises(DataError, match="report not found"):
            load_report(tmp_path / "none.json")


class TestText:
    def test_grid_rendering(self):
        text = render_text(toy_report().to_json_dict())
        lines = text.splitlines()
        assert lines[0] == "multimodal deception detection results"
        assert "config hash : cafe0123cafe0123" in lines
        assert any(line.startswith("feature set") for line in lines)
        assert any("motion" in line and "0.8750" in line for line in lines)
        assert "  fold 0: 1 identities, 1 videos (1 positive / 0 negative)" in lines
        assert text.endswith("\n")

    def test_reference_footer(self):
        text = render_text(toy_report().to_json_dict())
        assert "reference results (courtroom-trial dataset, documentation only):" in text
        for value in ("0.8773", "0.9221", "0.6511", "0.7512"):
            assert value in text

    def test_empty_grid_message(self):
        text = render_text(toy_report(rows=[]).to_json_dict())
        assert "no results: the result grid is empty." in text

    def test_warnings_listed(self):
        doc = toy_report(warnings=["3 tokens skipped"]).to_json_dict()
        text = render_text(doc)
        assert "warnings:" in text and "  - 3 tokens skipped" in text

    def test_render_is_deterministic(self):
        doc = toy_report().to_json_dict()
        assert render_text(doc) == render_text(doc)


class TestCsv:
    def test_bar_series(self):
        text = bar_series(toy_report().to_json_dict())
        lines = text.splitlines()
        assert lines[0] == "# config_hash=cafe0123cafe0123 seed=0"
        assert lines[1] == "feature_set,classifier,auc"
        assert lines[2] == "motion,naive-bayes,0.875"

    def test_score_files_written(self, tmp_path):
        report = toy_report()
        paths = write_report(report, tmp_path / "out")
        assert set(paths) == {
            "json",
            "text",
            "scores/fold00_naive-bayes.csv",
            "scores/fold01_naive-bayes.csv",
        }
        for path in paths.values():
            assert path.is_file()
        assert paths["json"].read_text() == report_to_json(report)

        csv_text = paths["scores/fold00_naive-bayes.csv"].read_text()
        lines = csv_text.splitlines()
        assert lines[0] == "# config_hash=cafe0123cafe0123 seed=0 fold=0 classifier=naive-bayes"
        assert lines[1] == ",".join(SCORE_COLUMNS)
        # blank cells for inactive modalities, .17g for scores
        assert lines[2] == "vA,idA,1,0.5,,,,0.625"
