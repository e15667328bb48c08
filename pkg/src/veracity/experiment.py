"""Cross-validated multimodal experiment runner.

Runs the full two-level pipeline under identity-grouped k-fold evaluation:
per-fold descriptor dictionaries, Fisher-vector encoding, expression
detectors, one classifier per (modality, kind), inner-CV fusion weight
search, and pooled out-of-fold scoring. Every learned object is audited
for train/test identity leakage as it is built.
"""
from __future__ import annotations

import logging
import warnings as _warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .classifiers import ClassifierSpec, predict_score, train
from .config import MODALITIES, PipelineConfig
from .data import DatasetManifest, DescriptorBag
from .errors import DataError, LeakageError
from .evaluation import (
    FoldPlan,
    FusionWeights,
    auc_pr,
    fuse,
    grouped_kfold,
    load_fold_plan,
    search_weights,
)
from .extract import FeatureCache, VideoFeatures, extract_all
from .fisher import encode_fisher, normalize_fv
from .gmm import EmConfig, GaussianMixture, fit_gmm
from .microexpression import EXPRESSIONS, segment_clips, train_expression_detectors
from .pca import PcaModel, fit_pca
from .pca import transform as pca_transform

log = logging.getLogger("veracity.experiment")

# results on the original courtroom-trial recordings, for the report footer;
# documentation only, not reproducible from bundled data
REFERENCE_RESULTS = {
    "note": (
        "Reference values measured on the original courtroom-trial dataset; "
        "shown for context only and not reproducible from bundled data."
    ),
    "all_modalities_linear_svm_auc": 0.8773,
    "ground_truth_mode_logistic_regression_auc": 0.9221,
    "expression_detector_mean_auc": 0.6511,
    "lips_protruded_detector_auc": 0.7512,
}

_PREDICTED_ROWS = (
    ("motion",),
    ("expression",),
    ("transcript",),
    ("audio",),
    ("motion", "expression"),
    ("motion", "expression", "transcript"),
    ("motion", "expression", "audio"),
    ("motion", "expression", "transcript", "audio"),
)

_GROUND_TRUTH_ROWS = (
    ("expression",),
    ("motion", "expression"),
    ("motion", "expression", "transcript"),
    ("motion", "expression", "audio"),
    ("motion", "expression", "transcript", "audio"),
)


def report_rows(mode: str, modalities: tuple[str, ...]) -> list[tuple[str, ...]]:
    """Feature-set rows of the result grid, restricted to enabled modalities."""
    templates = _PREDICTED_ROWS if mode == "predicted" else _GROUND_TRUTH_ROWS
    enabled = set(modalities)
    return [row for row in templates if set(row) <= enabled]


def row_name(row: tuple[str, ...]) -> str:
    return "+".join(row)


@dataclass(frozen=True)
class AuditEntry:
    """One leakage check: which videos fed a learned object, and whether
    their identities stayed out of the object's test fold."""

    fold: int
    name: str
    video_ids: tuple[str, ...]
    identity_ids: tuple[str, ...]


class LeakageAuditor:
    def __init__(self, manifest: DatasetManifest, plan: FoldPlan):
        self._identity = {r.video_id: r.identity_id for r in manifest.records}
        self._test_identities = {
            fold: {self._identity[v] for v in plan.test_videos(fold)}
            for fold in range(plan.k)
        }
        self.entries: list[AuditEntry] = []

    def check(self, fold: int, name: str, video_ids) -> None:
        identities = {self._identity[v] for v in video_ids}
        self.entries.append(
            AuditEntry(
                fold=fold,
                name=name,
                video_ids=tuple(sorted(video_ids)),
                identity_ids=tuple(sorted(identities)),
            )
        )
        clash = identities & self._test_identities[fold]
        if clash:
            raise LeakageError(
                f"{name}: training data includes identities {sorted(clash)} "
                f"from the test split of fold {fold}"
            )


@dataclass
class ExperimentReport:
    """Everything a run produced: the AUC grid, per-fold provenance, fold
    diagnostics, the audit trail, and the per-video score tables backing
    each cell."""

    config: dict[str, Any]
    config_hash: str
    seed: int
    mode: str
    plan: FoldPlan
    rows: list[dict[str, Any]]
    fold_diagnostics: list[dict[str, Any]]
    hyperparameters: dict[str, dict[str, Any]]
    warnings: list[str]
    audit_entries: list[AuditEntry] = field(repr=False, default_factory=list)
    score_tables: dict[str, dict[int, list[dict[str, Any]]]] = field(
        repr=False, default_factory=dict
    )

    def score_file_name(self, fold: int, kind: str) -> str:
        return f"scores/fold{fold:02d}_{kind}.csv"

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format": "experiment-report",
            "version": 1,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "mode": self.mode,
            "fold_plan": {
                "k": self.plan.k,
                "seed": self.plan.seed,
                "assignments": dict(sorted(self.plan.assignments.items())),
                "video_folds": dict(sorted(self.plan.video_folds.items())),
            },
            "grid": self.rows,
            "fold_diagnostics": self.fold_diagnostics,
            "hyperparameters": self.hyperparameters,
            "warnings": self.warnings,
            "audit": {
                "checked_objects": len(self.audit_entries),
                "clean": True,  # a failed check aborts before a report exists
            },
            "score_files": [
                self.score_file_name(fold, kind)
                for kind in sorted(self.score_tables)
                for fold in sorted(self.score_tables[kind])
            ],
            "reference_results": REFERENCE_RESULTS,
        }


@dataclass
class _FoldOutput:
    fold: int
    diagnostics: dict[str, Any]
    warnings: list[str]
    # (kind, row name) -> {video_id: fused score}
    fused: dict[tuple[str, str], dict[str, float]]
    # (kind, row name) -> provenance dict for this fold
    provenance: dict[tuple[str, str], dict[str, Any]]
    # kind -> csv rows for the fold's test videos
    csv_rows: dict[str, list[dict[str, Any]]]


def _subset_manifest(manifest: DatasetManifest, video_ids: list[str]) -> DatasetManifest:
    keep = set(video_ids)
    records = [r for r in manifest.records if r.video_id in keep]
    counts: dict[int, int] = {0: 0, 1: 0}
    for r in records:
        counts[r.label] += 1
    return DatasetManifest(records=records, class_counts=counts, root=manifest.root)


def _concat_rows(features: dict[str, VideoFeatures], videos: list[str], modality: str) -> np.ndarray:
    bags = []
    for vid in videos:
        bag = getattr(features[vid], "motion" if modality == "motion" else modality)
        bags.append(bag.rows)
    return np.concatenate(bags, axis=0)


def _subsample(rows: np.ndarray, limit: int, rng: np.random.Generator) -> np.ndarray:
    if rows.shape[0] <= limit:
        return rows
    idx = np.sort(rng.choice(rows.shape[0], size=limit, replace=False))
    return rows[idx]


def _encode(
    model: GaussianMixture,
    bag: DescriptorBag,
    config: PipelineConfig,
    pca: PcaModel | None = None,
) -> np.ndarray:
    if pca is not None:
        bag = DescriptorBag(dim=pca.components.shape[0], rows=pca_transform(pca, bag.rows))
    fv = encode_fisher(model, bag)
    if config.normalize:
        fv = normalize_fv(fv, power_alpha=config.power_alpha)
    return fv.values


def _clip_labels(record, clip_count: int, config: PipelineConfig) -> np.ndarray:
    bits = record.clip_expression_labels
    if bits is None:
        raise DataError(f"video {record.video_id!r} has no clip expression labels")
    if len(bits) == 1 and clip_count > 1 and config.broadcast_video_expression_labels:
        bits = bits * clip_count
    if len(bits) != clip_count:
        raise DataError(
            f"video {record.video_id!r}: {len(bits)} expression label rows "
            f"for {clip_count} clips"
        )
    return np.asarray(bits, dtype=np.int64)


class _FoldRunner:
    """All state shared across folds; one call per fold, thread-safe."""

    def __init__(
        self,
        manifest: DatasetManifest,
        config: PipelineConfig,
        plan: FoldPlan,
        features: dict[str, VideoFeatures],
        rows: list[tuple[str, ...]],
        active: list[str],
        auditor: LeakageAuditor,
    ):
        self.manifest = manifest
        self.config = config
        self.plan = plan
        self.features = features
        self.rows = rows
        self.active = active
        self.auditor = auditor
        self.label = {r.video_id: r.label for r in manifest.records}
        self.identity = {r.video_id: r.identity_id for r in manifest.records}
        self.kinds = config.classifier_kinds
        self.specs = {k: ClassifierSpec(k, self._params(k)) for k in self.kinds}
        self.need_clips = "expression" in active and config.expressions_mode == "predicted"
        self.clip_sets = {}
        if self.need_clips:
            for rec in manifest.records:
                self.clip_sets[rec.video_id] = segment_clips(
                    features[rec.video_id].motion,
                    fps=config.fps,
                    clip_seconds=config.clip_seconds,
                    video_id=rec.video_id,
                )
        self.subset_idx = [
            i for i, e in enumerate(EXPRESSIONS) if e in config.expression_subset
        ]

    def _params(self, kind: str) -> dict[str, Any]:
        params = dict(self.config.classifier_params.get(kind, {}))
        params.setdefault("seed", self.config.seed)
        if "c_grid" in params and params["c_grid"] is not None:
            params["c_grid"] = tuple(float(c) for c in params["c_grid"])
        return params

    def _em_config(self, fold: int, slot: int) -> EmConfig:
        c = self.config
        return EmConfig(
            seed=c.seed * 1009 + fold * 13 + slot,
            max_iterations=c.em_max_iterations,
            tolerance=c.em_tolerance,
            variance_floor_factor=c.em_variance_floor_factor,
        )

    def _fit_dictionary(
        self, fold: int, slot: int, modality: str, k: int, train_vids: list[str]
    ) -> tuple[PcaModel | None, GaussianMixture]:
        self.auditor.check(fold, f"fold{fold}/{modality}-dictionary", train_vids)
        rows = _concat_rows(self.features, train_vids, modality)
        rng = np.random.default_rng(self.config.seed * 1009 + fold * 13 + slot + 7)
        rows = _subsample(rows, self.config.max_gmm_samples, rng)
        pca = None
        target = {
            "motion": self.config.motion_pca,
            "audio": self.config.audio_pca,
            "transcript": self.config.text_pca,
        }[modality]
        if target:
            pca = fit_pca(rows, target)
            rows = pca_transform(pca, rows)
        result = fit_gmm(rows, k, self._em_config(fold, slot))
        log.debug(
            "fold %d %s dictionary: %d samples, %d EM iterations",
            fold,
            modality,
            rows.shape[0],
            len(result.log_likelihoods),
        )
        return pca, result.model

    def _expression_features(
        self,
        fold: int,
        train_vids: list[str],
        motion_gmm: GaussianMixture | None,
        motion_pca: PcaModel | None,
    ) -> tuple[dict[str, np.ndarray], list[str]]:
        """Per-video expression vectors (subset dims) plus fold warnings."""
        config = self.config
        idx = self.subset_idx
        if config.expressions_mode == "ground-truth":
            vectors = {}
            for rec in self.manifest.records:
                bits = np.asarray(rec.clip_expression_labels, dtype=np.float64)
                vectors[rec.video_id] = bits.mean(axis=0)[idx]
            return vectors, []

        clip_matrix = {}
        for rec in self.manifest.records:
            clips = self.clip_sets[rec.video_id].clips
            clip_matrix[rec.video_id] = np.stack(
                [_encode(motion_gmm, clip, config, motion_pca) for clip in clips]
            )
        train_fvs = np.concatenate([clip_matrix[v] for v in train_vids])
        train_bits = np.concatenate(
            [
                _clip_labels(self.manifest.record(v), clip_matrix[v].shape[0], config)
                for v in train_vids
            ]
        )
        self.auditor.check(fold, f"fold{fold}/expression-detectors", train_vids)
        detectors = train_expression_detectors(
            train_fvs,
            train_bits,
            seed=config.seed,
            trained_on=tuple(train_vids),
        )
        notes = [
            f"fold {fold}: expression {name!r} had single-class training labels; "
            "its detector scores a constant zero"
            for name in detectors.untrainable
        ]
        vectors = {}
        for vid, matrix in clip_matrix.items():
            clip_scores = detectors.score_clips(matrix)
            if config.expression_probabilities:
                clip_scores = 1.0 / (1.0 + np.exp(-clip_scores))
            vectors[vid] = clip_scores.mean(axis=0)[idx]
        return vectors, notes

    def _modality_features(self, fold: int, train_vids: list[str]) -> tuple[dict, list[str]]:
        """Feature matrix source per modality: {modality: {video_id: vector}}."""
        config = self.config
        feats: dict[str, dict[str, np.ndarray]] = {}
        notes: list[str] = []
        motion_pca, motion_gmm = None, None
        if "motion" in self.active or self.need_clips:
            motion_pca, motion_gmm = self._fit_dictionary(
                fold, 0, "motion", config.motion_components, train_vids
            )
        if "motion" in self.active:
            feats["motion"] = {
                rec.video_id: _encode(
                    motion_gmm, self.features[rec.video_id].motion, config, motion_pca
                )
                for rec in self.manifest.records
            }
        if "audio" in self.active:
            audio_pca, audio_gmm = self._fit_dictionary(
                fold, 1, "audio", config.audio_components, train_vids
            )
            feats["audio"] = {
                rec.video_id: _encode(
                    audio_gmm, self.features[rec.video_id].audio, config, audio_pca
                )
                for rec in self.manifest.records
            }
        if "transcript" in self.active:
            text_pca, text_gmm = self._fit_dictionary(
                fold, 2, "transcript", config.text_components, train_vids
            )
            feats["transcript"] = {
                rec.video_id: _encode(
                    text_gmm, self.features[rec.video_id].transcript, config, text_pca
                )
                for rec in self.manifest.records
            }
        if "expression" in self.active:
            feats["expression"], notes = self._expression_features(
                fold, train_vids, motion_gmm, motion_pca
            )
        return feats, notes

    def _matrix(self, feats: dict, modality: str, vids: list[str]) -> np.ndarray:
        return np.stack([feats[modality][v] for v in vids])

    def _labels(self, vids: list[str]) -> np.ndarray:
        return np.array([self.label[v] for v in vids], dtype=np.int64)

    def run_fold(self, fold: int) -> _FoldOutput:
        config = self.config
        train_vids = self.plan.train_videos(fold)
        test_vids = self.plan.test_videos(fold)
        train_labels = self._labels(train_vids)
        if len(np.unique(train_labels)) < 2:
            raise DataError(f"fold {fold}: training split has a single class")

        feats, notes = self._modality_features(fold, train_vids)

        # inner grouped CV: every training video gets exactly one
        # held-out score per (modality, kind), used for weight search
        train_identities = {self.identity[v] for v in train_vids}
        inner_k = min(config.inner_folds, len(train_identities))
        if inner_k < 2:
            raise DataError(f"fold {fold}: too few training identities for inner CV")
        inner_plan = grouped_kfold(
            _subset_manifest(self.manifest, train_vids),
            k=inner_k,
            seed=config.seed + fold + 1,
        )

        inner_scores: dict[tuple[str, str], dict[str, float]] = {}
        for kind in self.kinds:
            for modality in self.active:
                held_out: dict[str, float] = {}
                for j in range(inner_plan.k):
                    fit_vids = inner_plan.train_videos(j)
                    val_vids = inner_plan.test_videos(j)
                    try:
                        model = train(
                            self.specs[kind],
                            self._matrix(feats, modality, fit_vids),
                            self._labels(fit_vids),
                            video_ids=tuple(fit_vids),
                        )
                    except DataError as exc:
                        raise DataError(
                            f"fold {fold}, inner fold {j}, {modality}/{kind}: {exc}"
                        ) from exc
                    self.auditor.check(
                        fold, f"fold{fold}/inner{j}/{modality}/{kind}", fit_vids
                    )
                    scores = np.atleast_1d(
                        predict_score(model, self._matrix(feats, modality, val_vids))
                    )
                    held_out.update(zip(val_vids, scores.tolist()))
                inner_scores[(kind, modality)] = held_out

        # standardize pooled inner scores; the same affine map is applied
        # to test scores so fusion weights transfer across the split
        standardization: dict[tuple[str, str], tuple[float, float]] = {}
        inner_z: dict[tuple[str, str], np.ndarray] = {}
        for key, held_out in inner_scores.items():
            values = np.array([held_out[v] for v in train_vids])
            mean = float(values.mean())
            std = float(values.std())
            if std < 1e-12:
                std = 1.0
            standardization[key] = (mean, std)
            inner_z[key] = (values - mean) / std

        weights: dict[tuple[str, str], FusionWeights] = {}
        for kind in self.kinds:
            for row in self.rows:
                streams = {m: inner_z[(kind, m)] for m in row}
                w = search_weights(streams, train_labels, step=config.weight_step)
                self.auditor.check(
                    fold, f"fold{fold}/weights/{row_name(row)}/{kind}", train_vids
                )
                weights[(kind, row_name(row))] = w

        # final per-modality classifiers on the full training split
        test_z: dict[tuple[str, str], np.ndarray] = {}
        selected: dict[tuple[str, str], dict[str, Any]] = {}
        for kind in self.kinds:
            for modality in self.active:
                model = train(
                    self.specs[kind],
                    self._matrix(feats, modality, train_vids),
                    train_labels,
                    video_ids=tuple(train_vids),
                )
                self.auditor.check(fold, f"fold{fold}/final/{modality}/{kind}", train_vids)
                raw = np.atleast_1d(
                    predict_score(model, self._matrix(feats, modality, test_vids))
                )
                mean, std = standardization[(kind, modality)]
                test_z[(kind, modality)] = (raw - mean) / std
                if kind == "linear-svm":
                    selected[(kind, modality)] = {"c": model.payload["c"]}

        test_labels = self._labels(test_vids)
        fused: dict[tuple[str, str], dict[str, float]] = {}
        provenance: dict[tuple[str, str], dict[str, Any]] = {}
        for kind in self.kinds:
            for row in self.rows:
                name = row_name(row)
                w = weights[(kind, name)]
                values = fuse(w, {m: test_z[(kind, m)] for m in row})
                fused[(kind, name)] = dict(zip(test_vids, values.tolist()))
                fold_auc = (
                    auc_pr(values, test_labels)
                    if len(np.unique(test_labels)) == 2
                    else None
                )
                entry: dict[str, Any] = {
                    "fold": fold,
                    "auc": fold_auc,
                    "weights": w.as_dict(),
                    "standardization": {
                        m: list(standardization[(kind, m)]) for m in row
                    },
                }
                picks = {
                    m: selected[(kind, m)] for m in row if (kind, m) in selected
                }
                if picks:
                    entry["selected"] = picks
                provenance[(kind, name)] = entry

        # per-fold score table: one row per test video, the fused column
        # belonging to the largest feature set in this run
        full_row = row_name(max(self.rows, key=len))
        csv_rows: dict[str, list[dict[str, Any]]] = {}
        for kind in self.kinds:
            rows_out = []
            for i, vid in enumerate(test_vids):
                entry = {
                    "video_id": vid,
                    "identity_id": self.identity[vid],
                    "label": int(self.label[vid]),
                }
                for modality in MODALITIES:
                    entry[modality] = (
                        float(test_z[(kind, modality)][i])
                        if modality in self.active
                        else None
                    )
                entry["fused"] = fused[(kind, full_row)][vid]
                rows_out.append(entry)
            csv_rows[kind] = rows_out

        positives = int(test_labels.sum())
        diagnostics = {
            "fold": fold,
            "test_identities": sorted({self.identity[v] for v in test_vids}),
            "test_videos": len(test_vids),
            "positives": positives,
            "negatives": len(test_vids) - positives,
        }
        return _FoldOutput(
            fold=fold,
            diagnostics=diagnostics,
            warnings=notes,
            fused=fused,
            provenance=provenance,
            csv_rows=csv_rows,
        )


def run_experiment(
    manifest: DatasetManifest,
    config: PipelineConfig,
    cache: FeatureCache | None = None,
    plan: FoldPlan | None = None,
) -> ExperimentReport:
    """Execute the full grouped-CV protocol and assemble the report.

    Aborts with LeakageError the moment any learned object would see a
    test-fold identity of its own fold.
    """
    if plan is None:
        if config.fold_plan is not None:
            plan = load_fold_plan(config.fold_plan)
        else:
            plan = grouped_kfold(manifest, k=config.folds, seed=config.seed)
    manifest_vids = {r.video_id for r in manifest.records}
    plan_vids = set(plan.video_folds)
    if plan_vids != manifest_vids:
        missing = sorted(manifest_vids - plan_vids)[:5]
        extra = sorted(plan_vids - manifest_vids)[:5]
        raise DataError(
            f"fold plan does not match the manifest (missing {missing}, unknown {extra})"
        )

    rows = report_rows(config.expressions_mode, config.modalities)
    active = [
        m for m in MODALITIES if any(m in row for row in rows)
    ]
    auditor = LeakageAuditor(manifest, plan)
    hyperparameters = {
        kind: ClassifierSpec(
            kind,
            {**config.classifier_params.get(kind, {}), "seed": config.seed},
        ).resolved()
        for kind in config.classifier_kinds
    }

    report = ExperimentReport(
        config=config.canonical_dict(),
        config_hash=config.config_hash(),
        seed=config.seed,
        mode=config.expressions_mode,
        plan=plan,
        rows=[],
        fold_diagnostics=[],
        hyperparameters=hyperparameters,
        warnings=[],
        audit_entries=auditor.entries,
    )
    if not rows:
        report.warnings.append(
            "no feature-set rows are possible with the enabled modalities; "
            "the result grid is empty"
        )
        return report

    features = extract_all(manifest, config, cache)
    oov_total = sum(f.transcript_oov for f in features.values())
    if oov_total:
        report.warnings.append(
            f"{oov_total} transcript token(s) were out of vocabulary and skipped"
        )

    runner = _FoldRunner(manifest, config, plan, features, rows, active, auditor)
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                outputs = list(pool.map(runner.run_fold, range(plan.k)))
        else:
            outputs = [runner.run_fold(fold) for fold in range(plan.k)]
    outputs.sort(key=lambda o: o.fold)

    all_vids = sorted(manifest_vids)
    labels = np.array([manifest.record(v).label for v in all_vids], dtype=np.int64)
    grid = []
    for row in rows:
        name = row_name(row)
        cells = {}
        for kind in config.classifier_kinds:
            pooled = {}
            for out in outputs:
                pooled.update(out.fused[(kind, name)])
            scores = np.array([pooled[v] for v in all_vids])
            auc_pooled = auc_pr(scores, labels)
            per_fold = [out.provenance[(kind, name)] for out in outputs]
            fold_aucs = [p["auc"] for p in per_fold if p["auc"] is not None]
            auc_fold_mean = float(np.mean(fold_aucs)) if fold_aucs else None
            cells[kind] = {
                "auc": auc_fold_mean if config.per_fold_averaging else auc_pooled,
                "auc_pooled": auc_pooled,
                "auc_fold_mean": auc_fold_mean,
                "per_fold": per_fold,
                "score_files": [
                    report.score_file_name(out.fold, kind) for out in outputs
                ],
            }
        grid.append({"feature_set": name, "modalities": list(row), "cells": cells})

    report.rows = grid
    report.fold_diagnostics = [out.diagnostics for out in outputs]
    for out in outputs:
        report.warnings.extend(out.warnings)
    report.score_tables = {
        kind: {out.fold: out.csv_rows[kind] for out in outputs}
        for kind in config.classifier_kinds
    }
    log.info(
        "experiment complete: %d rows x %d classifiers over %d folds",
        len(rows),
        len(config.classifier_kinds),
        plan.k,
    )
    return report
