"""Ranking metric, identity-grouped cross-validation folds, and late fusion.

The metric is area under the precision-recall curve in its average-precision
form: samples sharing a score enter the ranking together, so a tied block
contributes a single (recall, precision) point evaluated after the whole
block.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import DatasetManifest
from .errors import DataError


def auc_pr(scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision of scores against binary labels.

    Thresholds sweep the distinct score values from high to low; the result
    accumulates precision over recall increments. Requires both classes.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise DataError(f"shape mismatch: scores {scores.shape}, labels {labels.shape}")
    if set(np.unique(labels)) - {0, 1}:
        raise DataError("labels must be 0 or 1")
    if not np.isfinite(scores).all():
        raise DataError("scores contain non-finite values")
    if not (labels == 1).any() or not (labels == 0).any():
        raise DataError("metric undefined unless both classes are present")
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order].astype(np.float64)
    s = scores[order]
    tp = np.cumsum(y)
    total = np.arange(1, y.shape[0] + 1, dtype=np.float64)
    block_end = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    precision = tp[block_end] / total[block_end]
    recall = tp[block_end] / tp[-1]
    prev = np.append(0.0, recall[:-1])
    return float(np.sum((recall - prev) * precision))


@dataclass
class FoldPlan:
    """Identity-level fold assignment plus the induced video partition.

    assignments maps identity_id to fold; video_folds is derived from it at
    construction and is what the experiment actually splits on, which also
    makes a tampered plan representable (and then caught by the leakage
    audit, not here).
    """

    k: int
    seed: int
    assignments: dict[str, int]
    video_folds: dict[str, int]

    def __post_init__(self) -> None:
        if self.k < 2:
            raise DataError(f"need at least 2 folds, got {self.k}")
        if not self.assignments or not self.video_folds:
            raise DataError("fold plan must cover at least one identity and one video")
        for name, mapping in (("identity", self.assignments), ("video", self.video_folds)):
            for key, fold in mapping.items():
                if not isinstance(fold, int) or not 0 <= fold < self.k:
                    raise DataError(f"{name} {key!r} assigned to invalid fold {fold!r}")
        covered = {f for f in self.video_folds.values()}
        if covered != set(range(self.k)):
            missing = sorted(set(range(self.k)) - covered)
            raise DataError(f"folds {missing} have no test videos")

    def test_videos(self, fold: int) -> list[str]:
        return sorted(v for v, f in self.video_folds.items() if f == fold)

    def train_videos(self, fold: int) -> list[str]:
        return sorted(v for v, f in self.video_folds.items() if f != fold)


def grouped_kfold(manifest: DatasetManifest, k: int = 10, seed: int = 0) -> FoldPlan:
    """Deal identities round-robin into k folds after a seeded shuffle.

    All videos of an identity land in the same fold, and fold sizes differ
    by at most one identity.
    """
    identities = sorted(manifest.identities.keys())
    if k > len(identities):
        raise DataError(f"cannot make {k} folds from {len(identities)} identities")
    rng = np.random.default_rng(seed)
    shuffled = [identities[i] for i in rng.permutation(len(identities))]
    assignments = {ident: pos % k for pos, ident in enumerate(shuffled)}
    video_folds = {rec.video_id: assignments[rec.identity_id] for rec in manifest.records}
    return FoldPlan(k=k, seed=seed, assignments=assignments, video_folds=video_folds)


def save_fold_plan(plan: FoldPlan, path: str | Path) -> None:
    doc = {
        "format": "fold-plan",
        "version": 1,
        "k": plan.k,
        "seed": plan.seed,
        "assignments": plan.assignments,
        "video_folds": plan.video_folds,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_fold_plan(path: str | Path) -> FoldPlan:
    """Read a fold-plan file, checking structure only.

    Consistency between the identity assignments and the video partition is
    deliberately NOT checked here: the run-time leakage audit must catch a
    plan whose video partition splits an identity.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"fold plan not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    if doc.get("format") != "fold-plan" or doc.get("version") != 1:
        raise DataError(f"{path}: not a version-1 fold-plan document")
    return FoldPlan(
        k=int(doc["k"]),
        seed=int(doc.get("seed", 0)),
        assignments={str(i): int(f) for i, f in doc["assignments"].items()},
        video_folds={str(v): int(f) for v, f in doc["video_folds"].items()},
    )


@dataclass
class FusionWeights:
    """Convex combination over named score streams: non-negative, sum one.

    Streams absent from a run (disabled modalities) simply do not appear in
    names; active streams may sit at simplex corners, so single weights of
    exactly 0 or 1 are legal.
    """

    names: tuple[str, ...]
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.names),):
            raise DataError("one weight per stream name is required")
        if (self.values < 0).any():
            raise DataError("fusion weights must be non-negative")
        if abs(self.values.sum() - 1.0) > 1e-9:
            raise DataError(f"fusion weights sum to {self.values.sum()!r}, expected 1")

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def fuse(weights: FusionWeights, scores: Mapping[str, np.ndarray]) -> np.ndarray:
    """Weighted sum of the named score streams, per video."""
    missing = [n for n in weights.names if n not in scores]
    if missing:
        raise DataError(f"scores missing for streams {missing}")
    columns = [np.atleast_1d(np.asarray(scores[n], dtype=np.float64)) for n in weights.names]
    lengths = {c.shape for c in columns}
    if len(lengths) != 1:
        raise DataError(f"score streams disagree on length: {sorted(lengths)}")
    return np.stack(columns, axis=1) @ weights.values


def weight_grid(n_streams: int, step: float = 0.05) -> np.ndarray:
    """All non-negative weight vectors on the step lattice summing to one.

    Rows come out in lexicographic order of the weight tuples. Every simplex
    corner is always included.
    """
    if n_streams < 1:
        raise DataError("need at least one stream")
    m = round(1.0 / step)
    if m < 1 or abs(m * step - 1.0) > 1e-9:
        raise DataError(f"step {step} must divide 1 evenly")

    def compositions(slots: int, total: int):
        if slots == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(slots - 1, total - first):
                yield (first, *rest)

    return np.array(list(compositions(n_streams, m)), dtype=np.float64) * step


def search_weights(
    scores: Mapping[str, np.ndarray],
    labels: Sequence[int],
    step: float = 0.05,
) -> FusionWeights:
    """Exhaustive simplex grid search maximizing average precision.

    Ties break toward the highest-entropy (most uniform) weight vector, then
    the lexicographically smallest one, so the result is deterministic.
    """
    names = tuple(scores.keys())
    if not names:
        raise DataError("need at least one score stream")
    labels = np.asarray(labels)
    matrix = np.stack([np.asarray(scores[n], dtype=np.float64) for n in names], axis=1)
    grid = weight_grid(len(names), step)
    fused = matrix @ grid.T
    aucs = np.array([auc_pr(fused[:, g], labels) for g in range(grid.shape[0])])
    best = aucs.max()
    candidates = np.flatnonzero(aucs >= best - 1e-12)
    sub = grid[candidates]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(sub > 0, sub * np.log(sub), 0.0)
    entropies = -plogp.sum(axis=1)
    candidates = candidates[entropies >= entropies.max() - 1e-12]
    chosen = min(candidates, key=lambda g: tuple(grid[g]))
    return FusionWeights(names=names, values=grid[chosen])
