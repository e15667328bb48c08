"""Two-level micro-expression scoring.

Videos are cut into fixed-duration clips by frame index; per-clip encodings
feed five one-vs-rest linear detectors (frown, eyebrows raise, lips up, lips
protruded, head side turn); a video's high-level feature is the per-detector
mean margin over its clips.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifiers import ClassifierSpec, TrainedModel, predict_score, train
from .data import DescriptorBag
from .errors import DataError
from .fisher import FisherVector

EXPRESSIONS = (
    "frown",
    "eyebrows_raise",
    "lips_up",
    "lips_protruded",
    "head_side_turn",
)


@dataclass
class ClipSet:
    """Contiguous, non-overlapping clips of one video, in temporal order."""

    video_id: str
    clips: list[DescriptorBag]

    @property
    def clip_count(self) -> int:
        return len(self.clips)


@dataclass
class ExpressionScoreVector:
    """One real score per expression, ordered as EXPRESSIONS."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(EXPRESSIONS),):
            raise DataError(f"expected {len(EXPRESSIONS)} scores, got {self.scores.shape}")
        if not np.isfinite(self.scores).all():
            raise DataError("expression scores must be finite")


def clip_boundaries(ts_min: int, ts_max: int, window: int) -> list[tuple[int, int]]:
    """Inclusive frame ranges cutting [ts_min, ts_max] into window-sized clips.

    A trailing remainder of at least half a window becomes its own short
    clip; anything smaller joins the last full clip. A span shorter than one
    window forms a single clip.
    """
    if window < 1:
        raise DataError(f"clip window must be at least one frame, got {window}")
    if ts_max < ts_min:
        raise DataError(f"empty frame span [{ts_min}, {ts_max}]")
    span = ts_max - ts_min + 1
    full = span // window
    if full == 0:
        return [(ts_min, ts_max)]
    bounds = [(ts_min + i * window, ts_min + (i + 1) * window - 1) for i in range(full)]
    remainder = span - full * window
    if remainder > 0:
        if 2 * remainder >= window:
            bounds.append((ts_min + full * window, ts_max))
        else:
            bounds[-1] = (bounds[-1][0], ts_max)
    return bounds


def segment_clips(
    bag: DescriptorBag,
    fps: float = 15.0,
    clip_seconds: float = 4.0,
    video_id: str = "",
) -> ClipSet:
    """Partition a timestamped descriptor bag into per-clip bags.

    The window is round(clip_seconds * fps) frames. Every clip must receive
    at least one descriptor row; a clip-sized gap in the data is a defect.
    """
    if bag.timestamps is None:
        raise DataError("clip segmentation needs per-row frame timestamps")
    ts = bag.timestamps
    if (np.diff(ts) < 0).any():
        raise DataError("timestamps must be nondecreasing")
    window = int(round(clip_seconds * fps))
    bounds = clip_boundaries(int(ts.min()), int(ts.max()), window)
    clips = []
    for i, (start, end) in enumerate(bounds):
        mask = (ts >= start) & (ts <= end)
        if not mask.any():
            raise DataError(
                f"clip {i} spanning frames {start}..{end} contains no descriptors"
            )
        clips.append(DescriptorBag(dim=bag.dim, rows=bag.rows[mask], timestamps=ts[mask]))
    return ClipSet(video_id=video_id, clips=clips)


def _as_clip_matrix(clip_fvs) -> np.ndarray:
    if isinstance(clip_fvs, np.ndarray):
        matrix = np.atleast_2d(np.asarray(clip_fvs, dtype=np.float64))
    else:
        vectors = [fv.values if isinstance(fv, FisherVector) else np.asarray(fv) for fv in clip_fvs]
        if not vectors:
            raise DataError("need at least one clip")
        matrix = np.stack(vectors)
    return matrix


@dataclass
class ExpressionDetector:
    """One-vs-rest margin scorer; model None means the expression was
    untrainable on this fold and always scores zero."""

    expression: str
    model: TrainedModel | None

    def margins(self, clip_matrix: np.ndarray) -> np.ndarray:
        if self.model is None:
            return np.zeros(clip_matrix.shape[0])
        return np.atleast_1d(predict_score(self.model, clip_matrix))


@dataclass
class ExpressionDetectorSet:
    detectors: tuple[ExpressionDetector, ...]
    trained_on: tuple[str, ...] | None = None

    @property
    def untrainable(self) -> tuple[str, ...]:
        return tuple(d.expression for d in self.detectors if d.model is None)

    def score_clips(self, clip_fvs) -> np.ndarray:
        """(n_clips, n_expressions) margin matrix."""
        matrix = _as_clip_matrix(clip_fvs)
        return np.stack([d.margins(matrix) for d in self.detectors], axis=1)

    def score_video(self, clip_fvs) -> ExpressionScoreVector:
        """High-level video feature: mean margin per expression over clips."""
        return ExpressionScoreVector(scores=self.score_clips(clip_fvs).mean(axis=0))


def train_expression_detectors(
    clip_fvs,
    clip_labels: Sequence[Sequence[int]],
    seed: int = 0,
    c: float = 1.0,
    trained_on: tuple[str, ...] | None = None,
) -> ExpressionDetectorSet:
    """Fit one linear scorer per expression on clip encodings.

    clip_fvs is a list of FisherVector (or a feature matrix); clip_labels is
    (n_clips, 5) with entries in {0, 1}. An expression whose column has a
    single class cannot be fit: it gets a constant zero detector and a
    warning instead of failing the whole run.
    """
    matrix = _as_clip_matrix(clip_fvs)
    labels = np.asarray(clip_labels)
    if labels.shape != (matrix.shape[0], len(EXPRESSIONS)):
        raise DataError(
            f"clip labels must be (n_clips, {len(EXPRESSIONS)}), got {labels.shape}"
        )
    detectors = []
    for e, name in enumerate(EXPRESSIONS):
        column = labels[:, e]
        if len(np.unique(column)) < 2:
            warnings.warn(
                f"expression {name!r} has single-class training labels; "
                "using a constant zero detector",
                stacklevel=2,
            )
            detectors.append(ExpressionDetector(expression=name, model=None))
            continue
        model = train(
            ClassifierSpec("linear-svm", {"c": c, "seed": seed}),
            matrix,
            column,
            video_ids=trained_on,
        )
        detectors.append(ExpressionDetector(expression=name, model=model))
    return ExpressionDetectorSet(detectors=tuple(detectors), trained_on=trained_on)
