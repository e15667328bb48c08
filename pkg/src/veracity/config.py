"""Declarative TOML pipeline configuration.

One config file drives extraction, experiments and reporting; command-line
flags override individual keys before validation, so the embedded config
hash always reflects the effective settings.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classifiers import CLASSIFIER_KINDS
from .data import FRAME_COLUMN, MBH_COLUMNS
from .errors import DataError
from .mfcc import MfccConfig
from .microexpression import EXPRESSIONS

MODALITIES = ("motion", "expression", "transcript", "audio")
EXPRESSION_MODES = ("predicted", "ground-truth")

_MFCC_KEYS = {
    "frame_length",
    "hop",
    "filter_count",
    "coefficient_count",
    "fft_size",
    "low_freq",
    "high_freq",
    "log_floor",
    "pre_emphasis",
    "append_deltas",
}

_SECTION_KEYS = {
    "data": {"manifest", "embeddings"},
    "output": {"directory", "cache_dir"},
    "motion": {"columns", "frame_column", "n_components", "pca"},
    "audio": {"n_components", "mfcc", "pca"},
    "text": {"n_components", "embedding_limit", "pca"},
    "clips": {"fps", "clip_seconds"},
    "encoding": {"normalize", "power_alpha"},
    "gmm": {"max_iterations", "tolerance", "variance_floor_factor"},
    "evaluation": {
        "folds",
        "inner_folds",
        "seed",
        "weight_step",
        "per_fold_averaging",
        "max_gmm_samples",
        "fold_plan",
        "workers",
    },
    "mode": {
        "expressions",
        "modalities",
        "expression_subset",
        "broadcast_video_expression_labels",
        "expression_probabilities",
    },
    "classifiers": None,  # free-form: "kinds" plus per-kind tables
}


def expression_to_cli(name: str) -> str:
    return name.replace("_", "-")


def expression_from_cli(name: str) -> str:
    snake = name.replace("-", "_").lower()
    if snake not in EXPRESSIONS:
        options = ", ".join(expression_to_cli(e) for e in EXPRESSIONS)
        raise DataError(f"unknown expression {name!r}; expected one of: {options}")
    return snake


@dataclass(frozen=True)
class PipelineConfig:
    manifest: Path
    embeddings: Path
    output_dir: Path
    cache_dir: Path | None = None
    motion_columns: tuple[int, int] = MBH_COLUMNS
    frame_column: int = FRAME_COLUMN
    motion_components: int = 64
    audio_components: int = 64
    text_components: int = 16
    motion_pca: int = 0  # 0 disables the projection
    audio_pca: int = 0
    text_pca: int = 0
    embedding_limit: int | None = None
    mfcc: MfccConfig = MfccConfig()
    fps: float = 15.0
    clip_seconds: float = 4.0
    normalize: bool = False
    power_alpha: float = 0.5
    em_max_iterations: int = 200
    em_tolerance: float = 1e-5
    em_variance_floor_factor: float = 1e-4
    folds: int = 10
    inner_folds: int = 3
    seed: int = 0
    weight_step: float = 0.05
    per_fold_averaging: bool = False
    max_gmm_samples: int = 100_000
    fold_plan: Path | None = None
    workers: int = 1
    expressions_mode: str = "predicted"
    modalities: tuple[str, ...] = MODALITIES
    expression_subset: tuple[str, ...] = EXPRESSIONS
    broadcast_video_expression_labels: bool = False
    expression_probabilities: bool = False  # sigmoid-squash detector margins
    classifier_kinds: tuple[str, ...] = CLASSIFIER_KINDS
    classifier_params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.expressions_mode not in EXPRESSION_MODES:
            raise DataError(
                f"mode.expressions must be one of {EXPRESSION_MODES}, got {self.expressions_mode!r}"
            )
        if not self.modalities:
            raise DataError("mode.modalities must name at least one modality")
        bad = set(self.modalities) - set(MODALITIES)
        if bad:
            raise DataError(f"unknown modalities {sorted(bad)}; expected subset of {MODALITIES}")
        if not self.expression_subset:
            raise DataError("mode.expression_subset must keep at least one expression")
        bad = set(self.expression_subset) - set(EXPRESSIONS)
        if bad:
            raise DataError(f"unknown expressions {sorted(bad)}")
        bad = set(self.classifier_kinds) - set(CLASSIFIER_KINDS)
        if bad:
            raise DataError(f"unknown classifier kinds {sorted(bad)}")
        if not self.classifier_kinds:
            raise DataError("classifiers.kinds must name at least one classifier")
        lo, hi = self.motion_columns
        if lo < 0 or hi < lo:
            raise DataError(f"invalid motion column range {self.motion_columns}")
        if self.folds < 2 or self.inner_folds < 2:
            raise DataError("folds and inner_folds must each be at least 2")
        if self.workers < 1:
            raise DataError("workers must be at least 1")
        if min(self.motion_pca, self.audio_pca, self.text_pca) < 0:
            raise DataError("pca dimensions must be non-negative (0 disables)")

    def canonical_dict(self) -> dict[str, Any]:
        """Stable dictionary of every effective setting, for hashing/reports."""
        return {
            "manifest": self.manifest.as_posix(),
            "embeddings": self.embeddings.as_posix(),
            "output_dir": self.output_dir.as_posix(),
            "cache_dir": self.cache_dir.as_posix() if self.cache_dir else None,
            "motion_columns": list(self.motion_columns),
            "frame_column": self.frame_column,
            "n_components": {
                "motion": self.motion_components,
                "audio": self.audio_components,
                "text": self.text_components,
            },
            "pca": {
                "motion": self.motion_pca,
                "audio": self.audio_pca,
                "text": self.text_pca,
            },
            "embedding_limit": self.embedding_limit,
            "mfcc": {
                "frame_length": self.mfcc.frame_length,
                "hop": self.mfcc.hop,
                "filter_count": self.mfcc.filter_count,
                "coefficient_count": self.mfcc.coefficient_count,
                "fft_size": self.mfcc.fft_size,
                "low_freq": self.mfcc.low_freq,
                "high_freq": self.mfcc.high_freq,
                "log_floor": self.mfcc.log_floor,
                "pre_emphasis": self.mfcc.pre_emphasis,
                "append_deltas": self.mfcc.append_deltas,
            },
            "fps": self.fps,
            "clip_seconds": self.clip_seconds,
            "normalize": self.normalize,
            "power_alpha": self.power_alpha,
            "em": {
                "max_iterations": self.em_max_iterations,
                "tolerance": self.em_tolerance,
                "variance_floor_factor": self.em_variance_floor_factor,
            },
            "folds": self.folds,
            "inner_folds": self.inner_folds,
            "seed": self.seed,
            "weight_step": self.weight_step,
            "per_fold_averaging": self.per_fold_averaging,
            "max_gmm_samples": self.max_gmm_samples,
            "fold_plan": self.fold_plan.as_posix() if self.fold_plan else None,
            "workers": self.workers,
            "expressions_mode": self.expressions_mode,
            "modalities": list(self.modalities),
            "expression_subset": list(self.expression_subset),
            "broadcast_video_expression_labels": self.broadcast_video_expression_labels,
            "expression_probabilities": self.expression_probabilities,
            "classifier_kinds": list(self.classifier_kinds),
            "classifier_params": self.classifier_params,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate_paths(self) -> None:
        """Existence checks deferred from parse time so configs can be linted."""
        for label, path in (("manifest", self.manifest), ("embeddings", self.embeddings)):
            if not path.is_file():
                raise DataError(f"{label} file not found: {path}")
        if self.fold_plan is not None and not self.fold_plan.is_file():
            raise DataError(f"fold plan file not found: {self.fold_plan}")


# classifier hyperparameters selected inside each training fold by default
DEFAULT_LINEAR_C_GRID = (0.01, 0.1, 1.0, 10.0)


def _reject_unknown(section: str, table: dict, allowed: set[str], path: Path) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise DataError(f"{path}: unknown key(s) {sorted(unknown)} in [{section}]")


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Parse a TOML config; relative paths resolve against the config's directory.

    overrides maps dotted keys (e.g. "mode.modalities") to replacement
    values and is applied before validation, so flag-overridden runs hash
    differently exactly when they differ.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML: {exc}") from exc
    unknown = set(doc) - set(_SECTION_KEYS)
    if unknown:
        raise DataError(f"{path}: unknown section(s) {sorted(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        if allowed is not None and section in doc:
            _reject_unknown(section, doc[section], allowed, path)

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise DataError(f"override {dotted!r} must be section.key")
        doc.setdefault(section, {})[key] = value

    root = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else root / q

    data = doc.get("data", {})
    if "manifest" not in data or "embeddings" not in data:
        raise DataError(f"{path}: [data] must define manifest and embeddings")
    output = doc.get("output", {})
    motion = doc.get("motion", {})
    audio = doc.get("audio", {})
    textsec = doc.get("text", {})
    clips = doc.get("clips", {})
    encoding = doc.get("encoding", {})
    gmm = doc.get("gmm", {})
    evaluation = doc.get("evaluation", {})
    mode = doc.get("mode", {})
    classifiers = dict(doc.get("classifiers", {}))

    mfcc_table = audio.get("mfcc", {})
    _reject_unknown("audio.mfcc", mfcc_table, _MFCC_KEYS, path)
    mfcc = MfccConfig(**mfcc_table)

    kinds = tuple(classifiers.pop("kinds", CLASSIFIER_KINDS))
    params = {}
    for kind, table in classifiers.items():
        if kind not in CLASSIFIER_KINDS:
            raise DataError(f"{path}: [classifiers.{kind}] is not a known kind")
        if not isinstance(table, dict):
            raise DataError(f"{path}: [classifiers.{kind}] must be a table")
        params[kind] = dict(table)
    if "linear-svm" not in params:
        params["linear-svm"] = {"c_grid": list(DEFAULT_LINEAR_C_GRID)}

    columns = motion.get("columns", list(MBH_COLUMNS))
    if len(columns) != 2:
        raise DataError(f"{path}: motion.columns must be [first, last]")

    subset = tuple(
        expression_from_cli(e) for e in mode.get("expression_subset", [])
    ) or EXPRESSIONS

    embedding_limit = textsec.get("embedding_limit")
    if embedding_limit in (0, None):
        embedding_limit = None

    fold_plan = evaluation.get("fold_plan")

    return PipelineConfig(
        manifest=resolve(data["manifest"]),
        embeddings=resolve(data["embeddings"]),
        output_dir=resolve(output.get("directory", "results")),
        cache_dir=resolve(output["cache_dir"]) if output.get("cache_dir") else None,
        motion_columns=(int(columns[0]), int(columns[1])),
        frame_column=int(motion.get("frame_column", FRAME_COLUMN)),
        motion_components=int(motion.get("n_components", 64)),
        audio_components=int(audio.get("n_components", 64)),
        text_components=int(textsec.get("n_components", 16)),
        motion_pca=int(motion.get("pca", 0)),
        audio_pca=int(audio.get("pca", 0)),
        text_pca=int(textsec.get("pca", 0)),
        embedding_limit=int(embedding_limit) if embedding_limit else None,
        mfcc=mfcc,
        fps=float(clips.get("fps", 15.0)),
        clip_seconds=float(clips.get("clip_seconds", 4.0)),
        normalize=bool(encoding.get("normalize", False)),
        power_alpha=float(encoding.get("power_alpha", 0.5)),
        em_max_iterations=int(gmm.get("max_iterations", 200)),
        em_tolerance=float(gmm.get("tolerance", 1e-5)),
        em_variance_floor_factor=float(gmm.get("variance_floor_factor", 1e-4)),
        folds=int(evaluation.get("folds", 10)),
        inner_folds=int(evaluation.get("inner_folds", 3)),
        seed=int(evaluation.get("seed", 0)),
        weight_step=float(evaluation.get("weight_step", 0.05)),
        per_fold_averaging=bool(evaluation.get("per_fold_averaging", False)),
        max_gmm_samples=int(evaluation.get("max_gmm_samples", 100_000)),
        fold_plan=resolve(fold_plan) if fold_plan else None,
        workers=int(evaluation.get("workers", 1)),
        expressions_mode=str(mode.get("expressions", "predicted")),
        modalities=tuple(mode.get("modalities", MODALITIES)),
        expression_subset=subset,
        broadcast_video_expression_labels=bool(
            mode.get("broadcast_video_expression_labels", False)
        ),
        expression_probabilities=bool(mode.get("expression_probabilities", False)),
        classifier_kinds=kinds,
        classifier_params=params,
    )
