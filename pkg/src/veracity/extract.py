"""Per-video feature extraction with a content-addressed cache.

Cache entries are keyed by a hash of the input file bytes plus the
settings that affect the derived features, so editing either the data or
the relevant config section invalidates exactly the stale entries and a
repeated `extract` run is a no-op.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .data import (
    DatasetManifest,
    DescriptorBag,
    VideoRecord,
    load_audio,
    load_trajectory_descriptors,
    load_transcript,
)
from .errors import DataError
from .mfcc import extract_mfcc
from .text import EmbeddingTable, embed_transcript, load_embeddings, tokenize

log = logging.getLogger("veracity.extract")

CACHE_ENV_VAR = "VERACITY_CACHE_DIR"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def cache_key(content_hash: str, settings: dict) -> str:
    blob = json.dumps({"content": content_hash, "settings": settings}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:32]


def resolve_cache_dir(config: PipelineConfig) -> Path:
    override = os.environ.get(CACHE_ENV_VAR)
    if override:
        return Path(override)
    if config.cache_dir is not None:
        return config.cache_dir
    return config.manifest.parent / ".veracity-cache"


class FeatureCache:
    """Flat directory of npz files addressed by kind and key."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, kind: str, key: str) -> Path:
        return self.directory / f"{kind}-{key}.npz"

    def load(self, kind: str, key: str) -> dict[str, np.ndarray] | None:
        path = self._path(kind, key)
        if not path.is_file():
            self.misses += 1
            return None
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
        self.hits += 1
        return arrays

    def store(self, kind: str, key: str, arrays: dict[str, np.ndarray]) -> Path:
        path = self._path(kind, key)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(path)
        return path


def _motion_settings(config: PipelineConfig) -> dict:
    return {
        "columns": list(config.motion_columns),
        "frame_column": config.frame_column,
    }


def _audio_settings(config: PipelineConfig) -> dict:
    m = config.mfcc
    return {
        "frame_length": m.frame_length,
        "hop": m.hop,
        "filter_count": m.filter_count,
        "coefficient_count": m.coefficient_count,
        "fft_size": m.fft_size,
        "low_freq": m.low_freq,
        "high_freq": m.high_freq,
        "log_floor": m.log_floor,
        "pre_emphasis": m.pre_emphasis,
        "append_deltas": m.append_deltas,
    }


def load_motion_features(
    path: Path, config: PipelineConfig, cache: FeatureCache | None = None
) -> DescriptorBag:
    if cache is not None:
        key = cache_key(file_sha256(path), _motion_settings(config))
        cached = cache.load("motion", key)
        if cached is not None:
            return DescriptorBag(
                dim=int(cached["rows"].shape[1]),
                rows=cached["rows"],
                timestamps=cached["timestamps"],
            )
    bag = load_trajectory_descriptors(
        path, column_range=config.motion_columns, frame_column=config.frame_column
    )
    if cache is not None:
        cache.store("motion", key, {"rows": bag.rows, "timestamps": bag.timestamps})
    return bag


def load_audio_features(
    path: Path, config: PipelineConfig, cache: FeatureCache | None = None
) -> DescriptorBag:
    if cache is not None:
        key = cache_key(file_sha256(path), _audio_settings(config))
        cached = cache.load("audio", key)
        if cached is not None:
            return DescriptorBag(dim=int(cached["rows"].shape[1]), rows=cached["rows"])
    signal = load_audio(path)
    bag = extract_mfcc(signal, config.mfcc)
    if cache is not None:
        cache.store("audio", key, {"rows": bag.rows})
    return bag


def load_transcript_features(
    path: Path,
    table: EmbeddingTable,
    table_hash: str,
    config: PipelineConfig,
    cache: FeatureCache | None = None,
) -> tuple[DescriptorBag, int]:
    settings = {"embeddings": table_hash, "limit": config.embedding_limit}
    if cache is not None:
        key = cache_key(file_sha256(path), settings)
        cached = cache.load("transcript", key)
        if cached is not None:
            bag = DescriptorBag(dim=int(cached["rows"].shape[1]), rows=cached["rows"])
            return bag, int(cached["oov"][0])
    tokens = tokenize(load_transcript(path))
    bag, oov = embed_transcript(table, tokens)
    if cache is not None:
        cache.store("transcript", key, {"rows": bag.rows, "oov": np.array([oov])})
    return bag, oov


@dataclass
class VideoFeatures:
    """Raw per-modality descriptor bags for one video."""

    video_id: str
    motion: DescriptorBag | None = None
    audio: DescriptorBag | None = None
    transcript: DescriptorBag | None = None
    transcript_oov: int = 0


def extract_video(
    record: VideoRecord,
    manifest: DatasetManifest,
    config: PipelineConfig,
    table: EmbeddingTable | None,
    table_hash: str,
    cache: FeatureCache | None,
) -> VideoFeatures:
    features = VideoFeatures(video_id=record.video_id)
    wanted = set(config.modalities)
    # expression scoring reuses the motion descriptors, clip by clip
    if {"motion", "expression"} & wanted:
        features.motion = load_motion_features(
            manifest.resolve(record.motion_path), config, cache
        )
    if "audio" in wanted:
        features.audio = load_audio_features(
            manifest.resolve(record.audio_path), config, cache
        )
    if "transcript" in wanted:
        if table is None:
            raise DataError("transcript modality requested without an embedding table")
        features.transcript, features.transcript_oov = load_transcript_features(
            manifest.resolve(record.transcript_path), table, table_hash, config, cache
        )
    return features


def extract_all(
    manifest: DatasetManifest,
    config: PipelineConfig,
    cache: FeatureCache | None = None,
) -> dict[str, VideoFeatures]:
    """Extract every requested modality for every video, cache-aware."""
    table = None
    table_hash = ""
    if "transcript" in config.modalities:
        table_hash = file_sha256(config.embeddings)
        table = load_embeddings(config.embeddings, limit=config.embedding_limit)
    out: dict[str, VideoFeatures] = {}
    for record in manifest.records:
        try:
            out[record.video_id] = extract_video(
                record, manifest, config, table, table_hash, cache
            )
        except DataError as exc:
            raise DataError(f"video {record.video_id!r}: {exc}") from exc
        log.debug("extracted features for %s", record.video_id)
    if cache is not None:
        log.info(
            "feature cache: %d hit(s), %d miss(es) under %s",
            cache.hits,
            cache.misses,
            cache.directory,
        )
    return out
