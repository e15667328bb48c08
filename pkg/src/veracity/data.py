"""Dataset manifest, per-video records, and loaders for precomputed artifacts.

Input formats: JSON-lines manifest, whitespace-delimited trajectory descriptor
text, PCM WAV audio, UTF-8 transcripts.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

# Column layout of the standard dense-trajectory text output (436 columns per
# line): 10 metadata columns (frame number, mean/var of position, length,
# scale, x, y, t), then the trajectory shape (2 coords x 15 frames), then the
# descriptor blocks. Offsets are inclusive; verified by summing the documented
# block sizes (8 or 9 bins x 2x2x3 cells).
FRAME_COLUMN = 0
TRAJECTORY_COLUMNS = (10, 39)
HOG_COLUMNS = (40, 135)
HOF_COLUMNS = (136, 243)
MBH_COLUMNS = (244, 435)  # MBHx 244..339 + MBHy 340..435
TRAJECTORY_FILE_WIDTH = 436

DESCRIPTOR_BLOCKS = {
    "trajectory": TRAJECTORY_COLUMNS,
    "hog": HOG_COLUMNS,
    "hof": HOF_COLUMNS,
    "mbh": MBH_COLUMNS,
}

EXPRESSION_COUNT = 5


@dataclass
class DescriptorBag:
    """Variable-length set of fixed-dimension local feature vectors.

    rows is a (T, dim) float64 array; timestamps, when present, holds one
    frame index per row.
    """

    dim: int
    rows: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DataError(f"descriptor rows must be 2-D, got shape {self.rows.shape}")
        if self.rows.shape[0] < 1:
            raise DataError("descriptor bag must contain at least one row")
        if self.rows.shape[1] != self.dim:
            raise DataError(
                f"descriptor rows have {self.rows.shape[1]} columns, expected dim={self.dim}"
            )
        if not np.isfinite(self.rows).all():
            bad = np.argwhere(~np.isfinite(self.rows))[0]
            raise DataError(f"non-finite descriptor value at row {bad[0]}, column {bad[1]}")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
            if self.timestamps.shape != (self.rows.shape[0],):
                raise DataError("timestamps must align one-to-one with rows")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DescriptorBag):
            return NotImplemented
        if self.dim != other.dim or not np.array_equal(self.rows, other.rows):
            return False
        if (self.timestamps is None) != (other.timestamps is None):
            return False
        return self.timestamps is None or np.array_equal(self.timestamps, other.timestamps)


@dataclass(frozen=True)
class VideoRecord:
    """One trial sample: identity, binary label, and per-modality artifact paths."""

    video_id: str
    identity_id: str
    label: int
    motion_path: str
    audio_path: str
    transcript_path: str
    clip_expression_labels: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if self.clip_expression_labels is not None:
            for i, bits in enumerate(self.clip_expression_labels):
                if len(bits) != EXPRESSION_COUNT or any(b not in (0, 1) for b in bits):
                    raise DataError(
                        f"clip_expression_labels[{i}] must be {EXPRESSION_COUNT} bits in {{0,1}}"
                    )

    def to_json_dict(self) -> dict:
        out = {
            "video_id": self.video_id,
            "identity_id": self.identity_id,
            "label": self.label,
            "motion_path": self.motion_path,
            "audio_path": self.audio_path,
            "transcript_path": self.transcript_path,
        }
        if self.clip_expression_labels is not None:
            out["clip_expression_labels"] = [list(bits) for bits in self.clip_expression_labels]
        return out


@dataclass
class DatasetManifest:
    """Validated collection of video records with class bookkeeping."""

    records: list[VideoRecord]
    class_counts: dict[int, int]
    root: Path = field(default_factory=Path, compare=False)

    @property
    def identities(self) -> dict[str, list[VideoRecord]]:
        by_id: dict[str, list[VideoRecord]] = {}
        for rec in self.records:
            by_id.setdefault(rec.identity_id, []).append(rec)
        return by_id

    def record(self, video_id: str) -> VideoRecord:
        for rec in self.records:
            if rec.video_id == video_id:
                return rec
        raise KeyError(video_id)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p


_REQUIRED_FIELDS = ("video_id", "identity_id", "label", "motion_path", "audio_path", "transcript_path")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a JSON-lines manifest (one video record per line).

    Relative artifact paths are interpreted against the manifest's directory
    via ``DatasetManifest.resolve``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest file not found: {path}")
    records: list[VideoRecord] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            for name in _REQUIRED_FIELDS:
                if name not in raw:
                    raise DataError(f"{path}:{lineno}: record missing required field {name!r}")
            label = raw["label"]
            if not isinstance(label, int) or isinstance(label, bool) or label not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            clip_labels = raw.get("clip_expression_labels")
            if clip_labels is not None:
                clip_labels = tuple(tuple(int(b) for b in bits) for bits in clip_labels)
            try:
                rec = VideoRecord(
                    video_id=str(raw["video_id"]),
                    identity_id=str(raw["identity_id"]),
                    label=label,
                    motion_path=str(raw["motion_path"]),
                    audio_path=str(raw["audio_path"]),
                    transcript_path=str(raw["transcript_path"]),
                    clip_expression_labels=clip_labels,
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if rec.video_id in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate video_id {rec.video_id!r}"
                    f" (first seen on line {seen[rec.video_id]})"
                )
            seen[rec.video_id] = lineno
            records.append(rec)
    if not records:
        raise DataError(f"{path}: manifest contains no records")
    counts = {0: 0, 1: 0}
    for rec in records:
        counts[rec.label] += 1
    if counts[0] == 0 or counts[1] == 0:
        raise DataError(f"{path}: both classes must be represented, got counts {counts}")
    return DatasetManifest(records=records, class_counts=counts, root=path.parent)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest as JSON-lines; loading it back yields an equal manifest."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


def load_trajectory_descriptors(
    path: str | Path,
    column_range: tuple[int, int] = MBH_COLUMNS,
    frame_column: int | None = FRAME_COLUMN,
) -> DescriptorBag:
    """Load a dense-trajectory text file, selecting one descriptor block.

    column_range is an inclusive (first, last) pair; frame_column, when not
    None, supplies per-row timestamps for clip segmentation.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"descriptor file not found: {path}")
    lo, hi = column_range
    if lo < 0 or hi < lo:
        raise DataError(f"invalid column range {column_range}")
    try:
        data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError:
        _diagnose_descriptor_file(path)
        raise  # unreachable: the diagnostic pass raises with line/column detail
    if data.size == 0:
        raise DataError(f"{path}: descriptor file is empty")
    width = data.shape[1]
    if hi >= width:
        raise DataError(
            f"{path}: column range {column_range} exceeds file width {width}"
        )
    if not np.isfinite(data).all():
        row, col = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}:{row + 1}: non-finite value in column {col}")
    timestamps = None
    if frame_column is not None:
        if frame_column >= width:
            raise DataError(f"{path}: frame column {frame_column} exceeds file width {width}")
        timestamps = data[:, frame_column].astype(np.int64)
    block = data[:, lo : hi + 1]
    return DescriptorBag(dim=hi - lo + 1, rows=block, timestamps=timestamps)


def _diagnose_descriptor_file(path: Path) -> None:
    """Slow pass over a file np.loadtxt rejected; raises with line/column detail."""
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise DataError(
                    f"{path}:{lineno}: ragged line has {len(tokens)} columns, expected {width}"
                )
            for col, tok in enumerate(tokens):
                try:
                    float(tok)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric token {tok!r} in column {col}"
                    ) from None
    raise DataError(f"{path}: unparseable descriptor file")


@dataclass(frozen=True)
class PcmSignal:
    """Mono PCM audio with samples scaled to [-1, 1]."""

    sample_rate: int
    samples: np.ndarray

    def __len__(self) -> int:
        return self.samples.shape[0]


def load_audio(path: str | Path) -> PcmSignal:
    """Read an uncompressed PCM WAV file (16-bit int or 32-bit float).

    Stereo channels are averaged to mono; 16-bit samples are scaled by
    1/32768 so -32768 maps to -1.0 exactly.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"audio file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise DataError(f"{path}: not a RIFF/WAVE file (truncated or wrong header)")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise DataError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise DataError(f"{path}: data chunk truncated")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise DataError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise DataError(f"{path}: unsupported channel count {channels}")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise DataError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits}-bit);"
            " only 16-bit PCM and 32-bit float are accepted"
        )
    if channels == 2:
        if raw.shape[0] % 2:
            raise DataError(f"{path}: stereo data has odd sample count")
        raw = raw.reshape(-1, 2).mean(axis=1)
    if not np.isfinite(raw).all():
        raise DataError(f"{path}: audio contains non-finite samples")
    return PcmSignal(sample_rate=sample_rate, samples=raw)


def load_transcript(path: str | Path) -> str:
    """Read a UTF-8 transcript file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"transcript file not found: {path}")
    return path.read_text(encoding="utf-8")
