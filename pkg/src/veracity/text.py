"""Transcript tokenization and pretrained word-embedding lookup.

Transcripts become bags of per-token embedding rows for encoding; tokens
outside the table's vocabulary are skipped and counted.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DescriptorBag
from .errors import DataError

# Unicode alphanumeric runs; underscore counts as punctuation, so "didn't"
# splits into "didn" and "t"
_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop empty tokens."""
    return _TOKEN.findall(text.lower())


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_embeddings(path: str | Path, limit: int | None = None) -> EmbeddingTable:
    """Parse a text embedding file: one `token v1 ... vd` line per entry.

    The dimension is fixed by the first line; any later line of a different
    width fails with its line number. Tokens are lowercased; duplicates keep
    the first occurrence. limit caps the number of entries read.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embedding file not found: {path}")
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            token, raw = parts[0].lower(), parts[1:]
            if dim is None:
                if len(raw) == 0:
                    raise DataError(f"{path}:{lineno}: entry has no vector values")
                dim = len(raw)
            elif len(raw) != dim:
                raise DataError(
                    f"{path}:{lineno}: entry has {len(raw)} values, expected {dim}"
                )
            try:
                vec = np.array(raw, dtype=np.float64)
            except ValueError:
                bad = next(i for i, t in enumerate(raw) if not _is_float(t))
                raise DataError(
                    f"{path}:{lineno}: non-numeric value {raw[bad]!r} at position {bad}"
                ) from None
            if not np.isfinite(vec).all():
                raise DataError(f"{path}:{lineno}: non-finite embedding value")
            if token not in entries:
                entries[token] = vec
                if limit is not None and len(entries) >= limit:
                    break
    if dim is None or not entries:
        raise DataError(f"{path}: embedding file contains no entries")
    return EmbeddingTable(dim=dim, entries=entries)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def embed_transcript(
    table: EmbeddingTable, tokens: Sequence[str]
) -> tuple[DescriptorBag, int]:
    """Stack embeddings of in-vocabulary tokens, in order.

    Returns the bag and the out-of-vocabulary count (bag length + OOV count
    equals the token count). Raises DataError when no token is covered, so
    callers can exclude or flag the video explicitly.
    """
    rows = []
    oov = 0
    for token in tokens:
        vec = table.entries.get(token)
        if vec is None:
            oov += 1
        else:
            rows.append(vec)
    if not rows:
        raise DataError(
            f"all {oov} tokens are out of vocabulary for the {len(table)}-entry table"
        )
    return DescriptorBag(dim=table.dim, rows=np.stack(rows)), oov
