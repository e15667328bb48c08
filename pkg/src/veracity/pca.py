"""Optional linear descriptor compression, fit per training fold.

Off by default; when a modality configures a target dimension, its
descriptors are projected before dictionary fitting and encoding, with the
projection learned from the same training rows as the dictionary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (m, D), rows orthonormal, leading variance first


def fit_pca(rows: np.ndarray, n_components: int) -> PcaModel:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DataError(f"expected a 2-D sample matrix, got shape {rows.shape}")
    t, d = rows.shape
    if not 1 <= n_components <= min(t, d):
        raise DataError(
            f"n_components must be in [1, {min(t, d)}] for {t}x{d} data, got {n_components}"
        )
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / t
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:n_components]
    components = eigenvectors[:, order].T
    # sign convention: largest-magnitude entry of each axis is positive,
    # so the projection is reproducible across runs
    flip = components[np.arange(n_components), np.argmax(np.abs(components), axis=1)] < 0
    components[flip] *= -1.0
    return PcaModel(mean=mean, components=components)


def transform(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != model.mean.shape[0]:
        raise DataError(
            f"projection expects dim {model.mean.shape[0]}, got {rows.shape[-1]}"
        )
    return (rows - model.mean) @ model.components.T
