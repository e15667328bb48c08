"""Diagonal-covariance Gaussian mixtures fit by expectation-maximization.

These mixtures act as the feature dictionaries behind Fisher-vector
encoding. Training is deterministic for a fixed (samples, K, config) triple:
k-means initialization and any reseeding draw from a generator seeded by the
config.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .data import DescriptorBag
from .errors import DataError

_ABS_FLOOR = 1e-12  # keeps log-variances finite even on constant dimensions


@dataclass(frozen=True)
class EmConfig:
    seed: int = 0
    max_iterations: int = 200
    tolerance: float = 1e-5
    variance_floor_factor: float = 1e-4
    kmeans_iterations: int = 10

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise DataError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.tolerance <= 0:
            raise DataError(f"tolerance must be > 0, got {self.tolerance}")


@dataclass
class GaussianMixture:
    """Mixture weights, means and per-dimension variances (K components, D dims)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        k = self.weights.shape[0]
        if self.weights.ndim != 1 or self.means.ndim != 2 or self.variances.ndim != 2:
            raise DataError("weights must be 1-D, means and variances 2-D")
        if self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise DataError("component counts of weights, means, variances disagree")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise DataError(f"mixture weights sum to {self.weights.sum()!r}, expected 1")
        if (self.weights <= 0).any():
            raise DataError("every mixture weight must be strictly positive")
        if (self.variances <= 0).any():
            raise DataError("variances must be strictly positive")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class FitResult:
    model: GaussianMixture
    log_likelihoods: list[float]
    converged: bool


def _as_matrix(samples: DescriptorBag | np.ndarray) -> np.ndarray:
    x = samples.rows if isinstance(samples, DescriptorBag) else np.asarray(
        samples, dtype=np.float64
    )
    if x.ndim != 2:
        raise DataError(f"samples must be a 2-D array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("samples contain non-finite values")
    return x


def _log_densities(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Per-sample, per-component log N(x | mean_k, diag(var_k)); shape (T, K)."""
    inv = 1.0 / variances
    # ||x - mu||^2_var expanded to avoid a T x K x D temporary
    quad = (
        (x * x) @ inv.T
        - 2.0 * (x @ (means * inv).T)
        + np.sum(means * means * inv, axis=1)
    )
    log_det = np.sum(np.log(variances), axis=1)
    d = x.shape[1]
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + quad)


def _weighted_log_prob(model: GaussianMixture, x: np.ndarray) -> np.ndarray:
    return _log_densities(x, model.means, model.variances) + np.log(model.weights)


def log_likelihood(model: GaussianMixture, samples: DescriptorBag | np.ndarray) -> float:
    """Mean per-sample log density under the mixture."""
    x = _as_matrix(samples)
    if x.shape[1] != model.dim:
        raise DataError(f"samples have dimension {x.shape[1]}, model expects {model.dim}")
    return float(np.mean(logsumexp(_weighted_log_prob(model, x), axis=1)))


def posteriors(model: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Component responsibilities, computed in the log domain.

    A single D-vector yields a length-K probability vector; a (T, D) matrix
    yields a (T, K) matrix whose rows each sum to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise DataError(f"input has shape {x.shape}, model expects dimension {model.dim}")
    if not np.isfinite(x).all():
        raise DataError("input contains non-finite values")
    lwp = _weighted_log_prob(model, x)
    lwp -= logsumexp(lwp, axis=1, keepdims=True)
    out = np.exp(lwp)
    return out[0] if single else out


def _kmeans(x: np.ndarray, k: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd's algorithm returning per-sample cluster assignments."""
    t = x.shape[0]
    centers = x[rng.choice(t, size=k, replace=False)].copy()
    assign = np.zeros(t, dtype=np.int64)
    for _ in range(iterations):
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * (x @ centers.T)
            + np.sum(centers * centers, axis=1)
        )
        assign = np.argmin(d2, axis=1)
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                centers[j] = x[rng.integers(t)]  # empty cluster: reseed to a data row
    return assign


def fit_gmm(
    samples: DescriptorBag | np.ndarray, k: int, config: EmConfig = EmConfig()
) -> FitResult:
    """Fit a K-component diagonal mixture: seeded k-means start, then EM.

    The trace holds the mean log-likelihood after every E-step; EM guarantees
    it is non-decreasing up to the variance floor's interference. Raises
    DataError when the data cannot support the mixture: fewer samples than
    components, or degenerate data that collapses a component onto the
    variance floor in every dimension (e.g. all rows identical).
    """
    x = _as_matrix(samples)
    t, d = x.shape
    if k < 1:
        raise DataError(f"component count must be >= 1, got {k}")
    if t < k:
        raise DataError(f"need at least {k} samples to fit {k} components, got {t}")
    floor = np.maximum(config.variance_floor_factor * np.var(x, axis=0), _ABS_FLOOR)

    rng = np.random.default_rng(config.seed)
    assign = _kmeans(x, k, config.kmeans_iterations, rng)
    weights = np.zeros(k)
    means = np.zeros((k, d))
    variances = np.zeros((k, d))
    global_var = np.maximum(np.var(x, axis=0), floor)
    for j in range(k):
        members = x[assign == j]
        weights[j] = max(members.shape[0], 1)
        if members.shape[0] == 0:
            means[j] = x[rng.integers(t)]
            variances[j] = global_var
        else:
            means[j] = members.mean(axis=0)
            variances[j] = (
                np.maximum(members.var(axis=0), floor) if members.shape[0] > 1 else global_var
            )
    weights /= weights.sum()

    trace: list[float] = []
    converged = False
    model = GaussianMixture(weights=weights, means=means, variances=variances)
    for _ in range(config.max_iterations):
        lwp = _weighted_log_prob(model, x)
        log_norm = logsumexp(lwp, axis=1)
        trace.append(float(np.mean(log_norm)))
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= config.tolerance * abs(trace[-2]):
            converged = True
            break
        resp = np.exp(lwp - log_norm[:, None])
        nk = resp.sum(axis=0)
        if (nk <= 0).any():
            raise DataError(
                "degenerate fit: a component received zero total responsibility"
            )
        weights = nk / t
        means = (resp.T @ x) / nk[:, None]
        second = (resp.T @ (x * x)) / nk[:, None]
        variances = np.maximum(second - means * means, floor)
        model = GaussianMixture(weights=weights, means=means, variances=variances)

    if (model.variances <= floor).all(axis=1).any():
        raise DataError(
            "degenerate fit: a component's variance hit the floor in every dimension"
        )
    return FitResult(model=model, log_likelihoods=trace, converged=converged)


_FORMAT = "diag-gmm"
_VERSION = 1


def gmm_to_dict(model: GaussianMixture) -> dict:
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "n_components": model.n_components,
        "dim": model.dim,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }


def gmm_from_dict(doc: dict) -> GaussianMixture:
    if doc.get("format") != _FORMAT:
        raise DataError(f"not a mixture document (format={doc.get('format')!r})")
    if doc.get("version") != _VERSION:
        raise DataError(f"unsupported mixture document version {doc.get('version')!r}")
    model = GaussianMixture(
        weights=np.array(doc["weights"], dtype=np.float64),
        means=np.array(doc["means"], dtype=np.float64),
        variances=np.array(doc["variances"], dtype=np.float64),
    )
    if model.n_components != doc["n_components"] or model.dim != doc["dim"]:
        raise DataError("mixture document header disagrees with array shapes")
    return model


def save_gmm(model: GaussianMixture, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gmm_to_dict(model)), encoding="utf-8")


def load_gmm(path: str | Path) -> GaussianMixture:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"mixture file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    return gmm_from_dict(doc)


def gmm_id(model: GaussianMixture) -> str:
    """Short content hash identifying a mixture; embedded in encoded vectors."""
    blob = json.dumps(gmm_to_dict(model), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
