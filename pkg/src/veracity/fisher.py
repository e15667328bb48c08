"""Fisher-vector encoding of descriptor bags against a diagonal GMM.

The encoding stacks, per component, the weight-normalized first- and
second-order residual statistics. Layout: all mean blocks first, then all
deviation blocks, component-major — component i occupies values[i*D:(i+1)*D]
and values[K*D + i*D : K*D + (i+1)*D] — total length 2*D*K.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DescriptorBag
from .errors import DataError
from .gmm import GaussianMixture, posteriors
from .gmm import gmm_id as _gmm_content_id

_MAGIC = 0x4656
_VERSION = 1
_FLAG_NORMALIZED = 0x01
_FLAG_BAG = 0x02


@dataclass
class FisherVector:
    values: np.ndarray
    gmm_id: str
    dim: int
    n_components: int
    normalized: bool = False

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = 2 * self.dim * self.n_components
        if self.values.shape != (expected,):
            raise DataError(
                f"encoded vector has shape {self.values.shape}, expected ({expected},)"
            )
        if not np.isfinite(self.values).all():
            raise DataError("encoded vector contains non-finite values")


@dataclass
class FisherVectorBag:
    """Several encodings against one mixture, stacked row-wise (e.g. per clip)."""

    values: np.ndarray
    gmm_id: str
    dim: int
    n_components: int
    normalized: bool = False

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = 2 * self.dim * self.n_components
        if self.values.ndim != 2 or self.values.shape[1] != expected:
            raise DataError(f"bag must be (n, {expected}), got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DataError("bag contains non-finite values")

    def __len__(self) -> int:
        return self.values.shape[0]

    def vector(self, i: int) -> FisherVector:
        return FisherVector(
            values=self.values[i],
            gmm_id=self.gmm_id,
            dim=self.dim,
            n_components=self.n_components,
            normalized=self.normalized,
        )


def encoded_length(model: GaussianMixture) -> int:
    return 2 * model.dim * model.n_components


def encode_fisher(model: GaussianMixture, bag: DescriptorBag | np.ndarray) -> FisherVector:
    """Encode a descriptor bag as the mixture's gradient statistics.

    For component i with weight w_i, mean mu_i and deviation sigma_i, the
    mean block is sum_t gamma_t(i) (x_t - mu_i) / sigma_i scaled by
    1 / (T sqrt(w_i)); the deviation block replaces the residual with
    ((x_t - mu_i)^2 / sigma_i^2 - 1) and the scale with 1 / (T sqrt(2 w_i)).
    The result carries the unnormalized flag.
    """
    x = bag.rows if isinstance(bag, DescriptorBag) else np.asarray(bag, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError(f"descriptors must be a non-empty 2-D array, got shape {x.shape}")
    if x.shape[1] != model.dim:
        raise DataError(
            f"descriptor dimension {x.shape[1]} does not match mixture dimension {model.dim}"
        )
    t = x.shape[0]
    resp = posteriors(model, x)
    s0 = resp.sum(axis=0)
    s1 = resp.T @ x
    s2 = resp.T @ (x * x)

    mu = model.means
    var = model.variances
    sigma = np.sqrt(var)
    sqrt_w = np.sqrt(model.weights)[:, None]

    g_mu = (s1 - s0[:, None] * mu) / (t * sqrt_w * sigma)
    g_sigma = (s2 - 2.0 * mu * s1 + s0[:, None] * (mu * mu) - s0[:, None] * var) / (
        t * np.sqrt(2.0) * sqrt_w * var
    )
    values = np.concatenate([g_mu.ravel(), g_sigma.ravel()])
    return FisherVector(
        values=values,
        gmm_id=_gmm_content_id(model),
        dim=model.dim,
        n_components=model.n_components,
    )


def normalize_fv(fv: FisherVector, power_alpha: float = 0.5) -> FisherVector:
    """Signed power normalization followed by L2 scaling.

    Each entry z becomes sign(z) * |z| ** power_alpha, then the whole vector
    is scaled to unit L2 norm. An all-zero vector passes through unchanged.
    Re-normalizing an already-normalized vector would change the values
    again, so it is rejected.
    """
    if not 0.0 < power_alpha <= 1.0:
        raise DataError(f"power_alpha must be in (0, 1], got {power_alpha}")
    if fv.normalized:
        raise DataError("vector is already normalized")
    z = np.sign(fv.values) * np.abs(fv.values) ** power_alpha
    norm = np.linalg.norm(z)
    if norm > 0:
        z = z / norm
    return FisherVector(
        values=z,
        gmm_id=fv.gmm_id,
        dim=fv.dim,
        n_components=fv.n_components,
        normalized=True,
    )


def _pack_header(dim: int, n_components: int, normalized: bool, is_bag: bool, gmm_id: str) -> bytes:
    flags = (_FLAG_NORMALIZED if normalized else 0) | (_FLAG_BAG if is_bag else 0)
    ident = gmm_id.encode("utf-8")
    if len(ident) > 0xFFFF:
        raise DataError("gmm_id too long to serialize")
    return (
        struct.pack("<HBBHH", _MAGIC, _VERSION, flags, dim, n_components)
        + struct.pack("<H", len(ident))
        + ident
    )


def save_fv(fv: FisherVector, path: str | Path) -> None:
    blob = _pack_header(fv.dim, fv.n_components, fv.normalized, False, fv.gmm_id)
    Path(path).write_bytes(blob + fv.values.astype("<f8").tobytes())


def save_fv_bag(bag: FisherVectorBag, path: str | Path) -> None:
    blob = _pack_header(bag.dim, bag.n_components, bag.normalized, True, bag.gmm_id)
    Path(path).write_bytes(blob + bag.values.astype("<f8").tobytes())


def _read_header(blob: bytes, path: Path) -> tuple[int, int, bool, bool, str, int]:
    if len(blob) < 10:
        raise DataError(f"{path}: truncated header")
    magic, version, flags, dim, k = struct.unpack_from("<HBBHH", blob, 0)
    if magic != _MAGIC:
        raise DataError(f"{path}: bad magic 0x{magic:04x}, expected 0x{_MAGIC:04x}")
    if version != _VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    (id_len,) = struct.unpack_from("<H", blob, 8)
    if len(blob) < 10 + id_len:
        raise DataError(f"{path}: truncated gmm_id")
    ident = blob[10 : 10 + id_len].decode("utf-8")
    return dim, k, bool(flags & _FLAG_NORMALIZED), bool(flags & _FLAG_BAG), ident, 10 + id_len


def load_fv(path: str | Path) -> FisherVector:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"vector file not found: {path}")
    blob = path.read_bytes()
    dim, k, normalized, is_bag, ident, offset = _read_header(blob, path)
    if is_bag:
        raise DataError(f"{path}: file holds a bag, use load_fv_bag")
    expected = 2 * dim * k
    payload = np.frombuffer(blob, dtype="<f8", offset=offset)
    if payload.shape[0] != expected:
        raise DataError(f"{path}: payload has {payload.shape[0]} values, expected {expected}")
    return FisherVector(
        values=payload.copy(), gmm_id=ident, dim=dim, n_components=k, normalized=normalized
    )


def load_fv_bag(path: str | Path) -> FisherVectorBag:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"vector file not found: {path}")
    blob = path.read_bytes()
    dim, k, normalized, is_bag, ident, offset = _read_header(blob, path)
    if not is_bag:
        raise DataError(f"{path}: file holds a single vector, use load_fv")
    expected = 2 * dim * k
    payload = np.frombuffer(blob, dtype="<f8", offset=offset)
    if expected == 0 or payload.shape[0] % expected:
        raise DataError(
            f"{path}: payload of {payload.shape[0]} values is not a multiple of {expected}"
        )
    return FisherVectorBag(
        values=payload.copy().reshape(-1, expected),
        gmm_id=ident,
        dim=dim,
        n_components=k,
        normalized=normalized,
    )


def export_csv(item: FisherVector | FisherVectorBag, path: str | Path) -> None:
    """Plain-text dump for inspection: one row per vector, %.17g columns."""
    rows = item.values[None, :] if isinstance(item, FisherVector) else item.values
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
