"""Mel-frequency cepstral coefficients from raw PCM.

Pipeline per frame: pre-emphasis, Hamming window, periodogram via an
in-house radix-2 FFT (batched across frames), triangular mel filterbank,
floored log, orthonormal type-II DCT truncated to the leading coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .data import DescriptorBag, PcmSignal
from .errors import DataError


@dataclass(frozen=True)
class MfccConfig:
    frame_length: float = 0.025
    hop: float = 0.010
    filter_count: int = 26
    coefficient_count: int = 13
    fft_size: int = 512
    low_freq: float = 0.0
    high_freq: float | None = None  # None means Nyquist
    log_floor: float = 1e-10
    pre_emphasis: float = 0.97
    append_deltas: bool = False  # adds first and second differences, dim x3

    def __post_init__(self) -> None:
        if not self.frame_length > self.hop > 0:
            raise DataError(
                f"need frame_length > hop > 0, got {self.frame_length}, {self.hop}"
            )
        if not 0 < self.coefficient_count <= self.filter_count:
            raise DataError("need 0 < coefficient_count <= filter_count")
        if self.log_floor <= 0:
            raise DataError("log_floor must be positive")
        if not 0 <= self.pre_emphasis < 1:
            raise DataError(f"pre_emphasis must be in [0, 1), got {self.pre_emphasis}")

    def frame_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_length * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop * sample_rate))

    def effective_fft_size(self, sample_rate: int) -> int:
        """fft_size rounded up to the next power of two covering one frame."""
        needed = max(self.fft_size, self.frame_samples(sample_rate), 2)
        return 1 << (needed - 1).bit_length()


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def rfft_radix2(frames: np.ndarray, fft_size: int) -> np.ndarray:
    """FFT of real rows, returning the first fft_size/2 + 1 bins.

    Iterative Cooley-Tukey over the last axis; rows shorter than fft_size are
    zero-padded, longer rows are rejected.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise DataError(f"fft size must be a power of two, got {fft_size}")
    if frames.shape[1] > fft_size:
        raise DataError(f"frame length {frames.shape[1]} exceeds fft size {fft_size}")
    n_rows = frames.shape[0]
    a = np.zeros((n_rows, fft_size), dtype=np.complex128)
    a[:, : frames.shape[1]] = frames
    a = a[:, bit_reverse_indices(fft_size)]
    half = 1
    while half < fft_size:
        step = half * 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / step)
        blocks = a.reshape(n_rows, fft_size // step, step)
        even = blocks[:, :, :half]
        odd = blocks[:, :, half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=2).reshape(n_rows, fft_size)
        half = step
    return a[:, : fft_size // 2 + 1]


def pre_emphasize(samples: np.ndarray, coefficient: float) -> np.ndarray:
    """y[0] = x[0]; y[n] = x[n] - coefficient * x[n-1]."""
    samples = np.asarray(samples, dtype=np.float64)
    return np.append(samples[0], samples[1:] - coefficient * samples[:-1])


def frame_signal(signal: PcmSignal, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Pre-emphasized, Hamming-windowed frames at hop intervals.

    Frame count is floor((N - frame_samples) / hop_samples) + 1; a signal
    shorter than one frame is an error.
    """
    frame_len = config.frame_samples(signal.sample_rate)
    hop_len = config.hop_samples(signal.sample_rate)
    if frame_len < 2 or hop_len < 1:
        raise DataError("frame and hop must span at least 2 and 1 samples")
    emphasized = pre_emphasize(signal.samples, config.pre_emphasis)
    n = emphasized.shape[0]
    if n < frame_len:
        raise DataError(f"signal of {n} samples is shorter than one frame ({frame_len})")
    n_frames = (n - frame_len) // hop_len + 1
    starts = np.arange(n_frames) * hop_len
    frames = emphasized[starts[:, None] + np.arange(frame_len)]
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(frame_len) / (frame_len - 1))
    return frames * window


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(config: MfccConfig, sample_rate: int) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters, mel-equispaced."""
    high = config.high_freq if config.high_freq is not None else sample_rate / 2
    if high > sample_rate / 2:
        raise DataError(f"high_freq {high} Hz exceeds Nyquist {sample_rate / 2} Hz")
    if config.low_freq < 0 or config.low_freq >= high:
        raise DataError(f"need 0 <= low_freq ({config.low_freq}) < high ({high})")
    points = np.linspace(hz_to_mel(config.low_freq), hz_to_mel(high), config.filter_count + 2)
    return mel_to_hz(points[1:-1])


def mel_filterbank(config: MfccConfig, sample_rate: int) -> np.ndarray:
    """Triangular filter matrix, shape (filter_count, fft_size/2 + 1).

    Adjacent filters share their triangle feet. A filter whose rising and
    falling edges collapse onto the same FFT bin would be all-zero, which
    means filter_count is too large for this fft_size; that is an error.
    """
    high = config.high_freq if config.high_freq is not None else sample_rate / 2
    if high > sample_rate / 2:
        raise DataError(f"high_freq {high} Hz exceeds Nyquist {sample_rate / 2} Hz")
    if config.low_freq < 0 or config.low_freq >= high:
        raise DataError(f"need 0 <= low_freq ({config.low_freq}) < high ({high})")
    fft_size = config.effective_fft_size(sample_rate)
    points = np.linspace(
        hz_to_mel(config.low_freq), hz_to_mel(high), config.filter_count + 2
    )
    bin_points = np.floor((fft_size + 1) * mel_to_hz(points) / sample_rate).astype(int)
    bank = np.zeros((config.filter_count, fft_size // 2 + 1))
    for m in range(1, config.filter_count + 1):
        left, center, right = bin_points[m - 1], bin_points[m], bin_points[m + 1]
        for k in range(left, center):
            bank[m - 1, k] = (k - left) / max(center - left, 1)
        for k in range(center, right):
            bank[m - 1, k] = (right - k) / max(right - center, 1)
        if not bank[m - 1].any():
            raise DataError(
                f"filter {m - 1} is empty: filter_count {config.filter_count} is too"
                f" large for fft_size {fft_size} at {sample_rate} Hz"
            )
    return bank


def _time_deltas(rows: np.ndarray) -> np.ndarray:
    """Central differences over frames, edges replicated."""
    padded = np.concatenate([rows[:1], rows, rows[-1:]], axis=0)
    return (padded[2:] - padded[:-2]) / 2.0


def extract_mfcc(signal: PcmSignal, config: MfccConfig = MfccConfig()) -> DescriptorBag:
    """Coefficient bag with one row per frame, dim = coefficient_count
    (tripled when append_deltas adds first and second differences)."""
    frames = frame_signal(signal, config)
    fft_size = config.effective_fft_size(signal.sample_rate)
    spectrum = rfft_radix2(frames, fft_size)
    periodogram = (spectrum.real**2 + spectrum.imag**2) / fft_size
    bank = mel_filterbank(config, signal.sample_rate)
    energies = periodogram @ bank.T
    log_energies = np.log(np.maximum(energies, config.log_floor))
    coefficients = dct(log_energies, type=2, axis=1, norm="ortho")
    rows = coefficients[:, : config.coefficient_count]
    if config.append_deltas:
        deltas = _time_deltas(rows)
        rows = np.concatenate([rows, deltas, _time_deltas(deltas)], axis=1)
    return DescriptorBag(dim=rows.shape[1], rows=rows)
