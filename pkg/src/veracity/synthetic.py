"""Seeded synthetic dataset generator.

Produces a self-contained directory (manifest, dense-trajectory text files,
PCM WAV audio, transcripts, an embedding table) whose three modalities carry
independent partial label signal, so late fusion has something to gain. Byte
output is a pure function of the seed and size parameters.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    MBH_COLUMNS,
    TRAJECTORY_FILE_WIDTH,
    DatasetManifest,
    VideoRecord,
    save_manifest,
)
from .microexpression import EXPRESSIONS, clip_boundaries

FPS = 15.0
CLIP_SECONDS = 4.0
SAMPLE_RATE = 8000
AUDIO_SECONDS = 2.0
EMBEDDING_DIM = 25
TOKENS_PER_TRANSCRIPT = 40

# per-expression Bernoulli rates conditioned on the video label
_BIT_RATE_TRUTHFUL = np.array([0.10, 0.15, 0.12, 0.25, 0.30])
_BIT_RATE_DECEPTIVE = np.array([0.60, 0.65, 0.55, 0.35, 0.40])


@dataclass(frozen=True)
class SyntheticPaths:
    root: Path
    manifest: Path
    embeddings: Path


def _write_wav(path: Path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = (np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


# large enough that per-fold transcript bags keep many distinct vectors;
# a tiny vocabulary can hand a dictionary component one repeated embedding,
# which is a degenerate fit by contract
def _vocabulary() -> tuple[list[str], list[str]]:
    plain = [f"plain{i}" for i in range(150)]
    loaded = [f"loaded{i}" for i in range(150)]
    return plain, loaded


def generate_dataset(
    out_dir: str | Path, n_identities: int = 40, seed: int = 0
) -> SyntheticPaths:
    """Write a complete synthetic dataset under out_dir.

    Half the identities are labeled deceptive; each identity contributes one
    or two videos sharing that label. Motion carries a weak class direction
    plus per-clip bumps tied to the expression bits; audio mixes two tones
    with a label-dependent balance; transcripts mix two vocabularies.
    """
    if n_identities < 4 or n_identities % 2:
        raise ValueError("n_identities must be an even number >= 4")
    out = Path(out_dir)
    for sub in ("motion", "audio", "transcripts"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    mbh_lo, mbh_hi = MBH_COLUMNS
    mbh_dim = mbh_hi - mbh_lo + 1
    class_dir = rng.normal(size=mbh_dim)
    class_dir /= np.linalg.norm(class_dir)
    video_noise_dir = rng.normal(size=mbh_dim)
    video_noise_dir /= np.linalg.norm(video_noise_dir)
    bump_dirs = rng.normal(size=(len(EXPRESSIONS), mbh_dim))
    bump_dirs /= np.linalg.norm(bump_dirs, axis=1, keepdims=True)

    plain_vocab, loaded_vocab = _vocabulary()
    all_tokens = plain_vocab + loaded_vocab
    embeddings = rng.normal(size=(len(all_tokens), EMBEDDING_DIM)) * 0.4
    emb_path = out / "embeddings.txt"
    with emb_path.open("w", encoding="utf-8") as fh:
        for token, vec in zip(all_tokens, embeddings):
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")

    labels = np.array([0] * (n_identities // 2) + [1] * (n_identities // 2))
    labels = labels[rng.permutation(n_identities)]

    window = int(round(CLIP_SECONDS * FPS))
    records: list[VideoRecord] = []
    video_idx = 0
    for ident in range(n_identities):
        identity_id = f"id{ident:03d}"
        label = int(labels[ident])
        for _ in range(int(rng.integers(1, 3))):
            video_id = f"v{video_idx:03d}"
            video_idx += 1
            seconds = int(rng.integers(12, 25))
            n_frames = int(seconds * FPS)
            bounds = clip_boundaries(0, n_frames - 1, window)

            rates = _BIT_RATE_DECEPTIVE if label else _BIT_RATE_TRUTHFUL
            bits = (rng.random((len(bounds), len(EXPRESSIONS))) < rates).astype(int)

            motion = rng.normal(size=(n_frames, TRAJECTORY_FILE_WIDTH)) * 0.8
            motion[:, 0] = np.arange(n_frames)
            eps_motion = rng.normal()
            block = motion[:, mbh_lo : mbh_hi + 1]
            # direct class signal kept weak: most of the label information in
            # motion flows through the per-clip expression bursts below, so the
            # pooled detector feature has room to improve on raw motion
            block += (2 * label - 1) * 0.02 * class_dir + eps_motion * 0.5 * video_noise_dir
            burst = 12  # frames per expression event, brief relative to a clip
            for c, (start, end) in enumerate(bounds):
                for e in range(len(EXPRESSIONS)):
                    if bits[c, e]:
                        at = start + int(rng.integers(0, max(1, end - start + 1 - burst)))
                        block[at : min(at + burst, end + 1)] += 1.0 * bump_dirs[e]
            motion_path = f"motion/{video_id}.txt"
            np.savetxt(out / motion_path, motion, fmt="%.6f")

            eps_audio = rng.normal()
            balance = 1.0 / (1.0 + np.exp(-(1.6 * (2 * label - 1) + 0.9 * eps_audio)))
            t = np.arange(int(AUDIO_SECONDS * SAMPLE_RATE)) / SAMPLE_RATE
            tone = (1.0 - balance) * np.sin(2 * np.pi * 220.0 * t) + balance * np.sin(
                2 * np.pi * 640.0 * t
            )
            tone = 0.6 * tone + 0.02 * rng.normal(size=t.shape)
            audio_path = f"audio/{video_id}.wav"
            _write_wav(out / audio_path, tone, SAMPLE_RATE)

            eps_text = rng.normal()
            loaded_rate = 1.0 / (1.0 + np.exp(-(1.4 * (2 * label - 1) + 0.9 * eps_text)))
            picks = []
            for _ in range(TOKENS_PER_TRANSCRIPT):
                vocab = loaded_vocab if rng.random() < loaded_rate else plain_vocab
                picks.append(vocab[int(rng.integers(len(vocab)))])
            transcript_path = f"transcripts/{video_id}.txt"
            (out / transcript_path).write_text(" ".join(picks) + "\n", encoding="utf-8")

            records.append(
                VideoRecord(
                    video_id=video_id,
                    identity_id=identity_id,
                    label=label,
                    motion_path=motion_path,
                    audio_path=audio_path,
                    transcript_path=transcript_path,
                    clip_expression_labels=tuple(tuple(int(b) for b in row) for row in bits),
                )
            )

    counts = {0: sum(r.label == 0 for r in records), 1: sum(r.label == 1 for r in records)}
    manifest = DatasetManifest(records=records, class_counts=counts, root=out)
    manifest_path = out / "manifest.jsonl"
    save_manifest(manifest, manifest_path)
    return SyntheticPaths(root=out, manifest=manifest_path, embeddings=emb_path)


# dictionary sizes and EM budget scaled down to the synthetic data volume,
# so a full experiment stays in the smoke-test time range
_DEFAULT_CONFIG = """\
[data]
manifest = "manifest.jsonl"
embeddings = "embeddings.txt"

[output]
directory = "results"

[motion]
n_components = 8

[audio]
n_components = 8

[text]
n_components = 4

[gmm]
max_iterations = 60

[evaluation]
folds = 10
inner_folds = 3
seed = 0
max_gmm_samples = 8000
"""


def write_default_config(root: str | Path) -> Path:
    """Drop a ready-to-run config next to a generated dataset."""
    path = Path(root) / "config.toml"
    path.write_text(_DEFAULT_CONFIG, encoding="utf-8")
    return path
