"""Cache-aware feature extraction over a small generated dataset."""
import dataclasses

import numpy as np
import pytest

from veracity.config import load_config
from veracity.data import load_manifest
from veracity.errors import DataError
from veracity.extract import (
    CACHE_ENV_VAR,
    FeatureCache,
    cache_key,
    extract_all,
    extract_video,
    file_sha256,
    load_audio_features,
    resolve_cache_dir,
)
from veracity.mfcc import MfccConfig
from veracity.synthetic import generate_dataset, write_default_config


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("extract-data")
    paths = generate_dataset(root, n_identities=4, seed=0)
    config_path = write_default_config(root)
    return paths, config_path


@pytest.fixture(scope="module")
def config(dataset):
    _, config_path = dataset
    return load_config(config_path)


@pytest.fixture(scope="module")
def manifest(dataset, config):
    return load_manifest(config.manifest)


class TestCacheKeys:
    def test_key_is_deterministic(self):
        assert cache_key("abc", {"a": 1}) == cache_key("abc", {"a": 1})
        assert len(cache_key("abc", {"a": 1})) == 32

    def test_key_tracks_content_and_settings(self):
        base = cache_key("abc", {"a": 1})
        assert cache_key("abd", {"a": 1}) != base
        assert cache_key("abc", {"a": 2}) != base

    def test_key_ignores_settings_order(self):
        assert cache_key("abc", {"a": 1, "b": 2}) == cache_key("abc", {"b": 2, "a": 1})

    def test_file_hash_tracks_bytes(self, tmp_path):
        p = tmp_path / "f.bin"
        p.write_bytes(b"hello")
        first = file_sha256(p)
        p.write_bytes(b"hello!")
        assert file_sha256(p) != first


class TestCacheDirResolution:
    def test_env_var_wins(self, config, monkeypatch, tmp_path):
        monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path / "env-cache"))
        assert resolve_cache_dir(config) == tmp_path / "env-cache"

    def test_config_value_next(self, config, monkeypatch, tmp_path):
        monkeypatch.delenv(CACHE_ENV_VAR, raising=False)
        explicit = dataclasses.replace(config, cache_dir=tmp_path / "cfg-cache")
        assert resolve_cache_dir(explicit) == tmp_path / "cfg-cache"

    def test_default_sits_next_to_manifest(self, config, monkeypatch):
        monkeypatch.delenv(CACHE_ENV_VAR, raising=False)
        assert resolve_cache_dir(config) == config.manifest.parent / ".veracity-cache"


class TestExtraction:
    def test_cold_then_warm(self, manifest, config, tmp_path):
        cache = FeatureCache(tmp_path / "cache")
        first = extract_all(manifest, config, cache)
        assert cache.hits == 0 and cache.misses > 0
        warm = FeatureCache(tmp_path / "cache")
        second = extract_all(manifest, config, warm)
        assert warm.misses == 0 and warm.hits == cache.misses
        for vid, feat in first.items():
            assert np.array_equal(feat.motion.rows, second[vid].motion.rows)
            assert np.array_equal(feat.motion.timestamps, second[vid].motion.timestamps)
            assert np.array_equal(feat.audio.rows, second[vid].audio.rows)
            assert np.array_equal(feat.transcript.rows, second[vid].transcript.rows)
            assert feat.transcript_oov == second[vid].transcript_oov

    def test_setting_change_invalidates_audio_only(self, manifest, config, tmp_path):
        cache = FeatureCache(tmp_path / "cache2")
        record = manifest.records[0]
        path = manifest.resolve(record.audio_path)
        plain = load_audio_features(path, config, cache)
        deltas_cfg = dataclasses.replace(config, mfcc=MfccConfig(append_deltas=True))
        wide = load_audio_features(path, deltas_cfg, cache)
        assert cache.hits == 0 and cache.misses == 2  # different keys, no false hit
        assert plain.dim == 13 and wide.dim == 39

    def test_modality_gating(self, manifest, config):
        record = manifest.records[0]
        audio_only = dataclasses.replace(config, modalities=("audio",))
        feat = extract_video(record, manifest, audio_only, None, "", None)
        assert feat.audio is not None
        assert feat.motion is None and feat.transcript is None

    def test_expression_mode_pulls_motion(self, manifest, config):
        record = manifest.records[0]
        expr_only = dataclasses.replace(config, modalities=("expression",))
        feat = extract_video(record, manifest, expr_only, None, "", None)
        assert feat.motion is not None and feat.motion.timestamps is not None

    def test_transcript_requires_table(self, manifest, config):
        record = manifest.records[0]
        with pytest.raises(DataError, match="without an embedding table"):
            extract_video(record, manifest, config, None, "", None)

    def test_failures_name_the_video(self, manifest, config, tmp_path):
        bad_root = tmp_path / "broken"
        bad_root.mkdir()
        victim = manifest.records[0]
        motion_file = manifest.resolve(victim.motion_path)
        original = motion_file.read_text()
        try:
            motion_file.write_text("not descriptors at all\n")
            with pytest.raises(DataError, match=f"video '{victim.video_id}':"):
                extract_all(manifest, dataclasses.replace(config, modalities=("motion",)))
        finally:
            motion_file.write_text(original)

    def test_oov_tokens_counted(self, manifest, config, tmp_path):
        feats = extract_all(manifest, config, FeatureCache(tmp_path / "cache3"))
        for feat in feats.values():
            assert feat.transcript_oov >= 0
            assert feat.transcript.rows.shape[1] == 25
