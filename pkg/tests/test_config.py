"""TOML configuration loading, overrides, and the effective-settings hash."""
import pytest

from veracity.config import (
    DEFAULT_LINEAR_C_GRID,
    PipelineConfig,
    expression_from_cli,
    expression_to_cli,
    load_config,
)
from veracity.errors import DataError

MINIMAL = """
[data]
manifest = "manifest.jsonl"
embeddings = "embeddings.txt"
"""


def write_config(tmp_path, body=MINIMAL, name="config.toml"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


class TestLoad:
    def test_defaults(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.manifest == tmp_path / "manifest.jsonl"
        assert cfg.output_dir == tmp_path / "results"
        assert cfg.motion_columns == (244, 435)
        assert (cfg.motion_components, cfg.audio_components, cfg.text_components) == (64, 64, 16)
        assert (cfg.motion_pca, cfg.audio_pca, cfg.text_pca) == (0, 0, 0)
        assert cfg.folds == 10 and cfg.inner_folds == 3 and cfg.seed == 0
        assert cfg.normalize is False
        assert cfg.expressions_mode == "predicted"
        assert cfg.modalities == ("motion", "expression", "transcript", "audio")
        assert len(cfg.expression_subset) == 5
        assert len(cfg.classifier_kinds) == 7
        assert cfg.mfcc.append_deltas is False
        assert cfg.expression_probabilities is False

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        nested = tmp_path / "sub"
        nested.mkdir()
        cfg = load_config(write_config(nested))
        assert cfg.manifest == nested / "manifest.jsonl"

    def test_absolute_paths_kept(self, tmp_path):
        body = f"""
[data]
manifest = "/abs/manifest.jsonl"
embeddings = "{tmp_path.as_posix()}/e.txt"
"""
        cfg = load_config(write_config(tmp_path, body))
        assert cfg.manifest.as_posix() == "/abs/manifest.jsonl"

    def test_sections_parsed(self, tmp_path):
        body = MINIMAL + """
[motion]
n_components = 8
pca = 32

[audio]
n_components = 4
[audio.mfcc]
append_deltas = true

[evaluation]
folds = 4
seed = 9

[mode]
modalities = ["motion", "audio"]
expressions = "ground-truth"
expression_subset = ["frown", "head-side-turn"]
expression_probabilities = true

[classifiers]
kinds = ["linear-svm", "adaboost"]
[classifiers.adaboost]
rounds = 25
"""
        cfg = load_config(write_config(tmp_path, body))
        assert cfg.motion_components == 8 and cfg.motion_pca == 32
        assert cfg.mfcc.append_deltas is True
        assert cfg.folds == 4 and cfg.seed == 9
        assert cfg.modalities == ("motion", "audio")
        assert cfg.expressions_mode == "ground-truth"
        assert cfg.expression_subset == ("frown", "head_side_turn")
        assert cfg.expression_probabilities is True
        assert cfg.classifier_kinds == ("linear-svm", "adaboost")
        assert cfg.classifier_params["adaboost"] == {"rounds": 25}

    def test_linear_c_grid_injected_when_absent(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.classifier_params["linear-svm"]["c_grid"] == list(DEFAULT_LINEAR_C_GRID)
        body = MINIMAL + "\n[classifiers.linear-svm]\nc = 2.0\nc_grid = []\n"
        cfg = load_config(write_config(tmp_path, body))
        assert cfg.classifier_params["linear-svm"] == {"c": 2.0, "c_grid": []}

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="config file not found"):
            load_config(tmp_path / "nope.toml")

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(DataError, match="invalid TOML"):
            load_config(write_config(tmp_path, "[data\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(DataError, match=r"unknown section\(s\) \['dada'\]"):
            load_config(write_config(tmp_path, MINIMAL + "\n[dada]\nx = 1\n"))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(DataError, match=r"unknown key\(s\) \['componets'\] in \[motion\]"):
            load_config(write_config(tmp_path, MINIMAL + "\n[motion]\ncomponets = 8\n"))

    def test_unknown_mfcc_key(self, tmp_path):
        body = MINIMAL + "\n[audio.mfcc]\nwindow = 0.02\n"
        with pytest.raises(DataError, match=r"in \[audio.mfcc\]"):
            load_config(write_config(tmp_path, body))

    def test_data_section_required(self, tmp_path):
        with pytest.raises(DataError, match=r"\[data\] must define"):
            load_config(write_config(tmp_path, "[output]\ndirectory = 'x'\n"))

    def test_unknown_classifier_table(self, tmp_path):
        body = MINIMAL + "\n[classifiers.svm]\nc = 1.0\n"
        with pytest.raises(DataError, match="not a known kind"):
            load_config(write_config(tmp_path, body))


class TestOverrides:
    def test_override_wins_over_file(self, tmp_path):
        path = write_config(tmp_path, MINIMAL + "\n[evaluation]\nseed = 1\n")
        cfg = load_config(path, overrides={"evaluation.seed": 5})
        assert cfg.seed == 5

    def test_override_changes_hash(self, tmp_path):
        path = write_config(tmp_path)
        base = load_config(path)
        bumped = load_config(path, overrides={"evaluation.seed": 3})
        assert base.config_hash() != bumped.config_hash()

    def test_override_must_be_dotted(self, tmp_path):
        with pytest.raises(DataError, match="must be section.key"):
            load_config(write_config(tmp_path), overrides={"seed": 3})

    def test_overrides_validated_like_file_values(self, tmp_path):
        with pytest.raises(DataError, match="unknown modalities"):
            load_config(write_config(tmp_path), overrides={"mode.modalities": ["sonar"]})


class TestHashAndValidation:
    def test_hash_is_stable(self, tmp_path):
        path = write_config(tmp_path)
        assert load_config(path).config_hash() == load_config(path).config_hash()
        assert len(load_config(path).config_hash()) == 16

    def test_canonical_dict_covers_new_flags(self, tmp_path):
        doc = load_config(write_config(tmp_path)).canonical_dict()
        assert doc["pca"] == {"motion": 0, "audio": 0, "text": 0}
        assert doc["mfcc"]["append_deltas"] is False
        assert doc["expression_probabilities"] is False

    def test_expression_cli_names_round_trip(self):
        assert expression_to_cli("head_side_turn") == "head-side-turn"
        assert expression_from_cli("head-side-turn") == "head_side_turn"
        with pytest.raises(DataError, match="unknown expression"):
            expression_from_cli("smile")

    def test_bad_mode_rejected(self, tmp_path):
        with pytest.raises(DataError, match="mode.expressions must be one of"):
            load_config(write_config(tmp_path), overrides={"mode.expressions": "oracle"})

    def test_negative_pca_rejected(self, tmp_path):
        with pytest.raises(DataError, match="pca dimensions must be non-negative"):
            load_config(write_config(tmp_path), overrides={"motion.pca": -1})

    def test_fold_floors(self, tmp_path):
        with pytest.raises(DataError, match="at least 2"):
            load_config(write_config(tmp_path), overrides={"evaluation.folds": 1})

    def test_empty_classifier_list_rejected(self, tmp_path):
        with pytest.raises(DataError, match="at least one classifier"):
            load_config(write_config(tmp_path), overrides={"classifiers.kinds": []})

    def test_validate_paths(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        with pytest.raises(DataError, match="manifest file not found"):
            cfg.validate_paths()
        (tmp_path / "manifest.jsonl").write_text("x")
        (tmp_path / "embeddings.txt").write_text("x")
        cfg.validate_paths()

    def test_frozen(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        with pytest.raises(Exception):
            cfg.seed = 4
