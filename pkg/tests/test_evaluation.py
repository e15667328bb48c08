"""Ranking metric, grouped folds, and simplex fusion search."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import auc_pr_reference
from veracity.data import DatasetManifest, VideoRecord
from veracity.errors import DataError
from veracity.evaluation import (
    FoldPlan,
    FusionWeights,
    auc_pr,
    fuse,
    grouped_kfold,
    load_fold_plan,
    save_fold_plan,
    search_weights,
    weight_grid,
)


def manifest_for(n_identities, videos_per_identity=1):
    records = []
    for i in range(n_identities):
        for v in range(videos_per_identity):
            records.append(
                VideoRecord(
                    video_id=f"id{i:03d}_v{v}",
                    identity_id=f"id{i:03d}",
                    label=i % 2,
                    motion_path=f"m{i}.txt",
                    audio_path=f"a{i}.wav",
                    transcript_path=f"t{i}.txt",
                )
            )
    counts = {0: sum(1 for r in records if r.label == 0), 1: sum(1 for r in records if r.label == 1)}
    return DatasetManifest(records=records, class_counts=counts)


class TestAucPr:
    def test_perfect_ranking(self):
        assert auc_pr([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0

    def test_inverted_ranking(self):
        assert abs(auc_pr([0.2, 0.3, 0.8, 0.9], [1, 1, 0, 0]) - 5.0 / 12.0) < 1e-15

    def test_full_tie_collapses_to_prevalence(self):
        assert abs(auc_pr([0.5, 0.5], [1, 0]) - 0.5) < 1e-15

    def test_tied_block_enters_together(self):
        # positives hidden inside a tied block see the block's precision
        ours = auc_pr([0.7, 0.7, 0.7, 0.1], [1, 0, 1, 0])
        assert abs(ours - auc_pr_reference(np.array([0.7, 0.7, 0.7, 0.1]), np.array([1, 0, 1, 0]))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DataError, match="shape mismatch"):
            auc_pr([0.1, 0.2], [1])

    def test_binary_labels_required(self):
        with pytest.raises(DataError, match="0 or 1"):
            auc_pr([0.1, 0.2], [1, 2])

    def test_both_classes_required(self):
        with pytest.raises(DataError, match="both classes"):
            auc_pr([0.1, 0.2], [1, 1])

    def test_non_finite_scores_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            auc_pr([np.nan, 0.2], [1, 0])

    @settings(max_examples=300, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_matches_threshold_enumeration_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        # quantized scores force ties often
        scores = np.round(rng.uniform(0, 1, size=n), 1)
        assert auc_pr(scores, labels) == auc_pr_reference(scores, labels)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 20))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.normal(size=n)
        warped = 3.0 * scores + 1.0
        assert abs(auc_pr(scores, labels) - auc_pr(warped, labels)) < 1e-12
        assert abs(auc_pr(scores, labels) - auc_pr(np.tanh(scores), labels)) < 1e-12


class TestGroupedKfold:
    def test_58_identities_in_10_folds(self):
        plan = grouped_kfold(manifest_for(58), k=10, seed=0)
        sizes = sorted(
            sum(1 for f in plan.assignments.values() if f == fold) for fold in range(10)
        )
        assert sizes == [5, 5, 6, 6, 6, 6, 6, 6, 6, 6]

    def test_identity_integrity(self):
        plan = grouped_kfold(manifest_for(12, videos_per_identity=3), k=4, seed=7)
        for video, fold in plan.video_folds.items():
            assert fold == plan.assignments[video.rsplit("_", 1)[0]]

    def test_seed_changes_assignment(self):
        m = manifest_for(20)
        a = grouped_kfold(m, k=5, seed=0)
        b = grouped_kfold(m, k=5, seed=1)
        assert a.assignments != b.assignments
        assert grouped_kfold(m, k=5, seed=0).assignments == a.assignments

    def test_too_many_folds(self):
        with pytest.raises(DataError, match="cannot make 10 folds from 4"):
            grouped_kfold(manifest_for(4), k=10)

    def test_split_accessors_partition_videos(self):
        plan = grouped_kfold(manifest_for(9, videos_per_identity=2), k=3, seed=2)
        all_videos = set(plan.video_folds)
        for fold in range(3):
            test, training = set(plan.test_videos(fold)), set(plan.train_videos(fold))
            assert test | training == all_videos
            assert not test & training

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=2, max_value=8),
        st.integers(min_value=0, max_value=1000),
    )
    def test_every_identity_lands_exactly_once(self, k, seed):
        m = manifest_for(17)
        plan = grouped_kfold(m, k=k, seed=seed)
        assert sorted(plan.assignments) == sorted(m.identities)
        counts = [sum(1 for f in plan.assignments.values() if f == fold) for fold in range(k)]
        assert max(counts) - min(counts) <= 1


class TestFoldPlanValidation:
    def test_k_floor(self):
        with pytest.raises(DataError, match="at least 2 folds"):
            FoldPlan(k=1, seed=0, assignments={"a": 0}, video_folds={"v": 0})

    def test_fold_out_of_range(self):
        with pytest.raises(DataError, match="invalid fold"):
            FoldPlan(k=2, seed=0, assignments={"a": 0, "b": 2}, video_folds={"v": 0})

    def test_empty_fold_rejected(self):
        with pytest.raises(DataError, match=r"folds \[1\] have no test videos"):
            FoldPlan(k=2, seed=0, assignments={"a": 0, "b": 1}, video_folds={"v": 0})

    def test_round_trip(self, tmp_path):
        plan = grouped_kfold(manifest_for(10), k=3, seed=4)
        path = tmp_path / "plan.json"
        save_fold_plan(plan, path)
        loaded = load_fold_plan(path)
        assert (loaded.k, loaded.seed) == (3, 4)
        assert loaded.assignments == plan.assignments
        assert loaded.video_folds == plan.video_folds

    def test_load_is_structural_only(self, tmp_path):
        # a plan whose video partition splits an identity must load fine;
        # catching it is the run-time audit's job
        plan = grouped_kfold(manifest_for(6, videos_per_identity=2), k=3, seed=0)
        path = tmp_path / "plan.json"
        save_fold_plan(plan, path)
        doc = json.loads(path.read_text())
        victim = next(iter(doc["video_folds"]))
        doc["video_folds"][victim] = (doc["video_folds"][victim] + 1) % 3
        path.write_text(json.dumps(doc))
        loaded = load_fold_plan(path)
        assert loaded.video_folds[victim] != plan.video_folds[victim]

    def test_load_rejects_foreign_document(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text('{"format": "fold-plan", "version": 9}')
        with pytest.raises(DataError, match="version-1 fold-plan"):
            load_fold_plan(path)


class TestFusion:
    def test_weights_validated(self):
        with pytest.raises(DataError, match="non-negative"):
            FusionWeights(names=("a", "b"), values=np.array([1.5, -0.5]))
        with pytest.raises(DataError, match="expected 1"):
            FusionWeights(names=("a", "b"), values=np.array([0.5, 0.6]))
        with pytest.raises(DataError, match="one weight per stream"):
            FusionWeights(names=("a", "b"), values=np.array([1.0]))

    def test_corner_weight_is_legal(self):
        w = FusionWeights(names=("a", "b"), values=np.array([1.0, 0.0]))
        assert w.as_dict() == {"a": 1.0, "b": 0.0}

    def test_fuse_is_the_weighted_sum(self):
        w = FusionWeights(names=("a", "b"), values=np.array([0.25, 0.75]))
        out = fuse(w, {"a": np.array([4.0, 0.0]), "b": np.array([0.0, 4.0])})
        assert np.allclose(out, [1.0, 3.0], atol=1e-15)

    def test_fuse_missing_stream(self):
        w = FusionWeights(names=("a", "b"), values=np.array([0.5, 0.5]))
        with pytest.raises(DataError, match=r"missing for streams \['b'\]"):
            fuse(w, {"a": np.zeros(3)})

    def test_fuse_length_mismatch(self):
        w = FusionWeights(names=("a", "b"), values=np.array([0.5, 0.5]))
        with pytest.raises(DataError, match="disagree on length"):
            fuse(w, {"a": np.zeros(3), "b": np.zeros(4)})

    def test_grid_half_step_four_streams(self):
        grid = weight_grid(4, step=0.5)
        assert grid.shape == (10, 4)
        assert np.allclose(grid.sum(axis=1), 1.0, atol=1e-12)
        as_tuples = [tuple(row) for row in grid]
        assert as_tuples == sorted(as_tuples)
        for corner in np.eye(4):
            assert any(np.array_equal(row, corner) for row in grid)

    def test_grid_step_must_divide_one(self):
        with pytest.raises(DataError, match="divide 1 evenly"):
            weight_grid(3, step=0.3)

    def test_single_stream_grid(self):
        assert np.array_equal(weight_grid(1, step=0.05), [[1.0]])

    def test_search_finds_informative_stream(self):
        labels = np.array([1, 1, 1, 0, 0, 0])
        rng = np.random.default_rng(5)
        scores = {"good": labels + 0.01 * rng.normal(size=6), "noise": rng.normal(size=6)}
        best = search_weights(scores, labels, step=0.25)
        assert best.as_dict()["good"] >= 0.75

    def test_tie_breaks_toward_uniform(self):
        # identical streams tie everywhere; entropy picks the midpoint
        labels = np.array([1, 0, 1, 0])
        s = np.array([0.9, 0.1, 0.8, 0.2])
        best = search_weights({"a": s, "b": s}, labels, step=0.25)
        assert np.allclose(best.values, [0.5, 0.5], atol=1e-12)

    def test_search_is_deterministic(self):
        labels = np.array([1, 0, 1, 0, 1, 0])
        rng = np.random.default_rng(8)
        scores = {"a": rng.normal(size=6), "b": rng.normal(size=6), "c": rng.normal(size=6)}
        a = search_weights(scores, labels, step=0.25).values
        b = search_weights(scores, labels, step=0.25).values
        assert np.array_equal(a, b)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_search_never_loses_to_single_streams(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=12)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = {"a": rng.normal(size=12), "b": rng.normal(size=12)}
        best = search_weights(scores, labels, step=0.25)
        fused_auc = auc_pr(fuse(best, scores), labels)
        singles = max(auc_pr(scores[n], labels) for n in scores)
        assert fused_auc >= singles - 1e-12
