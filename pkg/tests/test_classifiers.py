"""Classifier suite: accuracy floors, kind-specific contracts, serialization."""
import numpy as np
import pytest

from veracity.classifiers import (
    CLASSIFIER_KINDS,
    ClassifierSpec,
    load_model,
    predict_score,
    save_model,
    train,
)
from veracity.errors import DataError
from veracity.evaluation import auc_pr


def gaussian_blobs(seed=0, n=80, dim=6, gap=3.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    x = rng.normal(size=(n, dim))
    x[:, 0] += gap * y
    x[:, 1] -= gap * y
    return x, y


def xor_panel(seed=0, n=120, noise=0.15):
    rng = np.random.default_rng(seed)
    corners = rng.integers(0, 2, size=(n, 2))
    y = corners[:, 0] ^ corners[:, 1]
    x = corners * 2.0 - 1.0 + noise * rng.normal(size=(n, 2))
    return x, y


class TestAccuracyFloors:
    @pytest.mark.parametrize("kind", CLASSIFIER_KINDS)
    def test_separates_gaussian_blobs(self, kind):
        x_train, y_train = gaussian_blobs(seed=10)
        x_test, y_test = gaussian_blobs(seed=11)
        model = train(ClassifierSpec(kind), x_train, y_train)
        scores = predict_score(model, x_test)
        assert auc_pr(scores, y_test) >= 0.95

    def test_polynomial_kernel_solves_xor(self):
        x_train, y_train = xor_panel(seed=20)
        x_test, y_test = xor_panel(seed=21)
        poly = train(ClassifierSpec("kernel-svm"), x_train, y_train)
        linear = train(ClassifierSpec("linear-svm"), x_train, y_train)
        assert auc_pr(predict_score(poly, x_test), y_test) >= 0.9
        linear_auc = auc_pr(predict_score(linear, x_test), y_test)
        assert 0.4 <= linear_auc <= 0.6


class TestLinearSvm:
    def primal_objective(self, w, b, xs, y_pm, c):
        # bias folded in as a regularized feature, matching the trainer
        margins = y_pm * (xs @ w + b)
        return 0.5 * (w @ w + b * b) + c * np.maximum(0.0, 1.0 - margins).sum()

    def test_beats_subgradient_reference(self):
        x, y = gaussian_blobs(seed=30, n=60, dim=4)
        model = train(ClassifierSpec("linear-svm", {"c": 1.0, "c_grid": ()}), x, y)
        p = model.payload
        xs = (x - np.asarray(p["mean"])) / np.asarray(p["std"])
        y_pm = np.where(y == 1, 1.0, -1.0)
        ours = self.primal_objective(np.asarray(p["w"]), p["b"], xs, y_pm, 1.0)

        aug = np.hstack([xs, np.ones((xs.shape[0], 1))])
        v = np.zeros(aug.shape[1])
        best = np.inf
        for t in range(1, 4001):
            margins = y_pm * (aug @ v)
            grad = v - 1.0 * (y_pm[margins < 1.0][:, None] * aug[margins < 1.0]).sum(axis=0)
            v -= grad / (t ** 0.75 + 10.0)
            best = min(best, self.primal_objective(v[:-1], v[-1], xs, y_pm, 1.0))
        assert ours <= best + 1e-4 * abs(best)

    def test_grid_selection_recorded(self):
        x, y = gaussian_blobs(seed=31)
        model = train(ClassifierSpec("linear-svm", {"c_grid": (0.01, 0.1, 1.0)}), x, y)
        assert model.payload["c"] in (0.01, 0.1, 1.0)

    def test_fixed_c_used_verbatim(self):
        x, y = gaussian_blobs(seed=32)
        model = train(ClassifierSpec("linear-svm", {"c": 7.5, "c_grid": ()}), x, y)
        assert model.payload["c"] == 7.5


class TestKernelSvm:
    def test_dual_constraints_hold(self):
        x, y = gaussian_blobs(seed=40, n=70, dim=4, gap=2.0)
        model = train(ClassifierSpec("kernel-svm", {"c": 1.0}), x, y)
        p = model.payload
        coef = np.asarray(p["coef"])
        assert abs(coef.sum()) < 1e-8  # sum alpha_i y_i = 0
        assert np.abs(coef).max() <= 1.0 + 1e-12  # box constraint

        # free support vectors sit on the margin: y f(x) = 1
        support = np.asarray(p["support_x"])
        alphas = np.abs(coef)
        free = (alphas > 1e-8) & (alphas < 1.0 - 1e-8)
        if free.any():
            raw = support * np.asarray(p["std"]) + np.asarray(p["mean"])
            f = predict_score(model, raw[free])
            y_sv = np.sign(coef[free])
            assert np.abs(y_sv * f - 1.0).max() < 0.05

    def test_degree_is_honored(self):
        x, y = xor_panel(seed=41)
        model = train(ClassifierSpec("kernel-svm", {"degree": 2}), x, y)
        assert model.payload["degree"] == 2


class TestNaiveBayes:
    def test_constant_feature_masked_out(self):
        x, y = gaussian_blobs(seed=50)
        x[:, 3] = 4.2
        model = train(ClassifierSpec("naive-bayes"), x, y)
        mask = model.feature_mask
        assert 3 not in mask
        assert {0, 1}.issubset(set(mask))

    def test_scores_are_log_odds(self):
        x, y = gaussian_blobs(seed=51)
        model = train(ClassifierSpec("naive-bayes"), x, y)
        scores = predict_score(model, x)
        assert np.isfinite(scores).all()
        assert (scores[y == 1].mean()) > (scores[y == 0].mean())


class TestTreesAndEnsembles:
    def test_random_forest_scores_quantized(self):
        x, y = gaussian_blobs(seed=60)
        model = train(ClassifierSpec("random-forest"), x, y)
        scores = np.asarray(predict_score(model, x))
        steps = scores * 50.0
        assert np.abs(steps - np.round(steps)).max() < 1e-9
        assert scores.min() >= 0.0 and scores.max() <= 1.0

    def test_random_forest_tree_count(self):
        x, y = gaussian_blobs(seed=61, n=40)
        model = train(ClassifierSpec("random-forest", {"n_trees": 9}), x, y)
        assert len(model.payload["roots"]) == 9

    def test_decision_tree_fits_training_data(self):
        x, y = gaussian_blobs(seed=62, n=50)
        model = train(ClassifierSpec("decision-tree"), x, y)
        scores = np.asarray(predict_score(model, x))
        assert ((scores > 0.5) == y).mean() >= 0.95

    def test_adaboost_margin_signs(self):
        x, y = gaussian_blobs(seed=63)
        model = train(ClassifierSpec("adaboost", {"rounds": 20}), x, y)
        scores = np.asarray(predict_score(model, x))
        assert ((scores > 0) == y).mean() >= 0.95


class TestLogisticRegression:
    def test_scores_are_probabilities(self):
        x, y = gaussian_blobs(seed=70)
        model = train(ClassifierSpec("logistic-regression"), x, y)
        scores = np.asarray(predict_score(model, x))
        assert scores.min() >= 0.0 and scores.max() <= 1.0
        assert auc_pr(scores, y) >= 0.95


class TestContracts:
    def test_unknown_kind(self):
        with pytest.raises(DataError, match="unknown classifier kind"):
            ClassifierSpec("svm")

    def test_unknown_hyperparameter(self):
        with pytest.raises(DataError, match="unknown hyperparameter"):
            ClassifierSpec("linear-svm", {"gamma": 1.0})

    def test_labels_must_be_binary(self):
        x = np.zeros((4, 2))
        with pytest.raises(DataError, match="labels must be 0 or 1"):
            train(ClassifierSpec("naive-bayes"), x, np.array([0, 1, 2, 1]))

    def test_both_classes_required(self):
        x = np.random.default_rng(0).normal(size=(4, 2))
        with pytest.raises(DataError, match="both classes"):
            train(ClassifierSpec("naive-bayes"), x, np.array([1, 1, 1, 1]))

    def test_minimum_rows(self):
        with pytest.raises(DataError, match="at least 2"):
            train(ClassifierSpec("naive-bayes"), np.zeros((1, 2)), np.array([1]))

    def test_shape_agreement(self):
        with pytest.raises(DataError, match="bad training shapes"):
            train(ClassifierSpec("naive-bayes"), np.zeros((4, 2)), np.array([0, 1]))

    def test_feature_count_checked_at_scoring(self):
        x, y = gaussian_blobs(seed=80, dim=5)
        model = train(ClassifierSpec("decision-tree"), x, y)
        with pytest.raises(DataError, match="expects 5 features, got 3"):
            predict_score(model, np.zeros(3))

    def test_single_vector_returns_float(self):
        x, y = gaussian_blobs(seed=81)
        model = train(ClassifierSpec("linear-svm"), x, y)
        out = predict_score(model, x[0])
        assert isinstance(out, float)

    @pytest.mark.parametrize("kind", CLASSIFIER_KINDS)
    def test_deterministic_for_fixed_seed(self, kind):
        x, y = gaussian_blobs(seed=82, n=50)
        a = train(ClassifierSpec(kind), x, y)
        b = train(ClassifierSpec(kind), x, y)
        assert a.payload == b.payload

    @pytest.mark.parametrize("kind", CLASSIFIER_KINDS)
    def test_save_load_round_trip(self, kind, tmp_path):
        x, y = gaussian_blobs(seed=83, n=50)
        model = train(ClassifierSpec(kind), x, y, video_ids=("v1", "v2"))
        path = tmp_path / "m.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == kind
        assert loaded.trained_on == ("v1", "v2")
        assert np.allclose(
            np.asarray(predict_score(loaded, x)), np.asarray(predict_score(model, x)), atol=0
        )

    def test_load_rejects_foreign_document(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"format": "other", "version": 1}', encoding="utf-8")
        with pytest.raises(DataError, match="classifier document"):
            load_model(path)

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(DataError, match="invalid JSON"):
            load_model(path)
