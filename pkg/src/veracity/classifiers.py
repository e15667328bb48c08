"""Seven binary classifiers behind one train/score interface.

All of them consume float feature matrices with labels in {0, 1} and emit a
real-valued score where higher means more likely positive. Margin models
(the SVMs, boosting) return margins; logistic regression and naive Bayes
return probability-flavored scores; the forest returns the fraction of trees
voting positive.

SVMs and logistic regression standardize features internally using training
statistics; tree models and naive Bayes consume raw features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.optimize import minimize

from .errors import DataError
from .evaluation import auc_pr

CLASSIFIER_KINDS = (
    "linear-svm",
    "kernel-svm",
    "naive-bayes",
    "decision-tree",
    "random-forest",
    "logistic-regression",
    "adaboost",
)

_DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "linear-svm": {"c": 1.0, "c_grid": None, "tol": 1e-4, "max_epochs": 1000, "seed": 0},
    "kernel-svm": {"c": 1.0, "degree": 3, "tol": 1e-3, "max_iter": 200_000, "seed": 0},
    "naive-bayes": {"var_smoothing": 1e-9, "seed": 0},
    "decision-tree": {"min_samples_split": 2, "max_depth": None, "seed": 0},
    "random-forest": {"n_trees": 50, "min_samples_split": 2, "max_depth": None, "seed": 0},
    "logistic-regression": {"l2": 1e-2, "max_iter": 500, "seed": 0},
    "adaboost": {"rounds": 100, "max_depth": 2, "seed": 0},
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in CLASSIFIER_KINDS:
            raise DataError(f"unknown classifier kind {self.kind!r}")
        unknown = set(self.hyperparameters) - set(_DEFAULT_PARAMS[self.kind])
        if unknown:
            raise DataError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")

    def resolved(self) -> dict[str, Any]:
        merged = dict(_DEFAULT_PARAMS[self.kind])
        merged.update(self.hyperparameters)
        return merged


@dataclass
class TrainedModel:
    kind: str
    payload: dict[str, Any]
    trained_on: tuple[str, ...] | None = None

    @property
    def feature_mask(self) -> list[int] | None:
        """Indices kept after zero-variance removal (naive Bayes only)."""
        mask = self.payload.get("feature_mask")
        return None if mask is None else [i for i, keep in enumerate(mask) if keep]


def _check_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DataError(f"bad training shapes x={x.shape} y={y.shape}")
    if x.shape[0] < 2:
        raise DataError("need at least 2 training samples")
    if not np.isfinite(x).all():
        raise DataError("features contain non-finite values")
    if set(np.unique(y)) - {0, 1}:
        raise DataError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise DataError("training data must contain both classes")
    return x, y.astype(np.int64)


def _standardize_fit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = np.sqrt(x.var(axis=0))
    std = np.where(std > 0, std, 1.0)  # constant dims pass through unscaled
    return mean, std


# ---------------------------------------------------------------------------
# linear SVM: dual coordinate descent on the L1-loss C-SVM with the bias
# folded in as an extra always-one (regularized) feature


def _fit_linear_svm_cd(
    x: np.ndarray, y_pm: np.ndarray, c: float, tol: float, max_epochs: int, seed: int
) -> np.ndarray:
    n = x.shape[0]
    aug = np.hstack([x, np.ones((n, 1))])
    q_diag = np.einsum("ij,ij->i", aug, aug)
    alpha = np.zeros(n)
    w = np.zeros(aug.shape[1])
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        worst = 0.0
        for i in rng.permutation(n):
            g = y_pm[i] * (w @ aug[i]) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            worst = max(worst, abs(pg))
            if pg != 0.0:
                new = min(max(alpha[i] - g / q_diag[i], 0.0), c)
                if new != alpha[i]:
                    w += (new - alpha[i]) * y_pm[i] * aug[i]
                    alpha[i] = new
        if worst < tol:
            break
    return w


def _train_linear_svm(x, y, params) -> dict:
    mean, std = _standardize_fit(x)
    xs = (x - mean) / std
    y_pm = np.where(y == 1, 1.0, -1.0)
    seed = int(params["seed"])
    c = float(params["c"])
    if params["c_grid"]:
        c = _select_c(xs, y, y_pm, [float(v) for v in params["c_grid"]], params, seed)
    w = _fit_linear_svm_cd(xs, y_pm, c, params["tol"], params["max_epochs"], seed)
    return {
        "w": w[:-1].tolist(),
        "b": float(w[-1]),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "c": c,
    }


def _select_c(xs, y, y_pm, grid, params, seed) -> float:
    """Pick C by 3-fold stratified validation AUC; ties favor the smaller C."""
    rng = np.random.default_rng(seed)
    folds = np.zeros(len(y), dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        folds[idx] = np.arange(len(idx)) % 3
    best_c, best_auc = float(min(grid)), -1.0
    for c in sorted(grid):
        scores = np.zeros(len(y))
        usable = True
        for f in range(3):
            tr, va = folds != f, folds == f
            if len(np.unique(y[tr])) < 2 or not va.any():
                usable = False
                break
            w = _fit_linear_svm_cd(xs[tr], y_pm[tr], c, params["tol"], params["max_epochs"], seed)
            scores[va] = xs[va] @ w[:-1] + w[-1]
        if not usable:
            continue
        a = auc_pr(scores, y)
        if a > best_auc + 1e-12:
            best_c, best_auc = c, a
    return best_c


def _score_linear_svm(payload, x) -> np.ndarray:
    xs = (x - np.asarray(payload["mean"])) / np.asarray(payload["std"])
    return xs @ np.asarray(payload["w"]) + payload["b"]


# ---------------------------------------------------------------------------
# kernel SVM: sequential minimal optimization with maximal-violating-pair
# working set selection; polynomial kernel (x . y / dim + 1) ** degree


def _poly_kernel(a: np.ndarray, b: np.ndarray, degree: int) -> np.ndarray:
    return (a @ b.T / a.shape[1] + 1.0) ** degree


def _train_kernel_svm(x, y, params) -> dict:
    mean, std = _standardize_fit(x)
    xs = (x - mean) / std
    y_pm = np.where(y == 1, 1.0, -1.0)
    n = xs.shape[0]
    c = float(params["c"])
    degree = int(params["degree"])
    tol = float(params["tol"])
    kmat = _poly_kernel(xs, xs, degree)
    q = kmat * np.outer(y_pm, y_pm)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    for _ in range(int(params["max_iter"])):
        up = ((y_pm > 0) & (alpha < c)) | ((y_pm < 0) & (alpha > 0))
        low = ((y_pm > 0) & (alpha > 0)) | ((y_pm < 0) & (alpha < c))
        yg = -y_pm * grad
        m_up = np.where(up, yg, -np.inf)
        m_low = np.where(low, yg, np.inf)
        i = int(np.argmax(m_up))
        j = int(np.argmin(m_low))
        if m_up[i] - m_low[j] <= tol:
            break
        quad = max(kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j], 1e-12)
        old_i, old_j = alpha[i], alpha[j]
        if y_pm[i] != y_pm[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0 and alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, diff
            elif diff <= 0 and alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0 and alpha[i] > c:
                alpha[i], alpha[j] = c, c - diff
            elif diff <= 0 and alpha[j] > c:
                alpha[j], alpha[i] = c, c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            alpha[i] -= delta
            alpha[j] += delta
            if total > c and alpha[i] > c:
                alpha[i], alpha[j] = c, total - c
            elif total <= c and alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > c and alpha[j] > c:
                alpha[j], alpha[i] = c, total - c
            elif total <= c and alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        grad += q[:, i] * (alpha[i] - old_i) + q[:, j] * (alpha[j] - old_j)
    up = ((y_pm > 0) & (alpha < c)) | ((y_pm < 0) & (alpha > 0))
    low = ((y_pm > 0) & (alpha > 0)) | ((y_pm < 0) & (alpha < c))
    yg = -y_pm * grad
    # for free support vectors -y G equals the bias, so take the midpoint
    hi = np.max(np.where(up, yg, -np.inf))
    lo = np.min(np.where(low, yg, np.inf))
    bias = (hi + lo) / 2.0
    keep = alpha > 1e-12
    return {
        "support_x": xs[keep].tolist(),
        "coef": (alpha[keep] * y_pm[keep]).tolist(),
        "b": float(bias),
        "degree": degree,
        "mean": mean.tolist(),
        "std": std.tolist(),
    }


def _score_kernel_svm(payload, x) -> np.ndarray:
    xs = (x - np.asarray(payload["mean"])) / np.asarray(payload["std"])
    support = np.asarray(payload["support_x"], dtype=np.float64)
    coef = np.asarray(payload["coef"], dtype=np.float64)
    if support.shape[0] == 0:
        return np.full(xs.shape[0], payload["b"])
    return _poly_kernel(xs, support, payload["degree"]) @ coef + payload["b"]


# ---------------------------------------------------------------------------
# Gaussian naive Bayes; zero-variance features are removed before fitting
# and the retained-feature mask is applied again at scoring time


def _train_naive_bayes(x, y, params) -> dict:
    # exact equality, not var > 0: the variance of a constant column can
    # round to a positive subnormal when its value is not representable
    mask = ~(x == x[0]).all(axis=0)
    xm = x[:, mask]
    pos, neg = xm[y == 1], xm[y == 0]
    smoothing = float(params["var_smoothing"]) * (xm.var(axis=0).max() if xm.size else 1.0)
    return {
        "feature_mask": mask.tolist(),
        "log_prior_odds": float(np.log(pos.shape[0]) - np.log(neg.shape[0])),
        "mean1": pos.mean(axis=0).tolist() if xm.size else [],
        "var1": (pos.var(axis=0) + smoothing).tolist() if xm.size else [],
        "mean0": neg.mean(axis=0).tolist() if xm.size else [],
        "var0": (neg.var(axis=0) + smoothing).tolist() if xm.size else [],
    }


def _gaussian_log_density(x, mean, var) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var).sum(axis=1)


def _score_naive_bayes(payload, x) -> np.ndarray:
    mask = np.asarray(payload["feature_mask"], dtype=bool)
    xm = x[:, mask]
    odds = np.full(x.shape[0], payload["log_prior_odds"])
    if xm.shape[1]:
        odds = odds + _gaussian_log_density(
            xm, np.asarray(payload["mean1"]), np.asarray(payload["var1"])
        ) - _gaussian_log_density(xm, np.asarray(payload["mean0"]), np.asarray(payload["var0"]))
    return odds


# ---------------------------------------------------------------------------
# CART tree (Gini impurity) shared by the standalone tree, the forest and
# boosting; split search is vectorized across candidate features


def _best_split(x, y, w, columns):
    xf = x[:, columns]
    n = xf.shape[0]
    order = np.argsort(xf, axis=0, kind="mergesort")
    xs = np.take_along_axis(xf, order, axis=0)
    ys = (y[order] == 1)
    ws = w[order]
    total_w = w.sum()
    total_pos = float(w @ (y == 1))
    cum_w = np.cumsum(ws, axis=0)[:-1]
    cum_pos = np.cumsum(ws * ys, axis=0)[:-1]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    wl = cum_w
    wr = np.maximum(total_w - wl, 0.0)
    # clamp the positive-class mass to its side's weight: cancellation in the
    # subtraction can leave a residue that explodes under the division floor
    pl = np.clip(cum_pos, 0.0, wl)
    pr = np.clip(total_pos - cum_pos, 0.0, wr)
    safe_wl = np.maximum(wl, 1e-300)
    safe_wr = np.maximum(wr, 1e-300)
    gini_l = 1.0 - (pl / safe_wl) ** 2 - ((wl - pl) / safe_wl) ** 2
    gini_r = 1.0 - (pr / safe_wr) ** 2 - ((wr - pr) / safe_wr) ** 2
    cost = np.where(valid, (wl * gini_l + wr * gini_r) / total_w, np.inf)
    # argmin over the transpose scans feature-major, so ties resolve to the
    # lowest feature index, then the lowest threshold
    flat = int(np.argmin(cost.T))
    f_idx, boundary = divmod(flat, n - 1)
    threshold = (xs[boundary, f_idx] + xs[boundary + 1, f_idx]) / 2.0
    return int(columns[f_idx]), float(threshold)


def _build_tree(x, y, w, depth, max_depth, min_samples_split, n_subset, rng):
    total_w = max(w.sum(), 1e-300)
    value = float(w @ (y == 1) / total_w)
    n = x.shape[0]
    leaf = {"leaf": True, "value": value, "n": int(n)}
    if n < min_samples_split or value in (0.0, 1.0):
        return leaf
    if max_depth is not None and depth >= max_depth:
        return leaf
    if n_subset is None:
        columns = np.arange(x.shape[1])
    else:
        columns = np.sort(rng.choice(x.shape[1], size=n_subset, replace=False))
    split = _best_split(x, y, w, columns)
    if split is None:
        return leaf
    f, threshold = split
    go_left = x[:, f] <= threshold
    return {
        "leaf": False,
        "value": value,
        "n": int(n),
        "feature": f,
        "threshold": threshold,
        "left": _build_tree(
            x[go_left], y[go_left], w[go_left],
            depth + 1, max_depth, min_samples_split, n_subset, rng,
        ),
        "right": _build_tree(
            x[~go_left], y[~go_left], w[~go_left],
            depth + 1, max_depth, min_samples_split, n_subset, rng,
        ),
    }


def _tree_leaf_fractions(root, x) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node["leaf"]:
            out[idx] = node["value"]
        else:
            mask = x[idx, node["feature"]] <= node["threshold"]
            stack.append((node["left"], idx[mask]))
            stack.append((node["right"], idx[~mask]))
    return out


def _train_decision_tree(x, y, params) -> dict:
    root = _build_tree(
        x, y, np.ones(len(y)), 0, params["max_depth"], params["min_samples_split"], None, None
    )
    return {"root": root}


def _score_decision_tree(payload, x) -> np.ndarray:
    return _tree_leaf_fractions(payload["root"], x)


def _train_random_forest(x, y, params) -> dict:
    n, d = x.shape
    n_subset = max(1, int(np.sqrt(d)))
    roots = []
    for child_seed in np.random.SeedSequence(int(params["seed"])).spawn(int(params["n_trees"])):
        rng = np.random.default_rng(child_seed)
        sample = rng.integers(n, size=n)
        roots.append(
            _build_tree(
                x[sample], y[sample], np.ones(n),
                0, params["max_depth"], params["min_samples_split"], n_subset, rng,
            )
        )
    return {"roots": roots}


def _score_random_forest(payload, x) -> np.ndarray:
    votes = np.zeros(x.shape[0])
    for root in payload["roots"]:
        votes += _tree_leaf_fractions(root, x) > 0.5
    return votes / len(payload["roots"])


# ---------------------------------------------------------------------------
# logistic regression: L2-regularized maximum likelihood via L-BFGS with an
# analytic gradient; the bias is not regularized


def _train_logistic_regression(x, y, params) -> dict:
    mean, std = _standardize_fit(x)
    xs = (x - mean) / std
    n, d = xs.shape
    lam = float(params["l2"])
    yf = y.astype(np.float64)

    def objective(theta):
        w, b = theta[:d], theta[d]
        z = xs @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - yf * z)) + 0.5 * lam * float(w @ w)
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        grad_w = xs.T @ (p - yf) / n + lam * w
        grad_b = float(np.mean(p - yf))
        return loss, np.append(grad_w, grad_b)

    result = minimize(
        objective,
        np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": int(params["max_iter"])},
    )
    theta = result.x
    return {
        "w": theta[:d].tolist(),
        "b": float(theta[d]),
        "mean": mean.tolist(),
        "std": std.tolist(),
    }


def _score_logistic_regression(payload, x) -> np.ndarray:
    xs = (x - np.asarray(payload["mean"])) / np.asarray(payload["std"])
    z = xs @ np.asarray(payload["w"]) + payload["b"]
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


# ---------------------------------------------------------------------------
# AdaBoost over depth-limited weighted CART trees


def _train_adaboost(x, y, params) -> dict:
    n = x.shape[0]
    y_pm = np.where(y == 1, 1.0, -1.0)
    w = np.full(n, 1.0 / n)
    roots: list[dict] = []
    betas: list[float] = []
    for _ in range(int(params["rounds"])):
        root = _build_tree(x, y, w, 0, params["max_depth"], 2, None, None)
        pred_pm = np.where(_tree_leaf_fractions(root, x) > 0.5, 1.0, -1.0)
        err = float(w[pred_pm != y_pm].sum())
        if err >= 0.5:
            break
        err = max(err, 1e-10)
        beta = 0.5 * np.log((1.0 - err) / err)
        roots.append(root)
        betas.append(float(beta))
        w = w * np.exp(-beta * y_pm * pred_pm)
        w /= w.sum()
        if err <= 1e-10:
            break  # perfect learner; later rounds would only duplicate it
    return {"roots": roots, "betas": betas}


def _score_adaboost(payload, x) -> np.ndarray:
    total = np.zeros(x.shape[0])
    for root, beta in zip(payload["roots"], payload["betas"]):
        total += beta * np.where(_tree_leaf_fractions(root, x) > 0.5, 1.0, -1.0)
    return total


# ---------------------------------------------------------------------------

_TRAINERS = {
    "linear-svm": _train_linear_svm,
    "kernel-svm": _train_kernel_svm,
    "naive-bayes": _train_naive_bayes,
    "decision-tree": _train_decision_tree,
    "random-forest": _train_random_forest,
    "logistic-regression": _train_logistic_regression,
    "adaboost": _train_adaboost,
}

_SCORERS = {
    "linear-svm": _score_linear_svm,
    "kernel-svm": _score_kernel_svm,
    "naive-bayes": _score_naive_bayes,
    "decision-tree": _score_decision_tree,
    "random-forest": _score_random_forest,
    "logistic-regression": _score_logistic_regression,
    "adaboost": _score_adaboost,
}


def train(
    spec: ClassifierSpec,
    features: np.ndarray,
    labels: np.ndarray,
    video_ids: tuple[str, ...] | None = None,
) -> TrainedModel:
    """Fit the classifier named by spec; deterministic for fixed inputs and seed.

    video_ids, when given, is recorded on the model for leakage auditing.
    """
    x, y = _check_xy(features, labels)
    payload = _TRAINERS[spec.kind](x, y, spec.resolved())
    payload["n_features"] = x.shape[1]
    return TrainedModel(kind=spec.kind, payload=payload, trained_on=video_ids)


def predict_score(model: TrainedModel, x: np.ndarray) -> np.ndarray | float:
    """Score rows of x; a single D-vector yields a single float."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2:
        raise DataError(f"scoring input must be 1-D or 2-D, got shape {x.shape}")
    if x.shape[1] != model.payload["n_features"]:
        raise DataError(
            f"model expects {model.payload['n_features']} features, got {x.shape[1]}"
        )
    if not np.isfinite(x).all():
        raise DataError("scoring input contains non-finite values")
    out = _SCORERS[model.kind](model.payload, x)
    return float(out[0]) if single else out


_FORMAT = "classifier"
_VERSION = 1


def save_model(model: TrainedModel, path: str | Path) -> None:
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "kind": model.kind,
        "payload": model.payload,
        "trained_on": list(model.trained_on) if model.trained_on is not None else None,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    if doc.get("format") != _FORMAT or doc.get("version") != _VERSION:
        raise DataError(f"{path}: not a version-{_VERSION} classifier document")
    if doc.get("kind") not in CLASSIFIER_KINDS:
        raise DataError(f"{path}: unknown classifier kind {doc.get('kind')!r}")
    trained_on = doc.get("trained_on")
    return TrainedModel(
        kind=doc["kind"],
        payload=doc["payload"],
        trained_on=tuple(trained_on) if trained_on is not None else None,
    )
