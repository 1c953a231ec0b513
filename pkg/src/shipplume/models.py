"""Per-pixel classifiers: single-feature threshold baselines, class-weighted
logistic regression trained by deterministic full-batch gradient descent, and
gradient-boosted regression trees on the second-order logistic objective.

All fits are deterministic given their seed; models serialize to JSON and
round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import FEATURE_BASE, LabeledDataset

THRESHOLD_FEATURES = ("no2", "moran", "moran_on_high")
GBT_LAMBDA = 1.0  # hessian (L2) regularizer on leaf weights


@dataclass(frozen=True)
class ThresholdModel:
    feature: str        # one of THRESHOLD_FEATURES
    threshold: float

    def __post_init__(self) -> None:
        if self.feature not in THRESHOLD_FEATURES:
            raise ValueError(f"unknown threshold feature: {self.feature}")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


@dataclass
class LogisticModel:
    weights: np.ndarray            # in standardized feature space
    bias: float
    class_weights: tuple[float, float]   # (w_neg, w_pos)
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.feature_mean = np.asarray(self.feature_mean, dtype=float)
        self.feature_std = np.asarray(self.feature_std, dtype=float)


@dataclass
class GBTModel:
    trees: list[dict]
    learning_rate: float
    max_depth: int
    n_trees: int
    min_child_weight: float
    subsample: float
    colsample: float
    gamma: float
    reg_alpha: float
    n_features: int


DEFAULT_GBT_PARAMS = {
    "n_trees": 100,
    "max_depth": 3,
    "learning_rate": 0.3,
    "min_child_weight": 1.0,
    "subsample": 1.0,
    "colsample": 1.0,
    "gamma": 0.0,
    "reg_alpha": 0.0,
}

DEFAULT_LOGISTIC_PARAMS = {"l2": 1e-3, "max_iter": 1000, "lr": 0.5}


def _threshold_values(feature: str, X: np.ndarray,
                      moran_high: np.ndarray | None) -> np.ndarray:
    if feature == "moran":
        return X[:, FEATURE_BASE.index("moran_i")]
    if feature == "no2":
        return X[:, FEATURE_BASE.index("no2")]
    if moran_high is None:
        raise ValueError("moran_on_high values required")
    return np.asarray(moran_high, dtype=float)


def _check_classes(y: np.ndarray) -> None:
    if y.min() == y.max():
        raise ValueError("degenerate labels")


def fit_threshold_values(values: np.ndarray, y: np.ndarray) -> float:
    """Threshold maximizing F1 of (value >= threshold) over the midpoints of
    consecutive distinct values; ties go to the smaller threshold."""
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=int)
    _check_classes(y)
    order = np.argsort(values, kind="stable")
    vs = values[order]
    ys = y[order]
    uniq = np.unique(vs)
    if uniq.size == 1:
        return float(uniq[0])  # no midpoints; predict everything positive
    n = len(vs)
    n_pos = int(ys.sum())
    # predicting v >= midpoint between uniq[i] and uniq[i+1] keeps the suffix
    # that starts at the first occurrence of uniq[i+1]
    starts = np.searchsorted(vs, uniq[1:], side="left")
    suffix_pos = np.concatenate([np.cumsum(ys[::-1])[::-1], [0]])
    tp = suffix_pos[starts]
    pp = n - starts
    f1 = 2.0 * tp / (pp + n_pos)  # 2tp + fp + fn = pp + n_pos
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    best = 0
    for i in range(1, len(mids)):
        if f1[i] > f1[best]:
            best = i
    return float(mids[best])


def fit_threshold(ds: LabeledDataset, feature: str) -> ThresholdModel:
    X = ds.feature_matrix()
    y = ds.labels()
    values = _threshold_values(feature, X, ds.moran_high_values())
    return ThresholdModel(feature=feature,
                          threshold=fit_threshold_values(values, y))


# --- logistic regression ---------------------------------------------------

N_CONTINUOUS = len(FEATURE_BASE)


def standardize_fit(X: np.ndarray, n_continuous: int = N_CONTINUOUS,
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Mean/std of the continuous columns; one-hot columns pass through
    (mean 0, std 1). Constant columns get std 1 so they drop out after
    centering."""
    d = X.shape[1]
    mean = np.zeros(d)
    std = np.ones(d)
    nc = min(n_continuous, d)
    mean[:nc] = X[:, :nc].mean(axis=0)
    s = X[:, :nc].std(axis=0)
    std[:nc] = np.where(s > 0, s, 1.0)
    return mean, std


def logistic_loss_grad(w: np.ndarray, b: float, Xs: np.ndarray, y: np.ndarray,
                       sample_weight: np.ndarray, l2: float,
                       ) -> tuple[float, np.ndarray, float]:
    """Mean weighted cross-entropy plus l2*||w||^2, with its gradient."""
    n = len(y)
    with np.errstate(invalid="ignore", over="ignore"):
        z = Xs @ w + b
        p = expit(z)
        eps = 1e-12
        ce = -(y * np.log(np.clip(p, eps, 1.0))
               + (1 - y) * np.log(np.clip(1.0 - p, eps, 1.0)))
        loss = float(np.mean(sample_weight * ce) + l2 * np.dot(w, w))
        resid = sample_weight * (p - y) / n
        grad_w = Xs.T @ resid + 2.0 * l2 * w
        grad_b = float(resid.sum())
    return loss, grad_w, grad_b


def class_weight_pair(y: np.ndarray) -> tuple[float, float]:
    n = len(y)
    n_pos = int(np.sum(y == 1))
    n_neg = n - n_pos
    return n / (2.0 * n_neg), n / (2.0 * n_pos)


def fit_logistic_arrays(X: np.ndarray, y: np.ndarray, l2: float = 1e-3,
                        max_iter: int = 1000, lr: float = 0.5,
                        n_continuous: int = N_CONTINUOUS) -> LogisticModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_classes(y)
    w_neg, w_pos = class_weight_pair(y)
    sw = np.where(y == 1, w_pos, w_neg)
    mean, std = standardize_fit(X, n_continuous)
    Xs = (X - mean) / std
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(max_iter):
        loss, gw, gb = logistic_loss_grad(w, b, Xs, y, sw, l2)
        if not math.isfinite(loss):
            raise ValueError("divergence (try a smaller lr)")
        if max(float(np.max(np.abs(gw))), abs(gb)) < 1e-6:
            break
        w = w - lr * gw
        b = b - lr * gb
    return LogisticModel(weights=w, bias=b, class_weights=(w_neg, w_pos),
                         feature_mean=mean, feature_std=std)


def fit_logistic(ds: LabeledDataset, l2: float = 1e-3, max_iter: int = 1000,
                 lr: float = 0.5, seed: int = 0) -> LogisticModel:
    del seed  # the optimizer is deterministic; kept for interface symmetry
    return fit_logistic_arrays(ds.feature_matrix(), ds.labels(),
                               l2=l2, max_iter=max_iter, lr=lr)


# --- gradient-boosted trees -------------------------------------------------

def _soft_threshold(G, alpha: float):
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _leaf_score(G, H, alpha: float):
    return _soft_threshold(G, alpha) ** 2 / (H + GBT_LAMBDA)


def leaf_value(G: float, H: float, alpha: float = 0.0) -> float:
    """Optimal leaf weight -G/(H + lambda), soft-thresholded by reg_alpha."""
    return float(-_soft_threshold(G, alpha) / (H + GBT_LAMBDA))


def _grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray,
               feats: np.ndarray, max_depth: int, min_child_weight: float,
               gamma: float, alpha: float, lr: float, depth: int = 0) -> dict:
    G = float(g[idx].sum())
    H = float(h[idx].sum())
    if depth >= max_depth or idx.size < 2:
        return {"leaf": leaf_value(G, H, alpha) * lr}
    parent_score = float(_leaf_score(G, H, alpha))
    best_gain = 0.0
    best: tuple[int, float] | None = None
    for f in feats:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        gs = np.cumsum(g[idx][order])
        hs = np.cumsum(h[idx][order])
        cut = np.nonzero(vs[1:] != vs[:-1])[0]
        if cut.size == 0:
            continue
        GL = gs[cut]
        HL = hs[cut]
        GR = G - GL
        HR = H - HL
        ok = (HL >= min_child_weight) & (HR >= min_child_weight)
        gains = 0.5 * (_leaf_score(GL, HL, alpha) + _leaf_score(GR, HR, alpha)
                       - parent_score) - gamma
        gains = np.where(ok, gains, -np.inf)
        j = int(np.argmax(gains))
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            best = (int(f), float((vs[cut[j]] + vs[cut[j] + 1]) / 2.0))
    if best is None:
        return {"leaf": leaf_value(G, H, alpha) * lr}
    f, thr = best
    mask = X[idx, f] < thr
    return {"feature": f, "threshold": thr,
            "left": _grow_tree(X, g, h, idx[mask], feats, max_depth,
                               min_child_weight, gamma, alpha, lr, depth + 1),
            "right": _grow_tree(X, g, h, idx[~mask], feats, max_depth,
                                min_child_weight, gamma, alpha, lr, depth + 1)}


def eval_tree(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(tree, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if "leaf" in node:
            out[idx] = node["leaf"]
        else:
            mask = X[idx, node["feature"]] < node["threshold"]
            stack.append((node["left"], idx[mask]))
            stack.append((node["right"], idx[~mask]))
    return out


def fit_gbt_arrays(X: np.ndarray, y: np.ndarray, params: dict | None = None,
                   seed: int = 0) -> GBTModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_classes(y)
    p = dict(DEFAULT_GBT_PARAMS)
    if params:
        p.update(params)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    logit = np.zeros(n)
    trees: list[dict] = []
    for _ in range(int(p["n_trees"])):
        prob = expit(logit)
        g = prob - y
        h = prob * (1.0 - prob)
        if p["subsample"] < 1.0:
            m = max(1, int(round(p["subsample"] * n)))
            idx = np.sort(rng.choice(n, size=m, replace=False))
        else:
            idx = np.arange(n)
        if p["colsample"] < 1.0:
            k = max(1, int(round(p["colsample"] * d)))
            feats = np.sort(rng.choice(d, size=k, replace=False))
        else:
            feats = np.arange(d)
        tree = _grow_tree(X, g, h, idx, feats, int(p["max_depth"]),
                          float(p["min_child_weight"]), float(p["gamma"]),
                          float(p["reg_alpha"]), float(p["learning_rate"]))
        trees.append(tree)
        logit += eval_tree(tree, X)
    return GBTModel(trees=trees, learning_rate=float(p["learning_rate"]),
                    max_depth=int(p["max_depth"]), n_trees=int(p["n_trees"]),
                    min_child_weight=float(p["min_child_weight"]),
                    subsample=float(p["subsample"]),
                    colsample=float(p["colsample"]), gamma=float(p["gamma"]),
                    reg_alpha=float(p["reg_alpha"]), n_features=d)


def fit_gbt(ds: LabeledDataset, params: dict | None = None, seed: int = 0) -> GBTModel:
    return fit_gbt_arrays(ds.feature_matrix(), ds.labels(), params, seed)


# --- prediction -------------------------------------------------------------

def _as_matrix(rows) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(rows, LabeledDataset):
        return rows.feature_matrix(), rows.moran_high_values()
    return np.asarray(rows, dtype=float), None


def predict_scores(model, rows, moran_high: np.ndarray | None = None) -> np.ndarray:
    """Probabilities for logistic/GBT models, raw feature values for
    threshold models."""
    X, mh = _as_matrix(rows)
    if moran_high is None:
        moran_high = mh
    if isinstance(model, ThresholdModel):
        if X.shape[1] < len(FEATURE_BASE):
            raise ValueError("feature length mismatch")
        return _threshold_values(model.feature, X, moran_high).astype(float)
    if isinstance(model, LogisticModel):
        if X.shape[1] != len(model.weights):
            raise ValueError("feature length mismatch")
        Xs = (X - model.feature_mean) / model.feature_std
        return expit(Xs @ model.weights + model.bias)
    if isinstance(model, GBTModel):
        if X.shape[1] != model.n_features:
            raise ValueError("feature length mismatch")
        logit = np.zeros(len(X))
        for tree in model.trees:
            logit += eval_tree(tree, X)
        return expit(logit)
    raise TypeError(f"unknown model type: {type(model).__name__}")


def predict_labels(model, rows, moran_high: np.ndarray | None = None,
                   cutoff: float = 0.5) -> np.ndarray:
    """Binary predictions; threshold models compare against their own fitted
    threshold, probabilistic models against the cutoff."""
    scores = predict_scores(model, rows, moran_high)
    if isinstance(model, ThresholdModel):
        return (scores >= model.threshold).astype(int)
    return (scores >= cutoff).astype(int)


# --- model files ------------------------------------------------------------

def model_to_json(model) -> str:
    if isinstance(model, ThresholdModel):
        obj = {"type": "threshold", "feature": model.feature,
               "threshold": model.threshold}
    elif isinstance(model, LogisticModel):
        obj = {"type": "logistic", "weights": list(model.weights),
               "bias": model.bias, "class_weights": list(model.class_weights),
               "feature_mean": list(model.feature_mean),
               "feature_std": list(model.feature_std)}
    elif isinstance(model, GBTModel):
        obj = {"type": "gbt", "trees": model.trees,
               "learning_rate": model.learning_rate,
               "max_depth": model.max_depth, "n_trees": model.n_trees,
               "min_child_weight": model.min_child_weight,
               "subsample": model.subsample, "colsample": model.colsample,
               "gamma": model.gamma, "reg_alpha": model.reg_alpha,
               "n_features": model.n_features}
    else:
        raise TypeError(f"unknown model type: {type(model).__name__}")
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def parse_model_json(text: str):
    obj = json.loads(text)
    kind = obj.get("type")
    if kind == "threshold":
        return ThresholdModel(feature=obj["feature"], threshold=obj["threshold"])
    if kind == "logistic":
        return LogisticModel(weights=np.array(obj["weights"], dtype=float),
                             bias=float(obj["bias"]),
                             class_weights=(obj["class_weights"][0],
                                            obj["class_weights"][1]),
                             feature_mean=np.array(obj["feature_mean"], dtype=float),
                             feature_std=np.array(obj["feature_std"], dtype=float))
    if kind == "gbt":
        return GBTModel(trees=obj["trees"], learning_rate=obj["learning_rate"],
                        max_depth=obj["max_depth"], n_trees=obj["n_trees"],
                        min_child_weight=obj["min_child_weight"],
                        subsample=obj["subsample"], colsample=obj["colsample"],
                        gamma=obj["gamma"], reg_alpha=obj["reg_alpha"],
                        n_features=obj["n_features"])
    raise ValueError(f"unknown model type tag: {kind!r}")


# --- model families for cross-validation ------------------------------------

FAMILY_NAMES = ("no2", "moran", "moran-high", "logistic", "gbt")

DEFAULT_SPACES: dict[str, dict] = {
    "no2": {},
    "moran": {},
    "moran-high": {},
    "logistic": {
        "l2": ("choice", (1e-4, 1e-3, 1e-2, 1e-1, 1.0)),
        "max_iter": ("choice", (200, 500, 1000)),
    },
    "gbt": {
        "gamma": ("uniform", 0.05, 0.5),
        "max_depth": ("choice", (2, 3, 5, 6)),
        "min_child_weight": ("choice", (2, 4, 6, 8, 10, 12)),
        "subsample": ("uniform", 0.6, 1.0),
        "colsample": ("uniform", 0.6, 1.0),
        "learning_rate": ("choice", (0.001, 0.01, 0.1, 0.2, 0.3, 0.4)),
        "reg_alpha": ("choice", (0.0, 1e-5, 5e-4, 1e-3, 1e-2, 0.1, 1.0)),
    },
}

_THRESHOLD_BY_FAMILY = {"no2": "no2", "moran": "moran",
                        "moran-high": "moran_on_high"}


def sample_params(space: dict, rng: np.random.Generator) -> dict:
    """One uniform draw per dimension, iterated in sorted key order."""
    out = {}
    for key in sorted(space):
        kind, *args = space[key]
        if kind == "choice":
            choices = args[0]
            out[key] = choices[int(rng.integers(len(choices)))]
        elif kind == "uniform":
            out[key] = float(rng.uniform(args[0], args[1]))
        else:
            raise ValueError(f"unknown search dimension kind: {kind}")
    return out


def fit_family(family: str, X: np.ndarray, y: np.ndarray,
               moran_high: np.ndarray, params: dict | None = None,
               seed: int = 0):
    if family in _THRESHOLD_BY_FAMILY:
        feature = _THRESHOLD_BY_FAMILY[family]
        values = _threshold_values(feature, X, moran_high)
        return ThresholdModel(feature=feature,
                              threshold=fit_threshold_values(values, y))
    if family == "logistic":
        p = dict(DEFAULT_LOGISTIC_PARAMS)
        if params:
            p.update(params)
        return fit_logistic_arrays(X, y, l2=float(p["l2"]),
                                   max_iter=int(p["max_iter"]),
                                   lr=float(p["lr"]))
    if family == "gbt":
        return fit_gbt_arrays(X, y, params, seed)
    raise ValueError(f"unknown model family: {family}")
