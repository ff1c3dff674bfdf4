"""Regression learners, hyperparameter tuning and feature importance.

Learners: k-nearest neighbours, bagged trees, random forest, extremely
randomized trees, AdaBoost.R2, squared-loss gradient boosting, and an
ordinary least squares linear baseline. Every learner is deterministic given
its ``seed`` hyperparameter.

Random draws: a ``numpy.random.default_rng(seed)`` (PCG64) generator yields
one 63-bit seed per ensemble member, in member order. Each member seed drives
its own PCG64 generator for bootstrap or weighted resampling and a SplitMix64
stream inside the tree kernel for feature subsets and random thresholds.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import _tree
from .errors import DegenerateInputError, SchemaMismatchError, UnsupportedKindError

MODEL_FORMAT = "avm-model"
MODEL_VERSION = 1

LEARNER_KINDS = (
    "knn",
    "bagging",
    "random_forest",
    "extra_trees",
    "adaboost_r2",
    "gradient_boosting",
    "linear_baseline",
)

TREE_KINDS = ("bagging", "random_forest", "extra_trees", "adaboost_r2", "gradient_boosting")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "knn": {"k": 5},
    "bagging": {"n_trees": 300, "max_depth": None, "min_samples_leaf": 1, "max_features_fraction": 1.0, "bootstrap": True},
    "random_forest": {"n_trees": 300, "max_depth": None, "min_samples_leaf": 1, "max_features_fraction": 1 / 3, "bootstrap": True},
    "extra_trees": {"n_trees": 300, "max_depth": None, "min_samples_leaf": 1, "max_features_fraction": 1 / 3, "bootstrap": False},
    "gradient_boosting": {
        "n_trees": 300,
        "max_depth": 3,
        "min_samples_leaf": 1,
        "max_features_fraction": 1.0,
        "learning_rate": 0.1,
    },
    "adaboost_r2": {"n_estimators": 50, "loss_kind": "linear", "max_depth": 3, "min_samples_leaf": 1},
    "linear_baseline": {},
}

__all__ = [
    "LEARNER_KINDS",
    "TREE_KINDS",
    "ModelError",
    "RegressionTree",
    "TrainedModel",
    "resolve_params",
    "fit",
    "fit_arrays",
    "predict",
    "predict_array",
    "tune",
    "tune_and_fit",
    "feature_importance",
    "save_model",
    "load_model",
    "dumps_model",
]


class ModelError(ValueError):
    pass


def resolve_params(kind: str, params: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Fill defaults and validate hyperparameters for ``kind``."""
    if kind not in LEARNER_KINDS:
        raise UnsupportedKindError(f"unknown learner kind {kind!r}")
    out = dict(_DEFAULTS[kind])
    out["seed"] = 0
    for key, val in (params or {}).items():
        if key not in out:
            raise ValueError(f"{kind}: unknown hyperparameter {key!r}")
        out[key] = val
    if kind == "bagging" and out["max_features_fraction"] != 1.0:
        raise ValueError("bagging considers every feature at each split")
    if "k" in out and (int(out["k"]) != out["k"] or out["k"] < 1):
        raise ValueError("k must be an integer >= 1")
    for key in ("n_trees", "n_estimators"):
        if key in out and (int(out[key]) != out[key] or out[key] < 1):
            raise ValueError(f"{key} must be an integer >= 1")
    if "max_features_fraction" in out and not 0 < out["max_features_fraction"] <= 1:
        raise ValueError("max_features_fraction must be in (0, 1]")
    if "learning_rate" in out and not 0 < out["learning_rate"] <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    if "min_samples_leaf" in out and out["min_samples_leaf"] < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    if out.get("max_depth") is not None and out["max_depth"] < 0:
        raise ValueError("max_depth must be >= 0 or None")
    if "loss_kind" in out and out["loss_kind"] not in ("linear", "square", "exponential"):
        raise ValueError("loss_kind must be linear, square or exponential")
    return {k: out[k] for k in sorted(out)}


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    improvement: np.ndarray

    _FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples", "improvement")

    @classmethod
    def grow(cls, X, y, sample_idx, max_depth, min_leaf, mtry, random_split, seed) -> "RegressionTree":
        arrays = _tree.build_tree(
            X,
            y,
            np.ascontiguousarray(sample_idx, dtype=np.int64),
            -1 if max_depth is None else int(max_depth),
            int(min_leaf),
            int(mtry),
            bool(random_split),
            int(seed),
        )
        return cls(*arrays)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _tree.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def importances(self, n_features: int) -> np.ndarray:
        """SSE decrease per feature divided by the root sample count."""
        imp = np.zeros(n_features)
        internal = self.feature >= 0
        np.add.at(imp, self.feature[internal], np.maximum(self.improvement[internal], 0.0))
        return imp / self.n_samples[0]

    def to_dict(self) -> dict:
        return {f: getattr(self, f).tolist() for f in self._FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        ints = {"feature", "left", "right", "n_samples"}
        return cls(
            *(
                np.asarray(d[f], dtype=np.int64 if f in ints else np.float64)
                for f in cls._FIELDS
            )
        )


@dataclass
class TrainedModel:
    kind: str
    params: dict
    schema_fingerprint: str
    feature_names: list
    state: dict
    train_metadata: dict = field(default_factory=dict)
    feature_set: str | None = None
    # FeatureSchema.to_dict() of the training features, when fitted on vectors
    schema: dict | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _member_seeds(seed: int, n: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)]


def _mtry(fraction: float, p: int) -> int:
    return max(1, min(p, math.ceil(fraction * p - 1e-12)))


def _fit_forest(kind, params, X, y):
    n, p = X.shape
    mtry = p if kind == "bagging" else _mtry(params["max_features_fraction"], p)
    trees = []
    for s in _member_seeds(params["seed"], params["n_trees"]):
        if params["bootstrap"]:
            sample = np.random.default_rng(s).integers(0, n, size=n)
        else:
            sample = np.arange(n)
        trees.append(
            RegressionTree.grow(
                X, y, sample, params["max_depth"], params["min_samples_leaf"], mtry, kind == "extra_trees", s
            )
        )
    return {"trees": trees}


def _fit_gradient_boosting(params, X, y):
    n, p = X.shape
    mtry = _mtry(params["max_features_fraction"], p)
    lr = params["learning_rate"]
    init = float(np.mean(y))
    current = np.full(n, init)
    trees = []
    for s in _member_seeds(params["seed"], params["n_trees"]):
        residual = y - current
        tree = RegressionTree.grow(X, residual, np.arange(n), params["max_depth"], params["min_samples_leaf"], mtry, False, s)
        current = current + lr * tree.predict(X)
        trees.append(tree)
    return {"init": init, "learning_rate": lr, "trees": trees}


def _fit_adaboost_r2(params, X, y):
    """AdaBoost.R2 (Drucker, 1997) with weighted resampling."""
    n, p = X.shape
    w = np.full(n, 1.0 / n)
    trees, conf = [], []
    for s in _member_seeds(params["seed"], params["n_estimators"]):
        rng = np.random.default_rng(s)
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        sample = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), n - 1)
        tree = RegressionTree.grow(X, y, sample, params["max_depth"], params["min_samples_leaf"], p, False, s)
        err = np.abs(tree.predict(X) - y)
        emax = err.max()
        if emax <= 0:
            trees.append(tree)
            conf.append(1.0)
            break
        loss = err / emax
        if params["loss_kind"] == "square":
            loss = loss**2
        elif params["loss_kind"] == "exponential":
            loss = 1.0 - np.exp(-loss)
        avg = float(np.sum(w * loss))
        if avg >= 0.5:
            if not trees:
                trees.append(tree)
                conf.append(1.0)
            break
        beta = avg / (1.0 - avg)
        if beta <= 0:
            trees.append(tree)
            conf.append(1.0)
            break
        trees.append(tree)
        conf.append(math.log(1.0 / beta))
        w = w * np.power(beta, 1.0 - loss)
        w /= w.sum()
    return {"trees": trees, "confidence": conf}


def _fit_knn(params, X, y):
    if params["k"] > len(y):
        raise DegenerateInputError(f"k={params['k']} exceeds {len(y)} training rows")
    return {"X": X.copy(), "y": y.copy()}


def _fit_linear(X, y):
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return {"intercept": float(coef[0]), "coef": coef[1:].copy()}


def fit_arrays(kind: str, params: Mapping[str, Any] | None, X, y, feature_names=None, schema_fingerprint=None, feature_set=None, train_metadata=None) -> TrainedModel:
    """Fit a learner on a dense design matrix."""
    params = resolve_params(kind, params)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"bad shapes X{X.shape}, y{y.shape}")
    if X.shape[0] < 2:
        raise DegenerateInputError("need at least 2 training rows")
    if np.all(y == y[0]):
        raise DegenerateInputError("training target is constant")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DegenerateInputError("non-finite training values")
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length does not match X")
    if schema_fingerprint is None:
        schema_fingerprint = hashlib.sha256(json.dumps(names).encode()).hexdigest()[:16]
    if kind in ("bagging", "random_forest", "extra_trees"):
        state = _fit_forest(kind, params, X, y)
    elif kind == "gradient_boosting":
        state = _fit_gradient_boosting(params, X, y)
    elif kind == "adaboost_r2":
        state = _fit_adaboost_r2(params, X, y)
    elif kind == "knn":
        state = _fit_knn(params, X, y)
    else:
        state = _fit_linear(X, y)
    meta = {"n_train": int(X.shape[0]), "timestamp": None}
    meta.update(train_metadata or {})
    return TrainedModel(kind, params, schema_fingerprint, names, state, meta, feature_set)


def fit(kind: str, params: Mapping[str, Any] | None, train: Sequence, train_metadata=None) -> TrainedModel:
    """Fit on a sequence of :class:`avm.features.FeatureVector`."""
    if not len(train):
        raise DegenerateInputError("empty training set")
    schema = train[0].schema
    for v in train:
        if v.schema.fingerprint != schema.fingerprint:
            raise SchemaMismatchError("training vectors come from different schemas")
        if v.target is None:
            raise ValueError(f"training vector {v.record_id} has no target")
    X = np.vstack([v.values for v in train])
    y = np.array([v.target for v in train], dtype=float)
    model = fit_arrays(
        kind,
        params,
        X,
        y,
        feature_names=schema.feature_names,
        schema_fingerprint=schema.fingerprint,
        feature_set=schema.set_kind,
        train_metadata=train_metadata,
    )
    model.schema = schema.to_dict()
    return model


def _weighted_median(preds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise weighted median of member predictions ``(n, m)``."""
    order = np.argsort(preds, axis=1, kind="stable")
    cdf = np.cumsum(weights[order], axis=1)
    pos = np.argmax(cdf >= 0.5 * cdf[:, -1:], axis=1)
    return preds[np.arange(preds.shape[0]), order[np.arange(preds.shape[0]), pos]]


def _knn_predict(state, k, X):
    Xt, yt = state["X"], state["y"]
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        diff = Xt - x
        d = np.einsum("ij,ij->i", diff, diff)
        nearest = np.argsort(d, kind="stable")[:k]
        out[i] = np.mean(yt[nearest])
    return out


def member_predictions(model: TrainedModel, X) -> np.ndarray:
    """Per-member predictions ``(n, n_members)`` for tree ensembles."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    trees = model.state["trees"]
    return np.column_stack([t.predict(X) for t in trees])


def predict_array(model: TrainedModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise SchemaMismatchError(f"model expects {model.n_features} features, got {X.shape[1]}")
    kind, st = model.kind, model.state
    if kind in ("bagging", "random_forest", "extra_trees"):
        return member_predictions(model, X).mean(axis=1)
    if kind == "gradient_boosting":
        out = np.full(X.shape[0], st["init"])
        for t in st["trees"]:
            out = out + st["learning_rate"] * t.predict(X)
        return out
    if kind == "adaboost_r2":
        return _weighted_median(member_predictions(model, X), np.asarray(st["confidence"]))
    if kind == "knn":
        return _knn_predict(st, model.params["k"], X)
    return st["intercept"] + X @ st["coef"]


def _check_vector(model, x):
    if x.schema.fingerprint != model.schema_fingerprint:
        raise SchemaMismatchError(
            f"vector schema {x.schema.fingerprint} does not match model schema {model.schema_fingerprint}"
        )


def predict(model: TrainedModel, x) -> float:
    """Predicted target for one :class:`avm.features.FeatureVector`."""
    _check_vector(model, x)
    return float(predict_array(model, x.values)[0])


def predict_many(model: TrainedModel, xs: Sequence) -> np.ndarray:
    for x in xs:
        _check_vector(model, x)
    return predict_array(model, np.vstack([x.values for x in xs]))


def _me_keur(model, vectors) -> float:
    pred = predict_many(model, vectors)
    scale = np.array([v.target_scale for v in vectors])
    y = np.array([v.target for v in vectors])
    err = (pred - y) * scale
    return math.sqrt(float(np.mean(err**2))) / 1000.0


def tune_and_fit(kind: str, grid: Sequence[Mapping[str, Any]], train: Sequence, validation: Sequence):
    """Like :func:`tune` but also returns the model fitted with the winner."""
    if not grid:
        raise ValueError("empty hyperparameter grid")
    table = []
    best, best_me, best_model = None, math.inf, None
    for point in grid:
        try:
            model = fit(kind, point, train)
            me = _me_keur(model, validation)
        except (DegenerateInputError, ValueError) as exc:
            table.append((dict(point), None, str(exc)))
            continue
        table.append((dict(point), me))
        if me < best_me:
            best, best_me, best_model = dict(point), me, model
    if best is None:
        raise ModelError(f"every grid point failed for {kind}: {[row[-1] for row in table]}")
    return best_model, best, table


def tune(kind: str, grid: Sequence[Mapping[str, Any]], train: Sequence, validation: Sequence):
    """Pick the grid point with the lowest validation mean error.

    Returns ``(best_params, table)``; ``table`` rows are
    ``(params, validation_me_keur)`` in grid order, with ``None`` as the
    score and the error message appended for grid points whose fit failed.
    Ties go to the earlier grid point.
    """
    _, best, table = tune_and_fit(kind, grid, train, validation)
    return best, table


def feature_importance(model: TrainedModel, top: int = 9) -> list[tuple[str, float]]:
    """Mean SSE-decrease importance, top ``top`` features rescaled to sum 100.

    Per tree, a split contributes its decrease in squared error divided by
    the number of samples at the root; contributions are summed per feature
    and averaged over trees. The returned list is sorted by decreasing
    importance (ties: lower feature index first).
    """
    if model.kind not in TREE_KINDS:
        raise UnsupportedKindError(f"feature importance is undefined for {model.kind}")
    trees = model.state["trees"]
    imp = np.mean([t.importances(model.n_features) for t in trees], axis=0)
    order = sorted(range(len(imp)), key=lambda i: (-imp[i], i))[:top]
    total = float(sum(imp[i] for i in order))
    if total <= 0:
        share = 100.0 / len(order)
        return [(model.feature_names[i], share) for i in order]
    return [(model.feature_names[i], 100.0 * (float(imp[i]) / total)) for i in order]


# serialization ---------------------------------------------------------------


def _state_to_json(kind, state):
    if kind in TREE_KINDS:
        out = {k: v for k, v in state.items() if k != "trees"}
        out["trees"] = [t.to_dict() for t in state["trees"]]
        return out
    if kind == "knn":
        return {"X": state["X"].tolist(), "y": state["y"].tolist()}
    return {"intercept": state["intercept"], "coef": state["coef"].tolist()}


def _state_from_json(kind, d):
    if kind in TREE_KINDS:
        out = dict(d)
        out["trees"] = [RegressionTree.from_dict(t) for t in d["trees"]]
        return out
    if kind == "knn":
        return {"X": np.asarray(d["X"], dtype=float), "y": np.asarray(d["y"], dtype=float)}
    return {"intercept": float(d["intercept"]), "coef": np.asarray(d["coef"], dtype=float)}


def dumps_model(model: TrainedModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "params": model.params,
        "feature_set": model.feature_set,
        "schema_fingerprint": model.schema_fingerprint,
        "feature_names": model.feature_names,
        "train_metadata": model.train_metadata,
        "schema": model.schema,
        "state": _state_to_json(model.kind, model.state),
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def loads_model(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')}")
    return TrainedModel(
        kind=doc["kind"],
        params=doc["params"],
        schema_fingerprint=doc["schema_fingerprint"],
        feature_names=doc["feature_names"],
        state=_state_from_json(doc["kind"], doc["state"]),
        train_metadata=doc["train_metadata"],
        feature_set=doc["feature_set"],
        schema=doc.get("schema"),
    )


def load_model(path) -> TrainedModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
