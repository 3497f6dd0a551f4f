"""Gradient-boosted regression trees with a second-order squared-error objective.

Each round fits one tree to the gradients ``g = pred - y`` (hessians are 1)
using exact greedy split search, L2-regularized leaf weights
``w = -G / (H + lambda)`` and shrinkage by ``learning_rate``. Row and column
subsampling are drawn once per tree from an RNG seeded by ``(seed, tree_index)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import NumericError, ValidationError

MODEL_FORMAT = "lgdlab.gbt/1"


@dataclass(frozen=True)
class GbtParams:
    learning_rate: float = 0.1
    max_depth: int = 6
    n_estimators: int = 100
    subsample: float = 1.0
    min_child_weight: float = 1.0
    colsample_bytree: float = 1.0
    reg_lambda: float = 1.0
    base_score: float | None = None
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not 0 < self.learning_rate <= 1:
            problems.append(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            problems.append(f"max_depth must be an integer >= 1, got {self.max_depth}")
        if int(self.n_estimators) != self.n_estimators or self.n_estimators < 1:
            problems.append(f"n_estimators must be an integer >= 1, got {self.n_estimators}")
        if not 0 < self.subsample <= 1:
            problems.append(f"subsample must be in (0, 1], got {self.subsample}")
        if not 0 < self.colsample_bytree <= 1:
            problems.append(f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}")
        if self.min_child_weight < 0:
            problems.append(f"min_child_weight must be >= 0, got {self.min_child_weight}")
        if self.reg_lambda < 0:
            problems.append(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if self.base_score is not None and not math.isfinite(self.base_score):
            problems.append("base_score must be finite")
        if int(self.seed) != self.seed or self.seed < 0:
            problems.append(f"seed must be a non-negative integer, got {self.seed}")
        if problems:
            raise ValidationError("; ".join(problems))
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "n_estimators", int(self.n_estimators))
        object.__setattr__(self, "seed", int(self.seed))

    def with_updates(self, **changes) -> "GbtParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GbtParams":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown GbtParams keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Tree:
    """Flattened binary tree; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] < threshold`` go to ``left``. ``value`` holds the
    unshrunk leaf weight and ``hess`` the training hessian sum of each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    hess: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == _kernels.LEAF)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != _kernels.LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "hess": self.hess.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int32),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int32),
            right=np.asarray(data["right"], dtype=np.int32),
            value=np.asarray(data["value"], dtype=np.float64),
            hess=np.asarray(data["hess"], dtype=np.float64),
        )


@dataclass(frozen=True)
class GbtModel:
    params: GbtParams
    base_score: float
    trees: tuple[Tree, ...]
    feature_names: tuple[str, ...]
    train_loss: tuple[float, ...] = field(default=(), compare=False)

    @cached_property
    def _flat(self):
        if not self.trees:
            empty_i = np.zeros(0, dtype=np.int32)
            empty_f = np.zeros(0, dtype=np.float64)
            return empty_i, empty_f, empty_i, empty_i, empty_f, empty_i
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]]).astype(np.int32)
        feature = np.concatenate([t.feature for t in self.trees]).astype(np.int32)
        threshold = np.concatenate([t.threshold for t in self.trees])
        value = np.concatenate([t.value for t in self.trees])
        left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offsets)])
        right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offsets)])
        return feature, threshold, left.astype(np.int32), right.astype(np.int32), value, offsets

    def _check_X(self, X) -> np.ndarray:
        if hasattr(X, "columns"):
            cols = tuple(str(c) for c in X.columns)
            if cols != self.feature_names:
                raise ValidationError(
                    f"feature columns {list(cols)} do not match model schema {list(self.feature_names)}"
                )
            X = X.to_numpy(dtype=np.float64)
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValidationError(
                f"expected a 2-D matrix with {len(self.feature_names)} columns, got shape {X.shape}"
            )
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        feature, threshold, left, right, value, roots = self._flat
        return _kernels.ensemble_predict(
            X, feature, threshold, left, right, value, roots,
            float(self.base_score), float(self.params.learning_rate),
        )

    def leaf_weights(self, X) -> np.ndarray:
        """Unshrunk leaf weight reached by each row in each tree, shape (n_rows, n_trees).

        ``predict(X)`` equals ``base_score + learning_rate * sum_k leaf_weights[:, k]``
        with the sum accumulated in tree order.
        """
        X = self._check_X(X)
        feature, threshold, left, right, value, roots = self._flat
        return _kernels.ensemble_leaf_matrix(X, feature, threshold, left, right, value, roots)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "params": self.params.to_dict(),
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "train_loss": list(self.train_loss),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GbtModel":
        if data.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a {MODEL_FORMAT} document (format={data.get('format')!r})")
        return cls(
            params=GbtParams.from_dict(data["params"]),
            base_score=float(data["base_score"]),
            trees=tuple(Tree.from_dict(t) for t in data["trees"]),
            feature_names=tuple(data["feature_names"]),
            train_loss=tuple(float(v) for v in data.get("train_loss", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "GbtModel":
        return cls.from_dict(json.loads(text))


def leaf_weight(gradient_sum: float, hessian_sum: float, reg_lambda: float) -> float:
    denom = hessian_sum + reg_lambda
    if not denom > 0:
        raise NumericError(f"hessian_sum + reg_lambda must be positive, got {denom}")
    return -gradient_sum / denom


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def best_split(X, grad, hess, min_child_weight: float = 1.0, reg_lambda: float = 1.0,
               features: Sequence[int] | None = None) -> Split | None:
    """Best exact-greedy split of one node, or None when nothing has positive gain.

    Candidate thresholds are midpoints between consecutive distinct values of each
    feature; both children must keep a hessian sum of at least ``min_child_weight``.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    grad = np.asarray(grad, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    if X.shape[0] < 2:
        return None
    G, H = grad.sum(), hess.sum()
    parent = G * G / (H + reg_lambda)
    best: Split | None = None
    for f in (range(X.shape[1]) if features is None else sorted(features)):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        GL = np.cumsum(grad[order])[:-1]
        HL = np.cumsum(hess[order])[:-1]
        GR, HR = G - GL, H - HL
        ok = (xs[:-1] != xs[1:]) & (HL >= min_child_weight) & (HR >= min_child_weight)
        if not ok.any():
            continue
        gain = 0.5 * (GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda) - parent)
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > 0 and (best is None or gain[i] > best.gain):
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            best = Split(f, float(thr if thr > lo else hi), float(gain[i]))
    return best


class _Presorted:
    """Per-feature ranks and sort orders of a training matrix, computed once per fit."""

    def __init__(self, X: np.ndarray):
        n, p = X.shape
        self.codes = np.empty((p, n), dtype=np.int32)
        self.orders = np.empty((p, n), dtype=np.int32)
        self.sorted_codes = np.empty((p, n), dtype=np.int32)
        uniqs, offsets = [], [0]
        for f in range(p):
            u, inv = np.unique(X[:, f], return_inverse=True)
            self.codes[f] = inv
            self.orders[f] = np.argsort(inv, kind="stable")
            self.sorted_codes[f] = inv[self.orders[f]]
            uniqs.append(u)
            offsets.append(offsets[-1] + len(u))
        self.uniq = np.concatenate(uniqs) if uniqs else np.zeros(0)
        self.uniq_offset = np.asarray(offsets[:-1], dtype=np.int64)


def _as_matrix(X) -> tuple[np.ndarray, tuple[str, ...]]:
    if hasattr(X, "columns"):
        names = tuple(str(c) for c in X.columns)
        X = X.to_numpy(dtype=np.float64)
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        names = tuple(f"f{i}" for i in range(X.shape[1]))
    return np.ascontiguousarray(X), names


def _stable_mean(y: np.ndarray) -> float:
    # exact for constant targets, so their residuals are exactly zero
    return float(y[0] + np.mean(y - y[0]))


def train(X, y, params: GbtParams, feature_names: Sequence[str] | None = None) -> GbtModel:
    X, names = _as_matrix(X)
    if feature_names is not None:
        names = tuple(feature_names)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValidationError("training data is empty")
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if len(names) != X.shape[1]:
        raise ValidationError("feature_names length does not match the number of columns")
    if not np.isfinite(X).all():
        raise ValidationError("feature matrix contains missing or non-finite values")
    if not np.isfinite(y).all():
        raise ValidationError("targets contain missing or non-finite values")

    n, p = X.shape
    pre = _Presorted(X)
    base = _stable_mean(y) if params.base_score is None else float(params.base_score)
    pred = np.full(n, base)
    n_rows = max(1, int(round(params.subsample * n)))
    n_cols = max(1, math.ceil(params.colsample_bytree * p - 1e-9))
    all_rows = np.ones(n, dtype=np.bool_)
    all_cols = np.arange(p, dtype=np.int64)

    trees: list[Tree] = []
    losses: list[float] = []
    for t in range(params.n_estimators):
        rng = np.random.default_rng([params.seed, t])
        if n_rows < n:
            mask = np.zeros(n, dtype=np.bool_)
            mask[rng.choice(n, n_rows, replace=False)] = True
        else:
            mask = all_rows
        feats = np.sort(rng.choice(p, n_cols, replace=False)) if n_cols < p else all_cols
        grad = pred - y
        tree = Tree(*_kernels.grow_tree(
            pre.codes, pre.orders, pre.sorted_codes, pre.uniq, pre.uniq_offset, grad, mask,
            feats.astype(np.int64), params.max_depth, float(params.min_child_weight),
            float(params.reg_lambda),
        ))
        trees.append(tree)
        pred += params.learning_rate * _kernels.tree_leaf_values(
            X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, 0
        )
        losses.append(float(np.mean((pred - y) ** 2)))

    return GbtModel(params=params, base_score=base, trees=tuple(trees),
                    feature_names=names, train_loss=tuple(losses))


def predict(model: GbtModel, X) -> np.ndarray:
    return model.predict(X)
