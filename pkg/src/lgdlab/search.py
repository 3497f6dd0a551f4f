"""Hyperparameter search with k-fold cross-validation minimizing MSE.

Candidate ``i`` of a randomized search is a pure function of ``(seed, i)``, so the
first 25 candidates of a 60-candidate run are exactly those of a 25-candidate run
with the same seed, and results do not depend on execution order.
"""

from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, ValidationError
from .gbt import GbtParams, _as_matrix, train

SEARCHABLE = ("learning_rate", "max_depth", "n_estimators", "subsample", "min_child_weight", "colsample_bytree")
INTEGER_PARAMS = {"max_depth", "n_estimators"}
DEFAULT_GRID_BUDGET = 10_000


@dataclass(frozen=True)
class Interval:
    """Uniform range; continuous ranges are materialized as ``n_draws`` seeded draws."""

    low: float
    high: float
    integer: bool = False
    n_draws: int = 15

    def __post_init__(self):
        if not self.high >= self.low:
            raise ConfigurationError(f"interval high {self.high} is below low {self.low}")
        if self.n_draws < 1:
            raise ConfigurationError("n_draws must be >= 1")

    def materialize(self, rng: np.random.Generator) -> list:
        if self.integer:
            return list(range(int(self.low), int(self.high) + 1))
        return [float(v) for v in rng.uniform(self.low, self.high, size=self.n_draws)]


Dimension = Union[Sequence, Interval]


@dataclass
class ParamSpace:
    """Per-hyperparameter value lists or intervals, plus fixed values for everything else."""

    dims: dict[str, Dimension]
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.dims) - set(SEARCHABLE)
        if unknown:
            raise ConfigurationError(f"unknown search dimensions: {sorted(unknown)}")
        clash = set(self.dims) & set(self.fixed)
        if clash:
            raise ConfigurationError(f"dimensions both searched and fixed: {sorted(clash)}")
        for name, dim in self.dims.items():
            if not isinstance(dim, Interval) and len(dim) == 0:
                raise ConfigurationError(f"dimension {name} has no values")
        try:
            GbtParams(**self.fixed)
        except (TypeError, ValidationError) as exc:
            raise ConfigurationError(f"invalid fixed parameters: {exc}") from None

    @property
    def is_finite(self) -> bool:
        return not any(isinstance(d, Interval) for d in self.dims.values())

    def grid_size(self) -> int:
        if not self.is_finite:
            raise ConfigurationError("grid size is undefined for interval dimensions")
        return int(np.prod([len(d) for d in self.dims.values()], dtype=object))

    def materialize(self, seed: int) -> dict[str, list]:
        """Finite value list per dimension; interval draws come from ``(seed, dimension)`` streams."""
        out = {}
        for j, name in enumerate(SEARCHABLE):
            if name not in self.dims:
                continue
            dim = self.dims[name]
            if isinstance(dim, Interval):
                out[name] = dim.materialize(np.random.default_rng([seed, 0x51, j]))
            else:
                out[name] = [int(v) if name in INTEGER_PARAMS else float(v) for v in dim]
        return out

    def make_params(self, values: dict, seed: int) -> GbtParams:
        try:
            return GbtParams(**{**self.fixed, **values, "seed": seed})
        except ValidationError as exc:
            raise ConfigurationError(f"search space produced invalid parameters: {exc}") from None

    def to_dict(self) -> dict:
        dims = {}
        for name, d in self.dims.items():
            if isinstance(d, Interval):
                dims[name] = {"low": d.low, "high": d.high, "integer": d.integer, "n_draws": d.n_draws}
            else:
                dims[name] = list(d)
        return {"dims": dims, "fixed": dict(self.fixed)}

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSpace":
        unknown = set(data) - {"dims", "fixed"}
        if unknown:
            raise ConfigurationError(f"unknown ParamSpace keys: {sorted(unknown)}")
        dims = {}
        for name, d in data.get("dims", {}).items():
            if isinstance(d, dict):
                extra = set(d) - {"low", "high", "integer", "n_draws"}
                if extra:
                    raise ConfigurationError(f"unknown interval keys for {name}: {sorted(extra)}")
                dims[name] = Interval(**d)
            else:
                dims[name] = list(d)
        return cls(dims, dict(data.get("fixed", {})))


def table_grid(fixed: dict | None = None) -> ParamSpace:
    """The reference hyperparameter grid (70875 combinations)."""
    return ParamSpace({
        "learning_rate": [0.01, 0.05, 0.075, 0.1, 0.2],
        "max_depth": list(range(7, 16)),
        "n_estimators": [700, 800, 900, 1000, 1100, 1150, 1200, 1250, 1300],
        "subsample": [0.6, 0.7, 0.75, 0.8, 0.85],
        "min_child_weight": [2, 3, 4, 5, 6],
        "colsample_bytree": [0.7, 0.8, 0.85, 0.9, 0.91, 0.92, 0.95],
    }, dict(fixed or {}))


def sensitivity_space(fixed: dict | None = None) -> ParamSpace:
    """Wider interval space used by the hyperparameter sensitivity run."""
    return ParamSpace({
        "learning_rate": Interval(0.01, 0.2),
        "max_depth": Interval(6, 16, integer=True),
        "n_estimators": Interval(900, 1400, integer=True),
        "subsample": Interval(0.6, 0.9),
        "min_child_weight": Interval(3, 7, integer=True),
        "colsample_bytree": Interval(0.7, 0.95),
    }, dict(fixed or {}))


@dataclass(frozen=True)
class CvScore:
    mean_mse: float
    mean_mae: float
    sd_error: float
    per_fold: tuple[float, ...]
    per_fold_mae: tuple[float, ...] = ()


@dataclass(frozen=True)
class Candidate:
    params: GbtParams
    fold_mse: tuple[float, ...]
    fold_mae: tuple[float, ...]
    mean_mse: float
    mean_mae: float
    sd_error: float


@dataclass(frozen=True)
class SearchResult:
    candidates: tuple[Candidate, ...]
    best_index: int
    seed: int
    n_folds: int
    n_iter: int
    n_fits: int
    mode: str = "random"

    @property
    def best(self) -> Candidate:
        return self.candidates[self.best_index]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "seed": self.seed, "n_folds": self.n_folds, "n_iter": self.n_iter,
            "n_fits": self.n_fits, "best_index": self.best_index,
            "candidates": [
                {"params": c.params.to_dict(), "fold_mse": list(c.fold_mse), "fold_mae": list(c.fold_mae),
                 "mean_mse": c.mean_mse, "mean_mae": c.mean_mae, "sd_error": c.sd_error}
                for c in self.candidates
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        cands = tuple(
            Candidate(GbtParams.from_dict(c["params"]), tuple(c["fold_mse"]), tuple(c["fold_mae"]),
                      c["mean_mse"], c["mean_mae"], c["sd_error"])
            for c in d["candidates"]
        )
        return cls(cands, d["best_index"], d["seed"], d["n_folds"], d["n_iter"], d["n_fits"], d.get("mode", "random"))

    def summary_rows(self) -> list[dict]:
        rows = []
        for i, c in enumerate(self.candidates):
            row = {"candidate": i, **{k: getattr(c.params, k) for k in SEARCHABLE}}
            row.update(mean_mse=c.mean_mse, mean_mae=c.mean_mae, sd_error=c.sd_error, best=int(i == self.best_index))
            rows.append(row)
        return rows


def worker_count() -> int:
    """Thread cap from ``LGDLAB_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("LGDLAB_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"LGDLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigurationError("LGDLAB_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def kfold_split(keys, k: int, seed: int) -> list[list]:
    """Partition the distinct group keys into ``k`` folds whose sizes differ by at most one."""
    groups = sorted(set(keys))
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    if k > len(groups):
        raise ConfigurationError(f"k = {k} exceeds the number of groups ({len(groups)})")
    order = np.random.default_rng([seed, 0xF01D]).permutation(len(groups))
    return [[groups[i] for i in part] for part in np.array_split(order, k)]


def _group_labels(groups, n: int) -> list:
    if groups is None:
        return list(range(n))
    labels = [tuple(g) if isinstance(g, (list, np.ndarray)) else g for g in groups]
    if len(labels) != n:
        raise ValidationError(f"groups has {len(labels)} entries for {n} rows")
    return labels


def _fold_masks(labels: list, k: int, seed: int) -> list[np.ndarray]:
    folds = kfold_split(labels, k, seed)
    fold_of = {g: f for f, part in enumerate(folds) for g in part}
    assign = np.fromiter((fold_of[g] for g in labels), dtype=np.int64, count=len(labels))
    return [assign == f for f in range(k)]


def _evaluate(X, y, masks, params, names) -> tuple[list[float], list[float]]:
    mses, maes = [], []
    for test in masks:
        model = train(X[~test], y[~test], params, names)
        err = model.predict(X[test]) - y[test]
        mses.append(float(np.mean(err ** 2)))
        maes.append(float(np.mean(np.abs(err))))
    return mses, maes


def _aggregate(mses, maes) -> tuple[float, float, float]:
    # fold spread uses the population standard deviation, as common CV tooling reports it
    return float(np.mean(mses)), float(np.mean(maes)), float(np.std(mses))


def cv_score(X, y, groups, params: GbtParams, k: int = 5, seed: int = 0) -> CvScore:
    X, names = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    masks = _fold_masks(_group_labels(groups, len(y)), k, seed)
    mses, maes = _evaluate(X, y, masks, params, names)
    mean_mse, mean_mae, sd = _aggregate(mses, maes)
    return CvScore(mean_mse, mean_mae, sd, tuple(mses), tuple(maes))


def candidate_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def sample_candidates(space: ParamSpace, n_iter: int, seed: int) -> list[GbtParams]:
    values = space.materialize(seed)
    out = []
    for i in range(n_iter):
        rng = np.random.default_rng([seed, i])
        pick = {name: vals[int(rng.integers(len(vals)))] for name, vals in values.items()}
        out.append(space.make_params(pick, candidate_seed(seed, i)))
    return out


def _run(candidates: list[GbtParams], X, y, groups, k: int, seed: int, mode: str, n_iter: int,
         threads: int | None) -> SearchResult:
    X, names = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    masks = _fold_masks(_group_labels(groups, len(y)), k, seed)
    workers = worker_count() if threads is None else max(1, threads)

    def job(p):
        return _evaluate(X, y, masks, p, names)

    if workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, candidates))
    else:
        outcomes = [job(p) for p in candidates]

    results = []
    n_fits = 0
    for p, (mses, maes) in zip(candidates, outcomes):
        n_fits += len(mses)
        mean_mse, mean_mae, sd = _aggregate(mses, maes)
        results.append(Candidate(p, tuple(mses), tuple(maes), mean_mse, mean_mae, sd))
    best = min(range(len(results)), key=lambda i: (results[i].mean_mse, i))
    return SearchResult(tuple(results), best, seed, k, n_iter, n_fits, mode)


def random_search(space: ParamSpace, n_iter: int, k: int, seed: int, X, y, groups=None,
                  threads: int | None = None) -> SearchResult:
    if n_iter < 1:
        raise ConfigurationError(f"n_iter must be >= 1, got {n_iter}")
    candidates = sample_candidates(space, n_iter, seed)
    return _run(candidates, X, y, groups, k, seed, "random", n_iter, threads)


def grid_search(space: ParamSpace, k: int, seed: int, X, y, groups=None,
                budget: int = DEFAULT_GRID_BUDGET, threads: int | None = None) -> SearchResult:
    if not space.is_finite:
        raise ConfigurationError("grid search needs finite value lists for every dimension")
    size = space.grid_size()
    if size > budget:
        raise ConfigurationError(f"grid has {size} combinations, above the budget of {budget}")
    values = space.materialize(seed)
    names = list(values)
    candidates = [
        space.make_params(dict(zip(names, combo)), candidate_seed(seed, i))
        for i, combo in enumerate(itertools.product(*(values[n] for n in names)))
    ]
    return _run(candidates, X, y, groups, k, seed, "grid", len(candidates), threads)
