"""Evaluation protocol: temporal splits, status-split models, metrics and sensitivity runs.

Models are compared on identical row sets. Out-of-date rows are the last
``ood_months`` months of the observation window; the rest is split into train and
out-of-sample, by spell by default so one default never straddles the split.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .cashflow import DiscountPolicy, cap_unit, portfolio_lgd
from .delta_os import portfolio_delta_os
from .domain import LOSS_GROUP, NO_LOSS_GROUP, DefaultSpell, MacroSeries
from .errors import ConfigurationError, ValidationError
from .features import (DELTA_OS_INPUTS, FEATURE_COLUMNS, KEY_COLUMNS, STATUS_COLUMN, TARGET_COLUMN,
                       WITHOUT_RLGD_OS, build_feature_matrix)
from .gbt import GbtModel, train
from .search import Interval, ParamSpace, SearchResult, random_search, sensitivity_space, table_grid

DELTA_OS = "DeltaOutstanding"
GBT_TOTAL = "GBT_total"
GBT_SPLIT = "GBT_loss_plus_noloss"
GBT_NOLOSS = "GBT_noloss"
GBT_LOSS = "GBT_loss"
SA_HYP = "GBT_SA_hyp"
SA_VAR1 = "GBT_SA_var1"
SA_VAR2 = "GBT_SA_var2"
SAMPLES = ("cv", "out_of_sample", "out_of_date")


class SplitUnit(str, enum.Enum):
    BY_SPELL = "by_spell"
    BY_ROW = "by_row"


@dataclass(frozen=True)
class SplitSpec:
    ood_months: int = 6
    train_fraction_of_remainder: float = 75 / 95
    unit: SplitUnit = SplitUnit.BY_SPELL
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "unit", SplitUnit(self.unit))
        if not 0 < self.train_fraction_of_remainder < 1:
            raise ConfigurationError("train_fraction_of_remainder must be in (0, 1)")
        if self.ood_months < 1:
            raise ConfigurationError("ood_months must be >= 1")


@dataclass(frozen=True)
class SearchConfig:
    """Search settings shared by every model of a benchmark run."""

    space: ParamSpace = field(default_factory=table_grid)
    n_iter: int = 25
    k: int = 5
    seed: int = 0
    row_level_folds: bool = False
    sensitivity_space: ParamSpace = field(default_factory=sensitivity_space)
    sensitivity_n_iter: int = 60

    def __post_init__(self):
        if self.n_iter < 1 or self.sensitivity_n_iter < 1:
            raise ConfigurationError("n_iter must be >= 1")
        if self.k < 2:
            raise ConfigurationError("k must be >= 2")

    @classmethod
    def reference(cls, seed: int = 0) -> "SearchConfig":
        """Full-size grid and iteration counts (hours of CPU time at portfolio scale)."""
        return cls(seed=seed)

    @classmethod
    def laptop(cls, seed: int = 0) -> "SearchConfig":
        """Same six hyperparameters and search protocol on shallower, shorter ensembles.

        Sized so the full benchmark on a default synthetic portfolio runs in minutes
        on a single core.
        """
        grid = ParamSpace({
            "learning_rate": [0.075, 0.1, 0.2],
            "max_depth": [3, 4, 5, 6],
            "n_estimators": [40, 50, 60, 70],
            "subsample": [0.6, 0.7, 0.75, 0.8, 0.85],
            "min_child_weight": [2, 3, 4, 5, 6],
            "colsample_bytree": [0.7, 0.8, 0.85, 0.9, 0.91, 0.92, 0.95],
        })
        intervals = ParamSpace({
            "learning_rate": Interval(0.05, 0.3),
            "max_depth": Interval(3, 7, integer=True),
            "n_estimators": Interval(40, 90, integer=True),
            "subsample": Interval(0.6, 0.9),
            "min_child_weight": Interval(3, 7, integer=True),
            "colsample_bytree": Interval(0.7, 0.95),
        })
        return cls(space=grid, n_iter=25, k=5, seed=seed, sensitivity_space=intervals, sensitivity_n_iter=60)


class Metrics(NamedTuple):
    mae: float
    mse: float
    sd_error: float
    n: int


def compute_metrics(predictions, targets) -> Metrics:
    """MAE, MSE, sample standard deviation (ddof 1) of signed errors, and count."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ValidationError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise ValidationError("metrics need at least one row")
    err = p - t
    sd = float(np.std(err, ddof=1)) if err.size > 1 else float("nan")
    return Metrics(float(np.mean(np.abs(err))), float(np.mean(err ** 2)), sd, int(err.size))


def _keys(frame: pd.DataFrame) -> set:
    return set(zip(*(frame[c] for c in KEY_COLUMNS)))


def spell_labels(frame: pd.DataFrame) -> list[tuple]:
    return list(zip(frame["borrower_id"], frame["spell_index"]))


def temporal_split(frame: pd.DataFrame, spec: SplitSpec = SplitSpec()):
    """(train, out_of_sample, out_of_date) partition of the feature rows."""
    if frame.empty:
        raise ConfigurationError("no rows to split")
    first, last = int(frame["reference_date"].min()), int(frame["reference_date"].max())
    if last - first + 1 <= spec.ood_months:
        raise ConfigurationError(
            f"observation window of {last - first + 1} months is not longer than ood_months={spec.ood_months}")
    cutoff = last - spec.ood_months
    is_ood = frame["reference_date"].to_numpy() > cutoff
    ood = frame[is_ood]
    rest = frame[~is_ood]

    rng = np.random.default_rng([spec.seed, 0x5B17])
    if spec.unit is SplitUnit.BY_SPELL:
        labels = spell_labels(rest)
        units = sorted(set(labels))
        n_train = int(round(spec.train_fraction_of_remainder * len(units)))
        chosen = {units[i] for i in rng.permutation(len(units))[:n_train]}
        in_train = np.fromiter((g in chosen for g in labels), dtype=bool, count=len(labels))
    else:
        n_train = int(round(spec.train_fraction_of_remainder * len(rest)))
        in_train = np.zeros(len(rest), dtype=bool)
        in_train[rng.permutation(len(rest))[:n_train]] = True
    return rest[in_train], rest[~in_train], ood


def split_by_final_status(frame: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """(noloss, loss) rows by the spell's final status."""
    status = frame[STATUS_COLUMN]
    noloss = status.isin([s.value for s in NO_LOSS_GROUP])
    loss = status.isin([s.value for s in LOSS_GROUP])
    if not (noloss | loss).all():
        raise ValidationError("rows with an unknown final status")
    return frame[noloss], frame[loss]


def assert_no_leakage(train_frame: pd.DataFrame, *evaluation: pd.DataFrame) -> None:
    train_keys = _keys(train_frame)
    for ev in evaluation:
        overlap = train_keys & _keys(ev)
        if overlap:
            raise ValidationError(f"{len(overlap)} training keys also appear in an evaluation set")


@dataclass
class FittedModel:
    label: str
    features: tuple[str, ...]
    search: SearchResult
    model: GbtModel
    n_rows: int = 0

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        return self.model.predict(frame[list(self.features)].to_numpy(dtype=np.float64))


def fit_with_search(label: str, frame: pd.DataFrame, features: Sequence[str], space: ParamSpace,
                    n_iter: int, cfg: SearchConfig) -> FittedModel:
    """Randomized CV search on ``frame`` followed by a refit of the best candidate on all of it."""
    if frame.empty:
        raise ValidationError(f"{label}: no training rows")
    X = frame[list(features)].to_numpy(dtype=np.float64)
    y = frame[TARGET_COLUMN].to_numpy(dtype=np.float64)
    groups = None if cfg.row_level_folds else spell_labels(frame)
    result = random_search(space, n_iter, cfg.k, cfg.seed, X, y, groups)
    model = train(X, y, result.best.params, tuple(features))
    return FittedModel(label, tuple(features), result, model, len(frame))


@dataclass
class BenchReport:
    cells: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    # cached predictions per (model, sample), aligned with the sample's rows
    predictions: dict = field(default_factory=dict, repr=False)
    # wall-clock seconds per stage; kept out of serialized output so reruns are bit-identical
    timings: dict = field(default_factory=dict, repr=False)

    def set(self, model: str, sample: str, metrics: Metrics) -> None:
        self.cells[(model, sample)] = metrics

    def get(self, model: str, sample: str) -> Metrics:
        return self.cells[(model, sample)]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for (model, sample), m in sorted(self.cells.items()):
            for metric in Metrics._fields:
                rows.append({"model": model, "sample": sample, "metric": metric, "value": getattr(m, metric)})
        return pd.DataFrame(rows, columns=["model", "sample", "metric", "value"])

    def to_dict(self) -> dict:
        return {
            "cells": [{"model": k[0], "sample": k[1], **m._asdict()} for k, m in sorted(self.cells.items())],
            "models": {label: {"features": list(f.features), "best_params": f.search.best.params.to_dict(),
                               "n_fits": f.search.n_fits, "n_iter": f.search.n_iter}
                       for label, f in sorted(self.models.items())},
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        rep = cls(meta=dict(d.get("meta", {})))
        for c in d["cells"]:
            rep.set(c["model"], c["sample"], Metrics(c["mae"], c["mse"], c["sd_error"], c["n"]))
        return rep


def _cv_metrics(fit: FittedModel) -> Metrics:
    best = fit.search.best
    return Metrics(best.mean_mae, best.mean_mse, best.sd_error, fit.n_rows)


def _evaluate_fit(report: BenchReport, fit: FittedModel, oos: pd.DataFrame, ood: pd.DataFrame) -> None:
    report.models[fit.label] = fit
    report.set(fit.label, "cv", _cv_metrics(fit))
    for name, sample in (("out_of_sample", oos), ("out_of_date", ood)):
        if sample.empty:
            continue
        pred = fit.predict(sample)
        report.predictions[(fit.label, name)] = pred
        report.set(fit.label, name, compute_metrics(pred, sample[TARGET_COLUMN]))


def _pooled_predict(noloss: FittedModel, loss: FittedModel, sample: pd.DataFrame) -> np.ndarray:
    pred = np.full(len(sample), np.nan)
    nl, ls = split_by_final_status(sample)
    pos = pd.Series(np.arange(len(sample)), index=sample.index)
    if len(nl):
        pred[pos[nl.index].to_numpy()] = noloss.predict(nl)
    if len(ls):
        pred[pos[ls.index].to_numpy()] = loss.predict(ls)
    if np.isnan(pred).any():
        raise ValidationError("pooled predictions do not cover every evaluation row")
    return pred


def benchmark_frame(frame: pd.DataFrame, search: SearchConfig = SearchConfig(),
                    spec: SplitSpec = SplitSpec()) -> tuple[BenchReport, tuple]:
    """Base benchmark on a prebuilt feature matrix; returns the report and the split."""
    t0 = time.perf_counter()
    train_f, oos, ood = temporal_split(frame, spec)
    assert_no_leakage(train_f, oos, ood)
    report = BenchReport(meta={
        "rows": {"train": len(train_f), "out_of_sample": len(oos), "out_of_date": len(ood)},
        "search": {"n_iter": search.n_iter, "k": search.k, "seed": search.seed,
                   "space": search.space.to_dict()},
        "split": {"ood_months": spec.ood_months, "train_fraction_of_remainder": spec.train_fraction_of_remainder,
                  "unit": spec.unit.value, "seed": spec.seed},
    })

    for name, sample in (("out_of_sample", oos), ("out_of_date", ood)):
        if not sample.empty:
            report.predictions[(DELTA_OS, name)] = sample["rlgd_os"].to_numpy()
            report.set(DELTA_OS, name, compute_metrics(sample["rlgd_os"], sample[TARGET_COLUMN]))

    total = fit_with_search(GBT_TOTAL, train_f, FEATURE_COLUMNS, search.space, search.n_iter, search)
    _evaluate_fit(report, total, oos, ood)

    nl_train, loss_train = split_by_final_status(train_f)
    noloss = fit_with_search(GBT_NOLOSS, nl_train, FEATURE_COLUMNS, search.space, search.n_iter, search)
    loss = fit_with_search(GBT_LOSS, loss_train, FEATURE_COLUMNS, search.space, search.n_iter, search)
    report.models[GBT_NOLOSS] = noloss
    report.models[GBT_LOSS] = loss
    report.set(GBT_NOLOSS, "cv", _cv_metrics(noloss))
    report.set(GBT_LOSS, "cv", _cv_metrics(loss))
    for name, sample in (("out_of_sample", oos), ("out_of_date", ood)):
        if sample.empty:
            continue
        pred = _pooled_predict(noloss, loss, sample)
        report.predictions[(GBT_SPLIT, name)] = pred
        report.set(GBT_SPLIT, name, compute_metrics(pred, sample[TARGET_COLUMN]))

    report.timings["benchmark"] = time.perf_counter() - t0
    return report, (train_f, oos, ood)


def build_frame(spells: Sequence[DefaultSpell], macro: MacroSeries, policy: DiscountPolicy) -> pd.DataFrame:
    cash = portfolio_lgd(spells, policy, macro)
    os_ = portfolio_delta_os(spells, policy, macro)
    return build_feature_matrix(spells, cash, os_, macro, policy)


def run_benchmark(spells: Sequence[DefaultSpell], macro: MacroSeries, policy: DiscountPolicy,
                  search: SearchConfig = SearchConfig(), spec: SplitSpec = SplitSpec()) -> BenchReport:
    report, _ = benchmark_frame(build_frame(spells, macro, policy), search, spec)
    return report


def run_sensitivity(frame: pd.DataFrame, search: SearchConfig = SearchConfig(), spec: SplitSpec = SplitSpec(),
                    report: BenchReport | None = None, legs: Sequence[str] = (SA_HYP, SA_VAR1, SA_VAR2)) -> BenchReport:
    """Add the hyperparameter and variable sensitivity models to ``report``."""
    t0 = time.perf_counter()
    train_f, oos, ood = temporal_split(frame, spec)
    assert_no_leakage(train_f, oos, ood)
    report = report if report is not None else BenchReport(meta={})
    plan = {
        SA_HYP: (FEATURE_COLUMNS, search.sensitivity_space, search.sensitivity_n_iter),
        SA_VAR1: (DELTA_OS_INPUTS, search.space, search.n_iter),
        SA_VAR2: (WITHOUT_RLGD_OS, search.space, search.n_iter),
    }
    unknown = set(legs) - set(plan)
    if unknown:
        raise ConfigurationError(f"unknown sensitivity legs: {sorted(unknown)}")
    for label in legs:
        features, space, n_iter = plan[label]
        fit = fit_with_search(label, train_f, features, space, n_iter, search)
        _evaluate_fit(report, fit, oos, ood)
    report.timings["sensitivity"] = time.perf_counter() - t0
    return report


# plot-ready outputs

def lgd_histogram(values, bins: int = 20) -> pd.DataFrame:
    counts, edges = np.histogram(cap_unit(values), bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({"bin_low": edges[:-1], "bin_high": edges[1:], "count": counts})


def duration_histogram(spells: Sequence[DefaultSpell], max_months: int = 130, width: int = 5) -> pd.DataFrame:
    durations = np.array([s.last_date - s.default_date for s in spells], dtype=np.int64)
    edges = np.arange(0, max_months + width + 1, width)
    counts, _ = np.histogram(durations, bins=edges)
    return pd.DataFrame({"months_low": edges[:-1], "months_high": edges[1:] - 1, "count": counts})


def scatter_table(cash_records, os_records, spells: Sequence[DefaultSpell] | None = None,
                  max_rows: int = 10_000, seed: int = 0) -> pd.DataFrame:
    """Delta-outstanding vs cash-flow LGD per (spell, reference date), capped to [0, 1].

    Rows are subsampled with a seeded draw when there are more than ``max_rows``.
    """
    os_idx = {r.key: r for r in os_records}
    status = {s.key: s.final_status.value for s in spells} if spells is not None else {}
    rows = []
    for r in cash_records:
        o = os_idx.get(r.key)
        if o is None:
            continue
        rows.append((r.borrower_id, r.spell_index, r.reference_date, status.get((r.borrower_id, r.spell_index), ""),
                     r.rlgd, o.rlgd))
    frame = pd.DataFrame(rows, columns=["borrower_id", "spell_index", "reference_date", "final_status",
                                        "rlgd_cashflow", "rlgd_delta_os"])
    if len(frame) > max_rows:
        keep = np.sort(np.random.default_rng([seed, 0x5CA7]).choice(len(frame), max_rows, replace=False))
        frame = frame.iloc[keep].reset_index(drop=True)
    frame["rlgd_cashflow"] = cap_unit(frame["rlgd_cashflow"])
    frame["rlgd_delta_os"] = cap_unit(frame["rlgd_delta_os"])
    return frame


def correlation_report(frame: pd.DataFrame) -> pd.DataFrame:
    """Pearson correlation of each predictor with the target on noloss, loss and all rows."""
    noloss, loss = split_by_final_status(frame)
    out = {"feature": list(FEATURE_COLUMNS)}
    for label, part in (("noloss", noloss), ("loss", loss), ("total", frame)):
        t = part[TARGET_COLUMN].to_numpy(dtype=np.float64)
        vals = []
        for col in FEATURE_COLUMNS:
            x = part[col].to_numpy(dtype=np.float64)
            if len(x) < 2 or np.std(x) == 0 or np.std(t) == 0:
                vals.append(float("nan"))
            else:
                vals.append(float(np.corrcoef(x, t)[0, 1]))
        out[label] = vals
    return pd.DataFrame(out)
