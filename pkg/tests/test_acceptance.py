"""Acceptance criteria 1-10, one test each, each printing a PASS/FAIL line.

Criterion 9 runs the full-size benchmark with the reduced "laptop" search space;
the same pipeline on the full reference grid runs only with LGDLAB_FULL_BENCH=1.
"""

import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from lgdlab.bench import (DELTA_OS, GBT_SPLIT, GBT_TOTAL, SA_VAR1, SA_VAR2, SearchConfig, SplitSpec,
                          assert_no_leakage, benchmark_frame, build_frame, run_sensitivity, temporal_split)
from lgdlab.cashflow import DiscountPolicy, portfolio_lgd, realized_lgd_series
from lgdlab.cli import dispatch
from lgdlab.delta_os import expand_spell, portfolio_delta_os, rlgd_delta_os
from lgdlab.domain import FinalStatus
from lgdlab.gbt import GbtParams, train
from lgdlab.search import ParamSpace, random_search
from lgdlab.synthgen import GenConfig, generate_macro, generate_portfolio

from conftest import START, make_spell

RESULTS: list[str] = []


def verdict(number, ok: bool, detail: str, label: str = "") -> None:
    line = f"CRITERION {number}{label}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def _default_world(**kw):
    cfg = GenConfig(**kw)
    macro = generate_macro(cfg.seed, cfg.start, cfg.end)
    return cfg, macro, generate_portfolio(cfg, macro)


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    cfg, macro, spells = _default_world(seed=7, n_borrowers=600, cashflow_exact=True)
    policy = DiscountPolicy()
    cash = portfolio_lgd(spells, policy, macro)
    os_ = portfolio_delta_os(spells, policy, macro)
    elapsed = time.perf_counter() - t0
    assert [r.key for r in cash] == [r.key for r in os_]
    diff = max(abs(a.rlgd - b.rlgd) for a, b in zip(cash, os_))
    ok = len(spells) >= 500 and diff <= 1e-9 and elapsed < 30
    verdict(1, ok, f"{len(spells)} spells, {len(cash)} records, max |diff| = {diff:.3e}, {elapsed:.1f} s")


def test_criterion_02_telescoping():
    # integer-valued balances make every partial sum exactly representable
    rng = np.random.default_rng(2)
    bad = 0
    checked = 0
    for i in range(100):
        n = int(rng.integers(1, 131))
        steps = rng.integers(0, 5000, size=n)
        steps[0] = 0
        os_ = (int(rng.integers(10_000, 10_000_000)) - np.cumsum(steps)).clip(min=0).astype(float)
        s = make_spell(os_.tolist(), borrower=f"T{i}")
        recs = rlgd_delta_os(s, DiscountPolicy.fixed(0.0), None)
        for r_idx, rec in enumerate(recs):
            brute = os_[r_idx]
            for r, t in expand_spell(s):
                if r == START + r_idx and t > r:
                    j = t - START
                    brute -= os_[j - 1] - os_[j]
            checked += 1
            if not (rec.el == brute == os_[-1]):
                bad += 1
    verdict(2, bad == 0, f"{checked} reference dates on 100 spells, {bad} mismatches (exact equality)")


def test_criterion_03_cured_bias(tmp_path):
    data, out = tmp_path / "data", tmp_path / "lgd"
    assert dispatch(["gen", "--seed", "7", "--out", str(data)]) == 0
    assert dispatch(["lgd", "--data", str(data), "--out", str(out)]) == 0
    cfg, macro, spells = _default_world(seed=7)
    cure_share = sum(s.final_status is FinalStatus.CURED for s in spells) / len(spells)
    cured = {s.key for s in spells if s.final_status is FinalStatus.CURED}
    records = pd.read_csv(out / "lgd_records.csv", comment="#", dtype={"borrower_id": str})
    mask = [(b, s) in cured for b, s in zip(records.borrower_id, records.spell_index)]
    signed = float((records.rlgd_delta_os[mask] - records.rlgd_cashflow[mask]).mean())
    scatter = pd.read_csv(out / "scatter.csv", comment="#", dtype={"borrower_id": str})
    sc = scatter[scatter.final_status == "Cured"]
    above = float((sc.rlgd_delta_os > sc.rlgd_cashflow).mean())
    ok = cure_share >= 0.20 and signed > 0 and above >= 0.95
    verdict(3, ok, f"cure share {cure_share:.3f}, mean signed error on cured rows {signed:+.4f}, "
                   f"{above:.1%} of {len(sc)} cured scatter rows above the diagonal")


def test_criterion_04_expansion_counts():
    got = {n: len(expand_spell(make_spell([100.0] * n))) for n in (1, 4, 10, 130)}
    expected = {1: 1, 4: 10, 10: 55, 130: 8515}
    factorial_130 = math.factorial(130)
    ok = got == expected and got[130] != factorial_130
    verdict(4, ok, f"pair counts {got} (n(n+1)/2; n! would be {len(str(factorial_130))} digits for n=130)")


def test_criterion_05_floor():
    rng = np.random.default_rng(5)
    negatives = 0
    total = 0
    statuses = list(FinalStatus)
    while total < 2_000_000:
        n = 50
        os_ = 1000 * np.cumprod(rng.uniform(0.8, 1.0, n))
        os_ = np.where(rng.random(n) < 0.05, 0.0, os_)
        os_[0] = max(os_[0], 1.0)
        cash = rng.exponential(rng.choice([5.0, 50.0, 500.0]), n)
        cost = rng.exponential(rng.choice([0.1, 5.0, 100.0]), n)
        status = statuses[int(rng.integers(4))]
        s = make_spell(os_.tolist(), status=status, cash=cash.tolist(), cost=cost.tolist())
        policy = DiscountPolicy.fixed(float(rng.uniform(0, 0.3)))
        for rec in realized_lgd_series(s, policy, None) + rlgd_delta_os(s, policy, None):
            total += 1
            negatives += rec.rlgd < 0.0
    verdict(5, negatives == 0, f"{total} randomized records from both engines, {negatives} negative")


def test_criterion_06_gbt_correctness():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    errs = []
    for lam, expected in ((0.0, [0, 0, 1, 1]), (1.0, [1 / 6, 1 / 6, 5 / 6, 5 / 6])):
        m = train(X, y, GbtParams(learning_rate=1.0, max_depth=1, n_estimators=1, reg_lambda=lam,
                                  min_child_weight=0, base_score=0.5))
        errs.append(float(np.max(np.abs(m.predict(X) - expected))))
    rng = np.random.default_rng(6)
    Xr = rng.normal(size=(800, 4))
    yr = np.sin(Xr[:, 0]) + Xr[:, 1] * Xr[:, 2] + 0.1 * rng.normal(size=800)
    m = train(Xr, yr, GbtParams(learning_rate=0.3, max_depth=4, n_estimators=80))
    monotone = bool((np.diff(m.train_loss) <= 0).all())
    w = m.leaf_weights(Xr)
    acc = np.zeros(len(Xr))
    for k in range(w.shape[1]):
        acc += w[:, k]
    decomposition = bool(np.array_equal(m.predict(Xr), m.base_score + m.params.learning_rate * acc))

    X = rng.uniform(0, 1, size=(6000, 2))
    y = 3 * X[:, 0] - 2 * X[:, 1] + rng.normal(0, 0.01, 6000)
    t0 = time.perf_counter()
    lin = train(X[:5000], y[:5000], GbtParams(learning_rate=0.05, max_depth=8, n_estimators=1300, subsample=0.8,
                                              min_child_weight=5, colsample_bytree=0.91, seed=0))
    elapsed = time.perf_counter() - t0
    mse = float(np.mean((lin.predict(X[5000:]) - y[5000:]) ** 2))
    ok = max(errs) <= 1e-12 and monotone and decomposition and mse < 1e-3 and elapsed < 60
    verdict(6, ok, f"hand leaf error {max(errs):.1e}, loss non-increasing={monotone}, decomposition exact="
                   f"{decomposition}, linear OOS MSE {mse:.2e} in {elapsed:.1f} s")


def test_criterion_07_search_protocol():
    rng = np.random.default_rng(7)
    groups = np.repeat(np.arange(40), 5).tolist()
    X = rng.normal(size=(200, 3))
    y = X[:, 0] + 0.1 * rng.normal(size=200)
    space = ParamSpace({"learning_rate": [0.1, 0.3], "max_depth": [1, 2, 3], "n_estimators": [2, 4],
                        "subsample": [0.7, 1.0], "min_child_weight": [1, 3], "colsample_bytree": [0.7, 1.0]})
    r25 = random_search(space, 25, 5, 0, X, y, groups)
    r60 = random_search(space, 60, 5, 0, X, y, groups)
    prefix = [c.params for c in r60.candidates[:25]] == [c.params for c in r25.candidates]
    mono = r60.best.mean_mse <= r25.best.mean_mse
    ok = r25.n_fits == 125 and r60.n_fits == 300 and prefix and mono
    verdict(7, ok, f"fits {r25.n_fits} / {r60.n_fits}, shared prefix={prefix}, "
                   f"best CV MSE {r25.best.mean_mse:.5f} -> {r60.best.mean_mse:.5f}")


@pytest.fixture(scope="module")
def default_frame():
    cfg, macro, spells = _default_world()
    return build_frame(spells, macro, DiscountPolicy())


def test_criterion_08_split_protocol(default_frame):
    f = default_frame
    train_f, oos, ood = temporal_split(f, SplitSpec())
    last = int(f.reference_date.max())
    ood_exact = set(ood.reference_date) == set(range(last - 5, last + 1)) and \
        not (set(train_f.reference_date) | set(oos.reference_date)) & set(range(last - 5, last + 1))
    idx = sorted(train_f.index.tolist() + oos.index.tolist() + ood.index.tolist())
    partition = idx == sorted(f.index.tolist()) and len(set(idx)) == len(f)
    try:
        assert_no_leakage(train_f, oos, ood)
        disjoint = True
    except Exception:
        disjoint = False
    shares = np.array([len(train_f), len(oos), len(ood)]) / len(f)
    within = bool((np.abs(shares - [0.75, 0.20, 0.05]) <= 0.05).all())
    ok = ood_exact and partition and disjoint and within
    verdict(8, ok, f"{len(f)} rows, shares {shares[0]:.3f}/{shares[1]:.3f}/{shares[2]:.3f}, OOD = last 6 months="
                   f"{ood_exact}, partition={partition}, keys disjoint={disjoint}")


def _directional(report):
    a = report.get(GBT_TOTAL, "out_of_sample").mse < report.get(DELTA_OS, "out_of_sample").mse
    b = report.get(GBT_SPLIT, "out_of_sample").mae <= report.get(GBT_TOTAL, "out_of_sample").mae
    c = report.get(SA_VAR1, "out_of_sample").mse > report.get(SA_VAR2, "out_of_sample").mse
    detail = (f"OOS MSE total {report.get(GBT_TOTAL, 'out_of_sample').mse:.5f} vs delta-OS "
              f"{report.get(DELTA_OS, 'out_of_sample').mse:.5f}; OOS MAE split "
              f"{report.get(GBT_SPLIT, 'out_of_sample').mae:.5f} vs total "
              f"{report.get(GBT_TOTAL, 'out_of_sample').mae:.5f}; OOS MSE var1 "
              f"{report.get(SA_VAR1, 'out_of_sample').mse:.5f} vs var2 {report.get(SA_VAR2, 'out_of_sample').mse:.5f}")
    return a and b and c, detail


def _full_pipeline(search: SearchConfig):
    t0 = time.perf_counter()
    cfg, macro, spells = _default_world()
    frame = build_frame(spells, macro, DiscountPolicy())
    report, _ = benchmark_frame(frame, search, SplitSpec())
    run_sensitivity(frame, search, SplitSpec(), report, legs=(SA_VAR1, SA_VAR2))
    return cfg, frame, report, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_09_directional_benchmark():
    search = SearchConfig.laptop()
    cfg, frame, report, elapsed = _full_pipeline(search)
    ordered, detail = _directional(report)
    fits = report.models[GBT_TOTAL].search.n_fits
    ok = ordered and elapsed < 600 and search.n_iter == 25
    verdict(9, ok, f"{cfg.n_borrowers} borrowers, {len(frame)} rows, {search.n_iter} candidates x {search.k} folds "
                   f"({fits} fits per search, laptop space), {elapsed:.0f} s; {detail}")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("LGDLAB_FULL_BENCH") != "1",
                    reason="reference-grid benchmark takes hours on one core; set LGDLAB_FULL_BENCH=1")
def test_criterion_09_reference_grid():
    cfg, frame, report, elapsed = _full_pipeline(SearchConfig.reference())
    ordered, detail = _directional(report)
    verdict(9, ordered and elapsed < 600, f"reference grid, {elapsed:.0f} s; {detail}", label=" (reference grid)")


def _snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path):
    quick = {"profile": "laptop", "n_iter": 2, "k": 2}
    runs = []
    for name in ("run1", "run2"):
        root = tmp_path / name
        d, f = str(root / "data"), str(root / "features")
        cfg_path = root.parent / f"{name}.json"
        cfg_path.write_text(pd.Series(quick).to_json())
        steps = [
            ["gen", "--seed", "9", "--n-borrowers", "120", "--out", d],
            ["lgd", "--data", d, "--out", str(root / "lgd")],
            ["features", "--data", d, "--out", f],
            ["train", "--features", f + "/features.csv", "--out", str(root / "model.json"),
             "--params", '{"n_estimators": 20, "max_depth": 4, "subsample": 0.8, "colsample_bytree": 0.7}'],
            ["tune", "--config", str(cfg_path), "--features", f + "/features.csv", "--out", str(root / "tune")],
            ["bench", "--config", str(cfg_path), "--data", d, "--out", str(root / "bench")],
            ["sensitivity", "--config", str(cfg_path), "--data", d, "--out", str(root / "sens")],
            ["report", "--input", str(root / "bench"), "--out", str(root / "report")],
        ]
        for argv in steps:
            assert dispatch(argv) == 0, argv
        runs.append(_snapshot(root))
    same = runs[0] == runs[1]
    differing = sorted(k for k in runs[0] if runs[0].get(k) != runs[1].get(k))
    verdict(10, same, f"{len(runs[0])} output files from 8 subcommands, differing: {differing or 'none'}")
