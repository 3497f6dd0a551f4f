import numpy as np
import pytest

from lgdlab.errors import ConfigurationError
from lgdlab.gbt import GbtParams
from lgdlab.search import (Interval, ParamSpace, cv_score, grid_search, kfold_split, random_search, sample_candidates,
                           sensitivity_space, table_grid)

TINY = ParamSpace({"learning_rate": [0.1, 0.3], "max_depth": [1, 2], "n_estimators": [3, 5],
                   "subsample": [0.7, 1.0], "min_child_weight": [1, 2], "colsample_bytree": [0.5, 1.0]})


def _data(n_groups=30, per=4, seed=0):
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(n_groups), per)
    X = rng.normal(size=(len(groups), 3))
    y = X[:, 0] ** 2 + 0.1 * rng.normal(size=len(groups))
    return X, y, groups.tolist()


def test_kfold_examples():
    folds = kfold_split(list(range(10)), 5, seed=1)
    assert [len(f) for f in folds] == [2] * 5
    flat = [g for f in folds for g in f]
    assert sorted(flat) == list(range(10)) and len(set(flat)) == 10
    assert folds == kfold_split(list(range(10)), 5, seed=1)
    with pytest.raises(ConfigurationError):
        kfold_split([1, 2, 3], 4, seed=0)
    with pytest.raises(ConfigurationError):
        kfold_split([1, 2, 3], 1, seed=0)


def test_kfold_sizes_differ_by_at_most_one():
    sizes = [len(f) for f in kfold_split(list(range(23)), 5, seed=3)]
    assert max(sizes) - min(sizes) <= 1


def test_cv_constant_target():
    X = np.random.default_rng(0).normal(size=(20, 2))
    score = cv_score(X, np.full(20, 0.4), list(range(20)), GbtParams(n_estimators=3), k=5, seed=0)
    assert score.mean_mse == 0.0 and score.mean_mae == 0.0 and len(score.per_fold) == 5


def test_cv_two_spells_predict_each_other():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([1.0, 1.0, 3.0, 3.0])
    score = cv_score(X, y, ["a", "a", "b", "b"], GbtParams(n_estimators=2), k=2, seed=0)
    # each held-out spell sees a model trained only on the other, i.e. a constant off by 2
    assert score.per_fold == (4.0, 4.0)


def test_cv_groups_stay_together():
    X, y, groups = _data()
    from lgdlab.search import _fold_masks
    masks = _fold_masks(groups, 5, 0)
    for m in masks:
        inside = {g for g, flag in zip(groups, m) if flag}
        outside = {g for g, flag in zip(groups, m) if not flag}
        assert not inside & outside


def test_random_search_fit_counts_and_prefix():
    X, y, groups = _data()
    r25 = random_search(TINY, 25, 5, 11, X, y, groups, threads=1)
    r60 = random_search(TINY, 60, 5, 11, X, y, groups, threads=1)
    assert r25.n_fits == 125 and r60.n_fits == 300
    assert [c.params for c in r60.candidates[:25]] == [c.params for c in r25.candidates]
    assert r60.best.mean_mse <= r25.best.mean_mse
    assert r25.best_index == min(range(25), key=lambda i: (r25.candidates[i].mean_mse, i))


def test_random_search_determinism_with_threads():
    X, y, groups = _data()
    a = random_search(TINY, 6, 3, 5, X, y, groups, threads=1)
    b = random_search(TINY, 6, 3, 5, X, y, groups, threads=3)
    assert a == b


def test_candidate_streams_differ_by_seed():
    a = [p.to_dict() for p in sample_candidates(table_grid(), 20, 1)]
    b = [p.to_dict() for p in sample_candidates(table_grid(), 20, 2)]
    assert a != b


def test_sensitivity_space_draws():
    space = sensitivity_space()
    values = space.materialize(0)
    assert len(values["learning_rate"]) == 15
    assert all(0.01 <= v <= 0.2 for v in values["learning_rate"])
    assert values["max_depth"] == list(range(6, 17))
    for p in sample_candidates(space, 30, 0):
        assert 900 <= p.n_estimators <= 1400 and 0.6 <= p.subsample <= 0.9


def test_grid_search_examples():
    X, y, groups = _data()
    space = ParamSpace({"max_depth": [1, 2], "learning_rate": [0.1, 0.2, 0.3]}, {"n_estimators": 3})
    res = grid_search(space, 3, 0, X, y, groups)
    assert len(res.candidates) == 6 and res.n_fits == 18
    assert [(c.params.learning_rate, c.params.max_depth) for c in res.candidates] == [
        (0.1, 1), (0.1, 2), (0.2, 1), (0.2, 2), (0.3, 1), (0.3, 2)]
    assert all(res.best.mean_mse <= c.mean_mse for c in res.candidates)
    single = ParamSpace({"max_depth": [2]}, {"n_estimators": 3})
    one = grid_search(single, 3, 0, X, y, groups)
    direct = cv_score(X, y, groups, one.best.params, 3, 0)
    assert one.best.mean_mse == direct.mean_mse and one.best.fold_mse == direct.per_fold


def test_grid_budget_refusal():
    with pytest.raises(ConfigurationError, match="70875"):
        grid_search(table_grid(), 5, 0, np.zeros((10, 1)), np.zeros(10))


def test_invalid_spaces():
    with pytest.raises(ConfigurationError):
        ParamSpace({"gamma": [1.0]})
    with pytest.raises(ConfigurationError):
        sample_candidates(ParamSpace({"subsample": [1.5]}), 1, 0)
    with pytest.raises(ConfigurationError):
        Interval(2.0, 1.0)
    with pytest.raises(ConfigurationError):
        random_search(TINY, 0, 5, 0, np.zeros((10, 1)), np.zeros(10))


def test_search_result_json_round_trip():
    X, y, groups = _data()
    res = random_search(TINY, 3, 3, 0, X, y, groups)
    from lgdlab.search import SearchResult
    import json
    assert SearchResult.from_dict(json.loads(res.to_json())) == res
    assert ParamSpace.from_dict(sensitivity_space().to_dict()).to_dict() == sensitivity_space().to_dict()
