from dataclasses import replace

import numpy as np
import pytest

from lgdlab.cashflow import DiscountPolicy, portfolio_lgd
from lgdlab.delta_os import portfolio_delta_os
from lgdlab.domain import FinalStatus, month_index
from lgdlab.errors import ConfigurationError, JoinError
from lgdlab.features import ALL_COLUMNS, FEATURE_COLUMNS, REASON_COLUMNS, build_feature_matrix, macro_lookup

from conftest import START, flat_macro, make_spell


def _frame(spells, macro, policy=DiscountPolicy()):
    return build_feature_matrix(spells, portfolio_lgd(spells, policy, macro), portfolio_delta_os(spells, policy, macro),
                                macro, policy)


def test_nineteen_predictors_in_order():
    assert len(FEATURE_COLUMNS) == 19
    assert FEATURE_COLUMNS[0] == "unsecured_recovery_interest" and FEATURE_COLUMNS[-1] == "redefault"
    assert "final_status" not in FEATURE_COLUMNS and "target_rlgd" not in FEATURE_COLUMNS


def test_macro_lookup_is_piecewise_constant(small_world):
    _, macro, _ = small_world
    q2_first, q2_last = month_index(2010, 4), month_index(2010, 6)
    a, b = macro_lookup(macro, q2_first), macro_lookup(macro, q2_last)
    assert a[:3] == b[:3] == (macro.gdp[(2010, 2)], macro.employment[(2010, 2)], macro.hpi[(2010, 2)])
    assert a[3] == macro.base_rate[q2_first]
    with pytest.raises(ConfigurationError):
        macro_lookup(macro, month_index(2030, 1))


def test_row_arithmetic():
    s = make_spell([100.0, 90.0, 0.0, 0.0], cash=[0, 10, 90, 0])
    s2 = replace(make_spell([50.0, 40.0], start=START + 10, index=1), borrower_id="B1")
    macro = flat_macro(START, START + 12)
    f = _frame([s, s2], macro)
    rows = f[f.spell_index == 0]
    assert rows.os_delta.tolist() == [0.0, -10.0, -90.0, 0.0]
    assert rows.repayment.tolist() == [1.0, 0.9, 0.0, 1.0]
    assert (rows.default_duration == 3).all()
    assert (f[f.spell_index == 1].redefault == 1).all() and (rows.redefault == 0).all()
    assert rows.discount_rate.tolist() == [0.02 + 0.05] * 4


def test_matrix_invariants(small_world):
    _, macro, spells = small_world
    f = _frame(spells, macro)
    assert tuple(f.columns) == ALL_COLUMNS
    assert len(f) == sum(len(s.observations) for s in spells)
    assert not f.duplicated(["borrower_id", "spell_index", "reference_date"]).any()
    assert not f.isna().any().any()
    assert (f[list(REASON_COLUMNS.values())].sum(axis=1) == 1).all()
    assert f.redefault.isin([0, 1]).all() and (f.eao >= 0).all() and (f.target_rlgd >= 0).all()
    resolved = {s.key: s.out_date - s.default_date for s in spells if s.out_date is not None}
    for key, grp in f.groupby(["borrower_id", "spell_index"]):
        assert grp.default_duration.nunique() == 1
        if key in resolved:
            assert grp.default_duration.iloc[0] == resolved[key]
    forbidden = {"cash_recovery", "collateral_recovery", "cost", "write_off", "exit_balance"}
    assert not forbidden & set(f.columns)


def test_join_error_lists_missing_keys(small_world):
    _, macro, spells = small_world
    policy = DiscountPolicy()
    cash = portfolio_lgd(spells, policy, macro)
    os_ = portfolio_delta_os(spells, policy, macro)
    with pytest.raises(JoinError) as info:
        build_feature_matrix(spells, cash[1:], os_, macro, policy)
    assert info.value.missing == [cash[0].key]
