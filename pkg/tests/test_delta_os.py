import numpy as np
import pytest

from lgdlab.cashflow import DiscountPolicy, realized_lgd_series
from lgdlab.delta_os import EXPANDED_COLUMNS, delta_os_table, expand_spell, portfolio_delta_os, rlgd_delta_os
from lgdlab.domain import FinalStatus
from lgdlab.errors import ValidationError

from conftest import START, make_spell


@pytest.mark.parametrize("n", [1, 4, 10, 130])
def test_expansion_count(n):
    s = make_spell([100.0] * n)
    pairs = expand_spell(s)
    brute = [(a, b) for a in range(START, START + n) for b in range(START, START + n) if a <= b]
    assert pairs == brute
    assert len(pairs) == n * (n + 1) // 2


def test_empty_spell_rejected():
    s = make_spell([100.0])
    from dataclasses import replace
    with pytest.raises(ValidationError):
        expand_spell(replace(s, observations=()))


def test_hand_example_zero_rate():
    s = make_spell([100.0, 60.0, 30.0, 0.0])
    rows = [r for r in delta_os_table(s, DiscountPolicy.fixed(0.0), None) if r.reference_date == START]
    assert [r.delta_os for r in rows] == [0.0, 40.0, 30.0, 30.0]
    assert [r.cum_disc_delta for r in rows] == [0.0, 40.0, 70.0, 100.0]
    assert rows[-1].el_running == 0.0 and rows[-1].rlgd_running == 0.0
    assert rows[0].os_prev == 0.0


def test_hand_example_twelve_percent():
    s = make_spell([100.0, 60.0, 30.0, 0.0])
    el = 100 - (40 / 1.01 + 30 / 1.01 ** 2 + 30 / 1.01 ** 3)
    rows = [r for r in delta_os_table(s, DiscountPolicy.fixed(0.12), None) if r.reference_date == START]
    assert rows[-1].el_running == pytest.approx(el, abs=1e-12)
    assert el == pytest.approx(1.869, abs=1e-3)
    assert rows[-1].rlgd_running == pytest.approx(0.01869, abs=1e-4)
    rec = rlgd_delta_os(s, DiscountPolicy.fixed(0.12), None)[0]
    assert rec.el == pytest.approx(el, abs=1e-12)


def test_same_date_rows_have_unit_lgd():
    s = make_spell([100.0, 60.0, 30.0, 10.0])
    for r in delta_os_table(s, DiscountPolicy.fixed(0.07), None):
        if r.reference_date == r.reporting_date:
            assert r.delta_os == 0.0 and r.rlgd_running == 1.0
        assert r.el_running == r.os_ref - r.cum_disc_delta


def test_table_restarts_per_reference_date():
    s = make_spell([100.0, 60.0, 30.0, 0.0])
    rows = delta_os_table(s, DiscountPolicy.fixed(0.0), None)
    assert len(rows) == 10
    assert list(EXPANDED_COLUMNS)[:4] == ["borrower_id", "spell_index", "reference_date", "reporting_date"]
    second = [r for r in rows if r.reference_date == START + 1]
    assert [r.cum_disc_delta for r in second] == [0.0, 30.0, 60.0]


def test_streaming_matches_table(small_world):
    _, macro, spells = small_world
    for s in spells[:40]:
        table = delta_os_table(s, DiscountPolicy(), macro)
        last = {}
        for r in table:
            last[r.reference_date] = r
        recs = rlgd_delta_os(s, DiscountPolicy(), macro)
        np.testing.assert_allclose([r.el for r in recs], [last[r.reference_date].el_running for r in recs],
                                   rtol=1e-12, atol=1e-8)


def test_full_repayment_and_constant_balance():
    full = make_spell([100.0, 50.0, 0.0])
    assert rlgd_delta_os(full, DiscountPolicy.fixed(0.0), None)[0].rlgd == 0.0
    flat = make_spell([100.0, 100.0, 100.0], status=FinalStatus.NOT_RESOLVED)
    assert [r.rlgd for r in rlgd_delta_os(flat, DiscountPolicy.fixed(0.09), None)] == [1.0, 1.0, 1.0]


def test_cured_bias_example():
    s = make_spell([100.0, 90.0, 80.0], status=FinalStatus.CURED, cash=[0, 10, 10])
    os_rec = rlgd_delta_os(s, DiscountPolicy.fixed(0.0), None)[0]
    cash_rec = realized_lgd_series(s, DiscountPolicy.fixed(0.0), None)[0]
    assert os_rec.rlgd == pytest.approx(0.8) and cash_rec.rlgd == 0.0


def test_write_off_distortion():
    base = make_spell([100.0, 90.0, 80.0, 80.0], cash=[0, 10, 10, 0])
    hit = make_spell([100.0, 90.0, 80.0, 50.0], cash=[0, 10, 10, 0], write_off=[0, 0, 0, 30.0])
    p = DiscountPolicy.fixed(0.05)
    b_os, h_os = rlgd_delta_os(base, p, None), rlgd_delta_os(hit, p, None)
    b_cf, h_cf = realized_lgd_series(base, p, None), realized_lgd_series(hit, p, None)
    for i in range(3):
        assert h_os[i].rlgd < b_os[i].rlgd
        assert h_cf[i].rlgd == b_cf[i].rlgd


def test_zero_exposure_gives_zero():
    s = make_spell([100.0, 0.0, 0.0])
    recs = rlgd_delta_os(s, DiscountPolicy.fixed(0.05), None)
    assert recs[1].rlgd == 0.0 and recs[2].rlgd_raw == 0.0


def test_portfolio_sorted(small_world):
    _, macro, spells = small_world
    keys = [r.key for r in portfolio_delta_os(spells[::-1], DiscountPolicy(), macro)]
    assert keys == sorted(keys)
