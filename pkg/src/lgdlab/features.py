"""Feature matrix: one row per (spell, reference date) with 19 predictors and the target."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .cashflow import DiscountPolicy, LgdRecord
from .domain import DefaultReason, DefaultSpell, MacroSeries, format_month
from .errors import JoinError

KEY_COLUMNS = ("borrower_id", "spell_index", "reference_date")

REASON_COLUMNS = {
    DefaultReason.DAYS90: "reason_90days",
    DefaultReason.BANKRUPT: "reason_bankrupt",
    DefaultReason.FORB_PERIOD: "reason_forbperiod",
    DefaultReason.FRAUD: "reason_fraud",
    DefaultReason.RESTR: "reason_restr",
    DefaultReason.UNLIKE_PAY: "reason_unlikepay",
}

FEATURE_COLUMNS = (
    "unsecured_recovery_interest",
    "secured_recovery_interest",
    "cover_value_index",
    "eao",
    "discount_rate",
    "os_delta",
    "rlgd_os",
    "default_duration",
    *REASON_COLUMNS.values(),
    "gdp",
    "employment",
    "hpi",
    "repayment",
    "redefault",
)

TARGET_COLUMN = "target_rlgd"
STATUS_COLUMN = "final_status"
ALL_COLUMNS = (*KEY_COLUMNS, *FEATURE_COLUMNS, TARGET_COLUMN, STATUS_COLUMN)

# predictor subsets used by the variable-sensitivity runs
DELTA_OS_INPUTS = ("rlgd_os", "eao", "discount_rate")
WITHOUT_RLGD_OS = tuple(c for c in FEATURE_COLUMNS if c != "rlgd_os")


def macro_lookup(macro: MacroSeries, month: int) -> tuple[float, float, float, float]:
    """(gdp, employment, hpi, base_rate) for ``month``; quarterly values are constant within the quarter."""
    gdp, emp, hpi = macro.quarterly(month)
    return gdp, emp, hpi, macro.rate(month)


def _index_records(records: Iterable[LgdRecord]) -> dict[tuple, LgdRecord]:
    return {r.key: r for r in records}


def _join(index: dict, keys: list[tuple], label: str) -> list[LgdRecord]:
    missing = [k for k in keys if k not in index]
    if missing:
        shown = ", ".join(f"({b}, {s}, {format_month(m)})" for b, s, m in missing[:10])
        more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        raise JoinError(f"{label} records missing for {len(missing)} keys: {shown}{more}", missing)
    return [index[k] for k in keys]


def build_feature_matrix(spells: Sequence[DefaultSpell], cash_lgd: Iterable[LgdRecord],
                         os_lgd: Iterable[LgdRecord], macro: MacroSeries,
                         policy: DiscountPolicy | None = None) -> pd.DataFrame:
    """Assemble predictors and target in the stable column order of ``ALL_COLUMNS``.

    ``discount_rate`` is the base rate at the reference date plus the macro add-on.
    ``policy`` is accepted for interface symmetry with the LGD engines; the predictor
    itself is independent of which rate the target was discounted with.
    """
    cash_idx = _index_records(cash_lgd)
    os_idx = _index_records(os_lgd)
    cols: dict[str, list] = {c: [] for c in ALL_COLUMNS}
    keys: list[tuple] = []

    for spell in sorted(spells, key=lambda s: s.key):
        a = spell.arrays
        os_ = a.outstanding
        n = len(os_)
        prev = np.concatenate(([os_[0]], os_[:-1]))
        delta = os_ - prev
        with np.errstate(divide="ignore", invalid="ignore"):
            repay = np.where(prev > 0, os_ / np.where(prev > 0, prev, 1.0), 1.0)
        repay[0] = 1.0
        duration = int(spell.last_date - spell.default_date)
        reason_flags = {col: int(spell.reason is r) for r, col in REASON_COLUMNS.items()}
        for i in range(n):
            m = int(a.dates[i])
            gdp, emp, hpi, base = macro_lookup(macro, m)
            keys.append((spell.borrower_id, spell.spell_index, m))
            cols["borrower_id"].append(spell.borrower_id)
            cols["spell_index"].append(spell.spell_index)
            cols["reference_date"].append(m)
            cols["unsecured_recovery_interest"].append(spell.unsecured_rate)
            cols["secured_recovery_interest"].append(spell.secured_rate)
            cols["cover_value_index"].append(spell.cover_value_index)
            cols["eao"].append(float(os_[i]))
            cols["discount_rate"].append(base + macro.discount_addon)
            cols["os_delta"].append(float(delta[i]))
            cols["default_duration"].append(duration)
            for col, flag in reason_flags.items():
                cols[col].append(flag)
            cols["gdp"].append(gdp)
            cols["employment"].append(emp)
            cols["hpi"].append(hpi)
            cols["repayment"].append(float(repay[i]))
            cols["redefault"].append(int(spell.spell_index > 0))
            cols["final_status"].append(spell.final_status.value)

    cols["rlgd_os"] = [r.rlgd for r in _join(os_idx, keys, "delta-outstanding")]
    cols["target_rlgd"] = [r.rlgd for r in _join(cash_idx, keys, "cash-flow")]
    frame = pd.DataFrame(cols, columns=list(ALL_COLUMNS))
    return frame.astype({"spell_index": np.int64, "reference_date": np.int64, "default_duration": np.int64,
                         "redefault": np.int64, **{c: np.int64 for c in REASON_COLUMNS.values()}})
