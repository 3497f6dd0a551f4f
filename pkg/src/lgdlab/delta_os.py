"""Delta-outstanding approximation of realized LGD.

Every reporting date of a spell serves as a reference date ``r`` and is paired with
each reporting date ``t >= r`` (a triangular self-join: ``n(n+1)/2`` pairs for
``n`` observations). For each pair the balance decrease ``os(t-1) - os(t)`` is
discounted back to ``r`` and accumulated; the running economic loss is
``os(r) - cumulative sum`` and the final pair per reference date gives the
approximated LGD.

A decrease in balance counts as a recovery, so writing a balance off looks exactly
like being repaid and a cure that leaves a balance looks like a loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cashflow import DiscountPolicy, LgdRecord, discounted_forward_sums, loss_ratio
from .domain import DefaultSpell, MacroSeries
from .errors import ValidationError


@dataclass(frozen=True)
class ExpandedRow:
    borrower_id: str
    spell_index: int
    reference_date: int
    reporting_date: int
    os_ref: float
    os_prev: float
    delta_os: float
    disc_delta: float
    cum_disc_delta: float
    el_running: float
    rlgd_running: float


EXPANDED_COLUMNS = tuple(ExpandedRow.__dataclass_fields__)


def expand_spell(spell: DefaultSpell) -> list[tuple[int, int]]:
    """All ``(reference_date, reporting_date)`` pairs with reference <= reporting."""
    dates = [o.reporting_date for o in spell.observations]
    if not dates:
        raise ValidationError(f"spell {spell.key} has no observations")
    return [(r, t) for i, r in enumerate(dates) for t in dates[i:]]


def balance_decreases(outstanding: np.ndarray) -> np.ndarray:
    """``os(t-1) - os(t)`` per position; position 0 is never paired after a reference date."""
    d = np.zeros_like(outstanding)
    d[1:] = outstanding[:-1] - outstanding[1:]
    return d


def delta_os_table(spell: DefaultSpell, policy: DiscountPolicy,
                   macro: MacroSeries | None) -> list[ExpandedRow]:
    """Materialized expansion with per-pair discounted deltas and running EL."""
    expand_spell(spell)
    a = spell.arrays
    os_ = a.outstanding
    rates = policy.reference_rates(spell, macro)
    n = len(os_)
    rows: list[ExpandedRow] = []
    for i in range(n):
        os_ref = float(os_[i])
        base = 1.0 + rates[i] / 12.0
        cum = 0.0
        for j in range(i, n):
            os_prev = float(os_[j - 1]) if j > 0 else 0.0
            delta = 0.0 if j == i else os_prev - float(os_[j])
            disc = delta / float(np.power(base, j - i))
            cum += disc
            el = os_ref - cum
            rlgd = el / os_ref if os_ref > 0 else 0.0
            rows.append(ExpandedRow(
                spell.borrower_id, spell.spell_index, int(a.dates[i]), int(a.dates[j]),
                os_ref, os_prev, delta, disc, cum, el, rlgd,
            ))
    return rows


def delta_os_el(spell: DefaultSpell, policy: DiscountPolicy, macro: MacroSeries | None) -> np.ndarray:
    """Final EL per reference date without materializing the expanded table."""
    a = spell.arrays
    rates = policy.reference_rates(spell, macro)
    return a.outstanding - discounted_forward_sums(rates, balance_decreases(a.outstanding))


def rlgd_delta_os(spell: DefaultSpell, policy: DiscountPolicy,
                  macro: MacroSeries | None) -> list[LgdRecord]:
    if not spell.observations:
        raise ValidationError(f"spell {spell.key} has no observations")
    el = delta_os_el(spell, policy, macro)
    exposure = spell.arrays.outstanding
    raw = loss_ratio(el, exposure)
    floored = np.maximum(0.0, raw)
    resolved = spell.resolved
    return [
        LgdRecord(spell.borrower_id, spell.spell_index, int(d), float(e), float(x), float(r), float(f), resolved)
        for d, e, x, r, f in zip(spell.arrays.dates, el, exposure, raw, floored)
    ]


def portfolio_delta_os(spells, policy: DiscountPolicy, macro: MacroSeries | None) -> list[LgdRecord]:
    out: list[LgdRecord] = []
    for spell in sorted(spells, key=lambda s: s.key):
        out.extend(rlgd_delta_os(spell, policy, macro))
    return out
