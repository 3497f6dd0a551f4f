"""Realized LGD from discounted recoveries and costs (workout approach).

For every reporting date ``r`` of a spell, flows strictly after ``r`` are
discounted back to ``r`` with the monthly-compounded factor
``(1 + annual_rate / 12) ** months``::

    EL(r)   = os(r) - sum recovery_t / disc(t - r) + sum cost_t / disc(t - r)
    rlgd(r) = max(0, EL(r) / os(r))

Cured spells get a terminal recovery of their remaining balance at the out date.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .domain import DefaultSpell, FinalStatus, MacroSeries, format_month
from .errors import ConfigurationError, LookupFailure, OrderingError


class RateSource(str, enum.Enum):
    BASE_RATE_PLUS_ADDON = "base_rate_plus_addon"
    BASE_RATE = "base_rate"
    FIXED = "fixed"
    PER_FLOW = "per_flow"


@dataclass(frozen=True)
class DiscountPolicy:
    """How the annual discount rate is chosen.

    ``BASE_RATE_PLUS_ADDON`` uses the base rate of the reference month plus the macro
    add-on, ``BASE_RATE`` the plain base rate, ``FIXED`` a constant, and ``PER_FLOW``
    the spell's secured rate for collateral recoveries and its unsecured rate for
    everything else.
    """

    rate_source: RateSource = RateSource.BASE_RATE_PLUS_ADDON
    fixed_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rate_source", RateSource(self.rate_source))
        if self.fixed_rate < 0:
            raise ConfigurationError(f"fixed_rate must be >= 0, got {self.fixed_rate}")

    @classmethod
    def fixed(cls, rate: float) -> "DiscountPolicy":
        return cls(RateSource.FIXED, rate)

    def reference_rates(self, spell: DefaultSpell, macro: MacroSeries | None) -> np.ndarray:
        """Annual rate used for discounting to each reporting date of ``spell``."""
        dates = spell.arrays.dates
        if self.rate_source is RateSource.FIXED:
            rates = np.full(dates.shape, self.fixed_rate)
        elif self.rate_source is RateSource.PER_FLOW:
            rates = np.full(dates.shape, float(spell.unsecured_rate))
        else:
            if macro is None:
                raise ConfigurationError(f"{self.rate_source.value} discounting needs a macro series")
            addon = macro.discount_addon if self.rate_source is RateSource.BASE_RATE_PLUS_ADDON else 0.0
            rates = np.array([macro.rate(int(m)) + addon for m in dates])
        if (rates < 0).any():
            raise ConfigurationError(f"negative discount rate for spell {spell.key}")
        return rates


@dataclass(frozen=True)
class LgdRecord:
    borrower_id: str
    spell_index: int
    reference_date: int
    el: float
    exposure_at_ref: float
    rlgd_raw: float
    rlgd: float
    resolved: bool

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.borrower_id, self.spell_index, self.reference_date)


def discount_factor(annual_rate: float, t_months: int) -> float:
    if t_months < 0:
        raise OrderingError(f"discount horizon must be >= 0 months, got {t_months}")
    if annual_rate < 0:
        raise ConfigurationError(f"annual rate must be >= 0, got {annual_rate}")
    return (1.0 + annual_rate / 12.0) ** t_months


def discounted_forward_sums(rates: np.ndarray, flows: np.ndarray) -> np.ndarray:
    """``out[r] = sum_{t > r} flows[t] / disc(rates[r], t - r)`` over consecutive monthly positions.

    Shared by both LGD engines so identical flows give bit-identical sums.
    """
    n = flows.shape[0]
    out = np.zeros(n)
    steps = np.arange(1, n)
    for i in range(n - 1):
        w = 1.0 / np.power(1.0 + rates[i] / 12.0, steps[: n - 1 - i])
        out[i] = np.dot(w, flows[i + 1:])
    return out


def cure_terminal_recovery(spell: DefaultSpell) -> np.ndarray:
    """Per-position extra recovery implied by the cure convention (zeros for non-cures)."""
    extra = np.zeros(len(spell.observations))
    if spell.final_status is FinalStatus.CURED:
        extra[-1] = spell.observations[-1].outstanding
    return extra


def loss_ratio(el: np.ndarray, exposure: np.ndarray) -> np.ndarray:
    out = np.zeros_like(el)
    pos = exposure > 0
    out[pos] = el[pos] / exposure[pos]
    return out


def economic_loss_vector(spell: DefaultSpell, policy: DiscountPolicy,
                         macro: MacroSeries | None) -> np.ndarray:
    """EL at every reporting date of ``spell`` (same order as its observations)."""
    a = spell.arrays
    terminal = cure_terminal_recovery(spell)
    cash = a.cash_recovery + terminal
    if policy.rate_source is RateSource.PER_FLOW:
        if spell.unsecured_rate < 0 or spell.secured_rate < 0:
            raise ConfigurationError(f"negative discount rate for spell {spell.key}")
        unsec = np.full(a.dates.shape, float(spell.unsecured_rate))
        sec = np.full(a.dates.shape, float(spell.secured_rate))
        el = (a.outstanding - discounted_forward_sums(unsec, cash)
              - discounted_forward_sums(sec, a.collateral_recovery)
              + discounted_forward_sums(unsec, a.cost))
    else:
        rates = policy.reference_rates(spell, macro)
        el = (a.outstanding - discounted_forward_sums(rates, cash + a.collateral_recovery)
              + discounted_forward_sums(rates, a.cost))
    # at the out date itself the cure recovery is immediate
    el[-1] -= terminal[-1]
    return el


def economic_loss(spell: DefaultSpell, reference_date: int, policy: DiscountPolicy,
                  macro: MacroSeries | None) -> float:
    i = reference_date - spell.default_date
    if not 0 <= i < len(spell.observations) or spell.observations[i].reporting_date != reference_date:
        raise LookupFailure(
            f"{format_month(reference_date)} is not a reporting date of spell {spell.key}"
        )
    return float(economic_loss_vector(spell, policy, macro)[i])


def realized_lgd_series(spell: DefaultSpell, policy: DiscountPolicy,
                        macro: MacroSeries | None) -> list[LgdRecord]:
    el = economic_loss_vector(spell, policy, macro)
    exposure = spell.arrays.outstanding
    raw = loss_ratio(el, exposure)
    floored = np.maximum(0.0, raw)
    resolved = spell.resolved
    return [
        LgdRecord(spell.borrower_id, spell.spell_index, int(d), float(e), float(x), float(r), float(f), resolved)
        for d, e, x, r, f in zip(spell.arrays.dates, el, exposure, raw, floored)
    ]


def portfolio_lgd(spells, policy: DiscountPolicy, macro: MacroSeries | None) -> list[LgdRecord]:
    """Records for all spells ordered by (borrower_id, spell_index, reference_date)."""
    out: list[LgdRecord] = []
    for spell in sorted(spells, key=lambda s: s.key):
        out.extend(realized_lgd_series(spell, policy, macro))
    return out


def cap_unit(values) -> np.ndarray:
    """Clip to [0, 1]; used only for plot-ready output."""
    return np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
