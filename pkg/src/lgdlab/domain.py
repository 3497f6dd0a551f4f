"""Portfolio data model: monthly grid, default spells, macro series.

Months are plain integers counted from January 2000 (``2000-01`` is 0). Quarterly
macro data is keyed by ``(year, quarter)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Mapping, NewType

import numpy as np

from .errors import ConfigurationError, OrderingError, ValidationError

MonthIndex = NewType("MonthIndex", int)

EPOCH_YEAR = 2000
# consecutive spells with at most this many performing months between them are merged
CONSOLIDATION_GAP_MONTHS = 3
AMOUNT_TOL = 1e-9


def month_index(year: int, month: int) -> MonthIndex:
    if not 1 <= month <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    return MonthIndex((year - EPOCH_YEAR) * 12 + (month - 1))


def year_month(m: int) -> tuple[int, int]:
    year, month0 = divmod(int(m), 12)
    return EPOCH_YEAR + year, month0 + 1


def quarter_of(m: int) -> tuple[int, int]:
    year, month = year_month(m)
    return year, (month - 1) // 3 + 1


def parse_month(text: str) -> MonthIndex:
    """Parse ``YYYY-MM``."""
    try:
        year_s, month_s = text.strip().split("-")
        return month_index(int(year_s), int(month_s))
    except ValueError as exc:
        raise ValidationError(f"invalid month {text!r}, expected YYYY-MM") from exc


def format_month(m: int) -> str:
    year, month = year_month(m)
    return f"{year:04d}-{month:02d}"


def months_between(start: int, end: int) -> int:
    if end < start:
        raise OrderingError(f"{format_month(end)} is before {format_month(start)}")
    return int(end) - int(start)


class FinalStatus(str, enum.Enum):
    CURED = "Cured"
    EXIT_NO_LOSS = "ExitNoLoss"
    NOT_RESOLVED = "NotResolved"
    EXIT_WITH_LOSS = "ExitWithLoss"

    @property
    def is_loss_group(self) -> bool:
        return self in LOSS_GROUP


NO_LOSS_GROUP = frozenset({FinalStatus.CURED, FinalStatus.EXIT_NO_LOSS})
LOSS_GROUP = frozenset({FinalStatus.NOT_RESOLVED, FinalStatus.EXIT_WITH_LOSS})


class DefaultReason(str, enum.Enum):
    DAYS90 = "Days90"
    BANKRUPT = "Bankrupt"
    FORB_PERIOD = "ForbPeriod"
    FRAUD = "Fraud"
    RESTR = "Restr"
    UNLIKE_PAY = "UnlikePay"


@dataclass(frozen=True)
class Observation:
    reporting_date: int
    outstanding: float
    cash_recovery: float = 0.0
    collateral_recovery: float = 0.0
    cost: float = 0.0
    write_off: float = 0.0

    @property
    def recovery(self) -> float:
        return self.cash_recovery + self.collateral_recovery


@dataclass(frozen=True)
class DefaultSpell:
    borrower_id: str
    spell_index: int
    default_date: int
    out_date: int | None
    reason: DefaultReason
    final_status: FinalStatus
    observations: tuple[Observation, ...]
    cover_value_index: float = 0.0
    unsecured_rate: float = 0.0
    secured_rate: float = 0.0

    @property
    def key(self) -> tuple[str, int]:
        return (self.borrower_id, self.spell_index)

    @property
    def ead(self) -> float:
        return self.observations[0].outstanding if self.observations else 0.0

    @property
    def last_date(self) -> int:
        return self.observations[-1].reporting_date

    @property
    def resolved(self) -> bool:
        return self.final_status is not FinalStatus.NOT_RESOLVED

    @cached_property
    def arrays(self) -> "SpellArrays":
        return SpellArrays.from_observations(self.observations)


@dataclass(frozen=True)
class SpellArrays:
    """Column view of a spell's observations."""

    dates: np.ndarray
    outstanding: np.ndarray
    cash_recovery: np.ndarray
    collateral_recovery: np.ndarray
    cost: np.ndarray
    write_off: np.ndarray

    @classmethod
    def from_observations(cls, obs: Iterable[Observation]) -> "SpellArrays":
        obs = list(obs)
        return cls(
            dates=np.array([o.reporting_date for o in obs], dtype=np.int64),
            outstanding=np.array([o.outstanding for o in obs], dtype=np.float64),
            cash_recovery=np.array([o.cash_recovery for o in obs], dtype=np.float64),
            collateral_recovery=np.array([o.collateral_recovery for o in obs], dtype=np.float64),
            cost=np.array([o.cost for o in obs], dtype=np.float64),
            write_off=np.array([o.write_off for o in obs], dtype=np.float64),
        )


@dataclass(frozen=True)
class MacroSeries:
    gdp: Mapping[tuple[int, int], float]
    employment: Mapping[tuple[int, int], float]
    hpi: Mapping[tuple[int, int], float]
    base_rate: Mapping[int, float]
    discount_addon: float = 0.05

    def quarterly(self, m: int) -> tuple[float, float, float]:
        q = quarter_of(m)
        try:
            return self.gdp[q], self.employment[q], self.hpi[q]
        except KeyError:
            raise ConfigurationError(f"macro series has no data for quarter {q[0]}Q{q[1]}") from None

    def rate(self, m: int) -> float:
        try:
            return self.base_rate[m]
        except KeyError:
            raise ConfigurationError(f"no base rate for month {format_month(m)}") from None

    def check_coverage(self, start: int, end: int) -> None:
        """Raise ConfigurationError naming the first month or quarter without data."""
        for m in range(start, end + 1):
            self.rate(m)
            self.quarterly(m)

    def months(self) -> list[int]:
        return sorted(self.base_rate)


def validate_spell(spell: DefaultSpell) -> list[str]:
    """Return one message per broken invariant; an empty list means the spell is valid."""
    problems: list[str] = []
    obs = spell.observations
    if not obs:
        return ["observations: spell has no observations"]
    if obs[0].reporting_date != spell.default_date:
        problems.append("observations: first reporting date must equal default_date")
    dates = [o.reporting_date for o in obs]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        problems.append("observations: reporting dates must be strictly increasing")
    elif any(b - a != 1 for a, b in zip(dates, dates[1:])):
        problems.append("non-contiguous reporting dates")
    if not obs[0].outstanding > 0:
        problems.append("EAD must be positive")
    for o in obs:
        for name in ("outstanding", "cash_recovery", "collateral_recovery", "cost", "write_off"):
            value = getattr(o, name)
            if not np.isfinite(value) or value < 0:
                problems.append(f"{name}: must be a finite non-negative amount ({format_month(o.reporting_date)})")
    for prev, cur in zip(obs, obs[1:]):
        if cur.write_off > prev.outstanding + AMOUNT_TOL:
            problems.append(f"write_off: exceeds previous outstanding ({format_month(cur.reporting_date)})")
    if spell.final_status is FinalStatus.NOT_RESOLVED:
        if spell.out_date is not None:
            problems.append("out_date: must be absent for NotResolved spells")
    elif spell.out_date is None:
        problems.append("out_date: required for resolved spells")
    elif spell.out_date != dates[-1]:
        problems.append("out_date: must equal the last reporting date")
    if spell.spell_index < 0:
        problems.append("spell_index: must be >= 0")
    return problems


def _end_month(spell: DefaultSpell) -> int:
    return spell.out_date if spell.out_date is not None else spell.last_date


def consolidate_defaults(raw_spells: list[DefaultSpell]) -> list[DefaultSpell]:
    """Merge one borrower's spells separated by at most three performing months.

    Gap months are filled with observations carrying the last known outstanding and
    zero flows. The merged spell keeps the first spell's reason and attributes and the
    last spell's final status and out date. Spells are re-indexed from 0.
    """
    if not raw_spells:
        return []
    spells = sorted(raw_spells, key=lambda s: s.default_date)
    if len({s.borrower_id for s in spells}) != 1:
        raise ValidationError("consolidate_defaults expects the spells of a single borrower")
    for prev, cur in zip(spells, spells[1:]):
        if cur.default_date <= _end_month(prev):
            raise ValidationError(
                f"borrower {cur.borrower_id}: spell starting {format_month(cur.default_date)} "
                f"overlaps the previous spell ending {format_month(_end_month(prev))}"
            )

    merged: list[DefaultSpell] = [spells[0]]
    for cur in spells[1:]:
        prev = merged[-1]
        gap = cur.default_date - _end_month(prev) - 1
        if gap <= CONSOLIDATION_GAP_MONTHS:
            last = prev.observations[-1]
            filler = tuple(
                Observation(reporting_date=m, outstanding=last.outstanding)
                for m in range(last.reporting_date + 1, cur.default_date)
            )
            merged[-1] = replace(
                prev,
                out_date=cur.out_date,
                final_status=cur.final_status,
                observations=prev.observations + filler + cur.observations,
            )
        else:
            merged.append(cur)
    return [replace(s, spell_index=i) if s.spell_index != i else s for i, s in enumerate(merged)]


def consolidate_portfolio(spells: Iterable[DefaultSpell]) -> list[DefaultSpell]:
    """Apply :func:`consolidate_defaults` per borrower; output sorted by (borrower_id, spell_index)."""
    by_borrower: dict[str, list[DefaultSpell]] = {}
    for s in spells:
        by_borrower.setdefault(s.borrower_id, []).append(s)
    out: list[DefaultSpell] = []
    for bid in sorted(by_borrower):
        out.extend(consolidate_defaults(by_borrower[bid]))
    return out
