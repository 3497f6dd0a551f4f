"""Synthetic defaulted-mortgage portfolios with known cash flows.

Each borrower gets one or two default spells. The final status drives the balance
path: cures amortize regularly and leave default with a balance, exits without
loss end in a full repayment or collateral sale, exits with loss end in a partial
collateral sale plus a write-off, and unresolved spells trickle small payments
until the end of the observation window.

With ``cashflow_exact`` every balance decrease is booked as a cash recovery (no
costs, collateral flows or write-offs) and cures close their balance with a final
payment, so both LGD engines see identical information.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import (
    DefaultReason,
    DefaultSpell,
    FinalStatus,
    MacroSeries,
    Observation,
    month_index,
    quarter_of,
    validate_spell,
)
from .errors import ConfigurationError

DEFAULT_STATUS_MIX = {
    FinalStatus.CURED: 0.36,
    FinalStatus.EXIT_NO_LOSS: 0.30,
    FinalStatus.NOT_RESOLVED: 0.32,
    FinalStatus.EXIT_WITH_LOSS: 0.02,
}

_REASONS = list(DefaultReason)
# reason probabilities conditional on the loss / no-loss group
_REASON_P_NOLOSS = np.array([0.52, 0.02, 0.20, 0.01, 0.15, 0.10])
_REASON_P_LOSS = np.array([0.34, 0.12, 0.08, 0.08, 0.12, 0.26])

# (gamma shape, gamma scale, minimum) of spell duration in months
_DURATION = {
    FinalStatus.CURED: (1.6, 8.0, 3),
    FinalStatus.EXIT_NO_LOSS: (1.8, 12.0, 0),
    FinalStatus.EXIT_WITH_LOSS: (2.5, 14.0, 1),
    FinalStatus.NOT_RESOLVED: (1.5, 33.0, 0),
}


@dataclass
class GenConfig:
    seed: int = 7
    n_borrowers: int = 1891
    start: int = month_index(2008, 1)
    end: int = month_index(2018, 12)
    status_mix: dict = field(default_factory=lambda: dict(DEFAULT_STATUS_MIX))
    multi_default_rate: float = 104 / 1891
    writeoff_borrower_rate: float = 0.03
    max_duration_months: int = 130
    cost_rate: float = 0.02
    cashflow_exact: bool = False

    def __post_init__(self):
        self.status_mix = {FinalStatus(k): float(v) for k, v in self.status_mix.items()}
        for status in FinalStatus:
            self.status_mix.setdefault(status, 0.0)
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.n_borrowers < 1:
            problems.append("n_borrowers must be >= 1")
        if self.end <= self.start:
            problems.append("end must be after start")
        for name in ("multi_default_rate", "writeoff_borrower_rate", "cost_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must be in [0, 1], got {v}")
        if any(not 0.0 <= p <= 1.0 for p in self.status_mix.values()):
            problems.append("status_mix probabilities must be in [0, 1]")
        if abs(sum(self.status_mix.values()) - 1.0) > 1e-12:
            problems.append(f"status_mix must sum to 1, got {sum(self.status_mix.values())!r}")
        if self.max_duration_months < 0:
            problems.append("max_duration_months must be >= 0")
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status_mix"] = {k.value: v for k, v in self.status_mix.items()}
        return d


def generate_macro(seed: int, start: int, end: int) -> MacroSeries:
    """Mean-reverting paths for quarterly GDP, employment and HPI and a monthly base rate."""
    if end <= start:
        raise ConfigurationError("end must be after start")
    rng = np.random.default_rng([seed, 0x4D41])
    q0, q1 = quarter_of(start), quarter_of(end)
    quarters = []
    y, q = q0
    while (y, q) <= q1:
        quarters.append((y, q))
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)

    gdp, emp, hpi = {}, {}, {}
    log_gdp, gdp_gap = math.log(100.0), 0.0
    emp_level = 0.64
    log_hpi, hpi_gap = math.log(100.0), 0.0
    for i, key in enumerate(quarters):
        gdp_gap = 0.8 * gdp_gap + rng.normal(0.0, 0.008)
        log_gdp += 0.004
        gdp[key] = round(math.exp(log_gdp + gdp_gap), 4)
        emp_level += 0.25 * (0.64 - emp_level) + 0.3 * gdp_gap + rng.normal(0.0, 0.003)
        emp[key] = round(min(max(emp_level, 0.5), 0.8), 5)
        hpi_gap = 0.85 * hpi_gap + 1.5 * (gdp_gap - 0.0) * 0.3 + rng.normal(0.0, 0.015)
        log_hpi += 0.006
        hpi[key] = round(math.exp(log_hpi + hpi_gap), 4)

    base_rate = {}
    r = 0.042
    for m in range(start, end + 1):
        r += 0.04 * (0.012 - r) + rng.normal(0.0, 0.0012)
        r = min(max(r, 0.0), 0.10)
        base_rate[m] = round(r, 6)
    return MacroSeries(gdp=gdp, employment=emp, hpi=hpi, base_rate=base_rate, discount_addon=0.05)


@dataclass
class _SpellPlan:
    status: FinalStatus
    default_date: int
    duration: int
    reason: DefaultReason
    partial_writeoff: bool = False


def _draw_duration(rng, status: FinalStatus, cap: int) -> int:
    shape, scale, lo = _DURATION[status]
    return int(min(max(lo, int(rng.gamma(shape, scale))), cap))


def _plan_borrower(rng, cfg: GenConfig, statuses: list[FinalStatus], probs: np.ndarray) -> list[_SpellPlan]:
    window = cfg.end - cfg.start
    cap = min(cfg.max_duration_months, window)
    n_spells = 2 if rng.random() < cfg.multi_default_rate else 1
    drawn = [statuses[i] for i in rng.choice(len(statuses), size=n_spells, p=probs)]
    # an unresolved spell runs to the end of the window, so it must come last
    if n_spells == 2:
        if drawn[0] is FinalStatus.NOT_RESOLVED and drawn[1] is FinalStatus.NOT_RESOLVED:
            drawn = drawn[:1]
        elif drawn[0] is FinalStatus.NOT_RESOLVED:
            drawn = [drawn[1], drawn[0]]

    durations = [_draw_duration(rng, s, cap) for s in drawn]
    reasons = []
    for s in drawn:
        p = _REASON_P_LOSS if s.is_loss_group else _REASON_P_NOLOSS
        reasons.append(_REASONS[int(rng.choice(len(_REASONS), p=p))])

    if len(drawn) == 2:
        gap = int(rng.integers(4, 25))
        span = durations[0] + gap + durations[1] + 1
        if span > window:
            drawn, durations, reasons = drawn[1:], durations[1:], reasons[1:]

    plans: list[_SpellPlan] = []
    if len(drawn) == 1:
        d = durations[0]
        if drawn[0] is FinalStatus.NOT_RESOLVED:
            dd = cfg.end - d
        else:
            dd = int(rng.integers(cfg.start, cfg.end - d + 1))
        plans.append(_SpellPlan(drawn[0], dd, d, reasons[0]))
    else:
        d1, d2 = durations
        if drawn[1] is FinalStatus.NOT_RESOLVED:
            dd2 = cfg.end - d2
        else:
            dd2 = int(rng.integers(cfg.start + d1 + gap + 1, cfg.end - d2 + 1))
        dd1 = dd2 - gap - 1 - d1
        plans.append(_SpellPlan(drawn[0], dd1, d1, reasons[0]))
        plans.append(_SpellPlan(drawn[1], dd2, d2, reasons[1]))
    return plans


def _cents(x: float) -> float:
    return round(x, 2)


def _balance_path(rng, plan: _SpellPlan, ead: float, cover: float, macro: MacroSeries,
                  cfg: GenConfig) -> list[Observation]:
    n = plan.duration + 1
    status = plan.status
    exact = cfg.cashflow_exact
    dates = [plan.default_date + j for j in range(n)]
    os_ = [ead]
    cash = [0.0]
    coll = [0.0]
    wo = [0.0]

    if status is FinalStatus.CURED:
        pay_rate, pay_prob = rng.uniform(0.004, 0.015), 0.92
    elif status is FinalStatus.EXIT_NO_LOSS:
        pay_rate, pay_prob = rng.uniform(0.002, 0.010), 0.55
    else:
        pay_rate, pay_prob = rng.uniform(0.001, 0.008), 0.25

    wo_month = int(rng.integers(1, n)) if plan.partial_writeoff and n > 1 and not exact else -1
    terminal = status in (FinalStatus.EXIT_NO_LOSS, FinalStatus.EXIT_WITH_LOSS) or (
        status is FinalStatus.CURED and exact)

    for j in range(1, n):
        prev = os_[-1]
        c = k = w = 0.0
        if terminal and j == n - 1:
            if status is FinalStatus.EXIT_WITH_LOSS:
                hpi_ratio = macro.quarterly(dates[j])[2] / macro.quarterly(dates[0])[2]
                frac = rng.beta(2.0, 2.5) * min(1.0, cover * min(max(hpi_ratio, 0.7), 1.3))
                recovered = _cents(prev * frac)
                if exact:
                    c = recovered
                else:
                    k = recovered
                    w = _cents(prev - recovered)
            elif status is FinalStatus.EXIT_NO_LOSS and not exact and rng.random() < 0.6:
                k = prev
            else:
                c = prev
        else:
            if rng.random() < pay_prob:
                c = min(prev, _cents(ead * pay_rate * rng.uniform(0.6, 1.4)))
            if j == wo_month:
                w = min(prev - c, _cents(ead * rng.uniform(0.03, 0.20)))
        new = _cents(prev - c - k - w)
        if new < 0.005:
            new = 0.0
        if exact:
            c = prev - new
        elif k == 0.0 and w == 0.0:
            c = _cents(prev - new)
        os_.append(new)
        cash.append(c)
        coll.append(k)
        wo.append(w)

    obs = []
    for j in range(n):
        rec = cash[j] + coll[j]
        cost = 0.0 if exact else _cents(cfg.cost_rate * rec)
        obs.append(Observation(dates[j], os_[j], cash[j], coll[j], cost, wo[j]))
    return obs


def generate_portfolio(cfg: GenConfig, macro: MacroSeries) -> list[DefaultSpell]:
    cfg.validate()
    macro.check_coverage(cfg.start, cfg.end)
    statuses = list(FinalStatus)
    probs = np.array([cfg.status_mix[s] for s in statuses])
    probs = probs / probs.sum()

    width = len(str(cfg.n_borrowers))
    rngs = [np.random.default_rng([cfg.seed, b]) for b in range(cfg.n_borrowers)]
    plans = [_plan_borrower(rngs[b], cfg, statuses, probs) for b in range(cfg.n_borrowers)]

    # borrowers with an exit-with-loss are written off; top up to the target share
    # with partial write-offs on other borrowers
    if not cfg.cashflow_exact:
        has_loss_exit = [any(p.status is FinalStatus.EXIT_WITH_LOSS for p in ps) for ps in plans]
        target = int(round(cfg.writeoff_borrower_rate * cfg.n_borrowers))
        missing = target - sum(has_loss_exit)
        eligible = [b for b, ps in enumerate(plans)
                    if not has_loss_exit[b] and any(p.status in (FinalStatus.NOT_RESOLVED, FinalStatus.EXIT_NO_LOSS)
                                                    and p.duration >= 1 for p in ps)]
        if missing > 0 and eligible:
            pick = np.random.default_rng([cfg.seed, 0x5752]).choice(
                len(eligible), size=min(missing, len(eligible)), replace=False)
            for i in sorted(pick):
                for p in plans[eligible[i]]:
                    if p.status in (FinalStatus.NOT_RESOLVED, FinalStatus.EXIT_NO_LOSS) and p.duration >= 1:
                        p.partial_writeoff = True
                        break

    spells: list[DefaultSpell] = []
    for b, ps in enumerate(plans):
        rng = rngs[b]
        bid = f"B{b:0{width}d}"
        for idx, plan in enumerate(ps):
            ead = _cents(float(np.exp(rng.normal(11.5, 0.6))))
            cover = round(float(np.exp(rng.normal(0.05, 0.35))), 4)
            unsec = round(float(rng.choice([0.06, 0.07, 0.08, 0.09])), 4)
            sec = round(float(rng.choice([0.03, 0.035, 0.04, 0.045, 0.05])), 4)
            obs = _balance_path(rng, plan, ead, cover, macro, cfg)
            out_date = None if plan.status is FinalStatus.NOT_RESOLVED else obs[-1].reporting_date
            spell = DefaultSpell(
                borrower_id=bid, spell_index=idx, default_date=plan.default_date, out_date=out_date,
                reason=plan.reason, final_status=plan.status, observations=tuple(obs),
                cover_value_index=cover, unsecured_rate=unsec, secured_rate=sec,
            )
            problems = validate_spell(spell)
            if problems:
                raise AssertionError(f"generator produced an invalid spell {spell.key}: {problems}")
            spells.append(spell)
    return spells
