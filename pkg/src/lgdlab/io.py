"""CSV schemas for portfolios and macro series, plus provenance headers.

Every output file starts with one ``# seed=... config_hash=...`` comment line;
readers skip lines starting with ``#``. Floats are written with ``repr`` so a
write/read round trip is exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from .domain import (DefaultReason, DefaultSpell, FinalStatus, MacroSeries, Observation, consolidate_portfolio,
                     format_month, month_index, parse_month, validate_spell, year_month)
from .errors import ValidationError

PORTFOLIO_FILE = "portfolio.csv"
MACRO_FILE = "macro_quarterly.csv"
RATES_FILE = "rates_monthly.csv"

PORTFOLIO_COLUMNS = (
    "borrower_id", "spell_index", "reporting_date", "outstanding", "cash_recovery", "collateral_recovery",
    "cost", "write_off", "default_date", "out_date", "reason", "final_status", "cover_value_index",
    "unsecured_rate", "secured_rate",
)
MACRO_COLUMNS = ("year", "quarter", "gdp", "employment", "hpi")
RATES_COLUMNS = ("year", "month", "base_rate")
MAX_REPORTED_ERRORS = 50


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def provenance_line(seed, config: dict) -> str:
    return f"# seed={seed} config_hash={config_hash(config)}"


def fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_write(path: Path):
    return open(path, "w", encoding="utf-8", newline="")


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence], provenance: str | None) -> None:
    with _open_write(path) as fh:
        if provenance:
            fh.write(provenance + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_frame(path: Path, frame: pd.DataFrame, provenance: str | None) -> None:
    write_rows(path, list(frame.columns), frame.itertuples(index=False, name=None), provenance)


def _portfolio_rows(spells: Sequence[DefaultSpell]):
    for s in sorted(spells, key=lambda s: s.key):
        out = format_month(s.out_date) if s.out_date is not None else ""
        for o in s.observations:
            yield (s.borrower_id, s.spell_index, format_month(o.reporting_date), float(o.outstanding),
                   float(o.cash_recovery), float(o.collateral_recovery), float(o.cost), float(o.write_off),
                   format_month(s.default_date), out, s.reason.value, s.final_status.value,
                   float(s.cover_value_index), float(s.unsecured_rate), float(s.secured_rate))


def write_portfolio(directory, spells: Sequence[DefaultSpell], macro: MacroSeries,
                    provenance: str | None = None) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / PORTFOLIO_FILE, d / MACRO_FILE, d / RATES_FILE]
    write_rows(paths[0], PORTFOLIO_COLUMNS, _portfolio_rows(spells), provenance)
    write_rows(paths[1], MACRO_COLUMNS,
               ((y, q, float(macro.gdp[(y, q)]), float(macro.employment[(y, q)]), float(macro.hpi[(y, q)]))
                for y, q in sorted(macro.gdp)), provenance)
    write_rows(paths[2], RATES_COLUMNS,
               ((*year_month(m), float(macro.base_rate[m])) for m in sorted(macro.base_rate)), provenance)
    return paths


def _read_csv(path: Path, columns: Sequence[str]) -> list[tuple[int, dict]]:
    """Rows as ``(line_number, record)``; comment lines are skipped but counted."""
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not numbered:
        raise ValidationError(f"{path}: no header line")
    header_line, header = numbered[0]
    try:
        parsed = list(csv.reader([ln for _, ln in numbered], strict=True))
    except csv.Error as exc:
        raise ValidationError(f"{path}: malformed CSV: {exc}") from None
    if tuple(parsed[0]) != tuple(columns):
        raise ValidationError(f"{path}:{header_line}: expected header {','.join(columns)}, got {header}")
    out = []
    for (line_no, _), fields in zip(numbered[1:], parsed[1:]):
        if len(fields) != len(columns):
            raise ValidationError(f"{path}:{line_no}: expected {len(columns)} fields, got {len(fields)}")
        out.append((line_no, dict(zip(columns, fields))))
    return out


def _number(path, line, name, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ValidationError(f"{path}:{line}: {name} is not a valid number: {text!r}") from None


def load_macro(directory, discount_addon: float = 0.05) -> MacroSeries:
    d = Path(directory)
    gdp, emp, hpi, rates = {}, {}, {}, {}
    mpath = d / MACRO_FILE
    for line, r in _read_csv(mpath, MACRO_COLUMNS):
        key = (_number(mpath, line, "year", r["year"], int), _number(mpath, line, "quarter", r["quarter"], int))
        if not 1 <= key[1] <= 4:
            raise ValidationError(f"{mpath}:{line}: quarter must be 1..4")
        if key in gdp:
            raise ValidationError(f"{mpath}:{line}: duplicate quarter {key[0]}Q{key[1]}")
        gdp[key] = _number(mpath, line, "gdp", r["gdp"])
        emp[key] = _number(mpath, line, "employment", r["employment"])
        hpi[key] = _number(mpath, line, "hpi", r["hpi"])
    rpath = d / RATES_FILE
    for line, r in _read_csv(rpath, RATES_COLUMNS):
        try:
            m = month_index(_number(rpath, line, "year", r["year"], int), _number(rpath, line, "month", r["month"], int))
        except ValueError as exc:
            raise ValidationError(f"{rpath}:{line}: {exc}") from None
        if m in rates:
            raise ValidationError(f"{rpath}:{line}: duplicate month {format_month(m)}")
        rates[m] = _number(rpath, line, "base_rate", r["base_rate"])
    return MacroSeries(gdp=gdp, employment=emp, hpi=hpi, base_rate=rates, discount_addon=discount_addon)


_SPELL_ATTRS = ("default_date", "out_date", "reason", "final_status", "cover_value_index", "unsecured_rate",
                "secured_rate")


def load_portfolio(directory, discount_addon: float = 0.05) -> tuple[list[DefaultSpell], MacroSeries]:
    """Read, validate and consolidate a portfolio; every problem is reported with its line."""
    d = Path(directory)
    ppath = d / PORTFOLIO_FILE
    rows = _read_csv(ppath, PORTFOLIO_COLUMNS)
    errors: list[str] = []
    groups: dict[tuple, list[tuple[int, dict]]] = defaultdict(list)
    for line, r in rows:
        try:
            idx = int(r["spell_index"])
        except ValueError:
            errors.append(f"{ppath}:{line}: spell_index is not an integer: {r['spell_index']!r}")
            continue
        if not r["borrower_id"]:
            errors.append(f"{ppath}:{line}: borrower_id is empty")
            continue
        groups[(r["borrower_id"], idx)].append((line, r))

    raw: list[DefaultSpell] = []
    for (bid, idx), items in groups.items():
        first_line, first = items[0]
        for line, r in items[1:]:
            diff = [a for a in _SPELL_ATTRS if r[a] != first[a]]
            if diff:
                errors.append(f"{ppath}:{line}: spell ({bid}, {idx}) attributes differ from line {first_line}: "
                              f"{', '.join(diff)}")
        try:
            obs = []
            for line, r in items:
                obs.append(Observation(
                    parse_month(r["reporting_date"]),
                    *(_number(ppath, line, c, r[c]) for c in
                      ("outstanding", "cash_recovery", "collateral_recovery", "cost", "write_off"))))
            spell = DefaultSpell(
                borrower_id=bid, spell_index=idx, default_date=parse_month(first["default_date"]),
                out_date=parse_month(first["out_date"]) if first["out_date"].strip() else None,
                reason=DefaultReason(first["reason"]), final_status=FinalStatus(first["final_status"]),
                observations=tuple(sorted(obs, key=lambda o: o.reporting_date)),
                cover_value_index=_number(ppath, first_line, "cover_value_index", first["cover_value_index"]),
                unsecured_rate=_number(ppath, first_line, "unsecured_rate", first["unsecured_rate"]),
                secured_rate=_number(ppath, first_line, "secured_rate", first["secured_rate"]),
            )
        except ValueError as exc:
            errors.append(f"{ppath}:{first_line}: {exc}")
            continue
        line_of = {parse_month(r["reporting_date"]): line for line, r in items}
        for problem in validate_spell(spell):
            line = first_line
            if problem.startswith("EAD"):
                line = line_of.get(spell.default_date, first_line)
            errors.append(f"{ppath}:{line}: spell ({bid}, {idx}): {problem}")
        raw.append(spell)

    if errors:
        shown = errors[:MAX_REPORTED_ERRORS]
        more = len(errors) - len(shown)
        raise ValidationError("\n".join(shown + ([f"... and {more} more"] if more else [])))

    try:
        spells = consolidate_portfolio(raw)
    except ValidationError as exc:
        raise ValidationError(f"{ppath}: {exc}") from None
    for s in spells:
        problems = validate_spell(s)
        if problems:
            raise ValidationError(f"{ppath}: consolidated spell {s.key}: {'; '.join(problems)}")

    macro = load_macro(d, discount_addon)
    if spells:
        start = min(s.default_date for s in spells)
        end = max(s.last_date for s in spells)
        macro.check_coverage(start, end)
    return spells, macro


def read_frame(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", keep_default_na=False, na_values=[])
