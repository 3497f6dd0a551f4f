"""Command-line entry point: ``lgdlab <subcommand> [--config cfg.json] [flags]``.

Every flag mirrors a key of the JSON config; explicit flags override config
values, and unknown config keys are rejected before any computation starts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from . import __version__
from .bench import (DELTA_OS, SA_HYP, SA_VAR1, SA_VAR2, BenchReport, SearchConfig, SplitSpec, benchmark_frame,
                    build_frame, compute_metrics, correlation_report, duration_histogram, lgd_histogram,
                    run_sensitivity, scatter_table, split_by_final_status, temporal_split)
from .cashflow import DiscountPolicy, RateSource, portfolio_lgd
from .delta_os import portfolio_delta_os
from .domain import parse_month
from .errors import LgdLabError
from .features import (ALL_COLUMNS, DELTA_OS_INPUTS, FEATURE_COLUMNS, TARGET_COLUMN, WITHOUT_RLGD_OS,
                       build_feature_matrix)
from .gbt import GbtParams, train
from .io import load_portfolio, provenance_line, read_frame, write_frame, write_portfolio, write_rows
from .search import ParamSpace, SearchResult, grid_search, random_search
from .synthgen import GenConfig, generate_macro, generate_portfolio

log = logging.getLogger("lgdlab")

FEATURE_SETS = {"all": FEATURE_COLUMNS, "var1": DELTA_OS_INPUTS, "var2": WITHOUT_RLGD_OS}


@dataclass(frozen=True)
class Opt:
    type: Callable
    default: Any
    help: str


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _month(v):
    return parse_month(v) if isinstance(v, str) else int(v)


def _json_obj(v):
    return json.loads(v) if isinstance(v, str) else dict(v)


_DISCOUNT = {
    "rate_source": Opt(str, "base_rate_plus_addon", "base_rate_plus_addon | base_rate | fixed | per_flow"),
    "fixed_rate": Opt(float, 0.0, "annual rate for --rate-source fixed"),
    "discount_addon": Opt(float, 0.05, "add-on over the base rate"),
}
_SEARCH = {
    "profile": Opt(str, "reference", "reference (full grid) or laptop (reduced ensembles)"),
    "n_iter": Opt(int, None, "candidates per randomized search (profile default if unset)"),
    "k": Opt(int, None, "cross-validation folds (profile default if unset)"),
    "seed": Opt(int, 0, "search and split seed"),
    "row_level_folds": Opt(_bool, False, "fold by row instead of by spell"),
}
_SPLIT = {
    "ood_months": Opt(int, 6, "months held out at the end of the window"),
    "train_fraction": Opt(float, 75 / 95, "train share of the non-out-of-date rows"),
    "split_unit": Opt(str, "by_spell", "by_spell | by_row"),
}

COMMANDS: dict[str, dict[str, Opt]] = {
    "gen": {
        "out": Opt(str, None, "output directory"),
        "seed": Opt(int, 7, "generator seed"),
        "n_borrowers": Opt(int, 1891, "number of borrowers"),
        "start": Opt(_month, "2008-01", "first month (YYYY-MM)"),
        "end": Opt(_month, "2018-12", "last month (YYYY-MM)"),
        "status_mix": Opt(_json_obj, None, "JSON object of final-status probabilities"),
        "multi_default_rate": Opt(float, 104 / 1891, "share of borrowers with two spells"),
        "writeoff_borrower_rate": Opt(float, 0.03, "share of borrowers with a write-off"),
        "max_duration_months": Opt(int, 130, "longest spell"),
        "cost_rate": Opt(float, 0.02, "workout cost as a fraction of recoveries"),
        "cashflow_exact": Opt(_bool, False, "book every balance decrease as cash"),
    },
    "lgd": {
        "data": Opt(str, None, "portfolio directory"),
        "out": Opt(str, None, "output directory"),
        "scatter_rows": Opt(int, 10_000, "rows kept in the scatter table"),
        "seed": Opt(int, 0, "subsample seed"),
        **_DISCOUNT,
    },
    "features": {
        "data": Opt(str, None, "portfolio directory"),
        "out": Opt(str, None, "output directory"),
        **_DISCOUNT,
    },
    "train": {
        "features": Opt(str, None, "feature matrix CSV"),
        "out": Opt(str, None, "model JSON path"),
        "feature_set": Opt(str, "all", "all | var1 | var2"),
        "status_group": Opt(str, "all", "all | noloss | loss"),
        "params": Opt(_json_obj, {}, "JSON object of GBT parameters"),
    },
    "tune": {
        "features": Opt(str, None, "feature matrix CSV"),
        "out": Opt(str, None, "output directory"),
        "mode": Opt(str, "random", "random | grid | sensitivity"),
        "feature_set": Opt(str, "all", "all | var1 | var2"),
        "status_group": Opt(str, "all", "all | noloss | loss"),
        "space": Opt(_json_obj, None, "JSON ParamSpace overriding the profile space"),
        "grid_budget": Opt(int, 10_000, "largest grid evaluated in grid mode"),
        **_SEARCH,
    },
    "bench": {
        "data": Opt(str, None, "portfolio directory"),
        "out": Opt(str, None, "output directory"),
        **_DISCOUNT, **_SEARCH, **_SPLIT,
    },
    "sensitivity": {
        "data": Opt(str, None, "portfolio directory"),
        "out": Opt(str, None, "output directory"),
        "legs": Opt(lambda v: v.split(",") if isinstance(v, str) else list(v), [SA_HYP, SA_VAR1, SA_VAR2],
                    "comma-separated sensitivity models"),
        **_DISCOUNT, **_SEARCH, **_SPLIT,
    },
    "report": {
        "input": Opt(str, None, "directory holding JSON artifacts"),
        "out": Opt(str, None, "output directory"),
    },
}
SUMMARIES = {
    "gen": "write a synthetic portfolio and macro series",
    "lgd": "realized LGD by both engines plus plot tables",
    "features": "build the feature matrix",
    "train": "fit one GBT model",
    "tune": "randomized, grid or sensitivity search",
    "bench": "benchmark delta-OS against the GBT models",
    "sensitivity": "feature-set sensitivity legs",
    "report": "re-render CSV tables from JSON artifacts",
}
REQUIRED = {"gen": ("out",), "lgd": ("data", "out"), "features": ("data", "out"),
            "train": ("features", "out"), "tune": ("features", "out"), "bench": ("data", "out"),
            "sensitivity": ("data", "out"), "report": ("input", "out")}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgdlab", description="Realized LGD and gradient-boosted approximation")
    parser.add_argument("--version", action="version", version=f"lgdlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config file")
        for key, opt in opts.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, help=opt.help)
    return parser


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicit flags; all values validated."""
    opts = COMMANDS[command]
    merged = {k: o.default for k, o in opts.items()}
    given = vars(ns)
    if given.get("config"):
        try:
            file_cfg = json.loads(Path(given["config"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {given['config']}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(opts))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(file_cfg)
    for k in opts:
        if k in given:
            merged[k] = given[k]
    for k, opt in opts.items():
        if merged[k] is not None:
            try:
                merged[k] = opt.type(merged[k])
            except (TypeError, ValueError, LgdLabError) as exc:
                raise UsageError(f"invalid value for {k}: {exc}") from None
    missing = [k for k in REQUIRED[command] if merged.get(k) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return merged


PATH_OPTIONS = ("out", "config", "data", "features", "input")


def _jsonable(cfg: dict) -> dict:
    # paths are left out so relocating a run does not change its hash
    return {k: v for k, v in cfg.items() if k not in PATH_OPTIONS}


def _provenance(cfg: dict) -> str:
    return provenance_line(cfg.get("seed", "none"), _jsonable(cfg))


def _policy(cfg: dict) -> DiscountPolicy:
    return DiscountPolicy(RateSource(cfg["rate_source"]), cfg["fixed_rate"])


def _search_config(cfg: dict) -> SearchConfig:
    base = {"reference": SearchConfig.reference, "laptop": SearchConfig.laptop}.get(cfg["profile"])
    if base is None:
        raise UsageError(f"unknown profile {cfg['profile']!r}")
    sc = base(cfg["seed"])
    changes = {"row_level_folds": cfg["row_level_folds"]}
    if cfg.get("n_iter") is not None:
        changes["n_iter"] = cfg["n_iter"]
    if cfg.get("k") is not None:
        changes["k"] = cfg["k"]
    return SearchConfig(**{**sc.__dict__, **changes})


def _split_spec(cfg: dict) -> SplitSpec:
    return SplitSpec(cfg["ood_months"], cfg["train_fraction"], cfg["split_unit"], cfg["seed"])


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: dict, provenance: str) -> None:
    # JSON has no comments; provenance goes in a top-level key
    doc = {"provenance": provenance.lstrip("# "), **data}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc.pop("provenance", None)
    return doc


def _load(cfg: dict):
    return load_portfolio(cfg["data"], cfg["discount_addon"])


def cmd_gen(cfg: dict) -> None:
    gen_keys = ("seed", "n_borrowers", "start", "end", "multi_default_rate", "writeoff_borrower_rate",
                "max_duration_months", "cost_rate", "cashflow_exact")
    kwargs = {k: cfg[k] for k in gen_keys}
    if cfg["status_mix"] is not None:
        kwargs["status_mix"] = cfg["status_mix"]
    gcfg = GenConfig(**kwargs)
    macro = generate_macro(gcfg.seed, gcfg.start, gcfg.end)
    spells = generate_portfolio(gcfg, macro)
    out = _out_dir(cfg)
    write_portfolio(out, spells, macro, _provenance(cfg))
    log.info("wrote %d spells (%d rows) to %s", len(spells), sum(len(s.observations) for s in spells), out)


def _lgd_table(cash, os_):
    os_idx = {r.key: r for r in os_}
    for r in cash:
        o = os_idx[r.key]
        yield (r.borrower_id, r.spell_index, r.reference_date, r.exposure_at_ref, r.el, r.rlgd_raw, r.rlgd,
               o.el, o.rlgd_raw, o.rlgd, int(r.resolved))


LGD_COLUMNS = ("borrower_id", "spell_index", "reference_date", "exposure", "el_cashflow", "rlgd_cashflow_raw",
               "rlgd_cashflow", "el_delta_os", "rlgd_delta_os_raw", "rlgd_delta_os", "resolved")


def cmd_lgd(cfg: dict) -> None:
    spells, macro = _load(cfg)
    policy = _policy(cfg)
    cash = portfolio_lgd(spells, policy, macro)
    os_ = portfolio_delta_os(spells, policy, macro)
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    write_rows(out / "lgd_records.csv", LGD_COLUMNS, _lgd_table(cash, os_), prov)
    write_frame(out / "scatter.csv", scatter_table(cash, os_, spells, cfg["scatter_rows"], cfg["seed"]), prov)
    write_frame(out / "lgd_histogram.csv", lgd_histogram([r.rlgd for r in cash]), prov)
    write_frame(out / "duration_histogram.csv", duration_histogram(spells), prov)


def cmd_features(cfg: dict) -> None:
    spells, macro = _load(cfg)
    policy = _policy(cfg)
    frame = build_feature_matrix(spells, portfolio_lgd(spells, policy, macro),
                                 portfolio_delta_os(spells, policy, macro), macro, policy)
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    write_frame(out / "features.csv", frame, prov)
    write_frame(out / "correlation.csv", correlation_report(frame), prov)


def _read_features(path) -> pd.DataFrame:
    frame = read_frame(path).astype({"borrower_id": str})
    missing = [c for c in ALL_COLUMNS if c not in frame.columns]
    if missing:
        raise UsageError(f"{path}: feature matrix lacks columns {missing}")
    return frame


def _select(frame: pd.DataFrame, cfg: dict):
    if cfg["feature_set"] not in FEATURE_SETS:
        raise UsageError(f"unknown feature_set {cfg['feature_set']!r}")
    group = cfg["status_group"]
    if group != "all":
        noloss, loss = split_by_final_status(frame)
        frame = {"noloss": noloss, "loss": loss}.get(group)
        if frame is None:
            raise UsageError(f"unknown status_group {group!r}")
    return frame, FEATURE_SETS[cfg["feature_set"]]


def cmd_train(cfg: dict) -> None:
    frame, features = _select(_read_features(cfg["features"]), cfg)
    params = GbtParams.from_dict(cfg["params"])
    model = train(frame[list(features)].to_numpy(dtype=np.float64), frame[TARGET_COLUMN].to_numpy(), params,
                  features)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = model.to_dict()
    doc["provenance"] = _provenance(cfg).lstrip("# ")
    out.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def cmd_tune(cfg: dict) -> None:
    frame, features = _select(_read_features(cfg["features"]), cfg)
    sc = _search_config(cfg)
    X = frame[list(features)].to_numpy(dtype=np.float64)
    y = frame[TARGET_COLUMN].to_numpy(dtype=np.float64)
    groups = None if sc.row_level_folds else list(zip(frame["borrower_id"], frame["spell_index"]))
    mode = cfg["mode"]
    if cfg["space"] is not None:
        space = ParamSpace.from_dict(cfg["space"])
    else:
        space = sc.sensitivity_space if mode == "sensitivity" else sc.space
    if mode == "grid":
        result = grid_search(space, sc.k, sc.seed, X, y, groups, budget=cfg["grid_budget"])
    elif mode in ("random", "sensitivity"):
        n_iter = sc.sensitivity_n_iter if mode == "sensitivity" and cfg.get("n_iter") is None else sc.n_iter
        result = random_search(space, n_iter, sc.k, sc.seed, X, y, groups)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    _write_json(out / "search_result.json", result.to_dict(), prov)
    _render_search(result, out, prov)


def _render_search(result: SearchResult, out: Path, prov: str) -> None:
    write_frame(out / "search_summary.csv", pd.DataFrame(result.summary_rows()), prov)


def _render_report(report: BenchReport, out: Path, name: str, prov: str) -> None:
    write_frame(out / f"{name}.csv", report.to_frame(), prov)


def cmd_bench(cfg: dict) -> None:
    spells, macro = _load(cfg)
    frame = build_frame(spells, macro, _policy(cfg))
    report, _ = benchmark_frame(frame, _search_config(cfg), _split_spec(cfg))
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    _write_json(out / "bench_report.json", report.to_dict(), prov)
    _render_report(report, out, "bench_report", prov)
    log.info("benchmark finished in %.1f s", report.timings.get("benchmark", float("nan")))


def cmd_sensitivity(cfg: dict) -> None:
    spells, macro = _load(cfg)
    frame = build_frame(spells, macro, _policy(cfg))
    spec = _split_spec(cfg)
    report = BenchReport(meta={"legs": list(cfg["legs"])})
    _, oos, ood = temporal_split(frame, spec)
    for name, sample in (("out_of_sample", oos), ("out_of_date", ood)):
        if not sample.empty:
            report.set(DELTA_OS, name, compute_metrics(sample["rlgd_os"], sample[TARGET_COLUMN]))
    run_sensitivity(frame, _search_config(cfg), spec, report, cfg["legs"])
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    _write_json(out / "sensitivity_report.json", report.to_dict(), prov)
    _render_report(report, out, "sensitivity_report", prov)


def cmd_report(cfg: dict) -> None:
    src = Path(cfg["input"])
    out = _out_dir(cfg)
    found = False
    for name in ("bench_report", "sensitivity_report"):
        path = src / f"{name}.json"
        if path.exists():
            raw = json.loads(path.read_text(encoding="utf-8"))
            prov = "# " + raw.get("provenance", "")
            _render_report(BenchReport.from_dict(_read_json(path)), out, name, prov)
            found = True
    path = src / "search_result.json"
    if path.exists():
        raw = json.loads(path.read_text(encoding="utf-8"))
        _render_search(SearchResult.from_dict(_read_json(path)), out, "# " + raw.get("provenance", ""))
        found = True
    if not found:
        raise UsageError(f"no bench_report.json, sensitivity_report.json or search_result.json in {src}")


HANDLERS = {"gen": cmd_gen, "lgd": cmd_lgd, "features": cmd_features, "train": cmd_train, "tune": cmd_tune,
            "bench": cmd_bench, "sensitivity": cmd_sensitivity, "report": cmd_report}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    command = ns.command
    try:
        cfg = resolve_config(command, ns)
        HANDLERS[command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lgdlab {command}: error: {exc}", file=sys.stderr)
        return 2
    except (LgdLabError, OSError) as exc:
        print(f"lgdlab {command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
