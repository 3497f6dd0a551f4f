"""Realized loss given default (workout cash flows and delta outstanding) with gradient-boosted approximations."""

__version__ = "0.1.0"

from .cashflow import DiscountPolicy, LgdRecord, RateSource, portfolio_lgd, realized_lgd_series
from .delta_os import portfolio_delta_os, rlgd_delta_os
from .domain import DefaultReason, DefaultSpell, FinalStatus, MacroSeries, Observation
from .gbt import GbtModel, GbtParams, train

__all__ = [
    "DefaultReason", "DefaultSpell", "DiscountPolicy", "FinalStatus", "GbtModel", "GbtParams", "LgdRecord",
    "MacroSeries", "Observation", "RateSource", "portfolio_delta_os", "portfolio_lgd", "realized_lgd_series",
    "rlgd_delta_os", "train",
]
