"""Experiment harness: configurations, runners, oracles and report output."""

from .core import (
    COVER_FIXTURES,
    CSV_COLUMNS,
    KINDS,
    CoverFixture,
    ExperimentConfig,
    RateReport,
    brute_force_covering,
    default_config,
    emit_csv,
    emit_svg,
    fit_loglog_slope,
    load_config,
    read_csv,
    run,
    run_approx_scaling,
    run_bounds,
    run_covering_oracle,
    run_rate_experiment,
    run_stat_error,
    run_transport_check,
    verdict_from_csv,
)

__all__ = [
    "COVER_FIXTURES",
    "CSV_COLUMNS",
    "KINDS",
    "CoverFixture",
    "ExperimentConfig",
    "RateReport",
    "brute_force_covering",
    "default_config",
    "emit_csv",
    "emit_svg",
    "fit_loglog_slope",
    "load_config",
    "read_csv",
    "run",
    "run_approx_scaling",
    "run_bounds",
    "run_covering_oracle",
    "run_rate_experiment",
    "run_stat_error",
    "run_transport_check",
    "verdict_from_csv",
]
