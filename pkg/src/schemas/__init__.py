"""Pydantic schemas for run configuration and results."""

from .config import (
    AnalysisConfig,
    InfluenceSpec,
    IntegratorConfig,
    ModelConfig,
    OutputConfig,
    RunConfig,
    ScenarioSpec,
    apply_overrides,
    load_run_config,
    parse_run_config,
)
from .results import CertificateInfo, CompareReport, OrderEstimate, RunSummary, SchemeGap

__all__ = [
    "AnalysisConfig",
    "InfluenceSpec",
    "IntegratorConfig",
    "ModelConfig",
    "OutputConfig",
    "RunConfig",
    "ScenarioSpec",
    "apply_overrides",
    "load_run_config",
    "parse_run_config",
    "CertificateInfo",
    "CompareReport",
    "OrderEstimate",
    "RunSummary",
    "SchemeGap",
]
