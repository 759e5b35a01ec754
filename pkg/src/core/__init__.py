"""Core utilities and shared components."""

from .exceptions import (
    SimulationError,
    DomainError,
    OutOfWindowError,
    LipschitzViolationError,
    ContractViolationError,
    InfluenceRejectedError,
    IntegrationError,
    NonConvergenceError,
    AuditFailure,
    ConfigValidationError,
)
from .logging import bind_run, clear_run, current_run, run_context, setup_logging, get_logger

__all__ = [
    "SimulationError",
    "DomainError",
    "OutOfWindowError",
    "LipschitzViolationError",
    "ContractViolationError",
    "InfluenceRejectedError",
    "IntegrationError",
    "NonConvergenceError",
    "AuditFailure",
    "ConfigValidationError",
    "bind_run",
    "clear_run",
    "current_run",
    "run_context",
    "setup_logging",
    "get_logger",
]
