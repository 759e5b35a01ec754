"""
Custom Exceptions

Centralized exception definitions for the finite-speed consensus engine.
"""

from typing import Optional, Dict, Any


class SimulationError(Exception):
    """Base exception for the simulation engine."""

    # partial SimTrace, attached by the integrator when a run aborts
    trace: Any = None

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.code = code or "SIMULATION_ERROR"
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports."""
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details
        }


class DomainError(SimulationError):
    """Raised when a function is evaluated outside its domain."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code="DOMAIN_ERROR",
            details=details
        )


class OutOfWindowError(SimulationError):
    """Raised when a trajectory is queried outside its stored window."""

    def __init__(
        self,
        message: str,
        t: Optional[float] = None,
        window: Optional[tuple] = None
    ):
        details: Dict[str, Any] = {}
        if t is not None:
            details["t"] = t
        if window is not None:
            details["window"] = list(window)
        super().__init__(
            message=message,
            code="OUT_OF_WINDOW",
            details=details
        )


class LipschitzViolationError(SimulationError):
    """Raised when a path leaves the Lipschitz class it was declared in."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code="LIPSCHITZ_VIOLATION",
            details=details
        )


class ContractViolationError(SimulationError):
    """Raised when an operation precondition does not hold."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code="CONTRACT_VIOLATION",
            details=details
        )


class InfluenceRejectedError(SimulationError):
    """Raised when an influence function fails certification."""

    def __init__(
        self,
        message: str,
        r: Optional[float] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        _details = details or {}
        if r is not None:
            _details["r"] = r
        super().__init__(
            message=message,
            code="INFLUENCE_REJECTED",
            details=_details
        )


class IntegrationError(SimulationError):
    """Raised when time stepping fails; carries the trace up to the failure."""

    def __init__(
        self,
        message: str,
        trace: Any = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.trace = trace
        super().__init__(
            message=message,
            code="INTEGRATION_FAULT",
            details=details
        )


class NonConvergenceError(SimulationError):
    """Raised when the Picard oracle exceeds its iteration budget."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code="PICARD_NON_CONVERGENCE",
            details=details
        )


class AuditFailure(SimulationError):
    """Raised when a proven invariant is violated along a simulated trace."""

    def __init__(
        self,
        message: str,
        check: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        _details = details or {}
        if check:
            _details["check"] = check
        super().__init__(
            message=message,
            code="AUDIT_FAILURE",
            details=_details
        )


class ConfigValidationError(SimulationError):
    """Raised when a run configuration is invalid."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(
            message=message,
            code="VALIDATION_ERROR",
            details={"field": field} if field else {}
        )
