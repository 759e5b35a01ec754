"""
Simulation engine: influence kernels, Lipschitz histories, retarded-time
delays, the delayed velocity field, time steppers, the Picard reference
solver, scenarios and consensus diagnostics.
"""

from .influence import InfluenceFunction, InfluenceCertification, validate_influence
from .history import Trajectory, ExtrapolatedPath
from .delay_solver import DelayResult, DelayTable, solve_delay, delay_table
from .dynamics import SystemState, rhs, rhs_all
from .analysis import Auditor, AuditContext, DecayCertificate, decay_certificate
from .integrator import Scheme, SimTrace, integrate, integrate_classical, step_euler, step_heun
from .scenarios import InitialDatum, ScenarioParams, certify_datum
from .picard import picard_reference, contraction_window

__all__ = [
    "InfluenceFunction",
    "InfluenceCertification",
    "validate_influence",
    "Trajectory",
    "ExtrapolatedPath",
    "DelayResult",
    "DelayTable",
    "solve_delay",
    "delay_table",
    "SystemState",
    "rhs",
    "rhs_all",
    "Auditor",
    "AuditContext",
    "DecayCertificate",
    "decay_certificate",
    "Scheme",
    "SimTrace",
    "integrate",
    "integrate_classical",
    "step_euler",
    "step_heun",
    "InitialDatum",
    "ScenarioParams",
    "certify_datum",
    "picard_reference",
    "contraction_window",
]
