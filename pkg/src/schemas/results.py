"""Result schemas written as JSON summaries and printed by the CLI."""

from typing import Dict, List, Optional, Tuple
from pydantic import BaseModel, Field


class CertificateInfo(BaseModel):
    """Exponential-decay certificate."""
    psi_lo: float
    psi_hi: float
    lam: float
    condition_met: bool
    range_used: Tuple[float, float]
    range_kind: str
    note: Optional[str] = None


class AuditCount(BaseModel):
    passed: int = 0
    failed: int = 0


class RunSummary(BaseModel):
    """Outcome of one run."""
    name: str
    config_hash: str
    scheme: str
    n_agents: int
    dim: int
    c: float
    s: float
    dt: float
    T: float
    steps: int
    d0: float
    d_final: float
    R0: float
    R_final: float
    eps: float
    consensus_time: Optional[float] = None
    mean_drift: float
    clusters: int
    ordering_preserved: Optional[bool] = None
    certificate: CertificateInfo
    decay_envelope_holds: Optional[bool] = None
    audits: Dict[str, AuditCount] = Field(default_factory=dict)
    audit_failures: int = 0
    outputs: Dict[str, str] = Field(default_factory=dict)

    @property
    def audits_passed(self) -> bool:
        return self.audit_failures == 0


class SchemeGap(BaseModel):
    """Sup-norm gap between two member runs."""
    first: str
    second: str
    dt: float
    gap: float


class OrderEstimate(BaseModel):
    """
    Richardson ratio (x_dt - x_dt/2) / (x_dt/2 - x_dt/4) of endpoint positions;
    about 2 for a first-order scheme and 4 for a second-order one.
    """
    scheme: str
    dt: float
    endpoint_differences: List[float]
    ratio: Optional[float] = None


class CompareReport(BaseModel):
    """Cross-scheme comparison on one datum."""
    name: str
    config_hash: str
    schemes: List[str]
    dt: float
    T: float
    gaps: List[SchemeGap] = Field(default_factory=list)
    orders: List[OrderEstimate] = Field(default_factory=list)

    def gap(self, first: str, second: str) -> float:
        for entry in self.gaps:
            if (entry.first, entry.second) in ((first, second), (second, first)):
                return entry.gap
        raise KeyError(f"No gap recorded between {first} and {second}")
