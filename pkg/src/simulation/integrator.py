"""
Time Integration

Explicit Euler and Heun steppers for the delayed system. Every step reads
one frozen snapshot of all agents and then commits the new positions to the
histories together. Heun's corrector resolves delays at t + dt against
histories continued along the predictor slope.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from src.config import settings
from src.core.exceptions import (
    AuditFailure,
    ContractViolationError,
    IntegrationError,
    LipschitzViolationError,
    SimulationError,
)
from src.simulation.analysis import diameter, initial_radius, radius
from src.simulation.delay_solver import DelayTable, delay_table
from src.simulation.dynamics import SystemState, rhs_all, rhs_classical
from src.simulation.history import Trajectory
from src.simulation.influence import InfluenceCertification, InfluenceFunction

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    """Integration schemes."""
    EULER = "euler"
    HEUN = "heun"
    PICARD = "picard"
    CLASSICAL = "classical"


@dataclass
class SimTrace:
    """Time-indexed record of one integration run."""
    scheme: Scheme
    dt: float
    times: List[float] = field(default_factory=list)
    positions: List[np.ndarray] = field(default_factory=list)
    tau_min: List[float] = field(default_factory=list)
    tau_max: List[float] = field(default_factory=list)
    diameter: List[float] = field(default_factory=list)
    radius: List[float] = field(default_factory=list)
    mean: List[np.ndarray] = field(default_factory=list)
    delay_rows: Optional[List[Dict[str, Any]]] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def record(
        self,
        t: float,
        positions: np.ndarray,
        table: Optional[DelayTable] = None,
        tau_range: Tuple[float, float] = (0.0, 0.0)
    ) -> None:
        x = np.array(positions, dtype=float, copy=True)
        self.times.append(float(t))
        self.positions.append(x)
        if table is None:
            self.tau_min.append(float(tau_range[0]))
            self.tau_max.append(float(tau_range[1]))
        else:
            lo, hi = table.tau_extrema()
            self.tau_min.append(float(lo[0]))
            self.tau_max.append(float(hi[0]))
            if self.delay_rows is not None:
                self._record_delays(float(t), table)
        self.diameter.append(diameter(x))
        self.radius.append(radius(x))
        self.mean.append(x.mean(axis=0))

    def _record_delays(self, t: float, table: DelayTable) -> None:
        n = table.n_agents
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                self.delay_rows.append({
                    "t": t, "i": i, "j": j,
                    "tau": float(table.tau[0, i, j]),
                    "lo": float(table.lo[0, i, j]),
                    "hi": float(table.hi[0, i, j]),
                    "residual": float(table.residual[0, i, j]),
                })

    @property
    def n_agents(self) -> int:
        return self.positions[0].shape[0]

    @property
    def dim(self) -> int:
        return self.positions[0].shape[1]

    @property
    def final_time(self) -> float:
        return self.times[-1]

    @property
    def final_positions(self) -> np.ndarray:
        return self.positions[-1]

    def positions_array(self) -> np.ndarray:
        """Positions stacked as [time, agent, coordinate]."""
        return np.stack(self.positions)

    def mean_drift(self) -> float:
        """Distance travelled by the agent mean between the first and last record."""
        return float(np.linalg.norm(self.mean[-1] - self.mean[0]))

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class StepEvent:
    """
    Observer payload for one committed step.

    The first event of a run has index 0 and no previous state; it carries
    the initial state and its delays.
    """
    index: int
    dt: float
    state: SystemState
    table: DelayTable
    previous: Optional[SystemState] = None
    previous_table: Optional[DelayTable] = None

    @property
    def t(self) -> float:
        return self.state.t


Observer = Callable[[StepEvent], None]


# ==================== Steppers ====================


def step_euler(state: SystemState, dt: float, table: Optional[DelayTable] = None) -> SystemState:
    """One explicit Euler step from a frozen snapshot of every agent."""
    _check_dt(dt)
    velocity = rhs_all(state, table)
    return _commit(state, state.positions + dt * velocity, dt)


def step_heun(state: SystemState, dt: float, table: Optional[DelayTable] = None) -> SystemState:
    """
    One Heun step.

    The corrector slope is evaluated on a staged copy of the state whose
    histories continue along the (speed-clamped) predictor slope.
    """
    _check_dt(dt)
    v0 = rhs_all(state, table)
    staged = state.staged(v0, dt)
    v1 = rhs_all(staged)
    return _commit(state, state.positions + 0.5 * dt * (v0 + v1), dt)


_STEPPERS = {
    Scheme.EULER: step_euler,
    Scheme.HEUN: step_heun,
}


def default_dt(certification: InfluenceCertification, c: float, S0: float) -> float:
    """Step size resolving both the dynamics and the shortest initial delays."""
    dt = 0.01 * (c - certification.s) / max(1.0, certification.psi.psi_sup)
    if S0 > 0:
        dt = min(dt, 0.01 * S0)
    return dt


def integrate(
    state: SystemState,
    T: float,
    dt: Optional[float] = None,
    scheme: Scheme = Scheme.HEUN,
    observers: Sequence[Observer] = (),
    r0: Optional[float] = None,
    record_delays: bool = False
) -> SimTrace:
    """
    Advance the state to state.t + T.

    Histories older than 2 R0 / (c - s) + dt behind the frontier are pruned;
    no delay can reach further back.

    Raises:
        IntegrationError: On a stepping fault; the partial trace is attached
        AuditFailure: When an observer rejects a step; the partial trace is attached
    """
    scheme = Scheme(scheme)
    if scheme not in _STEPPERS:
        raise ContractViolationError(f"integrate() runs euler or heun, got {scheme.value}")
    stepper = _STEPPERS[scheme]

    s, c = state.s, state.c
    if dt is None:
        dt = default_dt(state.certification, c, diameter(state.positions) / (c - s))
    _check_dt(dt)
    if T < dt:
        raise ContractViolationError(f"Horizon T = {T:g} is shorter than dt = {dt:g}")
    if r0 is None:
        r0 = initial_radius(state.trajectories)
    keep = 2.0 * r0 / (c - s) + dt

    t0 = state.t
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    trace = SimTrace(scheme=scheme, dt=dt, delay_rows=[] if record_delays else None)
    logger.info(
        f"Integrating {state.n_agents} agents in {state.dim}D with {scheme.value}: "
        f"T = {T:g}, dt = {dt:g}, {n_steps} steps"
    )

    try:
        table = delay_table(state)
        trace.record(state.t, state.positions, table)
        _notify(observers, StepEvent(index=0, dt=dt, state=state, table=table))

        for k in range(1, n_steps + 1):
            t_next = t0 + T if k == n_steps else t0 + k * dt
            previous, previous_table = state, table
            state = stepper(state, t_next - state.t, table)
            table = delay_table(state)
            trace.record(state.t, state.positions, table)
            _notify(observers, StepEvent(
                index=k, dt=t_next - previous.t, state=state, table=table,
                previous=previous, previous_table=previous_table
            ))
            for path in state.trajectories:
                if path.window_start < state.t - keep:
                    path.prune_before(state.t - keep)
            if k % settings.progress_every == 0:
                logger.debug(
                    f"step {k}/{n_steps}: t = {state.t:.6g}, d_x = {trace.diameter[-1]:.6g}"
                )
    except IntegrationError as e:
        e.trace = trace
        raise
    except AuditFailure as e:
        e.trace = trace
        raise
    except SimulationError as e:
        raise IntegrationError(
            f"Integration failed at t = {state.t:.12g}: {e.message}",
            trace=trace,
            details={"cause": e.to_dict()}
        ) from e

    trace.diagnostics.update({"steps": n_steps, "t0": t0, "T": T})
    logger.info(
        f"Finished {scheme.value} run at t = {state.t:g}: d_x = {trace.diameter[-1]:.6g}, "
        f"R_x = {trace.radius[-1]:.6g}"
    )
    return trace


def integrate_classical(
    positions: np.ndarray,
    psi: InfluenceFunction,
    T: float,
    dt: float
) -> SimTrace:
    """Heun integration of the undelayed system, the c -> infinity baseline."""
    _check_dt(dt)
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    trace = SimTrace(scheme=Scheme.CLASSICAL, dt=dt)
    trace.record(0.0, x)
    t = 0.0
    for k in range(1, n_steps + 1):
        t_next = T if k == n_steps else k * dt
        h = t_next - t
        v0 = rhs_classical(x, psi)
        v1 = rhs_classical(x + h * v0, psi)
        x = x + 0.5 * h * (v0 + v1)
        t = t_next
        trace.record(t, x)
    trace.diagnostics.update({"steps": n_steps, "t0": 0.0, "T": T})
    return trace


# ==================== Internals ====================


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ContractViolationError(f"Step size must be positive, got {dt}")


def _commit(state: SystemState, x_new: np.ndarray, dt: float) -> SystemState:
    t_new = state.t + dt
    for i in range(state.n_agents):
        path = state.trajectories[i]
        if not isinstance(path, Trajectory):
            raise ContractViolationError(f"Agent {i} history is a read-only view")
        try:
            path.append_segment(t_new, x_new[i])
        except LipschitzViolationError as e:
            raise IntegrationError(
                f"Agent {i} moved faster than the certified s = {state.s:g} at t = {t_new:.12g}; "
                f"the influence certification does not cover this state",
                details={"agent": i, **e.details}
            ) from e
    return SystemState(state.trajectories, t_new, state.c, state.certification)


def _notify(observers: Sequence[Observer], event: StepEvent) -> None:
    for observer in observers:
        observer(event)
