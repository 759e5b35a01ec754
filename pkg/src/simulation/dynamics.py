"""
Delayed Consensus Dynamics

Right-hand side of the finite-speed Hegselmann-Krause system

    x_i'(t) = 1/(N-1) * sum_j psi(|x~_j - x_i|) (x~_j - x_i),

where x~_j = x_j(t - tau_ij) is agent j as seen by agent i, and of its
classical no-delay counterpart.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union
import logging

import numpy as np

from src.config import settings
from src.core.exceptions import ContractViolationError
from src.simulation.delay_solver import DelayResult, DelayTable, delay_table, delayed_positions
from src.simulation.history import ExtrapolatedPath, PathLike, Trajectory
from src.simulation.influence import InfluenceCertification, InfluenceFunction

logger = logging.getLogger(__name__)


@dataclass
class SystemState:
    """
    N agent histories sharing the frontier t.

    Positions are read once at construction, so a state is a frozen
    snapshot even while the underlying trajectories keep growing.
    """
    trajectories: Sequence[PathLike]
    t: float
    c: float
    certification: InfluenceCertification
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.trajectories = list(self.trajectories)
        if len(self.trajectories) < 2:
            raise ContractViolationError(
                f"At least two agents are needed, got {len(self.trajectories)}"
            )
        dims = {p.dim for p in self.trajectories}
        if len(dims) != 1:
            raise ContractViolationError(f"Trajectories disagree on dimension: {sorted(dims)}")
        if not self.certification.s < self.c:
            raise ContractViolationError(
                f"Certified speed bound s = {self.certification.s:g} is not below c = {self.c:g}"
            )
        slack = settings.window_slack * max(1.0, abs(self.t))
        for i, path in enumerate(self.trajectories):
            if abs(path.frontier - self.t) > slack:
                raise ContractViolationError(
                    f"Agent {i} frontier {path.frontier:.12g} differs from the state time {self.t:.12g}"
                )
            if path.lipschitz_bound > self.certification.s + settings.append_slack:
                raise ContractViolationError(
                    f"Agent {i} history bound {path.lipschitz_bound:g} exceeds the certified s = "
                    f"{self.certification.s:g}"
                )
        now = np.asarray([self.t])
        self.positions = np.vstack([p.eval_many(now)[0] for p in self.trajectories])

    @property
    def n_agents(self) -> int:
        return len(self.trajectories)

    @property
    def dim(self) -> int:
        return self.trajectories[0].dim

    @property
    def psi(self) -> InfluenceFunction:
        return self.certification.psi

    @property
    def s(self) -> float:
        return self.certification.s

    def staged(self, slopes: np.ndarray, dt: float) -> "SystemState":
        """View of the state advanced by dt along the given per-agent slopes."""
        paths = [
            ExtrapolatedPath(self._committed(i), slopes[i], dt)
            for i in range(self.n_agents)
        ]
        return SystemState(paths, self.t + dt, self.c, self.certification)

    def _committed(self, i: int) -> Trajectory:
        path = self.trajectories[i]
        if not isinstance(path, Trajectory):
            raise ContractViolationError(f"Agent {i} history is a read-only view and cannot be staged")
        return path


# ==================== Right-hand sides ====================


def velocity_field(
    positions: np.ndarray,
    x_delayed: np.ndarray,
    psi: InfluenceFunction
) -> np.ndarray:
    """
    Delayed HK velocities for positions [..., N, d] and retarded positions [..., N, N, d].

    The diagonal of x_delayed must equal the positions (tau_ii = 0), which makes
    the j = i term an exact zero.
    """
    n = positions.shape[-2]
    diffs = x_delayed - positions[..., :, None, :]
    weights = psi.values(np.linalg.norm(diffs, axis=-1))
    return np.einsum("...ij,...ijd->...id", weights, diffs) / (n - 1)


def rhs(state: SystemState, i: int, delays: Sequence[DelayResult]) -> np.ndarray:
    """
    Velocity of agent i from its per-source delays.

    Raises:
        ContractViolationError: On a delay list of the wrong length or dimension
    """
    if len(delays) != state.n_agents:
        raise ContractViolationError(
            f"Expected {state.n_agents} delays for agent {i}, got {len(delays)}"
        )
    x_delayed = np.vstack([np.asarray(d.x_delayed, dtype=float).reshape(1, -1) for d in delays])
    if x_delayed.shape[1] != state.dim:
        raise ContractViolationError(
            f"Retarded positions have dimension {x_delayed.shape[1]}, state has {state.dim}"
        )
    x_i = state.positions[i]
    diffs = x_delayed - x_i
    weights = state.psi.values(np.linalg.norm(diffs, axis=1))
    return weights @ diffs / (state.n_agents - 1)


def rhs_all(state: SystemState, table: Optional[DelayTable] = None) -> np.ndarray:
    """Velocities of every agent, solving the delays first when no table is given."""
    if table is None:
        table = delay_table(state)
    return velocity_field(state.positions, table.x_delayed[0], state.psi)


def rhs_classical(
    positions: np.ndarray,
    psi: Union[InfluenceFunction, InfluenceCertification]
) -> np.ndarray:
    """Undelayed HK right-hand side (the c -> infinity limit)."""
    if isinstance(psi, InfluenceCertification):
        psi = psi.psi
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] < 2:
        raise ContractViolationError(f"At least two agents are needed, got {x.shape[0]}")
    x_seen = np.broadcast_to(x[None, :, :], (x.shape[0],) + x.shape)
    return velocity_field(x, x_seen, psi)


def delayed_velocities(state: SystemState) -> List[np.ndarray]:
    """Per-agent velocities evaluated one agent at a time; reference path for rhs_all."""
    return [rhs(state, i, delayed_positions(state, i)) for i in range(state.n_agents)]
