"""
Picard Reference Solver

Method of steps on windows short enough for the integral operator

    (Gamma phi)_i(t) = x_i(a) + int_a^t 1/(N-1) sum_j psi(|phi~_j - phi_i|)(phi~_j - phi_i) du

to contract, with the retarded positions phi~_j resolved against the
candidate path itself. Integrals use the trapezoid rule on the dt grid the
steppers use, so traces line up node for node.
"""

from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from src.config import settings
from src.core.exceptions import (
    ContractViolationError,
    IntegrationError,
    LipschitzViolationError,
    NonConvergenceError,
    SimulationError,
)
from src.simulation.analysis import diameter, initial_radius
from src.simulation.delay_solver import DelayTable, delay_tensor
from src.simulation.dynamics import velocity_field
from src.simulation.history import Trajectory
from src.simulation.influence import InfluenceCertification, InfluenceFunction
from src.simulation.integrator import Scheme, SimTrace
from src.simulation.scenarios import InitialDatum

logger = logging.getLogger(__name__)

# empirical contraction factors above this are reported
RATIO_WARNING = 0.55


def contraction_window(
    x0_norm: float,
    S0: float,
    s: float,
    c: float,
    L_psi: float,
    psi_sup: float
) -> float:
    """
    Largest T with 2T (1 - s/c)^-1 (psi_sup + 2 (x0_norm + s S0 + s T) L_psi) <= 1/2.

    The condition is quadratic in T; the positive root is returned in a
    cancellation-free form. A zero left-hand side gives an unbounded window.
    """
    if not 0 <= s < c:
        raise ContractViolationError(f"Contraction window needs 0 <= s < c, got s = {s:g}, c = {c:g}")
    A = 2.0 / (1.0 - s / c)
    a = 2.0 * A * L_psi * s
    b = A * (psi_sup + 2.0 * L_psi * (x0_norm + s * S0))
    denom = b + math.sqrt(b * b + 2.0 * a)
    return math.inf if denom == 0 else 1.0 / denom


def picard_reference(
    datum: Union[InitialDatum, Sequence[Trajectory]],
    certification: InfluenceCertification,
    T: float,
    dt: float,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None
) -> SimTrace:
    """
    Reference solution on [t0, t0 + T] by windowed Picard iteration.

    Windows hold floor(T*/dt) grid steps (at least one), T* from
    contraction_window with x0_norm = R0 and S0 = d_x(0)/(c - s).

    Raises:
        NonConvergenceError: If a window needs more than max_iter iterations
        IntegrationError: If a converged iterate cannot be committed
    """
    tol = settings.picard_tol if tol is None else tol
    max_iter = settings.picard_max_iter if max_iter is None else max_iter
    if not dt > 0 or T < dt:
        raise ContractViolationError(f"Need 0 < dt <= T, got dt = {dt}, T = {T}")

    source = datum.trajectories if isinstance(datum, InitialDatum) else datum
    trajectories = [traj.copy() for traj in source]
    c, s, psi = certification.c, certification.s, certification.psi
    t0 = trajectories[0].frontier
    x_init = np.vstack([traj.frontier_point for traj in trajectories])

    r0 = initial_radius(trajectories)
    S0 = diameter(x_init) / (c - s)
    t_star = contraction_window(r0, S0, s, c, psi.lipschitz_const, psi.psi_sup)
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    per_window = n_steps if math.isinf(t_star) else max(1, math.floor(t_star / dt))
    if t_star < dt:
        logger.warning(
            f"Contraction window T* = {t_star:.3g} is shorter than dt = {dt:g}; "
            f"windows of one step are not guaranteed to contract"
        )
    keep = 2.0 * r0 / (c - s) + dt
    grid = t0 + dt * np.arange(n_steps + 1, dtype=float)
    grid[-1] = t0 + T

    trace = SimTrace(scheme=Scheme.PICARD, dt=dt)
    trace.record(t0, x_init, delay_tensor(trajectories, x_init, [t0], c))
    logger.info(
        f"Picard reference: T* = {t_star:.6g}, {per_window} steps per window, {n_steps} steps"
    )

    iterations: List[int] = []
    worst_ratio = 0.0
    k = 0
    try:
        while k < n_steps:
            k_end = min(k + per_window, n_steps)
            nodes = grid[k:k_end + 1]
            phi, table, count, ratio = _solve_window(trajectories, nodes, psi, c, tol, max_iter)
            iterations.append(count)
            worst_ratio = max(worst_ratio, ratio)
            _commit_window(trajectories, nodes, phi)
            for m in range(1, len(nodes)):
                trace.record(nodes[m], phi[m], table.at(m))
            for traj in trajectories:
                if traj.window_start < nodes[-1] - keep:
                    traj.prune_before(nodes[-1] - keep)
            k = k_end
    except (NonConvergenceError, IntegrationError) as e:
        e.trace = trace
        raise
    except SimulationError as e:
        raise IntegrationError(
            f"Picard reference failed at t = {trace.final_time:.12g}: {e.message}",
            trace=trace, details={"cause": e.to_dict()}
        ) from e

    trace.diagnostics.update({
        "steps": n_steps, "t0": t0, "T": T, "t_star": t_star,
        "windows": len(iterations), "iterations": iterations, "max_ratio": worst_ratio
    })
    logger.info(
        f"Picard reference done: {len(iterations)} windows, "
        f"max {max(iterations)} iterations, worst contraction {worst_ratio:.3g}"
    )
    return trace


def _solve_window(
    trajectories: List[Trajectory],
    nodes: np.ndarray,
    psi: InfluenceFunction,
    c: float,
    tol: float,
    max_iter: int
) -> Tuple[np.ndarray, DelayTable, int, float]:
    """Iterate Gamma on one window until successive iterates differ by <= tol."""
    x_a = np.vstack([traj.frontier_point for traj in trajectories])
    phi = np.repeat(x_a[None], len(nodes), axis=0)
    h = np.diff(nodes)[:, None, None]
    gaps: List[float] = []
    worst = 0.0

    for it in range(1, max_iter + 1):
        paths = [
            traj.extended(nodes[1:], phi[1:, i], validate=False)
            for i, traj in enumerate(trajectories)
        ]
        table = delay_tensor(paths, phi, nodes, c)
        velocity = velocity_field(phi, table.x_delayed, psi)
        increments = 0.5 * h * (velocity[:-1] + velocity[1:])
        updated = x_a + np.concatenate((np.zeros_like(x_a)[None], np.cumsum(increments, axis=0)))
        gap = float(np.linalg.norm(updated - phi, axis=2).max())
        phi = updated

        if gaps and gaps[-1] > 100 * tol:
            ratio = gap / gaps[-1]
            worst = max(worst, ratio)
            if ratio > RATIO_WARNING:
                logger.warning(
                    f"Picard window [{nodes[0]:.6g}, {nodes[-1]:.6g}] iteration {it}: "
                    f"contraction factor {ratio:.3g}"
                )
        gaps.append(gap)
        if gap <= tol:
            return phi, table, it, worst

    raise NonConvergenceError(
        f"Picard iteration on [{nodes[0]:.6g}, {nodes[-1]:.6g}] did not reach tol = {tol:g} "
        f"in {max_iter} iterations (last gap {gaps[-1]:.3g})",
        details={"window": [float(nodes[0]), float(nodes[-1])], "gaps": gaps[-5:]}
    )


def _commit_window(trajectories: List[Trajectory], nodes: np.ndarray, phi: np.ndarray) -> None:
    for m in range(1, len(nodes)):
        for i, traj in enumerate(trajectories):
            try:
                traj.append_segment(float(nodes[m]), phi[m, i])
            except LipschitzViolationError as e:
                raise IntegrationError(
                    f"Picard iterate for agent {i} is steeper than s at t = {nodes[m]:.12g}",
                    details={"agent": i, **e.details}
                ) from e
