"""
Retarded-Time Solver

Solves c * tau = |z - x(t - tau)| for the delay tau with which an observer at
z sees a source moving along the s-Lipschitz path x. The root function
g(tau) = c tau - |z - x(t - tau)| is strictly increasing with slope at least
c - s, and its root lies in the bracket

    |z - x(t)| / (c + s) <= tau <= |z - x(t)| / (c - s),

so bracketed iterations always converge. Solves are vectorized: one call
handles every observer looking at the same source path.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple
import logging

import numpy as np

from src.config import settings
from src.core.exceptions import ContractViolationError, OutOfWindowError
from src.simulation.history import PathLike

if TYPE_CHECKING:
    from src.simulation.dynamics import SystemState

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DelayResult:
    """Delay of one observer/source pair."""
    tau: float
    x_delayed: np.ndarray
    bracket: Tuple[float, float]
    iterations: int
    residual: float

    @property
    def lo(self) -> float:
        return self.bracket[0]

    @property
    def hi(self) -> float:
        return self.bracket[1]


@dataclass
class BatchDelay:
    """Delays of many observers against one source path."""
    tau: np.ndarray
    x_delayed: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray

    def result(self, k: int) -> DelayResult:
        return DelayResult(
            tau=float(self.tau[k]),
            x_delayed=self.x_delayed[k].copy(),
            bracket=(float(self.lo[k]), float(self.hi[k])),
            iterations=int(self.iterations[k]),
            residual=float(self.residual[k])
        )


@dataclass
class DelayTable:
    """
    All pair delays at one or more time nodes.

    Arrays are indexed [node, observer i, source j]; the diagonal follows the
    convention tau_ii = 0 and x_delayed_ii = x_i(t).
    """
    t: np.ndarray
    tau: np.ndarray
    x_delayed: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.tau.shape[1]

    def at(self, m: int) -> "DelayTable":
        """Single-node slice."""
        sl = slice(m, m + 1)
        return DelayTable(
            t=self.t[sl], tau=self.tau[sl], x_delayed=self.x_delayed[sl],
            lo=self.lo[sl], hi=self.hi[sl], residual=self.residual[sl],
            iterations=self.iterations[sl]
        )

    def result(self, i: int, j: int, m: int = 0) -> DelayResult:
        return DelayResult(
            tau=float(self.tau[m, i, j]),
            x_delayed=self.x_delayed[m, i, j].copy(),
            bracket=(float(self.lo[m, i, j]), float(self.hi[m, i, j])),
            iterations=int(self.iterations[m, i, j]),
            residual=float(self.residual[m, i, j])
        )

    def row(self, i: int, m: int = 0) -> List[DelayResult]:
        return [self.result(i, j, m) for j in range(self.n_agents)]

    def tau_extrema(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-node (min, max) of tau over distinct pairs."""
        n = self.n_agents
        off = ~np.eye(n, dtype=bool)
        taus = self.tau[:, off]
        return taus.min(axis=1), taus.max(axis=1)


# ==================== Operations ====================


def solve_delay(
    z,
    traj: PathLike,
    t: float,
    c: float,
    method: Optional[str] = None
) -> DelayResult:
    """
    Solve c tau = |z - x(t - tau)| for one observer position z.

    Raises:
        ContractViolationError: If the path's Lipschitz bound is not below c
        OutOfWindowError: If the stored window does not reach the root
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    batch = solve_delay_batch(z, traj, np.asarray([t], dtype=float), c, method=method)
    return batch.result(0)


def solve_delay_batch(
    z: np.ndarray,
    path: PathLike,
    t: np.ndarray,
    c: float,
    method: Optional[str] = None
) -> BatchDelay:
    """
    Vectorized retarded-time solve for observers z[k] at times t[k].

    method "bisect" halves the bracket every iteration; "secant" uses
    Illinois-modified regula falsi inside the bracket with a bisection step
    every fourth iteration.
    """
    method = method or settings.delay_method
    s = float(path.lipschitz_bound)
    if not c > s:
        raise ContractViolationError(
            f"Retarded-time equation needs s < c, got s = {s:g}, c = {c:g}",
            details={"s": s, "c": c}
        )

    z = np.atleast_2d(np.asarray(z, dtype=float))
    m = z.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=float), (m,)).copy()

    x_now = path.eval_many(t)
    r0 = np.linalg.norm(z - x_now, axis=1)
    lo = r0 / (c + s)
    hi = r0 / (c - s)

    tau = np.zeros(m)
    x_delayed = x_now.copy()
    iterations = np.zeros(m, dtype=int)

    active = np.flatnonzero(r0 >= settings.coincidence_tol)
    if active.size:
        search_hi = _fit_bracket_to_window(z, path, t, c, lo, hi, active)
        tau[active], iterations[active] = _bracketed_root(
            z[active], path, t[active], c, lo[active], search_hi[active], method
        )
        x_delayed[active] = path.eval_many(t[active] - tau[active])

    residual = np.abs(c * tau - np.linalg.norm(z - x_delayed, axis=1))
    return BatchDelay(tau=tau, x_delayed=x_delayed, lo=lo, hi=hi, residual=residual, iterations=iterations)


def delay_tensor(
    paths: Sequence[PathLike],
    positions: np.ndarray,
    times: np.ndarray,
    c: float,
    method: Optional[str] = None
) -> DelayTable:
    """
    All pair delays for observers at positions[m, i] and times[m].

    One vectorized solve per source agent j covers every node m and every
    observer i != j.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 2:
        positions = positions[None]
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n_nodes, n, d = positions.shape

    tau = np.zeros((n_nodes, n, n))
    x_delayed = np.repeat(positions[:, :, None, :], n, axis=2)
    lo = np.zeros_like(tau)
    hi = np.zeros_like(tau)
    residual = np.zeros_like(tau)
    iterations = np.zeros((n_nodes, n, n), dtype=int)

    for j, path in enumerate(paths):
        observers = np.array([i for i in range(n) if i != j], dtype=int)
        z = positions[:, observers, :].reshape(-1, d)
        t_rows = np.repeat(times, len(observers))
        batch = solve_delay_batch(z, path, t_rows, c, method=method)
        shape = (n_nodes, len(observers))
        tau[:, observers, j] = batch.tau.reshape(shape)
        x_delayed[:, observers, j, :] = batch.x_delayed.reshape(shape + (d,))
        lo[:, observers, j] = batch.lo.reshape(shape)
        hi[:, observers, j] = batch.hi.reshape(shape)
        residual[:, observers, j] = batch.residual.reshape(shape)
        iterations[:, observers, j] = batch.iterations.reshape(shape)

    return DelayTable(
        t=times, tau=tau, x_delayed=x_delayed, lo=lo, hi=hi,
        residual=residual, iterations=iterations
    )


def delay_table(state: "SystemState", method: Optional[str] = None) -> DelayTable:
    """All pair delays at the state's frontier."""
    return delay_tensor(state.trajectories, state.positions, np.asarray([state.t]), state.c, method=method)


def delayed_positions(state: "SystemState", i: int) -> List[DelayResult]:
    """Delays seen by observer i from every agent j (tau_ii = 0 by convention)."""
    z = state.positions[i]
    results: List[DelayResult] = []
    for j, path in enumerate(state.trajectories):
        if j == i:
            results.append(DelayResult(
                tau=0.0, x_delayed=z.copy(), bracket=(0.0, 0.0), iterations=0, residual=0.0
            ))
        else:
            results.append(solve_delay(z, path, state.t, state.c))
    return results


def root_tolerance(c: float, hi) -> np.ndarray:
    """Absolute tolerance on g used for the residual property."""
    return settings.delay_tol_scale * np.maximum(1.0, c * np.asarray(hi, dtype=float))


# ==================== Internals ====================


def _fit_bracket_to_window(z, path, t, c, lo, hi, active) -> np.ndarray:
    """Upper search limit per row: hi, or the window edge when the root lies inside it."""
    search_hi = hi.copy()
    room = t[active] - path.window_start
    slack = settings.window_slack * np.maximum(1.0, np.abs(t[active]))
    short = hi[active] > room + slack
    if not np.any(short):
        return search_hi
    rows = active[short]
    edge = np.maximum(room[short], 0.0)
    g_edge = c * edge - np.linalg.norm(z[rows] - path.eval_many(t[rows] - edge), axis=1)
    if np.any(g_edge < 0):
        k = int(np.argmax(g_edge < 0))
        raise OutOfWindowError(
            f"History window starting at {path.window_start:.12g} is too short for a delay "
            f"up to {hi[rows[k]]:.12g} at t = {t[rows[k]]:.12g}",
            t=float(t[rows[k]] - hi[rows[k]]),
            window=(path.window_start, path.frontier)
        )
    search_hi[rows] = edge
    return search_hi


def _bracketed_root(z, path, t, c, lo, hi, method) -> Tuple[np.ndarray, np.ndarray]:
    def g(rows, tau):
        return c * tau - np.linalg.norm(z[rows] - path.eval_many(t[rows] - tau), axis=1)

    s = float(path.lipschitz_bound)
    m = len(t)
    every = np.arange(m)
    a, b = lo.copy(), hi.copy()
    fa, fb = g(every, a), g(every, b)
    tol_g = root_tolerance(c, hi)

    # g(lo) <= 0 <= g(hi) up to rounding; anything worse means the path is not s-Lipschitz
    noise = 8 * _EPS * (c * hi + np.linalg.norm(z, axis=1) + 1.0)
    if np.any(fa > tol_g + noise) or np.any(fb < -(tol_g + noise)):
        k = int(np.argmax((fa > tol_g + noise) | (fb < -(tol_g + noise))))
        raise ContractViolationError(
            f"Root of the retarded-time equation is not bracketed at t = {t[k]:.12g}; "
            f"the source path moves faster than its declared bound",
            details={"g_lo": float(fa[k]), "g_hi": float(fb[k]), "t": float(t[k])}
        )

    tau = np.where(np.abs(fa) <= np.abs(fb), a, b)
    best = np.minimum(np.abs(fa), np.abs(fb))
    iterations = np.zeros(m, dtype=int)
    # secant values, halved by the Illinois rule when an endpoint is kept twice
    sa, sb = fa.copy(), fb.copy()
    kept = np.zeros(m, dtype=int)

    g_target = np.maximum((c - s) * settings.delay_tau_tol, noise)
    open_ = np.flatnonzero((best > g_target) & (b - a > settings.delay_tau_tol))

    for it in range(settings.delay_max_iter):
        if open_.size == 0:
            break
        aa, bb = a[open_], b[open_]
        mid = 0.5 * (aa + bb)
        if method == "secant" and it % 4 != 3:
            denom = sb[open_] - sa[open_]
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = aa - sa[open_] * (bb - aa) / denom
            cand = np.where((denom > 0) & (cand > aa) & (cand < bb), cand, mid)
        else:
            cand = mid
        fc = g(open_, cand)
        iterations[open_] += 1

        improved = np.abs(fc) < best[open_]
        tau[open_[improved]] = cand[improved]
        best[open_[improved]] = np.abs(fc[improved])

        left = fc < 0
        right = fc > 0
        rows_l, rows_r = open_[left], open_[right]
        a[rows_l], fa[rows_l], sa[rows_l] = cand[left], fc[left], fc[left]
        b[rows_r], fb[rows_r], sb[rows_r] = cand[right], fc[right], fc[right]
        sb[rows_l[kept[rows_l] == -1]] *= 0.5
        sa[rows_r[kept[rows_r] == 1]] *= 0.5
        kept[rows_l] = -1
        kept[rows_r] = 1

        width = b[open_] - a[open_]
        stalled = (cand == aa) | (cand == bb)
        done = (
            (fc == 0)
            | (best[open_] <= g_target[open_])
            | (width <= np.maximum(settings.delay_tau_tol, 4 * _EPS * bb))
            | (stalled & (cand == mid))
        )
        open_ = open_[~done]

    if open_.size:
        logger.warning(f"{open_.size} delay solves hit the iteration cap of {settings.delay_max_iter}")
    return tau, iterations
