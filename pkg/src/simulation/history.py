"""
Agent Histories

Piecewise-linear trajectories on a sliding window of the past. Linear
interpolation keeps a path inside the class of s-Lipschitz functions, which
is what makes the retarded-time equation uniquely solvable.
"""

from typing import Callable, Optional, Protocol, Sequence, runtime_checkable
import logging

import numpy as np

from src.config import settings
from src.core.exceptions import ContractViolationError, LipschitzViolationError, OutOfWindowError

logger = logging.getLogger(__name__)


@runtime_checkable
class PathLike(Protocol):
    """Read-only view of one agent's past used by the delay solver."""

    lipschitz_bound: float

    @property
    def window_start(self) -> float: ...

    @property
    def frontier(self) -> float: ...

    @property
    def dim(self) -> int: ...

    def eval_many(self, times: np.ndarray) -> np.ndarray: ...


class Trajectory:
    """
    Dense, piecewise-linear history of one agent.

    Samples live in a growable buffer; pruning advances a head offset and the
    buffer is compacted once the dead prefix dominates. Single writer:
    append/prune must not run concurrently with reads.
    """

    def __init__(
        self,
        times: Sequence[float],
        points: Sequence,
        lipschitz_bound: float,
        window_start: Optional[float] = None,
        validate: bool = True
    ):
        t = np.asarray(times, dtype=float).reshape(-1)
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(t), -1) if len(t) and x.size != len(t) else x.reshape(-1, 1)
        if len(t) == 0 or x.shape[0] != len(t):
            raise ContractViolationError(
                "Trajectory needs at least one sample and one point per time",
                details={"times": len(t), "points": int(x.shape[0])}
            )
        if lipschitz_bound < 0:
            raise ContractViolationError(f"Lipschitz bound must be nonnegative, got {lipschitz_bound}")

        self.lipschitz_bound = float(lipschitz_bound)
        capacity = max(16, 2 * len(t))
        self._t = np.empty(capacity)
        self._x = np.empty((capacity, x.shape[1]))
        self._t[:len(t)] = t
        self._x[:len(t)] = x
        self._head = 0
        self._size = len(t)
        self._window_start = float(t[0]) if window_start is None else float(window_start)

        if self._window_start > t[0]:
            raise ContractViolationError(
                f"window_start {self._window_start} lies after the first sample {t[0]}"
            )
        if validate:
            self.lipschitz_check()

    # ==================== Properties ====================

    @property
    def times(self) -> np.ndarray:
        return self._t[self._head:self._head + self._size]

    @property
    def points(self) -> np.ndarray:
        return self._x[self._head:self._head + self._size]

    @property
    def window_start(self) -> float:
        return self._window_start

    @property
    def frontier(self) -> float:
        return float(self._t[self._head + self._size - 1])

    @property
    def frontier_point(self) -> np.ndarray:
        return self._x[self._head + self._size - 1].copy()

    @property
    def dim(self) -> int:
        return self._x.shape[1]

    def __len__(self) -> int:
        return self._size

    def __repr__(self) -> str:
        return (
            f"Trajectory(samples={self._size}, window=[{self._window_start:g}, {self.frontier:g}], "
            f"dim={self.dim}, lipschitz_bound={self.lipschitz_bound:g})"
        )

    # ==================== Evaluation ====================

    def eval_at(self, t: float) -> np.ndarray:
        """
        Position at time t by linear interpolation; exact at nodes.

        Raises:
            OutOfWindowError: If t lies outside [window_start, frontier]
        """
        return self.eval_many(np.asarray([t], dtype=float))[0]

    def eval_many(self, times: np.ndarray) -> np.ndarray:
        """Vectorized eval_at; returns an array of shape (len(times), dim)."""
        q = np.asarray(times, dtype=float).reshape(-1)
        q = self._clamp_to_window(q)
        t, x = self.times, self.points
        if self._size == 1:
            return np.repeat(x[:1], len(q), axis=0)
        k = np.clip(np.searchsorted(t, q, side="right") - 1, 0, self._size - 2)
        t0, t1 = t[k], t[k + 1]
        w = ((q - t0) / (t1 - t0))[:, None]
        return x[k] * (1.0 - w) + x[k + 1] * w

    def extrapolate_at(self, t: float, slope) -> np.ndarray:
        """
        Linear continuation x(frontier) + slope * (t - frontier) beyond the frontier.

        Raises:
            ContractViolationError: If |slope| exceeds the Lipschitz bound
        """
        slope = np.asarray(slope, dtype=float).reshape(-1)
        speed = float(np.linalg.norm(slope))
        if speed > self.lipschitz_bound * (1.0 + 1e-12) + settings.append_slack:
            raise ContractViolationError(
                f"Extrapolation slope {speed:g} exceeds the Lipschitz bound {self.lipschitz_bound:g}",
                details={"slope": speed, "bound": self.lipschitz_bound}
            )
        if t < self.frontier:
            raise ContractViolationError(
                f"Extrapolation time {t} precedes the frontier {self.frontier}",
                details={"t": t, "frontier": self.frontier}
            )
        return self.frontier_point + slope * (t - self.frontier)

    # ==================== Mutation ====================

    def append_segment(self, t_new: float, x_new) -> "Trajectory":
        """
        Extend the path by one linear segment.

        Raises:
            ContractViolationError: If t_new does not advance the frontier
            LipschitzViolationError: If the segment is steeper than the bound
        """
        x_new = np.asarray(x_new, dtype=float).reshape(-1)
        if x_new.shape[0] != self.dim:
            raise ContractViolationError(
                f"Point of dimension {x_new.shape[0]} appended to a {self.dim}-dimensional path"
            )
        t_last = self.frontier
        if not t_new > t_last:
            raise ContractViolationError(
                f"Appended time {t_new} must exceed the frontier {t_last}",
                details={"t_new": t_new, "frontier": t_last}
            )
        step = float(np.linalg.norm(x_new - self._x[self._head + self._size - 1]))
        allowed = self.lipschitz_bound * (t_new - t_last) + settings.append_slack
        if step > allowed:
            raise LipschitzViolationError(
                f"Segment of length {step:.6g} over dt = {t_new - t_last:.6g} exceeds "
                f"the Lipschitz bound {self.lipschitz_bound:g}",
                details={"t": t_new, "step": step, "allowed": allowed}
            )

        end = self._head + self._size
        if end == len(self._t):
            self._grow()
            end = self._head + self._size
        self._t[end] = t_new
        self._x[end] = x_new
        self._size += 1
        return self

    def prune_before(self, t_cut: float) -> "Trajectory":
        """
        Drop samples strictly before t_cut except the last one at or before it.

        Values at times >= t_cut are unchanged.
        """
        if t_cut > self.frontier:
            raise ContractViolationError(
                f"Cut time {t_cut} lies beyond the frontier {self.frontier}",
                details={"t_cut": t_cut, "frontier": self.frontier}
            )
        keep_from = int(np.searchsorted(self.times, t_cut, side="right")) - 1
        if keep_from <= 0:
            return self
        self._head += keep_from
        self._size -= keep_from
        self._window_start = float(self._t[self._head])
        if self._head > len(self._t) // 2:
            self._compact()
        return self

    # ==================== Copies and checks ====================

    def extended(self, times: np.ndarray, points: np.ndarray, validate: bool = True) -> "Trajectory":
        """New trajectory equal to this one followed by the given samples."""
        return Trajectory(
            np.concatenate((self.times, np.asarray(times, dtype=float))),
            np.vstack((self.points, np.asarray(points, dtype=float).reshape(len(times), self.dim))),
            self.lipschitz_bound,
            window_start=self._window_start,
            validate=validate
        )

    def copy(self) -> "Trajectory":
        return Trajectory(
            self.times.copy(), self.points.copy(), self.lipschitz_bound,
            window_start=self._window_start, validate=False
        )

    def lipschitz_check(self) -> None:
        """
        Verify strictly increasing times and the Lipschitz bound on every segment.

        Raises:
            ContractViolationError: If times do not increase
            LipschitzViolationError: If a segment is too steep
        """
        t, x = self.times, self.points
        if self._size < 2:
            return
        dt = np.diff(t)
        if np.any(dt <= 0):
            bad = int(np.argmax(dt <= 0))
            raise ContractViolationError(
                f"Sample times must be strictly increasing (t = {t[bad + 1]})",
                details={"index": bad + 1}
            )
        steps = np.linalg.norm(np.diff(x, axis=0), axis=1)
        excess = steps - (self.lipschitz_bound * dt + settings.append_slack)
        if np.any(excess > 0):
            bad = int(np.argmax(excess))
            raise LipschitzViolationError(
                f"Segment [{t[bad]:g}, {t[bad + 1]:g}] moves at speed {steps[bad] / dt[bad]:.6g} "
                f"above the bound {self.lipschitz_bound:g}",
                details={"t": float(t[bad]), "speed": float(steps[bad] / dt[bad])}
            )

    @classmethod
    def sample_path(
        cls,
        path: Callable[[float], Sequence[float]],
        t_start: float,
        t_end: float,
        pitch: float,
        lipschitz_bound: float
    ) -> "Trajectory":
        """
        Ingest an arbitrary path by sampling it on a grid of pitch <= pitch.

        Raises:
            LipschitzViolationError: If the sampled path is too steep
        """
        if t_end <= t_start:
            return cls([t_end], [np.asarray(path(t_end), dtype=float).reshape(-1)], lipschitz_bound)
        n = max(1, int(np.ceil((t_end - t_start) / pitch)))
        grid = np.linspace(t_start, t_end, n + 1)
        points = np.vstack([np.asarray(path(t), dtype=float).reshape(-1) for t in grid])
        return cls(grid, points, lipschitz_bound)

    # ==================== Internals ====================

    def _clamp_to_window(self, q: np.ndarray) -> np.ndarray:
        lo, hi = self._window_start, self.frontier
        slack = settings.window_slack * max(1.0, abs(lo), abs(hi))
        bad = (q < lo - slack) | (q > hi + slack) | ~np.isfinite(q)
        if np.any(bad):
            t_bad = float(q[np.argmax(bad)])
            raise OutOfWindowError(
                f"Time {t_bad:.12g} lies outside the stored window [{lo:.12g}, {hi:.12g}]",
                t=t_bad,
                window=(lo, hi)
            )
        return np.clip(q, max(lo, float(self.times[0])), hi)

    def _grow(self) -> None:
        if self._head > 0:
            self._compact()
            if self._head + self._size < len(self._t):
                return
        capacity = 2 * len(self._t)
        t = np.empty(capacity)
        x = np.empty((capacity, self.dim))
        t[:self._size] = self.times
        x[:self._size] = self.points
        self._t, self._x = t, x

    def _compact(self) -> None:
        n = self._size
        self._t[:n] = self._t[self._head:self._head + n].copy()
        self._x[:n] = self._x[self._head:self._head + n].copy()
        self._head = 0


class ExtrapolatedPath:
    """
    A trajectory continued past its frontier along a fixed slope.

    Used for stage evaluations inside a step: lookups in (frontier, frontier + horizon]
    follow the predictor slope, which is clamped to the Lipschitz bound so the
    view stays in the same class as the committed history.
    """

    def __init__(self, base: Trajectory, slope, horizon: float):
        slope = np.asarray(slope, dtype=float).reshape(-1)
        speed = float(np.linalg.norm(slope))
        if speed > base.lipschitz_bound > 0:
            slope = slope * (base.lipschitz_bound / speed)
        elif base.lipschitz_bound == 0:
            slope = np.zeros_like(slope)
        self.base = base
        self.slope = slope
        self.horizon = float(horizon)
        self.lipschitz_bound = base.lipschitz_bound

    @property
    def window_start(self) -> float:
        return self.base.window_start

    @property
    def frontier(self) -> float:
        return self.base.frontier + self.horizon

    @property
    def dim(self) -> int:
        return self.base.dim

    def eval_at(self, t: float) -> np.ndarray:
        return self.eval_many(np.asarray([t], dtype=float))[0]

    def eval_many(self, times: np.ndarray) -> np.ndarray:
        q = np.asarray(times, dtype=float).reshape(-1)
        t_front = self.base.frontier
        slack = settings.window_slack * max(1.0, abs(self.frontier))
        if np.any(q > self.frontier + slack):
            t_bad = float(q.max())
            raise OutOfWindowError(
                f"Time {t_bad:.12g} lies beyond the staged horizon {self.frontier:.12g}",
                t=t_bad,
                window=(self.window_start, self.frontier)
            )
        out = np.empty((len(q), self.dim))
        past = q <= t_front
        if np.any(past):
            out[past] = self.base.eval_many(q[past])
        if np.any(~past):
            out[~past] = self.base.frontier_point + np.outer(q[~past] - t_front, self.slope)
        return out
