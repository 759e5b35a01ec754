"""
Initial Data

Admissible initial histories on [-S0, 0] with S0 = d_x(0) / (c - s), the
certification loop that ties s to the datum, the datum file format, and the
scalar two-agent symmetric reduction used as an analytic test bed.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union
import json
import logging
import math

import numpy as np
import pandas as pd

from src.config import settings
from src.core.exceptions import (
    ConfigValidationError,
    ContractViolationError,
    IntegrationError,
    LipschitzViolationError,
    SimulationError,
)
from src.simulation.analysis import diameter, initial_radius
from src.simulation.delay_solver import solve_delay
from src.simulation.history import ExtrapolatedPath, Trajectory
from src.simulation.influence import (
    InfluenceCertification,
    InfluenceFunction,
    validate_influence,
)
from src.simulation.integrator import Scheme, SimTrace

logger = logging.getLogger(__name__)

# random history slopes stay strictly inside the speed bound
SLOPE_FRACTION = 0.9
HISTORY_SEGMENTS = 8


@dataclass(frozen=True)
class ScenarioParams:
    """Model constants a datum is built against."""
    c: float
    s: float

    def __post_init__(self):
        if not 0 <= self.s < self.c:
            raise ContractViolationError(f"Scenario needs 0 <= s < c, got s = {self.s:g}, c = {self.c:g}")

    @classmethod
    def from_certification(cls, certification: InfluenceCertification) -> "ScenarioParams":
        return cls(c=certification.c, s=certification.s)

    def window(self, d0: float) -> float:
        """History length S0 = d0 / (c - s) that any delay at t = 0 can reach."""
        return d0 / (self.c - self.s)


@dataclass
class InitialDatum:
    """N histories on [-S0, 0]."""
    trajectories: List[Trajectory]
    S0: float
    params: ScenarioParams
    seed: Optional[int] = None

    @property
    def n_agents(self) -> int:
        return len(self.trajectories)

    @property
    def dim(self) -> int:
        return self.trajectories[0].dim

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([traj.frontier_point for traj in self.trajectories])

    @property
    def d0(self) -> float:
        return diameter(self.positions)

    @property
    def R0(self) -> float:
        return initial_radius(self.trajectories)

    def copy(self) -> "InitialDatum":
        """Independent histories, so runs never share mutable buffers."""
        return InitialDatum(
            trajectories=[traj.copy() for traj in self.trajectories],
            S0=self.S0, params=self.params, seed=self.seed
        )

    def with_bound(self, params: ScenarioParams) -> "InitialDatum":
        """
        Same histories declared in the class of params.s.

        Raises:
            LipschitzViolationError: If a history is steeper than params.s
        """
        trajectories = [
            Trajectory(traj.times.copy(), traj.points.copy(), params.s, window_start=traj.window_start)
            for traj in self.trajectories
        ]
        return InitialDatum(trajectories=trajectories, S0=params.window(self.d0), params=params, seed=self.seed)

    def max_speed(self) -> float:
        """Steepest segment over all stored histories."""
        speeds = [0.0]
        for traj in self.trajectories:
            if len(traj) > 1:
                steps = np.linalg.norm(np.diff(traj.points, axis=0), axis=1)
                speeds.append(float((steps / np.diff(traj.times)).max()))
        return max(speeds)


# ==================== Builders ====================


def constant_history(positions, params: ScenarioParams) -> InitialDatum:
    """Every agent sits still at its t = 0 position."""
    x = _as_positions(positions)
    S0 = params.window(diameter(x))
    trajectories = [_linear_path(p, np.zeros_like(p), S0, params.s) for p in x]
    return InitialDatum(trajectories=trajectories, S0=S0, params=params)


def linear_history(positions, velocities, params: ScenarioParams) -> InitialDatum:
    """
    x_i(t) = x_i(0) + v_i t on [-S0, 0].

    Raises:
        ContractViolationError: If some |v_i| exceeds s
    """
    x = _as_positions(positions)
    v = _as_positions(velocities)
    if v.shape != x.shape:
        raise ContractViolationError(f"Velocities of shape {v.shape} do not match positions {x.shape}")
    speeds = np.linalg.norm(v, axis=1)
    too_fast = speeds > params.s * (1.0 + 1e-12)
    if np.any(too_fast):
        i = int(np.argmax(too_fast))
        raise ContractViolationError(
            f"Agent {i} history speed {speeds[i]:g} exceeds s = {params.s:g}",
            details={"agent": i, "speed": float(speeds[i]), "s": params.s}
        )
    S0 = params.window(diameter(x))
    trajectories = [_linear_path(p, vi, S0, params.s) for p, vi in zip(x, v)]
    return InitialDatum(trajectories=trajectories, S0=S0, params=params)


def random_lipschitz_history(
    seed: int,
    N: int,
    d: int,
    box_radius: float,
    params: ScenarioParams
) -> InitialDatum:
    """
    Seeded random datum.

    t = 0 positions are uniform in the ball of radius box_radius; each
    history walks backwards over segments of length S0/8 with random slopes
    of magnitude at most 0.9 s, so R0 <= box_radius + 0.9 s S0.
    """
    if not box_radius > 0:
        raise ContractViolationError(f"box_radius must be positive, got {box_radius}")
    rng = np.random.default_rng(seed)
    x = _uniform_ball(rng, N, d, box_radius)
    S0 = params.window(diameter(x))
    if S0 == 0:
        datum = constant_history(x, params)
        datum.seed = seed
        return datum

    grid = np.linspace(-S0, 0.0, HISTORY_SEGMENTS + 1)
    pitch = S0 / HISTORY_SEGMENTS
    trajectories = []
    for p in x:
        slopes = _uniform_ball(rng, HISTORY_SEGMENTS, d, SLOPE_FRACTION * params.s)
        # walk back from t = 0: point k sits pitch * sum(slopes[k:]) behind x(0)
        offsets = np.vstack((np.cumsum(slopes[::-1], axis=0)[::-1] * pitch, np.zeros((1, d))))
        trajectories.append(Trajectory(grid, p - offsets, params.s))
    return InitialDatum(trajectories=trajectories, S0=S0, params=params, seed=seed)


def symmetric_pair_history(x0: float, slope: float, params: ScenarioParams) -> Trajectory:
    """Scalar history x(t) = x0 + slope t on [-S0, 0] with S0 = 2|x0| / (c - s)."""
    if abs(slope) > params.s * (1.0 + 1e-12):
        raise ContractViolationError(f"History slope {slope:g} exceeds s = {params.s:g}")
    S0 = params.window(2.0 * abs(x0))
    return _linear_path(np.array([x0], dtype=float), np.array([slope], dtype=float), S0, params.s)


def symmetric_pair_datum(x0_path: Trajectory, params: ScenarioParams) -> InitialDatum:
    """Two-agent datum x_2 = -x_1 built from agent 1's scalar history."""
    if x0_path.dim != 1:
        raise ContractViolationError(f"Symmetric pair needs a scalar history, got dim {x0_path.dim}")
    mirror = Trajectory(
        x0_path.times.copy(), -x0_path.points, x0_path.lipschitz_bound,
        window_start=x0_path.window_start
    )
    first = x0_path.copy()
    S0 = params.window(2.0 * abs(float(first.frontier_point[0])))
    return InitialDatum(trajectories=[first, mirror], S0=S0, params=params)


# ==================== Certification loop ====================


def certify_datum(
    build: Callable[[ScenarioParams], InitialDatum],
    psi: InfluenceFunction,
    c: float,
    r_max: Optional[float] = None,
    initial_positions: Optional[np.ndarray] = None,
    max_rounds: int = 20
) -> Tuple[InitialDatum, InfluenceCertification]:
    """
    Build a datum and certify psi on a range that covers it.

    With r_max given, psi is certified once on [0, r_max] and the datum must
    satisfy r_max >= 2 R0. Otherwise psi is certified on 2 (R0 + d0) and the
    datum is rebuilt with the new s until the certified range covers it. The
    first range comes from initial_positions, or from a datum built with s = 0
    when the builder accepts that.

    Raises:
        InfluenceRejectedError: If psi fails certification
        ConfigValidationError: If r_max is too small or the loop does not settle
    """
    if r_max is not None:
        certification = validate_influence(psi, c, r_max)
        datum = build(ScenarioParams.from_certification(certification))
        if r_max < 2.0 * datum.R0:
            raise ConfigValidationError(
                f"influence.r_max = {r_max:g} is below 2 R0 = {2.0 * datum.R0:g}",
                field="influence.r_max"
            )
        return datum, certification

    if initial_positions is None:
        x0 = build(ScenarioParams(c=c, s=0.0)).positions
    else:
        x0 = _as_positions(initial_positions)
    needed = 2.0 * (float(np.linalg.norm(x0, axis=1).max()) + diameter(x0))
    for round_ in range(max_rounds):
        needed = max(needed, settings.speed_bound_base_pitch)
        certification = validate_influence(psi, c, needed)
        datum = build(ScenarioParams.from_certification(certification))
        covered = 2.0 * (datum.R0 + datum.d0)
        logger.debug(
            f"certification round {round_}: s = {certification.s:.9g} on [0, {needed:g}], "
            f"datum needs {covered:g}"
        )
        if covered <= certification.r_max:
            return datum, certification
        needed = covered
    raise ConfigValidationError(
        f"Speed bound certification did not settle after {max_rounds} rounds",
        field="influence"
    )


def certified_random_datum(
    psi: InfluenceFunction,
    c: float,
    seed: int,
    N: int,
    d: int,
    box_radius: float,
    r_max: Optional[float] = None
) -> Tuple[InitialDatum, InfluenceCertification]:
    return certify_datum(
        lambda params: random_lipschitz_history(seed, N, d, box_radius, params),
        psi, c, r_max=r_max
    )


# ==================== Scalar symmetric reduction ====================


def symmetric_pair_scalar(
    x0_path: Trajectory,
    certification: InfluenceCertification,
    T: float,
    dt: float,
    scheme: Union[Scheme, str] = Scheme.HEUN
) -> SimTrace:
    """
    Integrate x' = -psi(|x + x~|)(x + x~) with c tau = |x(t) + x(t - tau)|.

    The mirror agent x_2 = -x is reconstructed for the trace, whose
    diagnostics carry agent 1's retarded position x~ at every record.
    """
    scheme = Scheme(scheme)
    if scheme not in (Scheme.EULER, Scheme.HEUN):
        raise ContractViolationError(f"Scalar reduction runs euler or heun, got {scheme.value}")
    if x0_path.dim != 1:
        raise ContractViolationError(f"Symmetric pair needs a scalar history, got dim {x0_path.dim}")
    if not dt > 0 or T < dt:
        raise ContractViolationError(f"Need 0 < dt <= T, got dt = {dt}, T = {T}")

    c, s, psi = certification.c, certification.s, certification.psi
    if x0_path.lipschitz_bound > s + settings.append_slack:
        raise ContractViolationError(
            f"History bound {x0_path.lipschitz_bound:g} exceeds the certified s = {s:g}"
        )
    path = x0_path.copy()
    keep = 2.0 * initial_radius([path]) / (c - s) + dt

    def slope(p, t: float, x: float) -> Tuple[float, float, float]:
        res = solve_delay(np.array([-x]), p, t, c)
        x_seen = float(res.x_delayed[0])
        w = x + x_seen
        return -psi(abs(w)) * w, x_seen, res.tau

    trace = SimTrace(scheme=scheme, dt=dt)
    seen: List[float] = []
    t0 = path.frontier
    n_steps = max(1, math.ceil(T / dt - 1e-9))

    def record(t: float, x: float, x_seen: float, tau: float) -> None:
        trace.record(t, np.array([[x], [-x]]), tau_range=(tau, tau))
        seen.append(x_seen)

    t = t0
    x = float(path.frontier_point[0])
    try:
        v0, x_seen, tau = slope(path, t, x)
        record(t, x, x_seen, tau)
        for k in range(1, n_steps + 1):
            t_next = t0 + T if k == n_steps else t0 + k * dt
            h = t_next - t
            if scheme is Scheme.HEUN:
                staged = ExtrapolatedPath(path, [v0], h)
                x_pred = float(staged.eval_at(t + h)[0])
                v1, _, _ = slope(staged, t + h, x_pred)
                x_new = x + 0.5 * h * (v0 + v1)
            else:
                x_new = x + h * v0
            path.append_segment(t + h, [x_new])
            t, x = path.frontier, x_new
            v0, x_seen, tau = slope(path, t, x)
            record(t, x, x_seen, tau)
            if path.window_start < t - keep:
                path.prune_before(t - keep)
    except LipschitzViolationError as e:
        raise IntegrationError(
            f"Symmetric pair left the Lipschitz class at t = {t:.12g}", trace=trace, details=e.details
        ) from e
    except SimulationError as e:
        raise IntegrationError(
            f"Symmetric pair integration failed at t = {t:.12g}: {e.message}",
            trace=trace, details={"cause": e.to_dict()}
        ) from e

    trace.diagnostics.update({"steps": n_steps, "t0": t0, "T": T, "x_delayed": seen})
    return trace


# ==================== Datum files ====================


def save_datum(
    datum: InitialDatum,
    path: Union[str, Path],
    psi: Optional[InfluenceFunction] = None,
    header: Optional[Dict[str, str]] = None
) -> Path:
    """Write the datum as '# key=value' header lines followed by (agent_id, t, x_0, ...) rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "N": str(datum.n_agents),
        "d": str(datum.dim),
        "c": repr(datum.params.c),
        "s": repr(datum.params.s),
        "S0": repr(datum.S0),
    }
    if datum.seed is not None:
        meta["seed"] = str(datum.seed)
    if psi is not None:
        meta["psi"] = json.dumps({"kind": psi.kind.value, "params": list(psi.params)})
    meta.update(header or {})

    frames = []
    for agent_id, traj in enumerate(datum.trajectories):
        frame = pd.DataFrame(traj.points, columns=[f"x_{k}" for k in range(datum.dim)])
        frame.insert(0, "t", traj.times)
        frame.insert(0, "agent_id", agent_id)
        frames.append(frame)

    with path.open("w", encoding="utf-8") as f:
        for key, value in meta.items():
            f.write(f"# {key}={value}\n")
        pd.concat(frames, ignore_index=True).to_csv(f, index=False, float_format="%.17g")
    logger.info(f"Saved {datum.n_agents}-agent datum to {path}")
    return path


def load_datum(path: Union[str, Path]) -> Tuple[InitialDatum, Dict[str, str]]:
    """
    Read a datum file written by save_datum.

    Raises:
        ConfigValidationError: On a missing or malformed header
        LipschitzViolationError: If a history is steeper than the stored s
    """
    path = Path(path)
    meta = read_header(path)
    for key in ("N", "d", "c", "s"):
        if key not in meta:
            raise ConfigValidationError(f"Datum file {path} lacks the '{key}' header", field=key)
    params = ScenarioParams(c=float(meta["c"]), s=float(meta["s"]))
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    dim = int(meta["d"])
    columns = [f"x_{k}" for k in range(dim)]
    missing = [col for col in ["agent_id", "t", *columns] if col not in frame.columns]
    if missing:
        raise ConfigValidationError(f"Datum file {path} lacks columns {missing}", field="datum_path")

    trajectories = []
    for agent_id, rows in frame.sort_values(["agent_id", "t"]).groupby("agent_id", sort=True):
        trajectories.append(Trajectory(rows["t"].to_numpy(), rows[columns].to_numpy(), params.s))
    if len(trajectories) != int(meta["N"]):
        raise ConfigValidationError(
            f"Datum file {path} holds {len(trajectories)} agents, header says {meta['N']}",
            field="N"
        )
    frontiers = {traj.frontier for traj in trajectories}
    if len(frontiers) != 1:
        raise ConfigValidationError(f"Datum histories end at different times {sorted(frontiers)}", field="t")

    S0 = float(meta["S0"]) if "S0" in meta else params.window(diameter(
        np.vstack([traj.frontier_point for traj in trajectories])
    ))
    seed = int(meta["seed"]) if "seed" in meta else None
    return InitialDatum(trajectories=trajectories, S0=S0, params=params, seed=seed), meta


def read_header(path: Union[str, Path]) -> Dict[str, str]:
    """Parse the leading '# key=value' comment lines of a CSV artifact."""
    meta: Dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


# ==================== Internals ====================


def _as_positions(positions) -> np.ndarray:
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x


def _linear_path(p: np.ndarray, v: np.ndarray, S0: float, s: float) -> Trajectory:
    if S0 <= 0:
        return Trajectory([0.0], p.reshape(1, -1), s)
    return Trajectory([-S0, 0.0], np.vstack((p - v * S0, p)), s)


def _uniform_ball(rng: np.random.Generator, n: int, d: int, r: float) -> np.ndarray:
    direction = rng.standard_normal((n, d))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    scale = r * rng.random((n, 1)) ** (1.0 / d)
    return direction / norms * scale
