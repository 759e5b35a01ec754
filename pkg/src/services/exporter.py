"""
Artifact Export

Writes run artifacts as CSV files through pandas. Every file starts with a
'# config_hash=<hex>' line tying it to the resolved configuration.
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import pandas as pd

from src.simulation.analysis import AuditRecord
from src.simulation.integrator import SimTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def trajectory_frame(trace: SimTrace) -> pd.DataFrame:
    """Rows (agent_id, t, x_0, ...) sorted by agent, then time."""
    positions = trace.positions_array()
    n_times, n_agents, dim = positions.shape
    frame = pd.DataFrame(
        positions.transpose(1, 0, 2).reshape(-1, dim),
        columns=[f"x_{k}" for k in range(dim)]
    )
    frame.insert(0, "t", list(trace.times) * n_agents)
    frame.insert(0, "agent_id", [i for i in range(n_agents) for _ in range(n_times)])
    return frame


def metrics_frame(trace: SimTrace) -> pd.DataFrame:
    """Rows (t, d_x, R_x, tau_min, tau_max, mean_0, ...)."""
    frame = pd.DataFrame({
        "t": trace.times,
        "d_x": trace.diameter,
        "R_x": trace.radius,
        "tau_min": trace.tau_min,
        "tau_max": trace.tau_max,
    })
    means = pd.DataFrame(trace.mean, columns=[f"mean_{k}" for k in range(trace.dim)])
    return pd.concat([frame, means], axis=1)


def audit_frame(records: Iterable[AuditRecord]) -> pd.DataFrame:
    """Rows (t, check_name, margin, pass, asserted)."""
    return pd.DataFrame(
        [
            {"t": r.t, "check_name": r.check, "margin": r.margin, "pass": r.passed, "asserted": r.asserted}
            for r in records
        ],
        columns=["t", "check_name", "margin", "pass", "asserted"]
    )


def delays_frame(trace: SimTrace) -> pd.DataFrame:
    """Rows (t, i, j, tau, lo, hi, residual); empty unless delays were recorded."""
    return pd.DataFrame(trace.delay_rows or [], columns=["t", "i", "j", "tau", "lo", "hi", "residual"])


def write_csv(frame: pd.DataFrame, path: PathLike, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={config_hash}\n")
        frame.to_csv(f, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_json(payload: str, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    """Read an artifact back, skipping its header comment."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_config_hash(path: PathLike) -> Optional[str]:
    with Path(path).open(encoding="utf-8") as f:
        first = f.readline().strip()
    prefix = "# config_hash="
    return first[len(prefix):] if first.startswith(prefix) else None
