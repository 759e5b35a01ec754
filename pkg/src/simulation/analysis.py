"""
Consensus Diagnostics and Invariant Audits

Group diameter and radius, ordering and consensus detection, the
exponential-decay certificate, and the per-step auditor that checks every
invariant the continuous flow is known to satisfy.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Literal, Optional, Sequence
import logging
import math

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import pdist

from src.config import settings
from src.core.exceptions import AuditFailure, ContractViolationError
from src.simulation.delay_solver import DelayTable, root_tolerance
from src.simulation.influence import InfluenceFunction, psi_range

if TYPE_CHECKING:
    from src.simulation.dynamics import SystemState
    from src.simulation.integrator import SimTrace, StepEvent

logger = logging.getLogger(__name__)

CertificateRange = Literal["radius", "diameter"]

# singular values below this (relative to the point scale) count as flat directions
SPAN_RANK_TOL = 1e-12


# ==================== Group metrics ====================


def diameter(positions: np.ndarray) -> float:
    """Largest pairwise distance."""
    x = _as_points(positions)
    if x.shape[0] < 2:
        return 0.0
    return float(pdist(x).max())


def radius(positions: np.ndarray) -> float:
    """Largest distance from the origin."""
    x = _as_points(positions)
    return float(np.linalg.norm(x, axis=1).max())


def initial_radius(trajectories: Iterable) -> float:
    """
    Radius of the initial datum: the max of |x_i(t)| over the stored window.

    Norms are convex along linear segments, so the maximum sits on a node.
    """
    return max(float(np.linalg.norm(path.points, axis=1).max()) for path in trajectories)


def cluster_count(positions: np.ndarray, eps: float) -> int:
    """Number of groups whose members are chained by gaps of at most eps."""
    x = _as_points(positions)
    if x.shape[0] < 2:
        return x.shape[0]
    labels = fcluster(linkage(x, method="single"), t=eps, criterion="distance")
    return int(labels.max())


def hull_contains(reference: np.ndarray, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
    """
    Per-point flag: inside the convex hull of the reference points.

    In 1D the hull is an interval. Degenerate multi-D references (fewer than
    d + 1 affinely independent points) are handled in their affine span: a
    point counts as inside only if it lies in the span and inside the
    lower-dimensional hull there.
    """
    ref = _as_points(reference)
    pts = _as_points(points)
    if ref.shape[1] == 1:
        lo, hi = ref.min(), ref.max()
        return (pts[:, 0] >= lo - slack) & (pts[:, 0] <= hi + slack)

    origin = ref.mean(axis=0)
    _, sv, vt = np.linalg.svd(ref - origin, full_matrices=False)
    scale = max(1.0, float(np.abs(ref).max()))
    rank = int(np.sum(sv > SPAN_RANK_TOL * scale))
    basis = vt[:rank]
    offsets = pts - origin
    coords = offsets @ basis.T
    in_span = np.linalg.norm(offsets - coords @ basis, axis=1) <= max(slack, SPAN_RANK_TOL * scale)
    if rank == 0:
        return in_span
    if rank == 1:
        ref_coords = (ref - origin) @ basis.T
        lo, hi = ref_coords.min(), ref_coords.max()
        return in_span & (coords[:, 0] >= lo - slack) & (coords[:, 0] <= hi + slack)

    ref_coords = (ref - origin) @ basis.T
    try:
        hull = Delaunay(ref_coords)
    except QhullError:
        # nearly flat references pass the rank cut but trip Qhull; joggle them
        logger.debug(f"Qhull rejected a rank-{rank} reference, retrying with joggle")
        hull = Delaunay(ref_coords, qhull_options="QJ")
    return in_span & (hull.find_simplex(coords, tol=slack) >= 0)


# ==================== Trace predicates ====================


def ordering_preserved(trace: "SimTrace", slack: Optional[float] = None) -> bool:
    """
    1D only: agents never overtake each other.

    Agents are ranked by their first recorded position; ties keep index order.
    """
    if trace.dim != 1:
        raise ContractViolationError(f"Ordering is defined in 1D only, trace has dim {trace.dim}")
    slack = settings.audit_slack if slack is None else slack
    x = trace.positions_array()[:, :, 0]
    order = np.argsort(x[0], kind="stable")
    gaps = np.diff(x[:, order], axis=1)
    return bool(np.all(gaps >= -slack))


def consensus_time(trace: "SimTrace", eps: float) -> Optional[float]:
    """Earliest recorded time with d_x <= eps, or None."""
    if not eps > 0:
        raise ContractViolationError(f"eps must be positive, got {eps}")
    hits = np.flatnonzero(np.asarray(trace.diameter) <= eps)
    return float(trace.times[hits[0]]) if hits.size else None


def trace_gap(a: "SimTrace", b: "SimTrace", t_max: Optional[float] = None) -> float:
    """
    Sup over common times of the largest per-agent distance between two runs.

    Traces on different grids are compared at the times of `a`, with `b`
    interpolated linearly.
    """
    return float(gap_series(a, b, t_max)[1].max())


def gap_series(a: "SimTrace", b: "SimTrace", t_max: Optional[float] = None):
    """(times, per-time gap) between two traces over their common horizon."""
    ta, tb = np.asarray(a.times), np.asarray(b.times)
    end = min(ta[-1], tb[-1]) if t_max is None else min(ta[-1], tb[-1], t_max)
    keep = ta <= end + 1e-12 * max(1.0, abs(end))
    ta = ta[keep]
    xa = a.positions_array()[keep]
    xb = b.positions_array()
    if xa.shape[1:] != xb.shape[1:]:
        raise ContractViolationError(
            f"Traces have different shapes {xa.shape[1:]} and {xb.shape[1:]}"
        )
    if len(tb) == len(a.times) and np.allclose(tb, a.times, rtol=0, atol=1e-12):
        xb_at = xb[keep]
    else:
        flat = xb.reshape(len(tb), -1)
        xb_at = np.column_stack([np.interp(ta, tb, flat[:, k]) for k in range(flat.shape[1])])
        xb_at = xb_at.reshape(xa.shape)
    return ta, np.linalg.norm(xa - xb_at, axis=2).max(axis=1)


def symmetric_pair_checks(trace: "SimTrace", slack: Optional[float] = None) -> Dict[str, bool]:
    """
    Two-agent symmetric run checks on agent 0's coordinate x:

    - abs_nonincreasing: |x(t)| never grows (up to slack)
    - sign_consistent: sign(x + x~) = sign(x) whenever x != 0

    The trace must carry "x_delayed" (agent 0's own retarded position) in
    its diagnostics, as produced by the scalar symmetric integrator.
    """
    slack = settings.audit_slack if slack is None else slack
    x = np.asarray([p[0, 0] for p in trace.positions])
    x_seen = np.asarray(trace.diagnostics["x_delayed"])
    magnitude = np.abs(x)
    nonincreasing = bool(np.all(np.diff(magnitude) <= slack))
    moving = magnitude > slack
    consistent = bool(np.all(np.sign(x[moving] + x_seen[moving]) == np.sign(x[moving])))
    return {"abs_nonincreasing": nonincreasing, "sign_consistent": consistent}


# ==================== Decay certificate ====================


@dataclass(frozen=True)
class DecayCertificate:
    """
    Exponential-consensus test: lambda = N/(N-1) psi_lo - 2s/(c-s) psi_hi > 0
    guarantees d_x(t) <= d_x(0) exp(-lambda t).
    """
    psi_lo: float
    psi_hi: float
    lam: float
    condition_met: bool
    range_used: tuple
    range_kind: str = "radius"
    note: Optional[str] = None


def decay_certificate(
    psi: InfluenceFunction,
    s: float,
    c: float,
    N: int,
    R0: float,
    range_kind: CertificateRange = "radius"
) -> DecayCertificate:
    """
    Bounds of psi over [0, R0] (or [0, 2 R0] with range_kind="diameter") and
    the resulting decay rate.
    """
    if N < 2:
        raise ContractViolationError(f"At least two agents are needed, got {N}")
    if not c > s:
        raise ContractViolationError(f"Decay certificate needs s < c, got s = {s:g}, c = {c:g}")
    hi = R0 if range_kind == "radius" else 2.0 * R0
    psi_lo, psi_hi = psi_range(psi, 0.0, hi)
    lam = N / (N - 1) * psi_lo - 2.0 * s / (c - s) * psi_hi
    note = None
    if range_kind == "radius":
        note = (
            f"psi bounds taken over [0, R0] = [0, {R0:g}]; pairwise and retarded distances "
            f"can reach 2 R0 = {2 * R0:g}"
        )
    return DecayCertificate(
        psi_lo=psi_lo, psi_hi=psi_hi, lam=lam, condition_met=lam > 0,
        range_used=(0.0, hi), range_kind=range_kind, note=note
    )


def decay_envelope_holds(
    trace: "SimTrace",
    certificate: DecayCertificate,
    slack: Optional[float] = None
) -> bool:
    """d_x(t) <= d_x(0) exp(-lambda (t - t0)) (1 + slack) at every recorded time."""
    slack = settings.decay_slack if slack is None else slack
    t = np.asarray(trace.times)
    d = np.asarray(trace.diameter)
    envelope = d[0] * np.exp(-certificate.lam * (t - t[0])) * (1.0 + slack)
    return bool(np.all(d <= envelope + settings.audit_slack))


# ==================== Step audit ====================


@dataclass
class AuditRecord:
    t: float
    check: str
    margin: float
    passed: bool
    asserted: bool = True


@dataclass
class AuditContext:
    """Run-level constants the per-step checks compare against."""
    s: float
    c: float
    r0: float
    d0: float
    dim: int
    reference_positions: np.ndarray
    t0: float = 0.0
    certificate: Optional[DecayCertificate] = None

    @classmethod
    def from_state(
        cls,
        state: "SystemState",
        r0: Optional[float] = None,
        certificate: Optional[DecayCertificate] = None
    ) -> "AuditContext":
        return cls(
            s=state.s,
            c=state.c,
            r0=initial_radius(state.trajectories) if r0 is None else r0,
            d0=diameter(state.positions),
            dim=state.dim,
            reference_positions=state.positions.copy(),
            t0=state.t,
            certificate=certificate
        )


def audit_step(
    state: "SystemState",
    table: DelayTable,
    context: AuditContext,
    previous: Optional["SystemState"] = None,
    previous_diameter: Optional[float] = None
) -> List[AuditRecord]:
    """
    Check the invariants of one snapshot (and of the step leading to it).

    Margins are positive when a check holds; a check passes when its margin
    is at least -slack. Multi-D diameter monotonicity and retarded hull escapes
    are recorded but not asserted.
    """
    slack = settings.audit_slack
    t = state.t
    x = state.positions
    n = state.n_agents
    off = ~np.eye(n, dtype=bool)
    records: List[AuditRecord] = []

    def add(check: str, margin: float, asserted: bool = True, tol: float = slack):
        records.append(AuditRecord(t=t, check=check, margin=float(margin), passed=margin >= -tol, asserted=asserted))

    tau, lo, hi = table.tau[0], table.lo[0], table.hi[0]
    add("delay_bracket", min((tau - lo)[off].min(), (hi - tau)[off].min()))

    tol_g = root_tolerance(context.c, hi)
    add("delay_residual", (tol_g - table.residual[0])[off].min())

    x_seen = table.x_delayed[0]
    pair_dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    seen_dist = np.linalg.norm(x[:, None, :] - x_seen, axis=2)
    apart = off & (pair_dist > 1e-6)
    if np.any(apart):
        add("retarded_distance", (seen_dist - 0.5 * pair_dist)[apart].min())

    records.extend(_position_checks(
        t, x, context,
        previous=None if previous is None else previous.positions,
        dt=None if previous is None else t - previous.t,
        previous_diameter=previous_diameter
    ))

    if context.dim == 1:
        xs = x[:, 0]
        seen = x_seen[:, :, 0]
        less = xs[:, None] < xs[None, :]
        if np.any(less):
            # for x_i < x_j: x_i < x~_j (seen by i), x~_i (seen by j) < x_j, and x~_i < x~_j
            gap_seen_j = seen - xs[:, None]
            gap_seen_i = xs[None, :] - seen.T
            gap_cross = seen - seen.T
            margin = min(gap_seen_j[less].min(), gap_seen_i[less].min(), gap_cross[less].min())
            add("retarded_ordering", margin)
    else:
        escaped = ~hull_contains(context.reference_positions, x_seen[off], slack=slack)
        add("retarded_hull", -float(escaped.sum()), asserted=False, tol=0.0)

    return records


def audit_trace(trace: "SimTrace", context: AuditContext) -> List[AuditRecord]:
    """Position-only checks over a finished trace (runs without per-step delay tables)."""
    records: List[AuditRecord] = []
    for k, t in enumerate(trace.times):
        x = trace.positions[k]
        if k == 0:
            records.extend(_position_checks(t, x, context))
        else:
            records.extend(_position_checks(
                t, x, context, previous=trace.positions[k - 1],
                dt=t - trace.times[k - 1], previous_diameter=trace.diameter[k - 1]
            ))
    return records


def _position_checks(
    t: float,
    x: np.ndarray,
    context: AuditContext,
    previous: Optional[np.ndarray] = None,
    dt: Optional[float] = None,
    previous_diameter: Optional[float] = None
) -> List[AuditRecord]:
    slack = settings.audit_slack
    records: List[AuditRecord] = []

    def add(check: str, margin: float, asserted: bool = True, tol: float = slack):
        records.append(AuditRecord(t=t, check=check, margin=float(margin), passed=margin >= -tol, asserted=asserted))

    add("radius_bound", context.r0 - radius(x))

    d_now = diameter(x)
    if previous is not None:
        d_prev = diameter(previous) if previous_diameter is None else previous_diameter
        add(
            "diameter_nonincreasing", d_prev - d_now,
            asserted=context.dim == 1, tol=slack * max(1.0, context.d0)
        )
        step = np.linalg.norm(x - previous, axis=1).max()
        allowed = context.s * dt * (1.0 + settings.speed_slack)
        add("speed_limit", allowed - step, tol=0.0)

    if context.dim == 1:
        lo_ref, hi_ref = context.reference_positions.min(), context.reference_positions.max()
        add("hull_containment", min(x[:, 0].min() - lo_ref, hi_ref - x[:, 0].max()))

    cert = context.certificate
    if cert is not None and cert.condition_met:
        envelope = context.d0 * math.exp(-cert.lam * (t - context.t0)) * (1.0 + settings.decay_slack)
        # psi bounds over [0, R0] do not cover every pairwise distance, so only the
        # diameter-range certificate is asserted
        add("decay_envelope", envelope - d_now, asserted=cert.range_kind == "diameter")

    return records


class Auditor:
    """
    Integration observer that runs audit_step on every committed step.

    In strict mode the first failing asserted check raises AuditFailure.
    """

    def __init__(self, context: AuditContext, strict: bool = True):
        self.context = context
        self.strict = strict
        self.records: List[AuditRecord] = []
        self._last_diameter: Optional[float] = None

    def __call__(self, event: "StepEvent") -> None:
        records = audit_step(
            event.state, event.table, self.context,
            previous=event.previous, previous_diameter=self._last_diameter
        )
        self._last_diameter = diameter(event.state.positions)
        self.records.extend(records)
        for record in records:
            if record.passed:
                continue
            if not record.asserted:
                logger.warning(
                    f"Recorded {record.check} breach at t = {record.t:.6g} (margin {record.margin:.3g})"
                )
                continue
            logger.error(f"Audit {record.check} failed at t = {record.t:.6g}: margin {record.margin:.3g}")
            if self.strict:
                raise AuditFailure(
                    f"Invariant '{record.check}' violated at t = {record.t:.12g} "
                    f"(margin {record.margin:.3g})",
                    check=record.check,
                    details={"t": record.t, "margin": record.margin}
                )

    @property
    def failures(self) -> List[AuditRecord]:
        return [r for r in self.records if r.asserted and not r.passed]

    def counts(self) -> Dict[str, Dict[str, int]]:
        """Pass/fail counts per check."""
        out: Dict[str, Dict[str, int]] = {}
        for r in self.records:
            bucket = out.setdefault(r.check, {"passed": 0, "failed": 0})
            bucket["passed" if r.passed else "failed"] += 1
        return out

    def worst_margins(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for r in self.records:
            out[r.check] = min(out.get(r.check, math.inf), r.margin)
        return out

    def report(self) -> str:
        """Line-oriented text summary, one line per check."""
        worst = self.worst_margins()
        lines = []
        for check, bucket in sorted(self.counts().items()):
            status = "PASS" if bucket["failed"] == 0 else "FAIL"
            lines.append(
                f"{status} {check}: {bucket['passed']} passed, {bucket['failed']} failed, "
                f"worst margin {worst[check]:.3e}"
            )
        return "\n".join(lines)


# ==================== Empirical probes ====================


@dataclass
class ProbeResult:
    seed: int
    lam: float
    condition_met: bool
    d0: float
    d_final: float

    @property
    def ratio(self) -> float:
        return self.d_final / self.d0 if self.d0 > 0 else 0.0


def probe_multid_consensus(
    psi: InfluenceFunction,
    c: float,
    n_agents: int,
    dim: int,
    box_radius: float,
    seeds: Sequence[int],
    T: float,
    dt: Optional[float] = None,
    only_uncertified: bool = True
) -> List[ProbeResult]:
    """
    Run seeded multi-D scenarios and report how far d_x shrinks by T.

    With only_uncertified=True, scenarios whose decay certificate already
    guarantees consensus are skipped. Results are empirical and never asserted.
    """
    from src.simulation.dynamics import SystemState
    from src.simulation.integrator import integrate
    from src.simulation.scenarios import certified_random_datum

    results: List[ProbeResult] = []
    for seed in seeds:
        datum, cert = certified_random_datum(psi, c, seed, n_agents, dim, box_radius)
        decay = decay_certificate(psi, cert.s, c, n_agents, datum.R0)
        if only_uncertified and decay.condition_met:
            logger.debug(f"seed {seed}: certificate holds (lambda = {decay.lam:.4g}), skipped")
            continue
        state = SystemState(datum.trajectories, 0.0, c, cert)
        trace = integrate(state, T, dt=dt, r0=datum.R0)
        results.append(ProbeResult(
            seed=seed, lam=decay.lam, condition_met=decay.condition_met,
            d0=trace.diameter[0], d_final=trace.diameter[-1]
        ))
        logger.info(
            f"seed {seed}: lambda = {decay.lam:.4g}, d_x(T)/d_x(0) = {results[-1].ratio:.4g}"
        )
    return results


def _as_points(positions) -> np.ndarray:
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x
