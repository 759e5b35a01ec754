"""
Simulation Service

Turns a RunConfig into a certified datum, runs the requested scheme with
per-step audits, and writes the run artifacts. compare() runs several
schemes and step sizes concurrently on the same datum.
"""

import asyncio
import dataclasses
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import (
    AuditFailure,
    ConfigValidationError,
    ContractViolationError,
    IntegrationError,
    LipschitzViolationError,
    NonConvergenceError,
)
from src.core.logging import run_context
from src.schemas.config import RunConfig
from src.schemas.results import (
    AuditCount,
    CertificateInfo,
    CompareReport,
    OrderEstimate,
    RunSummary,
    SchemeGap,
)
from src.services import exporter
from src.simulation.analysis import (
    AuditContext,
    AuditRecord,
    Auditor,
    DecayCertificate,
    audit_trace,
    cluster_count,
    consensus_time,
    decay_certificate,
    decay_envelope_holds,
    ordering_preserved,
    trace_gap,
)
from src.simulation.dynamics import SystemState
from src.simulation.influence import (
    InfluenceCertification,
    InfluenceFunction,
    validate_influence,
)
from src.simulation.integrator import Scheme, SimTrace, default_dt, integrate, integrate_classical
from src.simulation.picard import picard_reference
from src.simulation.scenarios import (
    InitialDatum,
    ScenarioParams,
    certify_datum,
    constant_history,
    linear_history,
    load_datum,
    random_lipschitz_history,
    save_datum,
    symmetric_pair_datum,
    symmetric_pair_history,
)

logger = logging.getLogger(__name__)


@dataclass
class PreparedRun:
    """Validated inputs shared by every member run of one configuration."""
    config: RunConfig
    psi: InfluenceFunction
    datum: InitialDatum
    certification: InfluenceCertification
    decay: DecayCertificate

    @property
    def dt(self) -> float:
        if self.config.integrator.dt is not None:
            return self.config.integrator.dt
        return default_dt(self.certification, self.config.model.c, self.datum.S0)


class SimulationService:
    """
    Service running configured experiments.
    """

    # ==================== Validation ====================

    def prepare(self, config: RunConfig) -> PreparedRun:
        """
        Build psi and the datum, and certify the speed bound on a range covering it.

        Raises:
            ConfigValidationError: On inconsistent scenario data
            InfluenceRejectedError: If psi fails certification
        """
        with run_context(config.name, config.config_hash()):
            return self._prepare(config)

    def _prepare(self, config: RunConfig) -> PreparedRun:
        spec = config.influence
        psi = InfluenceFunction.from_spec(
            spec.kind, spec.params, lipschitz=spec.lipschitz, speed_bound=spec.speed_bound
        )
        c = config.model.c
        try:
            if config.scenario.kind == "file":
                datum, certification = self._certify_file_datum(config, psi)
            else:
                datum, certification = self._certify_built_datum(config, psi)
        except (ContractViolationError, LipschitzViolationError) as e:
            raise ConfigValidationError(f"Invalid scenario: {e.message}", field="scenario") from e

        decay = decay_certificate(
            psi, certification.s, c, datum.n_agents, datum.R0,
            range_kind=config.analysis.certificate_range
        )
        if decay.note:
            logger.warning(f"Decay certificate: {decay.note}")
        logger.info(
            f"Prepared '{config.name}': N = {datum.n_agents}, d = {datum.dim}, s = {certification.s:.6g}, "
            f"c = {c:g}, R0 = {datum.R0:.6g}, S0 = {datum.S0:.6g}, lambda = {decay.lam:.6g}"
        )
        return PreparedRun(config=config, psi=psi, datum=datum, certification=certification, decay=decay)

    def validate(self, config: RunConfig) -> PreparedRun:
        """Alias of prepare() used by the validate verb."""
        return self.prepare(config)

    def generate_scenario(self, config: RunConfig, path: Optional[Path] = None) -> Path:
        """Build the configured datum and save it as a datum file."""
        with run_context(config.name, config.config_hash()):
            prepared = self._prepare(config)
            path = path or config.output_path("datum.csv")
            return save_datum(
                prepared.datum, path, psi=prepared.psi,
                header={"config_hash": config.config_hash()}
            )

    # ==================== Runs ====================

    def execute(
        self,
        prepared: PreparedRun,
        scheme: Scheme,
        dt: float,
        observers: Sequence = (),
        record_delays: bool = False
    ) -> SimTrace:
        """One member run on a private copy of the datum."""
        scheme = Scheme(scheme)
        integ = prepared.config.integrator
        datum = prepared.datum.copy()
        if scheme is Scheme.PICARD:
            return picard_reference(
                datum, prepared.certification, integ.T, dt,
                tol=integ.picard_tol, max_iter=integ.picard_max_iter
            )
        if scheme is Scheme.CLASSICAL:
            return integrate_classical(datum.positions, prepared.psi, integ.T, dt)
        state = SystemState(
            datum.trajectories, datum.trajectories[0].frontier,
            prepared.config.model.c, prepared.certification
        )
        return integrate(
            state, integ.T, dt=dt, scheme=scheme, observers=observers,
            r0=prepared.datum.R0, record_delays=record_delays
        )

    def run(self, config: RunConfig) -> RunSummary:
        """
        Run the configured scheme with audits and write every artifact.

        Raises:
            AuditFailure: After writing the partial artifacts, when an asserted check fails
        """
        with run_context(config.name, config.config_hash()):
            return self._run(config)

    def _run(self, config: RunConfig) -> RunSummary:
        prepared = self._prepare(config)
        scheme = config.integrator.scheme
        dt = prepared.dt
        context = AuditContext(
            s=prepared.certification.s,
            c=config.model.c,
            r0=prepared.datum.R0,
            d0=prepared.datum.d0,
            dim=prepared.datum.dim,
            reference_positions=prepared.datum.positions,
            t0=prepared.datum.trajectories[0].frontier,
            certificate=prepared.decay
        )
        auditor = Auditor(context, strict=config.analysis.strict_audits)

        try:
            trace = self.execute(
                prepared, scheme, dt, observers=[auditor],
                record_delays=config.outputs.delays is not None
            )
        except (AuditFailure, IntegrationError, NonConvergenceError) as e:
            if e.trace is not None:
                self._write_artifacts(config, e.trace, auditor.records)
                logger.error(f"Run aborted; partial artifacts written to {config.outputs.out_dir}")
            raise

        records: List[AuditRecord] = auditor.records
        if scheme in (Scheme.PICARD, Scheme.CLASSICAL):
            records = audit_trace(trace, context)
            failed = [r for r in records if r.asserted and not r.passed]
            if failed and config.analysis.strict_audits:
                self._write_artifacts(config, trace, records)
                raise AuditFailure(
                    f"Invariant '{failed[0].check}' violated at t = {failed[0].t:.12g}",
                    check=failed[0].check,
                    details={"t": failed[0].t, "margin": failed[0].margin}
                )

        outputs = self._write_artifacts(config, trace, records)
        summary = self._summarize(prepared, trace, records, outputs, dt)
        summary_path = config.output_path(config.outputs.summary)
        exporter.write_json(summary.model_dump_json(indent=2), summary_path)
        summary.outputs["summary"] = str(summary_path)
        return summary

    # ==================== Comparison ====================

    async def compare(self, config: RunConfig, schemes: Sequence[str]) -> CompareReport:
        """
        Run every scheme at dt, dt/2 and dt/4 concurrently on one datum.

        Reports pairwise sup-norm gaps at dt and per-scheme Richardson ratios
        of endpoint differences.
        """
        if len(schemes) < 2:
            raise ConfigValidationError("compare needs at least two schemes", field="schemes")
        members = [Scheme(s) for s in schemes]
        with run_context(config.name, config.config_hash()):
            return await self._compare(config, members)

    async def _compare(self, config: RunConfig, members: List[Scheme]) -> CompareReport:
        prepared = await asyncio.to_thread(self._prepare, config)
        dt = prepared.dt
        steps = (dt, dt / 2, dt / 4)

        distinct = list(dict.fromkeys(members))
        jobs = [(scheme, h) for scheme in distinct for h in steps]
        logger.info(f"Comparing {', '.join(s.value for s in members)} with {len(jobs)} member runs")
        traces = await asyncio.gather(*(
            asyncio.to_thread(self.execute, prepared, scheme, h) for scheme, h in jobs
        ))
        by_job: Dict[Tuple[Scheme, float], SimTrace] = dict(zip(jobs, traces))

        gaps = []
        for a, b in itertools.combinations(range(len(members)), 2):
            gap = trace_gap(by_job[(members[a], dt)], by_job[(members[b], dt)])
            gaps.append(SchemeGap(first=members[a].value, second=members[b].value, dt=dt, gap=gap))

        orders = []
        for scheme in distinct:
            ends = [by_job[(scheme, h)].final_positions for h in steps]
            diffs = [float(np.linalg.norm(ends[k] - ends[k + 1], axis=1).max()) for k in range(2)]
            ratio = diffs[0] / diffs[1] if diffs[1] > 0 else None
            orders.append(OrderEstimate(scheme=scheme.value, dt=dt, endpoint_differences=diffs, ratio=ratio))

        return CompareReport(
            name=config.name, config_hash=config.config_hash(),
            schemes=[m.value for m in members], dt=dt, T=config.integrator.T,
            gaps=gaps, orders=orders
        )

    # ==================== Internals ====================

    def _certify_built_datum(
        self, config: RunConfig, psi: InfluenceFunction
    ) -> Tuple[InitialDatum, InfluenceCertification]:
        scenario, model = config.scenario, config.model
        initial = None
        if scenario.kind == "constant":
            build = lambda p: constant_history(scenario.positions, p)
            initial = np.asarray(scenario.positions, dtype=float)
        elif scenario.kind == "linear":
            build = lambda p: linear_history(scenario.positions, scenario.velocities, p)
            initial = np.asarray(scenario.positions, dtype=float)
        elif scenario.kind == "random":
            build = lambda p: random_lipschitz_history(
                scenario.seed, model.n_agents, model.dim, scenario.box_radius, p
            )
        else:
            build = lambda p: symmetric_pair_datum(symmetric_pair_history(scenario.x0, scenario.slope, p), p)
            initial = np.array([[scenario.x0], [-scenario.x0]])
        return certify_datum(build, psi, model.c, r_max=config.influence.r_max, initial_positions=initial)

    def _certify_file_datum(
        self, config: RunConfig, psi: InfluenceFunction
    ) -> Tuple[InitialDatum, InfluenceCertification]:
        """
        Certify psi for a stored datum. The run's s is the larger of the kernel
        bound and the steepest stored history segment.
        """
        datum, meta = load_datum(config.scenario.datum_path)
        model = config.model
        if (datum.n_agents, datum.dim) != (model.n_agents, model.dim):
            raise ConfigValidationError(
                f"Datum holds {datum.n_agents} agents in {datum.dim}D, config expects "
                f"{model.n_agents} in {model.dim}D",
                field="scenario.datum_path"
            )
        if float(meta["c"]) != model.c:
            logger.warning(f"Datum was generated for c = {meta['c']}, running with c = {model.c:g}")

        r_max = config.influence.r_max or 2.0 * (datum.R0 + datum.d0)
        if r_max < 2.0 * datum.R0:
            raise ConfigValidationError(
                f"influence.r_max = {r_max:g} is below 2 R0 = {2.0 * datum.R0:g}",
                field="influence.r_max"
            )
        certification = validate_influence(psi, model.c, max(r_max, 1e-12))
        s = max(certification.s, datum.max_speed())
        if not s < model.c:
            raise ConfigValidationError(
                f"Stored histories move at speed {datum.max_speed():g}, not below c = {model.c:g}",
                field="scenario.datum_path"
            )
        certification = dataclasses.replace(certification, speed_bound=s)
        return datum.with_bound(ScenarioParams(c=model.c, s=s)), certification

    def _write_artifacts(
        self, config: RunConfig, trace: SimTrace, records: Sequence[AuditRecord]
    ) -> Dict[str, str]:
        digest = config.config_hash()
        out = config.outputs
        written = {
            "trajectory": exporter.write_csv(
                exporter.trajectory_frame(trace), config.output_path(out.trajectory), digest
            ),
            "metrics": exporter.write_csv(
                exporter.metrics_frame(trace), config.output_path(out.metrics), digest
            ),
            "audit": exporter.write_csv(
                exporter.audit_frame(records), config.output_path(out.audit), digest
            ),
        }
        if out.delays is not None:
            written["delays"] = exporter.write_csv(
                exporter.delays_frame(trace), config.output_path(out.delays), digest
            )
        return {key: str(path) for key, path in written.items()}

    def _summarize(
        self,
        prepared: PreparedRun,
        trace: SimTrace,
        records: Sequence[AuditRecord],
        outputs: Dict[str, str],
        dt: float
    ) -> RunSummary:
        config = prepared.config
        d0 = trace.diameter[0]
        eps = config.outputs.eps_rel * d0 if d0 > 0 else config.outputs.eps_rel
        counts: Dict[str, AuditCount] = {}
        for r in records:
            bucket = counts.setdefault(r.check, AuditCount())
            if r.passed:
                bucket.passed += 1
            else:
                bucket.failed += 1
        decay = prepared.decay
        return RunSummary(
            name=config.name,
            config_hash=config.config_hash(),
            scheme=trace.scheme.value,
            n_agents=trace.n_agents,
            dim=trace.dim,
            c=config.model.c,
            s=prepared.certification.s,
            dt=dt,
            T=config.integrator.T,
            steps=len(trace) - 1,
            d0=d0,
            d_final=trace.diameter[-1],
            R0=prepared.datum.R0,
            R_final=trace.radius[-1],
            eps=eps,
            consensus_time=consensus_time(trace, eps),
            mean_drift=trace.mean_drift(),
            clusters=cluster_count(trace.final_positions, config.analysis.cluster_eps),
            ordering_preserved=ordering_preserved(trace) if trace.dim == 1 else None,
            certificate=CertificateInfo(
                psi_lo=decay.psi_lo, psi_hi=decay.psi_hi, lam=decay.lam,
                condition_met=decay.condition_met, range_used=decay.range_used,
                range_kind=decay.range_kind, note=decay.note
            ),
            decay_envelope_holds=decay_envelope_holds(trace, decay) if decay.condition_met else None,
            audits=counts,
            audit_failures=sum(1 for r in records if r.asserted and not r.passed),
            outputs=outputs
        )


# Singleton instance
_simulation_service: Optional[SimulationService] = None


def get_simulation_service() -> SimulationService:
    """Get or create simulation service instance."""
    global _simulation_service
    if _simulation_service is None:
        _simulation_service = SimulationService()
    return _simulation_service
