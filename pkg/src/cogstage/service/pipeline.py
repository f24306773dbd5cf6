"""The staged case pipeline: observe -> plan -> execute -> verify -> aggregate.

The :class:`Engine` owns the wiring (store, tool registry, LLM gateway,
planner, aggregator) and drives sessions through the status machine,
emitting a pipeline event at every stage boundary, retry, and fallback.
Stage results are persisted at each boundary, so a crashed run resumes from
the last completed stage; executed actions are deduplicated by fingerprint
and never re-run on resume.

Diagnostic degradation (LLM failures, tool failures) uses fallbacks and
still ends in ``done``; only storage/internal faults end in ``failed``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from time import time
from typing import Optional

from ..aggregator import Aggregator, build_context, verify_outcomes
from ..domain import DiagnosisReport, PatientRecord, validate_patient_record
from ..guidelines import DEFAULT_TABLE, ThresholdTable
from ..llm import CostLedger, LlmGateway, LlmRoleConfig, PricingTable
from ..mockllm import synthetic_provider
from ..nifti import parse_nifti_header, validate_preprocessed_mri
from ..planner import Planner, observe, validate_plan
from ..reportfmt import report_markdown
from ..tools import OutcomeStatus, RetryPolicy, ToolExecutor, default_registry
from ..vcf import sniff_vcf
from .store import (
    CaseSession,
    SessionStatus,
    SessionStore,
    StorageFailure,
    WrongState,
)


class ValidationFailed(ValueError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class NoReport(RuntimeError):
    pass


@dataclass
class EngineConfig:
    data_dir: str
    provider: str = "mock"
    reasoning: Optional[LlmRoleConfig] = None
    aggregation: Optional[LlmRoleConfig] = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    table: ThresholdTable = field(default_factory=lambda: DEFAULT_TABLE)
    render_figures: bool = True

    def __post_init__(self) -> None:
        if self.reasoning is None:
            self.reasoning = LlmRoleConfig(
                role="reasoning_engine", provider_id=self.provider,
                model_name=f"{self.provider}-planner",
            )
        if self.aggregation is None:
            self.aggregation = LlmRoleConfig(
                role="aggregator", provider_id=self.provider,
                model_name=f"{self.provider}-aggregator",
            )


class Engine:
    def __init__(self, config: EngineConfig, gateway: Optional[LlmGateway] = None,
                 registry=None):
        self.config = config
        self.store = SessionStore(config.data_dir)
        self.registry = registry or default_registry()
        self.executor = ToolExecutor(self.registry)
        self.gateway = gateway or LlmGateway(
            providers={"mock": synthetic_provider()},
            pricing=PricingTable(),
            ledger=CostLedger(),
        )
        self.planner = Planner(self.gateway, config.reasoning, self.registry)
        self.aggregator = Aggregator(self.gateway, config.aggregation, config.table)

    # -- intake ---------------------------------------------------------------

    def create_case_session(
        self,
        record: PatientRecord,
        mri_upload: Optional[tuple[str, bytes]] = None,
        vcf_upload: Optional[tuple[str, bytes]] = None,
    ) -> str:
        """Validate the record and uploads, persist the session, return its id."""
        report = validate_patient_record(record)
        violations = list(report.violations)

        if mri_upload is not None:
            name, content = mri_upload
            try:
                header = parse_nifti_header(content)
            except ValueError as exc:
                violations.append(f"mri upload: {exc}")
            else:
                violations.extend(
                    f"mri upload: {v}"
                    for v in validate_preprocessed_mri(header).violations
                )
        if vcf_upload is not None and not sniff_vcf(vcf_upload[1]):
            violations.append("vcf upload: not a VCF file")
        if violations:
            raise ValidationFailed(violations)

        session = self.store.create(record)
        updates = {}
        if mri_upload is not None:
            updates["mri_ref"] = self.store.store_upload(
                session.session_id, mri_upload[0], mri_upload[1]
            )
        if vcf_upload is not None:
            updates["vcf_ref"] = self.store.store_upload(
                session.session_id, vcf_upload[0], vcf_upload[1]
            )
        if updates:
            data = record.to_json_dict() | updates
            session.record = PatientRecord.from_json_dict(data)
            self.store.save(session)
        return session.session_id

    # -- pipeline -------------------------------------------------------------

    def advance_pipeline(self, session_id: str, query: str = "") -> SessionStatus:
        """Run (or resume) the staged pipeline to a terminal status."""
        with self.store.lock(session_id):
            session = self.store.load(session_id)
            if session.status in (SessionStatus.DONE, SessionStatus.FAILED):
                raise WrongState(
                    f"session {session_id} already {session.status.value}"
                )
            try:
                return self._run_stages(session, query)
            except StorageFailure:
                raise
            except WrongState:
                raise
            except Exception as exc:  # internal fault: fail the session honestly
                session.advance_status(SessionStatus.FAILED)
                self.store.save(session)
                self.store.append_event(
                    session.session_id, "pipeline", "finished",
                    f"internal fault: {type(exc).__name__}: {exc}",
                )
                return session.status

    def _run_stages(self, session: CaseSession, query: str) -> SessionStatus:
        emit = lambda stage, kind, detail="": self.store.append_event(
            session.session_id, stage, kind, detail
        )

        if session.status is SessionStatus.CREATED:
            session.advance_status(SessionStatus.PLANNING)
            self.store.save(session)
            emit("planning", "started")
            bundle = observe(query, session.record)
            plan, validation = self.planner.generate_plan(
                bundle,
                doctor_prompt=session.record.doctor_prompt or "",
                policy=self.config.retry,
                case_id=session.session_id,
                on_event=lambda kind, detail: emit("planning", kind, detail),
            )
            session.plan = plan
            session.plan_violations = list(validation.violations)
            self.store.save(session)
            emit("planning", "finished",
                 f"{len(validation.resolved_actions)} action(s) planned "
                 f"({plan.source})")

        if session.status is SessionStatus.PLANNING:
            session.advance_status(SessionStatus.EXECUTING)
            self.store.save(session)
            emit("executing", "started")
            validation = validate_plan(session.plan, self.registry)
            for action in validation.resolved_actions:
                fp = action.fingerprint()
                if fp in session.executed_fingerprints:
                    continue  # crash-safe resume: already executed
                outcome = self.executor.execute(
                    action,
                    policy=self.config.retry,
                    on_retry=lambda tool, attempt, reason: emit(
                        "executing", "retry", f"{tool} attempt {attempt}: {reason}"
                    ),
                )
                session.outcomes.append(outcome)
                session.executed_fingerprints[fp] = len(session.outcomes) - 1
                self.store.save(session)
                if outcome.status is OutcomeStatus.OK:
                    emit("executing", "tool_ok",
                         f"{outcome.tool} ok in {outcome.attempts} attempt(s)")
                else:
                    emit("executing", "tool_failed",
                         f"{outcome.tool}: {outcome.diagnostics}")
            emit("executing", "finished",
                 f"{len(session.outcomes)} outcome(s) collected")

        if session.status is SessionStatus.EXECUTING:
            session.advance_status(SessionStatus.AGGREGATING)
            self.store.save(session)
            emit("aggregating", "started")
            verified, flags = verify_outcomes(session.outcomes)
            session.outcomes = list(verified)
            session.verification_flags = flags
            context = build_context(
                session.record, verified, session.history,
                session.record.doctor_prompt or "",
            )
            report, check = self.aggregator.aggregate(
                context,
                policy=self.config.retry,
                case_id=session.session_id,
                on_event=lambda kind, detail: emit("aggregating", kind, detail),
            )
            report = self._attach_artifacts(session, report)
            session.report = report
            self.store.save_report_bytes(session.session_id, report.to_json_bytes())
            session.history.append(
                "agent",
                f"Staged diagnosis: {report.diagnosis.value} "
                f"(confidence {report.confidence.value}).",
                time(),
            )
            session.advance_status(SessionStatus.DONE)
            self.store.save(session)
            emit("aggregating", "finished",
                 f"report ready ({report.provenance.value}; "
                 f"cross-check {'agrees' if check.agree else 'disagrees'})")

        return session.status

    def _attach_artifacts(self, session: CaseSession,
                          report: DiagnosisReport) -> DiagnosisReport:
        """Collect generated files (risk curve figure, predicted scans) into
        the report's attachments."""
        attachments = list(report.attachments)
        for outcome in session.outcomes:
            if outcome.status is not OutcomeStatus.OK:
                continue
            if outcome.payload.get("predicted_image_ref"):
                attachments.append(outcome.payload["predicted_image_ref"])
            curve = outcome.payload.get("risk_curve")
            if curve and self.config.render_figures:
                from ..figures import save_risk_curve_figure

                path = os.path.join(
                    self.store.uploads_dir(session.session_id), "risk_curve.png"
                )
                try:
                    save_risk_curve_figure(curve, path)
                except Exception:
                    continue  # a failed figure must never fail the pipeline
                attachments.append(path)
        if not attachments:
            return report
        return replace(report, attachments=tuple(attachments))

    # -- post-diagnosis interaction --------------------------------------------

    def chat_turn(self, session_id: str, message: str) -> str:
        """One chat exchange over a finished case.

        The aggregator is re-invoked with the cached outcomes plus the
        updated history; the persisted report stays unchanged unless the
        reply is itself a schema-valid report, which is versioned alongside
        the original.
        """
        with self.store.lock(session_id):
            session = self.store.load(session_id)
            if session.status is not SessionStatus.DONE:
                raise WrongState(
                    f"chat requires a finished session, not {session.status.value}"
                )
            session.history.append("user", message, time())
            context = build_context(
                session.record, session.outcomes, session.history,
                session.record.doctor_prompt or "",
            )
            reply, revised = self.aggregator.chat(
                context, case_id=session.session_id
            )
            session.history.append("agent", reply, time())
            if revised is not None:
                session.report_versions += 1
                self.store.save_report_bytes(
                    session.session_id, revised.to_json_bytes(),
                    version=session.report_versions,
                )
            self.store.save(session)
            return reply

    def export_report(self, session_id: str, format: str = "json") -> bytes:
        session = self.store.load(session_id)
        if session.report is None:
            raise NoReport(f"session {session_id} has no report yet")
        if format == "json":
            return self.store.report_bytes(session_id)
        if format == "markdown":
            return report_markdown(session.report).encode("utf-8")
        raise ValueError(f"unknown export format {format!r}")

    def session_view(self, session_id: str) -> dict:
        session = self.store.load(session_id)
        events = self.store.events(session_id)
        return {
            "session_id": session.session_id,
            "status": session.status.value,
            "record": session.record.to_json_dict(),
            "plan": session.plan.to_json_dict() if session.plan else None,
            "outcomes": [o.to_json_dict() for o in session.outcomes],
            "verification_flags": list(session.verification_flags),
            "has_report": session.report is not None,
            "report_versions": session.report_versions,
            "history": session.history.to_json_list(),
            "events": [e.to_json_dict() for e in events],
        }


def build_engine(data_dir: str, provider: str = "mock",
                 config_path: Optional[str] = None,
                 render_figures: bool = True) -> Engine:
    """Engine with the default profile: fixture tools + the synthetic mock LLM.

    A JSON config file may map the two roles onto real HTTP providers; the
    "mock" provider is always registered as the offline default.
    """
    reasoning = aggregation = None
    if config_path:
        from ..llm import load_role_configs

        roles = load_role_configs(config_path)
        reasoning = roles.get("reasoning_engine")
        aggregation = roles.get("aggregator")
    config = EngineConfig(
        data_dir=data_dir,
        provider=provider,
        reasoning=reasoning,
        aggregation=aggregation,
        render_figures=render_figures,
    )
    engine = Engine(config)
    if provider != "mock" and config_path:
        from ..llm import HttpProvider

        engine.gateway.register_provider(provider, HttpProvider())
    return engine
