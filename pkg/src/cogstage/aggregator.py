"""Outcome verification, LLM aggregation, and the deterministic fallback.

Verification is deterministic plausibility rules (volumes positive and
inside the cranium, hippocampal halves summing to the total, probabilities
in range); the LLM's own consistency narrative is advisory text only.
``aggregate`` assembles the guideline-conditioned prompt, parses the reply
against the report schema with retries, falls back to the rule engine when
the budget is spent, and always cross-checks the result against the
guideline oracle.  Oracle disagreement never overrules the LLM-led report;
it is disclosed in the contradicting evidence and costs one confidence
level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .domain import (
    ChatHistory,
    ConfidenceLevel,
    DiagnosisReport,
    PatientRecord,
    Provenance,
    StagingLabel,
    UnknownLabel,
    normalize_confidence,
    normalize_label,
)
from .guidelines import (
    DEFAULT_TABLE,
    GuidelineDecision,
    NoEvidence,
    ThresholdTable,
    Tier,
    collect_votes,
    stage_record,
)
from .jsonx import extract_json_object
from .llm import LlmGateway, LlmRoleConfig
from .prompts import (
    aggregator_system_prompt,
    aggregator_user_prompt,
    guideline_checksum,
)
from .tools import OutcomeStatus, RetryPolicy, ToolOutcome
from .tools.registry import BRAIN_VOLUME, HIPPOCAMPUS, IMAGING_ANALYZERS

HISTORY_TURN_CAP = 20


class ReportSchemaError(ValueError):
    """SchemaViolation: a required report key is missing or mistyped."""

    def __init__(self, path: str):
        super().__init__(f"report schema violation at {path}")
        self.path = path


class InvalidEnum(ValueError):
    def __init__(self, fieldname: str, value: str):
        super().__init__(f"invalid {fieldname}: {value!r}")
        self.fieldname = fieldname


@dataclass(frozen=True)
class AggregationContext:
    outcomes: tuple[ToolOutcome, ...]
    record: PatientRecord
    guidelines: str
    history: ChatHistory
    doctor_prompt: str = ""


@dataclass(frozen=True)
class CrossCheck:
    llm_label: StagingLabel
    oracle_label: StagingLabel
    note: str = ""

    @property
    def agree(self) -> bool:
        return self.llm_label is self.oracle_label


def verify_outcomes(outcomes: Sequence[ToolOutcome]) -> tuple[list[ToolOutcome], list[str]]:
    """Apply deterministic plausibility rules to tool outcomes.

    Implausible ok-outcomes are downgraded to failed with a flag; failed
    outcomes are flagged but never upgraded.  Idempotent.
    """
    verified: list[ToolOutcome] = []
    flags: list[str] = []

    for outcome in outcomes:
        if outcome.status is not OutcomeStatus.OK:
            if outcome.status is OutcomeStatus.FAILED:
                flags.append(f"{outcome.tool}: failed ({outcome.diagnostics})")
            verified.append(outcome)
            continue

        problems: list[str] = []
        payload = outcome.payload
        if outcome.tool in IMAGING_ANALYZERS:
            for key, value in payload.items():
                if key == "source_unit":
                    continue
                if isinstance(value, (int, float)) and value <= 0:
                    problems.append(f"non-positive volume {key}={value}")
        if outcome.tool == BRAIN_VOLUME:
            tb, icv = payload.get("total_brain"), payload.get("icv")
            if tb is not None and icv is not None and tb > icv:
                problems.append(
                    f"brain exceeds intracranial volume ({tb:g} > {icv:g} mm^3)"
                )
        if outcome.tool == HIPPOCAMPUS:
            left, right, total = (payload.get(k) for k in ("left", "right", "total"))
            if None not in (left, right, total) and abs(left + right - total) > 1.0:
                problems.append(
                    f"hippocampal halves do not sum to total "
                    f"({left:g}+{right:g} vs {total:g} mm^3)"
                )
        if "percentile" in payload and not (0 <= payload["percentile"] <= 100):
            problems.append(f"percentile out of range: {payload['percentile']}")
        for point in payload.get("risk_curve", []) or []:
            risk = point.get("risk")
            if risk is not None and not (0.0 <= risk <= 1.0):
                problems.append(f"risk out of [0,1]: {risk}")

        if problems:
            detail = "; ".join(problems)
            flags.append(f"{outcome.tool}: implausible output downgraded ({detail})")
            verified.append(ToolOutcome(
                tool=outcome.tool,
                status=OutcomeStatus.FAILED,
                diagnostics=f"plausibility check failed: {detail}",
                attempts=outcome.attempts,
                wall_time=outcome.wall_time,
            ))
        else:
            verified.append(outcome)

    return verified, flags


def parse_report(text: str) -> tuple[DiagnosisReport, list[str]]:
    """Parse an LLM reply into a report; returns (report, normalization flags).

    Raises :class:`~cogstage.jsonx.NotJson`, :class:`ReportSchemaError` or
    :class:`InvalidEnum` - all retryable signals for the aggregation loop.
    """
    data = extract_json_object(text)
    flags: list[str] = []

    def require(node, key: str, path: str):
        if not isinstance(node, dict) or key not in node:
            raise ReportSchemaError(path)
        return node[key]

    raw_diagnosis = require(data, "diagnosis", "diagnosis")
    try:
        diagnosis = normalize_label(str(raw_diagnosis))
    except UnknownLabel:
        raise InvalidEnum("diagnosis", str(raw_diagnosis)) from None
    if str(raw_diagnosis).strip().upper() == "NC":
        flags.append('diagnosis token "NC" normalized to "CN"')

    raw_confidence = require(data, "confidence", "confidence")
    try:
        confidence = normalize_confidence(str(raw_confidence))
    except UnknownLabel:
        raise InvalidEnum("confidence", str(raw_confidence)) from None

    justification = require(data, "justification", "justification")
    reasoning = require(justification, "clinical_reasoning", "justification.clinical_reasoning")
    summary = require(justification, "evidence_summary", "justification.evidence_summary")
    supporting = require(summary, "supporting_evidence",
                         "justification.evidence_summary.supporting_evidence")
    contradicting = require(summary, "contradicting_evidence",
                            "justification.evidence_summary.contradicting_evidence")
    conflict = require(justification, "conflict_resolution", "justification.conflict_resolution")
    criteria = require(justification, "diagnostic_criteria", "justification.diagnostic_criteria")
    if not isinstance(supporting, list) or not isinstance(contradicting, list):
        raise ReportSchemaError("justification.evidence_summary")

    recommendations = data.get("recommendations", [])
    if recommendations is None:
        recommendations = []
    if not isinstance(recommendations, list):
        raise ReportSchemaError("recommendations")

    report = DiagnosisReport(
        diagnosis=diagnosis,
        confidence=confidence,
        clinical_reasoning=str(reasoning),
        supporting_evidence=tuple(str(x) for x in supporting),
        contradicting_evidence=tuple(str(x) for x in contradicting),
        conflict_resolution=str(conflict),
        diagnostic_criteria=str(criteria),
        recommendations=tuple(str(x) for x in recommendations),
        provenance=Provenance.LLM,
        guideline_checksum=guideline_checksum(),
    )
    return report, flags


def _decision_to_report(decision: GuidelineDecision) -> DiagnosisReport:
    supporting: list[str] = []
    contradicting: list[str] = list(decision.conflicts)
    criteria: list[str] = []
    for vote in decision.votes:
        if vote.tier is Tier.RISK_FACTOR:
            supporting.append(vote.detail + " - weighted as risk context only")
            continue
        if vote.label is decision.label or vote.label is None:
            supporting.append(vote.detail)
        else:
            contradicting.append(vote.detail)
        if vote.tier is Tier.PRIMARY_COGNITIVE:
            criteria.append(f"{vote.indicator} band")
    if not supporting:
        supporting.append("Insufficient evidence: no diagnostic indicator present")
    return DiagnosisReport(
        diagnosis=decision.label,
        confidence=decision.confidence,
        clinical_reasoning=decision.rationale,
        supporting_evidence=tuple(supporting),
        contradicting_evidence=tuple(contradicting),
        conflict_resolution=(
            "; ".join(decision.conflicts) if decision.conflicts else "None"
        ),
        diagnostic_criteria=(
            ", ".join(criteria) if criteria else "no cognitive band matched"
        ),
        recommendations=(
            ("Clinical follow-up recommended to confirm the staged impression.",)
            if decision.label is not StagingLabel.CN
            else ()
        ),
        provenance=Provenance.GUIDELINE_FALLBACK,
        guideline_checksum=guideline_checksum(),
    )


def fallback_aggregate(
    context: AggregationContext,
    table: ThresholdTable = DEFAULT_TABLE,
) -> DiagnosisReport:
    """Deterministic coordination: map the guideline decision to a report."""
    try:
        decision = stage_record(context.record, context.outcomes, table)
    except NoEvidence:
        votes, _ = collect_votes(context.record, context.outcomes, table)
        risk_notes = tuple(v.detail for v in votes if v.tier is Tier.RISK_FACTOR)
        reasoning = (
            "Insufficient evidence: no cognitive scores, biomarkers, or "
            "imaging findings were available to stage this case; no "
            "impairment was demonstrated."
        )
        if risk_notes:
            reasoning += (
                " Only risk-factor evidence is present (" + "; ".join(risk_notes) +
                "), which is not a standalone diagnostic criterion."
            )
        return DiagnosisReport(
            diagnosis=StagingLabel.CN,
            confidence=ConfidenceLevel.LOW,
            clinical_reasoning=reasoning,
            supporting_evidence=(
                ("Insufficient evidence: no diagnostic indicator present",) + risk_notes
            ),
            contradicting_evidence=(),
            conflict_resolution="None",
            diagnostic_criteria="none evaluable",
            recommendations=("Obtain cognitive testing before staging.",),
            provenance=Provenance.GUIDELINE_FALLBACK,
            guideline_checksum=guideline_checksum(),
        )
    return _decision_to_report(decision)


def oracle_label(
    context: AggregationContext, table: ThresholdTable = DEFAULT_TABLE
) -> StagingLabel:
    """The guideline engine's label for this context (CN when nothing votes)."""
    try:
        return stage_record(context.record, context.outcomes, table).label
    except NoEvidence:
        return StagingLabel.CN


class Aggregator:
    """The aggregation stage around the aggregator-role LLM."""

    def __init__(self, gateway: LlmGateway, config: LlmRoleConfig,
                 table: ThresholdTable = DEFAULT_TABLE):
        self.gateway = gateway
        self.config = config
        self.table = table

    def aggregate(
        self,
        context: AggregationContext,
        policy: RetryPolicy = RetryPolicy(),
        case_id: str = "",
        on_event: Optional[Callable[[str, str], None]] = None,
    ) -> tuple[DiagnosisReport, CrossCheck]:
        """Produce a report (LLM-led, guideline fallback) plus its cross-check.

        Never raises: parse/schema failures are retried within the policy
        budget and then the deterministic fallback takes over.
        """
        emit = on_event or (lambda kind, detail: None)
        messages = self._build_messages(context)

        report: Optional[DiagnosisReport] = None
        flags: list[str] = []
        for attempt in range(1, policy.max_attempts + 1):
            try:
                reply, _usage = self.gateway.complete(self.config, messages, case_id)
                report, flags = parse_report(reply)
                break
            except Exception as exc:  # NotJson, schema, enum, gateway faults
                reason = f"attempt {attempt}: {type(exc).__name__}: {exc}"
                if attempt < policy.max_attempts and not self._over_cost_budget(policy, case_id):
                    emit("retry", reason)
                else:
                    emit("fallback",
                         f"aggregation retries exhausted ({reason}); "
                         "using guideline fallback")
                    break

        if report is None:
            report = fallback_aggregate(context, self.table)
        if flags:
            report = report.with_extra_contradictions(
                *[f"format note: {f}" for f in flags]
            )

        oracle = oracle_label(context, self.table)
        check = CrossCheck(
            llm_label=report.diagnosis,
            oracle_label=oracle,
            note="" if report.diagnosis is oracle else (
                f"guideline cross-check disagrees: rules stage this case as "
                f"{oracle.value}, report says {report.diagnosis.value}"
            ),
        )
        if not check.agree and report.provenance is Provenance.LLM:
            report = report.with_extra_contradictions(check.note)
            report = report.with_confidence(report.confidence.lowered())
        return report, check

    def _over_cost_budget(self, policy: RetryPolicy, case_id: str) -> bool:
        if policy.cost_budget_usd is None or not case_id:
            return False
        return float(self.gateway.ledger.total_for_case(case_id)) >= policy.cost_budget_usd

    def chat(
        self, context: AggregationContext, case_id: str = ""
    ) -> tuple[str, Optional[DiagnosisReport]]:
        """One conversational re-invocation over cached outcomes.

        Returns the raw reply text plus a revised report when the reply
        happens to be a schema-valid report JSON (caller versions it);
        ordinary prose answers leave the report untouched.
        """
        messages = self._build_messages(context)
        reply, _usage = self.gateway.complete(self.config, messages, case_id)
        try:
            revised, _flags = parse_report(reply)
        except Exception:
            return reply, None
        return reply, revised

    def _build_messages(self, context: AggregationContext) -> list[tuple[str, str]]:
        tool_results = json.dumps(
            [o.to_json_dict() for o in context.outcomes], indent=1, sort_keys=True
        )
        patient_data = json.dumps(
            context.record.scalar_fields(), indent=1, sort_keys=True
        )
        messages: list[tuple[str, str]] = [("system", context.guidelines)]
        for turn in context.history.recent(HISTORY_TURN_CAP):
            role = "user" if turn.speaker == "user" else "assistant"
            messages.append((role, turn.text))
        messages.append(("user", aggregator_user_prompt(
            tool_results, patient_data, context.doctor_prompt
        )))
        return messages


def build_context(
    record: PatientRecord,
    outcomes: Sequence[ToolOutcome],
    history: Optional[ChatHistory] = None,
    doctor_prompt: str = "",
) -> AggregationContext:
    return AggregationContext(
        outcomes=tuple(outcomes),
        record=record,
        guidelines=aggregator_system_prompt(),
        history=history or ChatHistory(),
        doctor_prompt=doctor_prompt or (record.doctor_prompt or ""),
    )
