"""Query decomposition and diagnostic planning.

``observe`` splits a user query plus record into intent and textual/image
payloads; ``generate_plan`` asks the reasoning-engine LLM for a tool plan
and validates it against the registry, retrying on malformed output and
falling through to the deterministic ``fallback_plan`` once the retry
budget is spent - a plan is always produced.

Intent classification is a deliberately small, auditable keyword rule set:
"predict" / "future" / "years" switch to progression forecasting; anything
else (including an empty query) is a diagnosis request.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .domain import Intent, PatientRecord, QueryBundle
from .jsonx import extract_json_object
from .llm import LlmGateway, LlmRoleConfig
from .prompts import planner_system_prompt, planner_user_prompt
from .tools import (
    IMAGING_ANALYZERS,
    MRI_PREDICTOR,
    PHS_CALCULATOR,
    ResolvedAction,
    RetryPolicy,
    ToolRegistry,
)

_PREDICT_KEYWORDS = re.compile(r"\b(predict|future|progression|years?)\b", re.IGNORECASE)
_YEARS_PATTERN = re.compile(r"(\d+(?:\.\d+)?)\s*(?:-?\s*)?(?:years?|yrs?)\b", re.IGNORECASE)

DEFAULT_FUTURE_YEARS = 5.0


@dataclass(frozen=True)
class DiagnosticPlan:
    analysis: str
    tool_calls: tuple[tuple[str, dict], ...]  # ordered (tool, parameters)
    reasoning: str
    source: str = "llm"  # "llm" | "fallback"

    def to_json_dict(self) -> dict:
        return {
            "analysis": self.analysis,
            "tool_calls": [
                {"tool": tool, "parameters": parameters}
                for tool, parameters in self.tool_calls
            ],
            "reasoning": self.reasoning,
        }

    @classmethod
    def from_json_dict(cls, data: dict, source: str = "llm") -> "DiagnosticPlan":
        extra = set(data) - {"analysis", "tool_calls", "reasoning"}
        missing = {"analysis", "tool_calls", "reasoning"} - set(data)
        if extra or missing:
            raise PlanSchemaError(
                f"plan object must have exactly analysis/tool_calls/reasoning "
                f"(missing={sorted(missing)}, extra={sorted(extra)})"
            )
        calls = []
        for i, call in enumerate(data["tool_calls"]):
            if not isinstance(call, dict) or "tool" not in call:
                raise PlanSchemaError(f"tool_calls[{i}] must be an object with a tool name")
            parameters = call.get("parameters", {})
            if not isinstance(parameters, dict):
                raise PlanSchemaError(f"tool_calls[{i}].parameters must be an object")
            calls.append((str(call["tool"]), parameters))
        return cls(
            analysis=str(data["analysis"]),
            tool_calls=tuple(calls),
            reasoning=str(data["reasoning"]),
            source=source,
        )


class PlanSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PlanValidationReport:
    resolved_actions: tuple[ResolvedAction, ...]
    violations: tuple[tuple[int, str], ...]  # (tool_call index, reason)

    @property
    def ok(self) -> bool:
        return not self.violations


def observe(query: str, record: PatientRecord) -> QueryBundle:
    """Decompose the query + record into intent and payloads.

    Nothing is invented for absent fields; file references go only into the
    image payload (the VCF, being non-image data, surfaces as an
    availability marker in the textual payload instead).
    """
    query = (query or "").strip()
    intent = Intent.DIAGNOSE
    if query and _PREDICT_KEYWORDS.search(query):
        intent = Intent.PREDICT_PROGRESSION

    text_payload = record.scalar_fields()
    if record.vcf_ref:
        text_payload["vcf_available"] = True
    if record.doctor_prompt:
        text_payload["doctor_prompt"] = record.doctor_prompt

    image_payload = (record.mri_ref,) if record.mri_ref else ()
    return QueryBundle(
        intent=intent,
        query_text=query,
        text_payload=text_payload,
        image_payload=image_payload,
        record=record,
    )


def parse_future_years(query: str) -> float:
    match = _YEARS_PATTERN.search(query or "")
    return float(match.group(1)) if match else DEFAULT_FUTURE_YEARS


def fallback_plan(bundle: QueryBundle) -> DiagnosticPlan:
    """Deterministic rule-table plan; pure function of the bundle.

    Rules, in fixed order: an MRI reference queues the four imaging
    analyzers; genetic data (VCF or APOE) queues the PHS calculator (with
    age when present); a progression intent with MRI and age queues the
    forecaster.  With no plannable inputs the plan is empty and aggregation
    proceeds on the textual evidence alone.
    """
    record = bundle.record
    calls: list[tuple[str, dict]] = []
    reasons: list[str] = []

    if record.mri_ref:
        for name in IMAGING_ANALYZERS:
            calls.append((name, {"image_path": record.mri_ref}))
        reasons.append("imaging available: queued all four volumetric analyzers")

    if record.vcf_ref or record.apoe_genotype:
        parameters: dict = {}
        if record.vcf_ref:
            parameters["vcf_path"] = record.vcf_ref
        elif record.apoe_genotype:
            parameters["apoe"] = record.apoe_genotype
        if record.age is not None:
            parameters["age"] = record.age
        calls.append((PHS_CALCULATOR, parameters))
        reasons.append("genetic data available: queued the polygenic hazard score")

    if (
        bundle.intent is Intent.PREDICT_PROGRESSION
        and record.mri_ref
        and record.age is not None
    ):
        calls.append((MRI_PREDICTOR, {
            "image_path": record.mri_ref,
            "age": record.age,
            "future_years": parse_future_years(bundle.query_text),
        }))
        reasons.append("progression requested with MRI and age: queued the forecaster")

    if not reasons:
        reasons.append("no imaging or genetic inputs: nothing to execute; "
                       "staging will rest on the textual evidence")

    present = ", ".join(sorted(bundle.text_payload)) or "none"
    return DiagnosticPlan(
        analysis=f"Available non-image fields: {present}; "
                 f"image inputs: {len(bundle.image_payload)}",
        tool_calls=tuple(calls),
        reasoning="; ".join(reasons),
        source="fallback",
    )


def validate_plan(plan: DiagnosticPlan, registry: ToolRegistry) -> PlanValidationReport:
    """Resolve a plan against the registry.

    Unknown tools and schema-invalid parameter maps are violations; an
    exact duplicate (tool, parameters) call is deduplicated and noted
    (models commonly repeat themselves; execution must stay idempotent).
    """
    actions: list[ResolvedAction] = []
    violations: list[tuple[int, str]] = []
    seen: set[str] = set()

    for index, (tool, parameters) in enumerate(plan.tool_calls):
        if tool not in registry:
            violations.append((index, f"unknown tool {tool!r}"))
            continue
        problems = registry.validate_parameters(tool, parameters)
        if problems:
            violations.append((index, f"{tool}: " + "; ".join(problems)))
            continue
        action = ResolvedAction(tool=tool, parameters=parameters)
        key = action.fingerprint()
        if key in seen:
            violations.append((index, f"duplicate call to {tool} (deduplicated)"))
            continue
        seen.add(key)
        actions.append(action)

    return PlanValidationReport(
        resolved_actions=tuple(actions), violations=tuple(violations)
    )


class Planner:
    """The reasoning-engine side of the workflow."""

    def __init__(self, gateway: LlmGateway, config: LlmRoleConfig,
                 registry: ToolRegistry):
        self.gateway = gateway
        self.config = config
        self.registry = registry

    def generate_plan(
        self,
        bundle: QueryBundle,
        doctor_prompt: str = "",
        policy: RetryPolicy = RetryPolicy(),
        case_id: str = "",
        on_event: Optional[Callable[[str, str], None]] = None,
    ) -> tuple[DiagnosticPlan, PlanValidationReport]:
        """Ask the LLM for a plan; retry on bad output; fall back when spent.

        ``on_event(kind, detail)`` receives "retry" and "fallback"
        notifications for the pipeline event log.  Never raises: the
        fallback guarantees a plan.
        """
        emit = on_event or (lambda kind, detail: None)
        prompt_fields = dict(bundle.text_payload)
        prompt_fields.pop("vcf_available", None)
        # The textual payload stays free of file references; the prompt adds
        # them back so tool parameters can name real inputs.
        if bundle.image_payload:
            prompt_fields["image_path"] = bundle.image_payload[0]
        if bundle.record.vcf_ref:
            prompt_fields["vcf_path"] = bundle.record.vcf_ref
        prompt_fields["intent"] = bundle.intent.value
        if bundle.query_text:
            prompt_fields["query"] = bundle.query_text
        patient_data = json.dumps(prompt_fields, indent=1, sort_keys=True)
        messages = [
            ("system", planner_system_prompt()),
            ("user", planner_user_prompt(patient_data, doctor_prompt)),
        ]

        for attempt in range(1, policy.max_attempts + 1):
            try:
                reply, _usage = self.gateway.complete(self.config, messages, case_id)
                plan = DiagnosticPlan.from_json_dict(extract_json_object(reply))
            except Exception as exc:  # NotJson, PlanSchemaError, gateway faults
                reason = f"attempt {attempt}: {type(exc).__name__}: {exc}"
                if attempt < policy.max_attempts and not self._over_cost_budget(policy, case_id):
                    emit("retry", reason)
                    continue
                emit("fallback", f"plan retries exhausted ({reason}); using rule-based plan")
                fallback = fallback_plan(bundle)
                return fallback, validate_plan(fallback, self.registry)

            report = validate_plan(plan, self.registry)
            if report.ok or report.resolved_actions:
                # Partial validity is accepted: bad calls are dropped with
                # violations noted, valid ones execute.
                return plan, report
            reason = f"attempt {attempt}: no valid tool calls ({report.violations})"
            if attempt < policy.max_attempts:
                emit("retry", reason)
            else:
                emit("fallback", f"plan retries exhausted ({reason}); using rule-based plan")
                fallback = fallback_plan(bundle)
                return fallback, validate_plan(fallback, self.registry)

        fallback = fallback_plan(bundle)  # unreachable, kept for totality
        return fallback, validate_plan(fallback, self.registry)

    def _over_cost_budget(self, policy: RetryPolicy, case_id: str) -> bool:
        if policy.cost_budget_usd is None or not case_id:
            return False
        return float(self.gateway.ledger.total_for_case(case_id)) >= policy.cost_budget_usd
