"""The built-in deterministic mock LLM.

A scripted stand-in for both LLM roles that answers prompts by actually
reading them: it parses the patient JSON (and tool results) back out of the
prompt text, applies the same rule tables the fallback paths use, and
replies with well-formed plan/report JSON.  Replies are a pure function of
the prompt, so end-to-end pipeline runs are reproducible with zero network.

On chat turns (history present in the messages) it answers with plain
prose instead of JSON, leaving the persisted report unversioned.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence

from .domain import PatientRecord
from .guidelines import NoEvidence, Tier, stage_record
from .llm import FunctionProvider, Message
from .planner import DEFAULT_FUTURE_YEARS, parse_future_years
from .tools import ToolOutcome
from .tools.registry import IMAGING_ANALYZERS, MRI_PREDICTOR, PHS_CALCULATOR

_PLANNER_MARK = "create a diagnostic plan"
_AGGREGATOR_MARK = "Integrate the following tool outputs"


def _slice_between(text: str, start: str, end: Optional[str]) -> str:
    i = text.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = text.find(end, i) if end else -1
    return text[i:j] if j >= 0 else text[i:]


def _parse_json_block(text: str):
    text = text.strip()
    if not text:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return None


def _plan_reply(prompt: str) -> str:
    data = _parse_json_block(
        _slice_between(prompt, "Patient Data:", "Additional Instructions")
    ) or {}
    calls = []
    image_path = data.get("image_path")
    if image_path:
        calls.extend(
            {"tool": name, "parameters": {"image_path": image_path}}
            for name in IMAGING_ANALYZERS
        )
    if data.get("vcf_path") or data.get("apoe_genotype"):
        parameters = {}
        if data.get("vcf_path"):
            parameters["vcf_path"] = data["vcf_path"]
        elif data.get("apoe_genotype"):
            parameters["apoe"] = data["apoe_genotype"]
        if data.get("age") is not None:
            parameters["age"] = data["age"]
        calls.append({"tool": PHS_CALCULATOR, "parameters": parameters})
    if data.get("intent") == "predict_progression" and image_path and data.get("age") is not None:
        calls.append({"tool": MRI_PREDICTOR, "parameters": {
            "image_path": image_path,
            "age": data["age"],
            "future_years": parse_future_years(data.get("query", ""))
            if data.get("query") else DEFAULT_FUTURE_YEARS,
        }})
    plan = {
        "analysis": "Reviewed the available fields and file inputs.",
        "tool_calls": calls,
        "reasoning": "Tools were selected for each available modality; "
                     "nothing was queued for absent data.",
    }
    return json.dumps(plan, indent=1)


def _rebuild_context(prompt: str) -> tuple[PatientRecord, list[ToolOutcome]]:
    tool_block = _slice_between(prompt, "Tool Results:", "Patient Information:")
    patient_block = _slice_between(
        prompt, "Patient Information:", "Additional Instructions"
    )
    raw_outcomes = _parse_json_block(tool_block) or []
    patient = _parse_json_block(patient_block) or {}
    patient.setdefault("case_id", "prompt-case")
    record = PatientRecord.from_json_dict(patient)
    outcomes = []
    for item in raw_outcomes:
        try:
            outcomes.append(ToolOutcome.from_json_dict(item))
        except (KeyError, ValueError):
            continue
    return record, outcomes


def _report_reply(prompt: str) -> str:
    record, outcomes = _rebuild_context(prompt)
    try:
        decision = stage_record(record, outcomes)
    except NoEvidence:
        body = {
            "diagnosis": "CN",
            "confidence": "Low",
            "justification": {
                "clinical_reasoning": "No cognitive, biomarker, or imaging "
                                      "indicator is available; no impairment "
                                      "was demonstrated.",
                "evidence_summary": {
                    "supporting_evidence": ["No diagnostic indicator present"],
                    "contradicting_evidence": [],
                },
                "conflict_resolution": "None",
                "diagnostic_criteria": "None evaluable",
            },
            "recommendations": ["Obtain cognitive testing before staging."],
        }
        return json.dumps(body, indent=1)

    supporting = []
    contradicting = list(decision.conflicts)
    for vote in decision.votes:
        if vote.tier is Tier.RISK_FACTOR:
            supporting.append(vote.detail)
        elif vote.label is None or vote.label is decision.label:
            supporting.append(vote.detail)
        else:
            contradicting.append(vote.detail)
    body = {
        "diagnosis": decision.label.value,
        "confidence": decision.confidence.value,
        "justification": {
            "clinical_reasoning": decision.rationale or
                                  f"Indicators align on {decision.label.value}.",
            "evidence_summary": {
                "supporting_evidence": supporting or ["No indicator available"],
                "contradicting_evidence": contradicting,
            },
            "conflict_resolution": "; ".join(decision.conflicts) or "None",
            "diagnostic_criteria": "Cognitive banding per the staged framework",
        },
        "recommendations": (
            ["Clinical follow-up recommended to confirm the staged impression."]
            if decision.label.value != "CN" else []
        ),
    }
    return json.dumps(body, indent=1)


def _chat_reply(messages: Sequence[Message]) -> str:
    prompt = messages[-1][1]
    question = ""
    for role, text in reversed(messages[:-1]):
        if role == "user":
            question = text
            break
    record, outcomes = _rebuild_context(prompt)
    try:
        decision = stage_record(record, outcomes)
        summary = (
            f"The staged impression is {decision.label.value} with "
            f"{decision.confidence.value} confidence. {decision.rationale}."
        )
    except NoEvidence:
        summary = ("No stageable evidence is on file for this case, so no "
                   "impairment was demonstrated.")
    if question:
        return f"Regarding \"{question.strip()}\": {summary}"
    return summary


def synthetic_llm(messages: Sequence[Message]) -> str:
    """Route a prompt to the plan, report, or chat responder."""
    prompt = messages[-1][1]
    if _PLANNER_MARK in prompt:
        return _plan_reply(prompt)
    if _AGGREGATOR_MARK in prompt:
        history_turns = [m for m in messages[1:-1]]
        if history_turns:
            return _chat_reply(messages)
        return _report_reply(prompt)
    return "I can plan diagnostic tool use or integrate tool outputs."


def synthetic_provider() -> FunctionProvider:
    return FunctionProvider(synthetic_llm)
