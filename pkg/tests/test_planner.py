import json

import pytest

from cogstage.domain import Intent, PatientRecord
from cogstage.jsonx import NotJson, extract_json_object
from cogstage.llm import CompletionUsage, LlmGateway, LlmRoleConfig, MockProvider
from cogstage.planner import (
    DiagnosticPlan,
    Planner,
    fallback_plan,
    observe,
    parse_future_years,
    validate_plan,
)
from cogstage.tools import RetryPolicy, default_registry

CONFIG = LlmRoleConfig(role="reasoning_engine", provider_id="mock", model_name="m")


def make_planner(script):
    gateway = LlmGateway({"mock": MockProvider(script)})
    return Planner(gateway, CONFIG, default_registry())


FULL_PLAN_JSON = json.dumps({
    "analysis": "All modalities available.",
    "tool_calls": [
        {"tool": "brain_volume_analyzer", "parameters": {"image_path": "scan.nii"}},
        {"tool": "hippocampus_analyzer", "parameters": {"image_path": "scan.nii"}},
        {"tool": "grey_matter_analyzer", "parameters": {"image_path": "scan.nii"}},
        {"tool": "white_matter_analyzer", "parameters": {"image_path": "scan.nii"}},
        {"tool": "phs_calculator", "parameters": {"apoe": "3/4", "age": 70}},
    ],
    "reasoning": "Imaging plus genetics.",
})


class TestObserve:
    def test_default_intent_no_files(self):
        record = PatientRecord(case_id="x", mmse=25, cdr=0.5)
        bundle = observe("", record)
        assert bundle.intent is Intent.DIAGNOSE
        assert bundle.image_payload == ()
        assert set(bundle.text_payload) == {"mmse", "cdr"}

    def test_progression_keywords(self, mni_scan):
        record = PatientRecord(case_id="x", age=70, mri_ref=mni_scan)
        bundle = observe("predict her MRI in 5 years", record)
        assert bundle.intent is Intent.PREDICT_PROGRESSION
        assert bundle.image_payload == (mni_scan,)

    def test_vcf_marker_not_a_file_ref(self, vcf_file):
        record = PatientRecord(case_id="x", vcf_ref=vcf_file)
        bundle = observe("", record)
        assert bundle.image_payload == ()
        assert bundle.text_payload.get("vcf_available") is True
        assert vcf_file not in bundle.text_payload.values()

    def test_future_years_parsing(self):
        assert parse_future_years("predict in 5 years") == 5.0
        assert parse_future_years("in 2.5 years please") == 2.5
        assert parse_future_years("sometime ahead") == 5.0


class TestFallbackPlan:
    def test_full_modality_order(self, mni_scan):
        record = PatientRecord(case_id="x", age=70, apoe_genotype="3/4",
                               mri_ref=mni_scan)
        plan = fallback_plan(observe("", record))
        assert [tool for tool, _ in plan.tool_calls] == [
            "brain_volume_analyzer", "hippocampus_analyzer",
            "grey_matter_analyzer", "white_matter_analyzer", "phs_calculator",
        ]
        phs_params = dict(plan.tool_calls[-1][1])
        assert phs_params == {"apoe": "3/4", "age": 70}

    def test_cognitive_only_empty_plan(self):
        record = PatientRecord(case_id="x", mmse=22, moca=20)
        plan = fallback_plan(observe("", record))
        assert plan.tool_calls == ()

    def test_progression_adds_predictor(self, mni_scan):
        record = PatientRecord(case_id="x", age=70, mri_ref=mni_scan)
        plan = fallback_plan(observe("predict progression in 5 years", record))
        tool, params = plan.tool_calls[-1]
        assert tool == "mri_predictor"
        assert params == {"image_path": mni_scan, "age": 70, "future_years": 5.0}

    def test_pure_and_stable(self, mni_scan):
        record = PatientRecord(case_id="x", age=70, vcf_ref="g.vcf", mri_ref=mni_scan)
        bundle = observe("", record)
        assert fallback_plan(bundle) == fallback_plan(bundle)


class TestValidatePlan:
    def test_valid_plan_resolves_in_order(self):
        plan = DiagnosticPlan.from_json_dict(json.loads(FULL_PLAN_JSON))
        report = validate_plan(plan, default_registry())
        assert report.ok
        assert [a.tool for a in report.resolved_actions] == [
            t for t, _ in plan.tool_calls
        ]

    def test_unknown_tool_flagged(self):
        plan = DiagnosticPlan(
            analysis="", reasoning="",
            tool_calls=(("pet_analyzer", {"image_path": "x"}),),
        )
        report = validate_plan(plan, default_registry())
        assert not report.resolved_actions
        assert "unknown tool" in report.violations[0][1]

    def test_duplicate_deduplicated(self):
        call = ("hippocampus_analyzer", {"image_path": "scan.nii"})
        plan = DiagnosticPlan(analysis="", reasoning="", tool_calls=(call, call))
        report = validate_plan(plan, default_registry())
        assert len(report.resolved_actions) == 1
        assert any("duplicate" in reason for _, reason in report.violations)

    def test_missing_required_input(self):
        plan = DiagnosticPlan(
            analysis="", reasoning="",
            tool_calls=(("phs_calculator", {"age": 70}),),
        )
        report = validate_plan(plan, default_registry())
        assert any("missing required input" in reason for _, reason in report.violations)

    def test_plan_schema_exact_keys(self):
        with pytest.raises(ValueError):
            DiagnosticPlan.from_json_dict({"analysis": "a", "tool_calls": []})
        with pytest.raises(ValueError):
            DiagnosticPlan.from_json_dict({
                "analysis": "a", "tool_calls": [], "reasoning": "r", "extra": 1,
            })


class TestGeneratePlan:
    def _bundle(self, mni_scan):
        record = PatientRecord(case_id="x", age=70, apoe_genotype="3/4",
                               mri_ref=mni_scan)
        return observe("", record)

    def test_happy_path(self, mni_scan):
        planner = make_planner([("diagnostic plan", FULL_PLAN_JSON, None)])
        plan, report = planner.generate_plan(self._bundle(mni_scan))
        assert plan.source == "llm"
        assert len(report.resolved_actions) == 5

    def test_retry_then_success(self, mni_scan):
        events = []
        planner = make_planner([
            ("diagnostic plan", "sorry, no JSON here", None),
            ("diagnostic plan", "still prose", None),
            ("diagnostic plan", f"Here you go:\n```json\n{FULL_PLAN_JSON}\n```", None),
        ])
        plan, report = planner.generate_plan(
            self._bundle(mni_scan),
            policy=RetryPolicy(max_attempts=3),
            on_event=lambda kind, detail: events.append(kind),
        )
        assert plan.source == "llm"
        assert events == ["retry", "retry"]
        assert len(report.resolved_actions) == 5

    def test_budget_exhausted_falls_back(self, mni_scan):
        events = []
        planner = make_planner([
            ("diagnostic plan", "junk", None),
            ("diagnostic plan", "junk", None),
            ("diagnostic plan", "junk", None),
        ])
        plan, report = planner.generate_plan(
            self._bundle(mni_scan),
            policy=RetryPolicy(max_attempts=3),
            on_event=lambda kind, detail: events.append(kind),
        )
        assert plan.source == "fallback"
        assert events == ["retry", "retry", "fallback"]
        assert len(report.resolved_actions) == 5  # rule table still plans tools

    def test_unknown_tool_plan_retries_into_fallback(self, mni_scan):
        bad = json.dumps({"analysis": "", "reasoning": "",
                          "tool_calls": [{"tool": "pet_analyzer", "parameters": {}}]})
        planner = make_planner([
            ("diagnostic plan", bad, None),
            ("diagnostic plan", bad, None),
        ])
        plan, report = planner.generate_plan(
            self._bundle(mni_scan), policy=RetryPolicy(max_attempts=2),
        )
        assert plan.source == "fallback"

    def test_attempts_bounded(self, mni_scan):
        provider = MockProvider([("diagnostic plan", "junk", CompletionUsage(1, 1))
                                 for _ in range(10)])
        gateway = LlmGateway({"mock": provider})
        planner = Planner(gateway, CONFIG, default_registry())
        planner.generate_plan(self._bundle(mni_scan), policy=RetryPolicy(max_attempts=3))
        assert len(provider.calls) == 3


class TestJsonExtraction:
    def test_largest_balanced_object(self):
        text = 'noise {"small": 1} and {"big": {"nested": [1, 2, 3]}} tail'
        assert extract_json_object(text) == {"big": {"nested": [1, 2, 3]}}

    def test_fenced_json(self):
        text = "```json\n{\"a\": 1}\n```"
        assert extract_json_object(text) == {"a": 1}

    def test_braces_inside_strings(self):
        text = '{"a": "curly } inside", "b": 2}'
        assert extract_json_object(text) == {"a": "curly } inside", "b": 2}

    def test_no_json_raises(self):
        with pytest.raises(NotJson):
            extract_json_object("nothing here")
