import json

import pytest

from cogstage.aggregator import (
    Aggregator,
    CrossCheck,
    InvalidEnum,
    ReportSchemaError,
    build_context,
    fallback_aggregate,
    parse_report,
    verify_outcomes,
)
from cogstage.domain import (
    ConfidenceLevel,
    PatientRecord,
    Provenance,
    StagingLabel,
)
from cogstage.jsonx import NotJson
from cogstage.llm import LlmGateway, LlmRoleConfig, MockProvider
from cogstage.prompts import guideline_checksum
from cogstage.tools import OutcomeStatus, RetryPolicy, ToolOutcome

CONFIG = LlmRoleConfig(role="aggregator", provider_id="mock", model_name="m")


def ok_outcome(tool, payload):
    return ToolOutcome(tool=tool, status=OutcomeStatus.OK, payload=payload)


def report_json(diagnosis="MCI", confidence="Medium", **overrides):
    body = {
        "diagnosis": diagnosis,
        "confidence": confidence,
        "justification": {
            "clinical_reasoning": "Scores band as MCI.",
            "evidence_summary": {
                "supporting_evidence": ["MMSE 24 in the MCI band"],
                "contradicting_evidence": [],
            },
            "conflict_resolution": "None",
            "diagnostic_criteria": "Cognitive banding",
        },
        "recommendations": ["Follow-up in 6 months"],
    }
    body.update(overrides)
    return json.dumps(body)


class TestVerifyOutcomes:
    def test_consistent_hippocampus_passes(self):
        outcome = ok_outcome("hippocampus_analyzer",
                             {"left": 3100.0, "right": 3000.0, "total": 6100.0})
        verified, flags = verify_outcomes([outcome])
        assert verified[0].status is OutcomeStatus.OK
        assert flags == []

    def test_nonpositive_volume_downgraded(self):
        outcome = ok_outcome("grey_matter_analyzer", {"total_gm": 0.0})
        verified, flags = verify_outcomes([outcome])
        assert verified[0].status is OutcomeStatus.FAILED
        assert any("non-positive" in f for f in flags)

    def test_brain_exceeding_icv_flagged(self):
        outcome = ok_outcome("brain_volume_analyzer",
                             {"total_brain": 1500.0, "icv": 1400.0})
        verified, flags = verify_outcomes([outcome])
        assert verified[0].status is OutcomeStatus.FAILED
        assert any("intracranial" in f for f in flags)

    def test_halves_must_sum(self):
        outcome = ok_outcome("hippocampus_analyzer",
                             {"left": 3100.0, "right": 3000.0, "total": 9000.0})
        verified, _ = verify_outcomes([outcome])
        assert verified[0].status is OutcomeStatus.FAILED

    def test_idempotent_and_never_upgrades(self):
        failed = ToolOutcome(tool="phs_calculator", status=OutcomeStatus.FAILED,
                             diagnostics="x")
        once, flags1 = verify_outcomes([failed])
        twice, flags2 = verify_outcomes(once)
        assert once == twice
        assert once[0].status is OutcomeStatus.FAILED

    def test_percentile_out_of_range(self):
        outcome = ok_outcome("phs_calculator", {"raw_phs": 1.0, "percentile": 140.0})
        verified, flags = verify_outcomes([outcome])
        assert verified[0].status is OutcomeStatus.FAILED


class TestParseReport:
    def test_happy_path(self):
        report, flags = parse_report(report_json())
        assert report.diagnosis is StagingLabel.MCI
        assert report.confidence is ConfidenceLevel.MEDIUM
        assert report.provenance is Provenance.LLM
        assert report.guideline_checksum == guideline_checksum()
        assert flags == []

    def test_nc_alias_normalized_with_flag(self):
        report, flags = parse_report(report_json(diagnosis="NC"))
        assert report.diagnosis is StagingLabel.CN
        assert flags and "NC" in flags[0]

    def test_missing_conflict_resolution(self):
        body = json.loads(report_json())
        del body["justification"]["conflict_resolution"]
        with pytest.raises(ReportSchemaError) as excinfo:
            parse_report(json.dumps(body))
        assert excinfo.value.path == "justification.conflict_resolution"

    def test_invalid_confidence_enum(self):
        with pytest.raises(InvalidEnum):
            parse_report(report_json(confidence="Certain"))

    def test_invalid_diagnosis_enum(self):
        with pytest.raises(InvalidEnum):
            parse_report(report_json(diagnosis="dementia"))

    def test_not_json(self):
        with pytest.raises(NotJson):
            parse_report("I believe the patient is fine.")

    def test_recommendations_optional(self):
        body = json.loads(report_json())
        del body["recommendations"]
        report, _ = parse_report(json.dumps(body))
        assert report.recommendations == ()


def make_aggregator(script):
    gateway = LlmGateway({"mock": MockProvider(script)})
    return Aggregator(gateway, CONFIG)


class TestAggregate:
    def test_llm_report_accepted(self):
        record = PatientRecord(case_id="x", mmse=24)
        context = build_context(record, [])
        aggregator = make_aggregator([("Integrate", report_json(), None)])
        report, check = aggregator.aggregate(context)
        assert report.provenance is Provenance.LLM
        assert check.agree  # mmse 24 -> MCI, matches the scripted reply

    def test_three_bad_replies_fall_back(self):
        events = []
        record = PatientRecord(case_id="x", cdr=1.0, mmse=18, faq=20)
        context = build_context(record, [])
        aggregator = make_aggregator([
            ("Integrate", "not json", None),
            ("Integrate", "still not json", None),
            ("Integrate", "nope", None),
        ])
        report, check = aggregator.aggregate(
            context, policy=RetryPolicy(max_attempts=3),
            on_event=lambda kind, detail: events.append(kind),
        )
        assert events == ["retry", "retry", "fallback"]
        assert report.provenance is Provenance.GUIDELINE_FALLBACK
        assert report.diagnosis is StagingLabel.AD
        assert report.confidence is ConfidenceLevel.HIGH
        assert len(report.supporting_evidence) >= 3
        assert check.agree  # fallback came from the oracle itself

    def test_disagreement_lowers_confidence_and_discloses(self):
        record = PatientRecord(case_id="x", cdr=1.0)  # oracle: AD
        context = build_context(record, [])
        aggregator = make_aggregator([
            ("Integrate", report_json(diagnosis="CN", confidence="High"), None),
        ])
        report, check = aggregator.aggregate(context)
        assert not check.agree
        assert report.diagnosis is StagingLabel.CN  # LLM-led, never overruled
        assert report.confidence is ConfidenceLevel.MEDIUM  # one level down
        assert any("cross-check" in item for item in report.contradicting_evidence)

    def test_crosscheck_always_computed(self):
        record = PatientRecord(case_id="x", mmse=29)
        context = build_context(record, [])
        aggregator = make_aggregator([("Integrate", report_json(diagnosis="CN"), None)])
        _, check = aggregator.aggregate(context)
        assert isinstance(check, CrossCheck)
        assert check.oracle_label is StagingLabel.CN

    def test_history_cap_twenty_turns(self):
        from cogstage.domain import ChatHistory

        history = ChatHistory()
        for i in range(25):
            history.append("user", f"turn-{i}", float(i))
        record = PatientRecord(case_id="x", mmse=24)
        context = build_context(record, [], history=history)
        provider = MockProvider([("Integrate", report_json(), None)])
        aggregator = Aggregator(LlmGateway({"mock": provider}), CONFIG)
        aggregator.aggregate(context)
        sent = provider.calls[0]
        history_texts = [text for role, text in sent if text.startswith("turn-")]
        assert len(history_texts) == 20
        assert history_texts[0] == "turn-5"


class TestFallbackAggregate:
    def test_strong_ad_case(self):
        record = PatientRecord(case_id="x", cdr=1.0, mmse=18, faq=20)
        report = fallback_aggregate(build_context(record, []))
        assert report.diagnosis is StagingLabel.AD
        assert report.confidence is ConfidenceLevel.HIGH
        assert len(report.supporting_evidence) >= 3
        assert report.provenance is Provenance.GUIDELINE_FALLBACK

    def test_apoe_only_low_with_risk_note(self):
        record = PatientRecord(case_id="x", apoe_genotype="3/4")
        report = fallback_aggregate(build_context(record, []))
        assert report.confidence is ConfidenceLevel.LOW
        assert "risk" in report.clinical_reasoning.lower()

    def test_empty_context_insufficient_evidence(self):
        record = PatientRecord(case_id="x")
        report = fallback_aggregate(build_context(record, []))
        assert report.confidence is ConfidenceLevel.LOW
        assert "insufficient evidence" in report.clinical_reasoning.lower()
        assert report.supporting_evidence  # invariant for fallback reports

    def test_atrophy_outcome_feeds_decision(self):
        record = PatientRecord(case_id="x", mmse=28)
        outcome = ok_outcome("hippocampus_analyzer",
                             {"left": 2900.0, "right": 2900.0, "total": 5800.0})
        report = fallback_aggregate(build_context(record, [outcome]))
        assert report.diagnosis is StagingLabel.MCI  # CN scores + atrophy support
        assert report.confidence is ConfidenceLevel.MEDIUM


class TestCostBudget:
    def test_cost_cap_stops_retries_early(self):
        from decimal import Decimal
        from cogstage.llm import CompletionUsage

        # Every call costs $0.01; the cap allows only the first attempt.
        provider = MockProvider([("Integrate", "junk", CompletionUsage(10000, 0))
                                 for _ in range(5)])
        gateway = LlmGateway({"mock": provider})
        gateway.pricing.set("mock", "m", "0.000001", "0")
        aggregator = Aggregator(gateway, CONFIG)
        record = PatientRecord(case_id="budget", mmse=24)
        context = build_context(record, [])
        events = []
        report, _ = aggregator.aggregate(
            context, policy=RetryPolicy(max_attempts=5, cost_budget_usd=0.005),
            case_id="budget",
            on_event=lambda kind, detail: events.append(kind),
        )
        assert report.provenance is Provenance.GUIDELINE_FALLBACK
        assert len(provider.calls) == 1  # budget reached after the first call
        assert events == ["fallback"]
