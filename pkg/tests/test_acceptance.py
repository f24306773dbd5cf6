"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Runs entirely offline: scripted/synthetic mock LLM, fixture tool backends.
A terminal-summary hook in conftest prints one PASS/FAIL line per
criterion.
"""

import inspect
import json
import random
from decimal import Decimal

import numpy as np
import pytest

from cogstage.domain import PatientRecord, Provenance, StagingLabel
from cogstage.evaluate import (
    bootstrap_ci,
    compute_metrics,
    cost_effectiveness,
    dispersion_from_values,
    improvement_ratio,
    pareto_frontier,
    speedup,
)
from cogstage.evaluate.metrics import LabeledPrediction
from cogstage.guidelines import band_indicator, stage_record
from cogstage.llm import LlmGateway, MockProvider
from cogstage.nifti import build_nifti_header_bytes, parse_nifti_header, validate_preprocessed_mri
from cogstage.service import Engine, EngineConfig, SessionStatus
from cogstage.tools import OutcomeStatus, ToolOutcome, compute_phs
from cogstage.tools.phs import PhsModel, load_phs_model
from cogstage.vcf import infer_apoe_genotype, parse_vcf_genotypes

from test_costs import FIXTURE, N_CASES
from test_costs import load_cost_rows_csv
from test_metrics import brute_force_metrics

CN, MCI, AD = StagingLabel.CN, StagingLabel.MCI, StagingLabel.AD


def preds(pairs):
    return [LabeledPrediction(str(i), t, p) for i, (t, p) in enumerate(pairs)]


def test_c01_cost_table_arithmetic():
    """Cost-table arithmetic: avg x 5195 within $0.02 and ratio within 0.02, all 8 rows."""
    rows = load_cost_rows_csv(FIXTURE)
    assert len(rows) == 8
    report = cost_effectiveness(rows, N_CASES)
    assert report.inconsistencies == (), report.inconsistencies
    by_model = {r.model: r for r in rows}
    gemini = by_model["Gemini-2.5-flash-lite"]
    assert abs(gemini.avg_cost_per_case * 5195 - Decimal("2.77")) <= Decimal("0.02")
    gpt4o = by_model["GPT-4o"]
    assert gpt4o.delta_accuracy == pytest.approx(10.66, abs=1e-9)
    assert gpt4o.computed_ratio() == pytest.approx(15.29, abs=0.02)


# (unaided, assisted, published improvement ratio) per group and metric.
READER_PERFORMANCE = {
    "Junior Neurologist": {
        "accuracy": (0.6879, 0.7885, 14.63), "f1": (0.6435, 0.7648, 18.85),
        "sensitivity": (0.6535, 0.7657, 17.16), "specificity": (0.8450, 0.8929, 5.66),
    },
    "Senior Neurologist": {
        "accuracy": (0.7687, 0.8299, 7.96), "f1": (0.7365, 0.8081, 9.72),
        "sensitivity": (0.7488, 0.8117, 8.40), "specificity": (0.8866, 0.9158, 3.28),
    },
    "Junior Radiologist": {
        "accuracy": (0.6889, 0.7998, 16.10), "f1": (0.6476, 0.7802, 20.47),
        "sensitivity": (0.6574, 0.7836, 19.20), "specificity": (0.8478, 0.9022, 6.41),
    },
    "Intermediate Radiologist": {
        "accuracy": (0.7095, 0.8089, 14.01), "f1": (0.7035, 0.7879, 11.99),
        "sensitivity": (0.7077, 0.7938, 12.16), "specificity": (0.8600, 0.9073, 5.50),
    },
    "Senior Radiologist": {
        "accuracy": (0.7566, 0.8491, 12.22), "f1": (0.7362, 0.8303, 12.79),
        "sensitivity": (0.7440, 0.8326, 11.91), "specificity": (0.8825, 0.9264, 4.98),
    },
}

# (unaided, assisted, published speedup) on medians and means per group.
READER_TIMES = {
    "Junior Neurologist": {"median": (66.49, 19.79, 3.3598), "mean": (107.56, 28.56, 3.7667)},
    "Senior Neurologist": {"median": (66.04, 13.07, 5.0534), "mean": (102.50, 21.93, 4.6745)},
    "Junior Radiologist": {"median": (58.71, 30.30, 1.9377), "mean": (87.58, 50.46, 1.7358)},
    "Intermediate Radiologist": {"median": (20.57, 17.84, 1.1529), "mean": (43.59, 32.43, 1.3442)},
    "Senior Radiologist": {"median": (82.64, 41.42, 1.9954), "mean": (100.72, 49.23, 2.0460)},
    "Overall": {"median": (59.13, 23.35, 2.5324), "mean": (88.39, 36.52, 2.4204)},
}


def test_c02_reader_study_arithmetic():
    """Reader-study arithmetic: 5 groups x 4 improvement ratios within 0.02; speedups within 1e-3."""
    for group, metrics in READER_PERFORMANCE.items():
        for metric, (unaided, assisted, published) in metrics.items():
            computed = improvement_ratio(unaided, assisted)
            assert computed == pytest.approx(published, abs=0.02), (
                f"{group} {metric}: computed {computed:.4f}, published {published}"
            )
    for group, rows in READER_TIMES.items():
        for kind, (unaided, assisted, published) in rows.items():
            computed = speedup(unaided, assisted)
            assert computed == pytest.approx(published, abs=1e-3), (
                f"{group} {kind}: computed {computed:.5f}, published {published}"
            )


def test_c03_pareto_frontier_excludes_dominated_backbone():
    """Pareto frontier: the (35.18, 78.90) backbone is excluded as dominated."""
    # The four named (cost, accuracy) points: exactly one exclusion.
    four = [(2.77, 78.73), (35.18, 78.90), (25.63, 79.94), (70.32, 80.40)]
    frontier = pareto_frontier(four)
    assert frontier == [(2.77, 78.73), (25.63, 79.94), (70.32, 80.40)]
    assert set(four) - set(frontier) == {(35.18, 78.90)}

    # Over the full eight-row table the same point is excluded; note that
    # (54.68, 79.88) is also dominated there, by (25.63, 79.94), which is
    # strictly cheaper and more accurate.
    rows = load_cost_rows_csv(FIXTURE)
    points = [(float(r.overall_cost), r.accuracy) for r in rows]
    full = pareto_frontier(points)
    assert (35.18, 78.90) not in full
    excluded = set(points) - set(full)
    assert excluded == {(35.18, 78.90), (54.68, 79.88)}


def test_c04_metric_oracle_equivalence():
    """compute_metrics equals the brute-force confusion oracle exactly, 1000 cohorts."""
    rng = random.Random(20240202)
    labels = [CN, MCI, AD]
    two_class_seen = False
    for trial in range(1000):
        classes = labels if rng.random() < 0.5 else rng.sample(labels, 2)
        if len(classes) == 2:
            two_class_seen = True
        n = rng.randint(1, 50)
        pairs = [(rng.choice(classes), rng.choice(classes)) for _ in range(n)]
        class_set = [c for c in labels
                     if c in {t for t, _ in pairs} | {p for _, p in pairs}]
        oracle = brute_force_metrics(pairs, class_set)
        metrics = compute_metrics(preds(pairs))
        assert metrics.micro_accuracy == oracle["micro"]
        assert metrics.macro_f1 == oracle["macro_f1"]
        assert metrics.macro_sensitivity == oracle["macro_sens"]
        assert metrics.macro_specificity == oracle["macro_spec"]
    assert two_class_seen
    # The two-class cohort style explicitly: CN/AD only.
    pairs = [(CN, CN)] * 70 + [(CN, AD)] * 2 + [(AD, AD)] * 10 + [(AD, CN)] * 2
    oracle = brute_force_metrics(pairs, [CN, AD])
    assert compute_metrics(preds(pairs)).macro_f1 == oracle["macro_f1"]


def test_c05_bootstrap_properties():
    """Bootstrap: default 2000; all-correct -> (1,1); seeded determinism; point in CI, 200 seeds."""
    assert inspect.signature(bootstrap_ci).parameters["n_resamples"].default == 2000

    all_correct = preds([(MCI, MCI)] * 20)
    assert bootstrap_ci(all_correct, "micro_accuracy", seed=3) == (1.0, 1.0)

    sample = preds([(CN, CN)] * 40 + [(CN, MCI)] * 10)  # n=50, accuracy 0.8
    point = compute_metrics(sample).micro_accuracy
    assert point == pytest.approx(0.8)
    assert bootstrap_ci(sample, "micro_accuracy", seed=11) == \
           bootstrap_ci(sample, "micro_accuracy", seed=11)

    inside = 0
    for seed in range(200):
        low, high = bootstrap_ci(sample, "micro_accuracy", seed=seed)
        assert low <= high
        if low <= point <= high:
            inside += 1
    assert inside == 200


GUIDELINE_BOUNDARIES = [
    ("cdr", 0.0, CN), ("cdr", 0.5, MCI), ("cdr", 1.0, AD),
    ("mmse", 19, AD), ("mmse", 20, MCI), ("mmse", 26, MCI), ("mmse", 27, CN),
    ("moca", 17, AD), ("moca", 18, MCI), ("moca", 25, MCI), ("moca", 26, CN),
    ("adas11", 9.9, CN), ("adas11", 10, MCI), ("adas11", 20, MCI), ("adas11", 20.1, AD),
    ("adas13", 14.9, CN), ("adas13", 15, MCI), ("adas13", 30, MCI), ("adas13", 30.1, AD),
    ("faq", 5, CN), ("faq", 6, MCI), ("faq", 15, MCI), ("faq", 16, AD),
]


def _hippocampus(total):
    return ToolOutcome(tool="hippocampus_analyzer", status=OutcomeStatus.OK,
                       payload={"left": total / 2, "right": total / 2, "total": total})


def test_c06_guideline_band_suite():
    """Guideline oracle: every band boundary maps to its label; dominance + monotonicity hold."""
    for indicator, value, expected in GUIDELINE_BOUNDARIES:
        assert band_indicator(indicator, value).label is expected, (indicator, value)

    # Hippocampal atrophy boundary: 5999 mm^3 supports impairment, 6000 does not.
    base = PatientRecord(case_id="hb", mmse=29)
    assert stage_record(base, [_hippocampus(5999.0)]).label is MCI
    assert stage_record(base, [_hippocampus(6000.0)]).label is CN

    # CDR dominance across the full grid.
    for cdr in (0.0, 0.5, 1.0, 2.0, 3.0):
        expected = band_indicator("cdr", cdr).label
        for mmse in range(0, 31):
            record = PatientRecord(case_id="g", cdr=cdr, mmse=mmse)
            assert stage_record(record).label is expected

    # Monotonicity: worsening any single score never moves the label toward CN.
    grid = {"cdr": [0.0, 0.5, 1.0, 2.0, 3.0],
            "mmse": list(range(0, 31)), "moca": list(range(0, 31)),
            "faq": list(range(0, 31))}

    def worse_values(name, value):
        if name in ("cdr", "faq"):
            return [v for v in grid[name] if v > value]
        return [v for v in grid[name] if v < value]

    rng = random.Random(606)
    for _ in range(500):
        chosen = rng.sample(list(grid), k=rng.randint(1, 3))
        fields = {n: rng.choice(grid[n]) for n in chosen}
        before = stage_record(PatientRecord(case_id="m", **fields)).label
        name = rng.choice(chosen)
        options = worse_values(name, fields[name])
        if not options:
            continue
        fields[name] = rng.choice(options)
        after = stage_record(PatientRecord(case_id="m", **fields)).label
        assert after.impairment_rank >= before.impairment_rank, fields


def test_c07_end_to_end_pipeline(tmp_path, full_record):
    """End-to-end: fixture case reaches done with gapless events; junk LLM triggers exactly max_attempts then fallback."""
    engine = Engine(EngineConfig(data_dir=str(tmp_path / "ok")))
    session_id = engine.create_case_session(full_record)
    status = engine.advance_pipeline(session_id)
    assert status is SessionStatus.DONE

    session = engine.store.load(session_id)
    assert session.report is not None
    round_tripped = json.loads(engine.export_report(session_id, "json"))
    from cogstage.domain import DiagnosisReport
    assert DiagnosisReport.from_json_dict(round_tripped) == session.report

    events = engine.store.events(session_id)
    assert [e.sequence for e in events] == list(range(1, len(events) + 1))
    assert len([e for e in events if e.kind == "tool_ok"]) == 5

    # Scripted mock: valid plan, then invalid JSON three times -> fallback.
    plan_json = json.dumps({"analysis": "a", "tool_calls": [], "reasoning": "r"})
    provider = MockProvider(
        [("create a diagnostic plan", plan_json, None)]
        + [("Integrate", "NOT JSON", None)] * 3
    )
    gateway = LlmGateway({"mock": provider})
    engine2 = Engine(EngineConfig(data_dir=str(tmp_path / "junk")), gateway=gateway)
    sid = engine2.create_case_session(full_record)
    assert engine2.advance_pipeline(sid) is SessionStatus.DONE
    report = engine2.store.load(sid).report
    assert report.provenance is Provenance.GUIDELINE_FALLBACK
    aggregator_calls = [
        c for c in provider.calls if "Integrate" in "\n".join(t for _, t in c)
    ]
    assert len(aggregator_calls) == 3  # exactly max_attempts
    agg_events = [e.kind for e in engine2.store.events(sid) if e.stage == "aggregating"]
    assert agg_events.count("retry") == 2 and agg_events.count("fallback") == 1


def test_c08_parsers(vcf_text):
    """Parsers: MNI dims, 2D/4D rejection, GT dosages, APOE haplotype table."""
    header = parse_nifti_header(build_nifti_header_bytes((182, 218, 182)))
    assert header.spatial_dims == (182, 218, 182)
    assert validate_preprocessed_mri(header).ok

    two_d = parse_nifti_header(build_nifti_header_bytes((256, 256, 1)))
    assert any("2D scan" in v for v in validate_preprocessed_mri(two_d).violations)
    four_d = parse_nifti_header(build_nifti_header_bytes((182, 218, 182, 40)))
    assert any("4D" in v for v in validate_preprocessed_mri(four_d).violations)

    for gt, expected in (("0/0", 0), ("0/1", 1), ("1|1", 2), ("./.", None)):
        text = ("##fileformat=VCFv4.2\n"
                "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS\n"
                f"1\t1\trsX\tA\tG\t.\t.\t.\tGT\t{gt}\n")
        call = parse_vcf_genotypes(text, {"rsX"})["rsX"]
        assert call.dosage == expected
        assert call.phased is ("|" in gt)

    from cogstage.vcf import GenotypeCall

    def call_for(rsid, dosage, ref, alt):
        return GenotypeCall(rsid=rsid, chrom="19", pos=1, ref_allele=ref,
                            alt_allele=alt, dosage=dosage, phased=False)

    table = {(0, 0): "3/3", (0, 1): "2/3", (0, 2): "2/2",
             (1, 0): "3/4", (2, 0): "4/4"}
    for (d1, d2), expected in table.items():
        genotype, ambiguous = infer_apoe_genotype(
            call_for("rs429358", d1, "T", "C"), call_for("rs7412", d2, "C", "T")
        )
        assert (genotype, ambiguous) == (expected, False)
    genotype, ambiguous = infer_apoe_genotype(
        call_for("rs429358", 1, "T", "C"), call_for("rs7412", 1, "C", "T")
    )
    assert (genotype, ambiguous) == ("2/4", True)


def test_c09_phs_properties():
    """PHS: linearity, zero score, percentile monotonicity, HR=1 baseline, 0.8 fixture."""
    model = PhsModel(
        variants=(("rsA", 0.5), ("rsB", -0.2)),
        mu=0.0,
        reference_scores=(-0.5, 0.0, 0.4, 0.8, 1.0),
        baseline_survival=((70.0, 0.98), (80.0, 0.92)),
    )
    assert compute_phs({"rsA": 0, "rsB": 0}, model).raw_phs == 0.0
    assert compute_phs({"rsA": 2, "rsB": 1}, model).raw_phs == pytest.approx(0.8, abs=0)

    half = compute_phs({"rsA": 1, "rsB": 1}, model).raw_phs
    double = compute_phs({"rsA": 2, "rsB": 2}, model).raw_phs
    assert double == pytest.approx(2 * half)

    bundled = load_phs_model()
    reference = np.asarray(bundled.reference_scores)
    grid = np.linspace(reference.min() - 0.2, reference.max() + 0.2, 31)
    percentiles = [100.0 * np.count_nonzero(reference <= s) / reference.size
                   for s in grid]
    assert percentiles == sorted(percentiles)

    at_mu = PhsModel(variants=(("rsA", 0.5),), mu=1.0,
                     reference_scores=(0.0, 1.0, 2.0),
                     baseline_survival=((70.0, 0.98), (80.0, 0.92)))
    result = compute_phs({"rsA": 2}, at_mu, age=70.0)
    assert result.risk_curve[0].risk == pytest.approx(1 - 0.98)
    assert result.risk_curve[-1].risk == pytest.approx(1 - 0.92)


def test_c10_fairness_dispersion():
    """Fairness dispersion: gap 0.2 and population std 0.08165 for {0.8,0.9,1.0}; zeros for equal."""
    std, gap = dispersion_from_values([0.8, 0.9, 1.0])
    assert gap == pytest.approx(0.2)
    assert std == pytest.approx(0.08165, abs=1e-4)
    std, gap = dispersion_from_values([0.75, 0.75, 0.75, 0.75])
    assert std == 0.0 and gap == 0.0
