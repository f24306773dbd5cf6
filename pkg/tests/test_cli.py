import csv
import json
import os

import pytest
from click.testing import CliRunner

from cogstage.cli import main
from cogstage.domain import StagingLabel

COST_FIXTURE = os.path.join(os.path.dirname(__file__), "data", "backbone_costs.csv")


@pytest.fixture
def runner():
    return CliRunner()


def write_predictions(path, n_correct=8, n_wrong=2):
    with open(path, "w") as fh:
        races = ["Asian", "Black", "White"]
        for i in range(n_correct):
            fh.write(json.dumps({
                "case_id": f"c{i}", "truth": "MCI", "predicted": "MCI",
                "race": races[i % 3], "age": 60 + 4 * i,
            }) + "\n")
        for i in range(n_wrong):
            fh.write(json.dumps({
                "case_id": f"w{i}", "truth": "AD", "predicted": "CN",
                "race": races[i % 3], "age": 88,
            }) + "\n")


def write_reader_csv(path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "reader_id", "seniority", "specialty", "case_id", "truth",
            "unaided_label", "unaided_seconds", "assisted_label", "assisted_seconds",
        ])
        labels = ["CN", "MCI", "AD", "CN", "MCI"]
        for i, truth in enumerate(labels):
            unaided = truth if i % 2 == 0 else "CN"
            writer.writerow(["r1", "junior", "neurologist", f"c{i}", truth,
                             unaided, 60 + i, truth, 20 + i])
        for i, truth in enumerate(labels):
            writer.writerow(["r2", "senior", "radiologist", f"c{i}", truth,
                             truth, 45 + 2 * i, truth, 22 + i])


class TestRunCommand:
    def test_full_case(self, runner, tmp_path, full_record):
        case_path = tmp_path / "case.json"
        case_path.write_text(json.dumps(full_record.to_json_dict()))
        out_dir = tmp_path / "out"
        result = runner.invoke(main, [
            "run", "--case", str(case_path),
            "--data-dir", str(tmp_path / "data"),
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        assert "done" in result.output
        report = json.loads((out_dir / "report.json").read_text())
        assert report["diagnosis"] in [l.value for l in StagingLabel]
        assert (out_dir / "report.md").read_text().count("## ") == 10

    def test_uploads_via_flags(self, runner, tmp_path, text_only_record,
                               mni_header_bytes, vcf_text):
        case_path = tmp_path / "case.json"
        case_path.write_text(json.dumps(text_only_record.to_json_dict()))
        mri = tmp_path / "scan.nii"
        mri.write_bytes(mni_header_bytes)
        vcf = tmp_path / "geno.vcf"
        vcf.write_text(vcf_text)
        result = runner.invoke(main, [
            "run", "--case", str(case_path), "--mri", str(mri), "--vcf", str(vcf),
            "--data-dir", str(tmp_path / "data"),
        ])
        assert result.exit_code == 0, result.output

    def test_invalid_record_exits_2(self, runner, tmp_path):
        case_path = tmp_path / "case.json"
        case_path.write_text(json.dumps({"case_id": "x", "mmse": 99}))
        result = runner.invoke(main, [
            "run", "--case", str(case_path), "--data-dir", str(tmp_path / "d"),
        ])
        assert result.exit_code == 2
        assert "mmse" in result.output


class TestEvalCommand:
    def test_metrics_json_and_csv(self, runner, tmp_path):
        cohort = tmp_path / "cohort.jsonl"
        write_predictions(str(cohort))
        out = tmp_path / "metrics.json"
        result = runner.invoke(main, [
            "eval", "--cohort", str(cohort), "--out", str(out),
            "--bootstrap", "100", "--seed", "7",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["micro_accuracy"] == pytest.approx(0.8)
        assert payload["bootstrap"] == {"n_resamples": 100, "seed": 7}
        assert set(payload["ci"]) == {
            "micro_accuracy", "macro_f1", "macro_sensitivity", "macro_specificity",
        }
        assert (tmp_path / "metrics.csv").exists()


class TestFairnessCommand:
    def test_outputs_json_csv_png(self, runner, tmp_path):
        cohort = tmp_path / "preds.jsonl"
        write_predictions(str(cohort), n_correct=9, n_wrong=3)
        out_dir = tmp_path / "fair"
        result = runner.invoke(main, [
            "fairness", "--predictions", str(cohort), "--by", "race",
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        reports = json.loads((out_dir / "fairness_race.json").read_text())
        assert {r["metric"] for r in reports} == {
            "micro_accuracy", "macro_f1", "macro_sensitivity", "macro_specificity",
        }
        assert (out_dir / "fairness_race.csv").exists()
        assert (out_dir / "fairness_race.png").stat().st_size > 0


class TestReaderStudyCommand:
    def test_outputs(self, runner, tmp_path):
        records = tmp_path / "readers.csv"
        write_reader_csv(str(records))
        out_dir = tmp_path / "rs"
        result = runner.invoke(main, [
            "reader-study", "--records", str(records), "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        stats = json.loads((out_dir / "reader_study.json").read_text())
        assert "junior neurologist" in stats and "overall" in stats
        assert (out_dir / "reader_study.csv").exists()
        assert (out_dir / "reader_study.png").stat().st_size > 0


class TestCostCommand:
    def test_validates_and_renders(self, runner, tmp_path):
        out_dir = tmp_path / "cost"
        result = runner.invoke(main, [
            "cost", "--rows", COST_FIXTURE, "--n-cases", "5195",
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        assert "0 inconsistencies" in result.output
        report = json.loads((out_dir / "cost_report.json").read_text())
        assert len(report["rows"]) == 8
        rows = list(csv.DictReader((out_dir / "cost_accuracy.csv").open()))
        frontier = {r["model"] for r in rows if r["on_frontier"] == "yes"}
        assert "DeepSeek-V3.1" not in frontier
        assert (out_dir / "cost_accuracy.png").stat().st_size > 0
        assert (out_dir / "cost_report.md").exists()
