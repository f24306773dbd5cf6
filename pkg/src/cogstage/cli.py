"""Command-line interface.

``run`` drives one case through the pipeline; ``eval`` / ``fairness`` /
``reader-study`` / ``cost`` are the statistical report paths, each writing
JSON plus delimited output and a rendered figure side by side; ``serve``
hosts the HTTP API.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from decimal import Decimal

import click

from .domain import PatientRecord, validate_patient_record
from .evaluate import (
    METRIC_NAMES,
    bootstrap_ci,
    cost_effectiveness,
    cost_markdown_table,
    compute_metrics,
    fairness_dispersion,
    frontier_rows,
    load_cost_rows_csv,
    load_predictions_jsonl,
    load_reader_records_csv,
    reader_study_stats,
)
from .reportfmt import report_markdown
from .service import build_engine

DEFAULT_DATA_DIR = os.path.expanduser("~/.cogstage")


@click.group()
def main() -> None:
    """Cognitive staging agent and its evaluation harness."""


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True),
              help="Patient record JSON file.")
@click.option("--mri", "mri_path", type=click.Path(exists=True), default=None,
              help="NIfTI scan to attach (.nii or .nii.gz).")
@click.option("--vcf", "vcf_path", type=click.Path(exists=True), default=None,
              help="Single-sample VCF to attach (.vcf or .vcf.gz).")
@click.option("--provider", default="mock", show_default=True,
              help="LLM provider id ('mock' runs fully offline).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON role/provider config for non-mock providers.")
@click.option("--query", default="", help="Free-text request, e.g. a progression question.")
@click.option("--data-dir", default=DEFAULT_DATA_DIR, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Also write report.json/report.md here.")
def run(case_path, mri_path, vcf_path, provider, config_path, query, data_dir, out_dir):
    """Run one case through plan -> execute -> aggregate and print the report."""
    with open(case_path, "r", encoding="utf-8") as fh:
        record = PatientRecord.from_json_dict(json.load(fh))
    problems = validate_patient_record(record)
    if not problems.ok:
        for violation in problems.violations:
            click.echo(f"invalid record: {violation}", err=True)
        sys.exit(2)

    engine = build_engine(data_dir, provider=provider, config_path=config_path)
    uploads = {}
    if mri_path:
        with open(mri_path, "rb") as fh:
            uploads["mri_upload"] = (os.path.basename(mri_path), fh.read())
    if vcf_path:
        with open(vcf_path, "rb") as fh:
            uploads["vcf_upload"] = (os.path.basename(vcf_path), fh.read())

    from .service.pipeline import ValidationFailed

    try:
        session_id = engine.create_case_session(record, **uploads)
    except ValidationFailed as exc:
        for violation in exc.violations:
            click.echo(f"rejected: {violation}", err=True)
        sys.exit(2)

    status = engine.advance_pipeline(session_id, query=query)
    click.echo(f"session {session_id}: {status.value}")
    markdown = engine.export_report(session_id, "markdown").decode("utf-8")
    click.echo(markdown)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "wb") as fh:
            fh.write(engine.export_report(session_id, "json"))
        with open(os.path.join(out_dir, "report.md"), "w", encoding="utf-8") as fh:
            fh.write(markdown)
        click.echo(f"wrote {out_dir}/report.json and {out_dir}/report.md")


@main.command("eval")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True),
              help="Predictions JSONL (case_id, truth, predicted, subgroups).")
@click.option("--out", "out_path", default="metrics.json", show_default=True)
@click.option("--bootstrap", "n_resamples", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_cohort(cohort_path, out_path, n_resamples, seed):
    """Compute metrics with bootstrap CIs over a labeled prediction file."""
    predictions = load_predictions_jsonl(cohort_path)
    metrics = compute_metrics(predictions)
    cis = {
        name: bootstrap_ci(predictions, name, n_resamples=n_resamples, seed=seed)
        for name in METRIC_NAMES
    }
    payload = metrics.to_json_dict()
    payload["ci"] = {k: list(v) for k, v in cis.items()}
    payload["n_cases"] = len(predictions)
    payload["bootstrap"] = {"n_resamples": n_resamples, "seed": seed}
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)

    base = os.path.splitext(out_path)[0]
    with open(base + ".csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value", "ci_low", "ci_high"])
        for name in METRIC_NAMES:
            low, high = cis[name]
            writer.writerow([name, f"{metrics.value(name):.6f}",
                             f"{low:.6f}", f"{high:.6f}"])
        for label, cm in metrics.per_class.items():
            for stat in ("precision", "f1", "sensitivity", "specificity"):
                writer.writerow([f"{label}_{stat}", f"{getattr(cm, stat):.6f}", "", ""])
    for warning in metrics.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"wrote {out_path} and {base}.csv "
               f"(micro accuracy {metrics.micro_accuracy:.4f})")


@main.command()
@click.option("--predictions", "predictions_path", required=True,
              type=click.Path(exists=True))
@click.option("--by", "axis", type=click.Choice(["race", "age"]), required=True)
@click.option("--out-dir", default=".", show_default=True)
def fairness(predictions_path, axis, out_dir):
    """Subgroup dispersion (std and max-min gap) for the four metrics."""
    predictions = load_predictions_jsonl(predictions_path)
    axis_key = "age_bin" if axis == "age" else axis
    os.makedirs(out_dir, exist_ok=True)
    reports = [
        fairness_dispersion(predictions, axis_key, metric) for metric in METRIC_NAMES
    ]
    with open(os.path.join(out_dir, f"fairness_{axis}.json"), "w", encoding="utf-8") as fh:
        json.dump([r.to_json_dict() for r in reports], fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, f"fairness_{axis}.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "subgroup", "value", "dispersion_std", "dispersion_gap"])
        for report in reports:
            for subgroup, value in report.per_subgroup.items():
                writer.writerow([report.metric, subgroup, f"{value:.6f}",
                                 f"{report.dispersion_std:.6f}",
                                 f"{report.dispersion_gap:.6f}"])
    from .figures import save_fairness_figure

    figure_path = os.path.join(out_dir, f"fairness_{axis}.png")
    save_fairness_figure(reports, figure_path)
    click.echo(f"wrote fairness_{axis}.json/.csv/.png in {out_dir}")


@main.command("reader-study")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", default=".", show_default=True)
def reader_study(records_path, out_dir):
    """Unaided vs assisted reader statistics with speedups and paired t-tests."""
    records = load_reader_records_csv(records_path)
    stats = reader_study_stats(records)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "reader_study.json"), "w", encoding="utf-8") as fh:
        json.dump({k: v.to_json_dict() for k, v in stats.items()}, fh,
                  indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "reader_study.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "group", "n_cases",
            "accuracy_unaided", "accuracy_assisted", "accuracy_improvement_pct",
            "median_speedup", "mean_speedup", "t", "p_value", "cohens_dz",
        ])
        for key, group in stats.items():
            writer.writerow([
                key, group.n_cases,
                f"{group.unaided['micro_accuracy']:.4f}",
                f"{group.assisted['micro_accuracy']:.4f}",
                f"{group.improvement.get('micro_accuracy', float('nan')):.2f}",
                f"{group.median_speedup:.4f}",
                f"{group.mean_speedup:.4f}",
                f"{group.time_test.t:.4f}",
                f"{group.time_test.p_value:.6f}",
                "undefined" if group.time_test.cohens_dz is None
                else f"{group.time_test.cohens_dz:.4f}",
            ])
    from .figures import save_reader_study_figure

    save_reader_study_figure(stats, os.path.join(out_dir, "reader_study.png"))
    click.echo(f"wrote reader_study.json/.csv/.png in {out_dir}")


@main.command()
@click.option("--rows", "rows_path", required=True, type=click.Path(exists=True))
@click.option("--n-cases", required=True, type=int)
@click.option("--out-dir", default=".", show_default=True)
def cost(rows_path, n_cases, out_dir):
    """Validate backbone cost arithmetic and render the cost-accuracy frontier."""
    rows = load_cost_rows_csv(rows_path)
    report = cost_effectiveness(rows, n_cases)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "cost_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "cost_report.md"), "w", encoding="utf-8") as fh:
        fh.write(cost_markdown_table(report))
    frontier = frontier_rows(report.rows)
    with open(os.path.join(out_dir, "cost_accuracy.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "overall_cost_usd", "accuracy_pct", "on_frontier"])
        frontier_models = {r.model for r in frontier}
        for row in report.rows:
            writer.writerow([row.model, f"{row.overall_cost:.2f}",
                             f"{row.accuracy:.2f}",
                             "yes" if row.model in frontier_models else "no"])
    from .figures import save_cost_accuracy_figure

    save_cost_accuracy_figure(report.rows, os.path.join(out_dir, "cost_accuracy.png"))
    for issue in report.inconsistencies:
        click.echo(f"inconsistency: {issue}", err=True)
    click.echo(
        f"wrote cost_report.json/.md, cost_accuracy.csv/.png in {out_dir} "
        f"({len(report.inconsistencies)} inconsistencies; "
        f"frontier: {', '.join(r.model for r in frontier)})"
    )


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default=DEFAULT_DATA_DIR, show_default=True)
@click.option("--provider", default="mock", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--static-dir", type=click.Path(exists=True), default=None,
              help="Serve a built web UI bundle from /.")
def serve(port, host, data_dir, provider, config_path, static_dir):
    """Host the HTTP API (and optionally the web UI bundle)."""
    import uvicorn

    from .service.api import create_app

    engine = build_engine(data_dir, provider=provider, config_path=config_path)
    app = create_app(engine, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
