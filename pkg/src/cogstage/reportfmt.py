"""Markdown rendering of a diagnosis report.

Fixed section order, one ## header per report field, so exports are stable
and diffable.
"""

from __future__ import annotations

from .domain import DiagnosisReport


def _bullets(items) -> str:
    if not items:
        return "None recorded.\n"
    return "".join(f"- {item}\n" for item in items)


def report_markdown(report: DiagnosisReport) -> str:
    sections = [
        "# Staged Diagnosis Report\n",
        "## Diagnosis & Confidence\n"
        f"**{report.diagnosis.value}** (confidence: {report.confidence.value})\n",
        "## Clinical Reasoning\n" + report.clinical_reasoning.rstrip() + "\n",
        "## Supporting Evidence\n" + _bullets(report.supporting_evidence),
        "## Contradicting Evidence\n" + _bullets(report.contradicting_evidence),
        "## Conflict Resolution\n" + report.conflict_resolution.rstrip() + "\n",
        "## Diagnostic Criteria\n" + report.diagnostic_criteria.rstrip() + "\n",
        "## Recommendations\n" + _bullets(report.recommendations),
        "## Attachments\n" + _bullets(report.attachments),
        "## Provenance\n" + report.provenance.value + "\n",
        "## Guideline Checksum\n" + (report.guideline_checksum or "unversioned") + "\n",
    ]
    return "\n".join(sections)
