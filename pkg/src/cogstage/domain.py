"""Canonical domain types shared by every stage of the staging pipeline.

Holds the three-way staging label, the multimodal patient record, the
structured diagnosis report, and the small pure helpers (label
normalization, record validation, volume unit conversion) that every other
module builds on.  All types are immutable value objects: construct once,
share freely.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Optional


class UnknownLabel(ValueError):
    """Raised when a string cannot be normalized to a staging label."""


class NegativeVolume(ValueError):
    """Raised when a volume conversion is asked for a negative value."""


class StagingLabel(str, Enum):
    """Three-way cognitive staging label.

    ``NC`` (used by some cohort tables) is accepted on input and
    normalized to ``CN``; the canonical serialized tokens are exactly
    "CN", "MCI", "AD".
    """

    CN = "CN"
    MCI = "MCI"
    AD = "AD"

    @property
    def impairment_rank(self) -> int:
        """CN < MCI < AD on the impairment axis."""
        return _IMPAIRMENT_ORDER[self]


_IMPAIRMENT_ORDER = {StagingLabel.CN: 0, StagingLabel.MCI: 1, StagingLabel.AD: 2}

_LABEL_ALIASES = {
    "CN": StagingLabel.CN,
    "NC": StagingLabel.CN,
    "MCI": StagingLabel.MCI,
    "AD": StagingLabel.AD,
}


class ConfidenceLevel(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    def lowered(self) -> "ConfidenceLevel":
        """One step down the High > Medium > Low ladder (Low stays Low)."""
        order = [ConfidenceLevel.HIGH, ConfidenceLevel.MEDIUM, ConfidenceLevel.LOW]
        return order[min(order.index(self) + 1, len(order) - 1)]


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class Intent(str, Enum):
    DIAGNOSE = "diagnose"
    PREDICT_PROGRESSION = "predict_progression"
    EXPLAIN = "explain"
    CHAT = "chat"


def normalize_label(raw: str) -> StagingLabel:
    """Map a raw label string to the canonical staging label.

    Case-insensitive; surrounding whitespace ignored; "NC" is the one
    accepted alias (for CN).  Anything else raises :class:`UnknownLabel`.
    """
    if not isinstance(raw, str):
        raise UnknownLabel(f"label must be a string, got {type(raw).__name__}")
    token = raw.strip().upper()
    try:
        return _LABEL_ALIASES[token]
    except KeyError:
        raise UnknownLabel(f"unknown staging label: {raw!r}") from None


def normalize_confidence(raw: str) -> ConfidenceLevel:
    """Map a raw confidence string to a level (case-insensitive)."""
    token = str(raw).strip().lower()
    for level in ConfidenceLevel:
        if level.value.lower() == token:
            return level
    raise UnknownLabel(f"unknown confidence level: {raw!r}")


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a structural validation: hard violations plus advisory notes.

    Violations are data, not exceptions: an empty ``violations`` list means
    the input is acceptable; ``notes`` carry informational flags that do not
    block processing.
    """

    violations: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


APOE_PATTERN = re.compile(r"^[234]/[234]$")

CDR_ALLOWED = (0.0, 0.5, 1.0, 2.0, 3.0)


@dataclass(frozen=True)
class PatientRecord:
    """One multimodal case: any subset of fields may be present.

    Missing values are represented as ``None``, never as sentinel numbers,
    and are never imputed anywhere downstream.
    """

    case_id: str
    age: Optional[float] = None
    sex: Sex = Sex.UNKNOWN
    education: Optional[float] = None
    cdr: Optional[float] = None
    mmse: Optional[int] = None
    moca: Optional[int] = None
    adas11: Optional[float] = None
    adas13: Optional[float] = None
    faq: Optional[int] = None
    csf_abeta42: Optional[float] = None
    csf_tau: Optional[float] = None
    csf_ptau: Optional[float] = None
    apoe_genotype: Optional[str] = None
    vcf_ref: Optional[str] = None
    mri_ref: Optional[str] = None
    doctor_prompt: Optional[str] = None
    label: Optional[StagingLabel] = None

    def scalar_fields(self) -> dict[str, Any]:
        """Present non-file, non-identifier fields (the textual payload)."""
        out: dict[str, Any] = {}
        for name in (
            "age", "sex", "education", "cdr", "mmse", "moca",
            "adas11", "adas13", "faq",
            "csf_abeta42", "csf_tau", "csf_ptau", "apoe_genotype",
        ):
            value = getattr(self, name)
            if name == "sex":
                if value is not Sex.UNKNOWN:
                    out[name] = value.value
            elif value is not None:
                out[name] = value
        return out

    def to_json_dict(self) -> dict[str, Any]:
        """Flat JSON object with only the present fields."""
        out: dict[str, Any] = {"case_id": self.case_id}
        for name, value in asdict(self).items():
            if name == "case_id" or value is None:
                continue
            if isinstance(value, Enum):
                value = value.value
            if name == "sex" and value == Sex.UNKNOWN.value:
                continue
            out[name] = value
        return out

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "PatientRecord":
        known = {f for f in cls.__dataclass_fields__}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                continue  # unknown keys are reported by validate_patient_record
            if key == "sex":
                try:
                    value = Sex(str(value).lower())
                except ValueError:
                    value = value  # keep raw; validation will flag it
            elif key == "label" and value is not None:
                value = normalize_label(str(value))
            kwargs[key] = value
        kwargs.setdefault("case_id", str(data.get("case_id", "")))
        return cls(**kwargs)


_INT_RANGES = {"mmse": (0, 30), "moca": (0, 30), "faq": (0, 30)}
_NONNEG_REALS = ("education", "adas11", "adas13", "csf_abeta42", "csf_tau", "csf_ptau")


def validate_patient_record(record: PatientRecord) -> ValidationReport:
    """Check every range/pattern invariant of a record.

    Pure: the record is never mutated and nothing is imputed.  Violations
    come back as strings; an empty list means the record is valid.
    """
    violations: list[str] = []

    if not record.case_id:
        violations.append("case_id missing")

    present = record.scalar_fields()
    has_content = bool(present) or any(
        (record.vcf_ref, record.mri_ref, record.doctor_prompt, record.label)
    )
    if not has_content:
        violations.append("record has no content beyond its identifier")

    if record.age is not None and not (0 < record.age < 130):
        violations.append(f"age out of range (0, 130): {record.age}")
    if record.education is not None and record.education < 0:
        violations.append(f"education must be non-negative: {record.education}")
    if not isinstance(record.sex, Sex):
        violations.append(f"sex must be one of male/female/unknown: {record.sex!r}")
    if record.cdr is not None and float(record.cdr) not in CDR_ALLOWED:
        violations.append(f"cdr must be one of {{0, 0.5, 1, 2, 3}}: {record.cdr}")
    for name, (lo, hi) in _INT_RANGES.items():
        value = getattr(record, name)
        if value is None:
            continue
        if value != int(value) or not (lo <= value <= hi):
            violations.append(f"{name} out of range {lo}-{hi}: {value}")
    for name in _NONNEG_REALS:
        value = getattr(record, name)
        if value is not None and value < 0:
            violations.append(f"{name} must be non-negative: {value}")
    if record.apoe_genotype is not None and not APOE_PATTERN.match(record.apoe_genotype):
        violations.append(f"apoe_genotype must match x/y with x,y in {{2,3,4}}: {record.apoe_genotype!r}")

    return ValidationReport(violations=tuple(violations))


MM3_PER_ML = 1000.0


def convert_volume(value: float, from_unit: str, to_unit: str) -> float:
    """Convert a volume between mL and mm3 (1 mL = 1000 mm3 exactly)."""
    if value < 0:
        raise NegativeVolume(f"volume must be non-negative: {value}")
    units = {"mL": 1000.0, "ml": 1000.0, "mm3": 1.0, "mm^3": 1.0}
    try:
        factor_from, factor_to = units[from_unit], units[to_unit]
    except KeyError as exc:
        raise ValueError(f"unknown volume unit: {exc.args[0]!r}") from None
    if factor_from == factor_to:
        return value
    return value * factor_from / factor_to


@dataclass(frozen=True)
class QueryBundle:
    """A decomposed user query: intent plus the split textual/image payloads."""

    intent: Intent
    query_text: str
    text_payload: dict[str, Any]
    image_payload: tuple[str, ...]
    record: PatientRecord


@dataclass(frozen=True)
class ChatTurn:
    speaker: str  # "user" | "agent"
    text: str
    timestamp: float


@dataclass
class ChatHistory:
    """Append-only conversation log with non-decreasing timestamps."""

    turns: list[ChatTurn] = field(default_factory=list)

    def append(self, speaker: str, text: str, timestamp: float) -> None:
        if speaker not in ("user", "agent"):
            raise ValueError(f"speaker must be user or agent: {speaker!r}")
        if self.turns and timestamp < self.turns[-1].timestamp:
            raise ValueError("chat timestamps must be non-decreasing")
        self.turns.append(ChatTurn(speaker, text, timestamp))

    def recent(self, limit: int) -> list[ChatTurn]:
        return self.turns[-limit:]

    def to_json_list(self) -> list[dict[str, Any]]:
        return [
            {"speaker": t.speaker, "text": t.text, "timestamp": t.timestamp}
            for t in self.turns
        ]

    @classmethod
    def from_json_list(cls, data: list[dict[str, Any]]) -> "ChatHistory":
        history = cls()
        for item in data:
            history.append(item["speaker"], item["text"], item["timestamp"])
        return history


class Provenance(str, Enum):
    LLM = "llm"
    GUIDELINE_FALLBACK = "guideline_fallback"


@dataclass(frozen=True)
class DiagnosisReport:
    """The structured staged-diagnosis report persisted for every case."""

    diagnosis: StagingLabel
    confidence: ConfidenceLevel
    clinical_reasoning: str
    supporting_evidence: tuple[str, ...]
    contradicting_evidence: tuple[str, ...]
    conflict_resolution: str
    diagnostic_criteria: str
    recommendations: tuple[str, ...] = ()
    attachments: tuple[str, ...] = ()
    provenance: Provenance = Provenance.LLM
    guideline_checksum: str = ""

    def __post_init__(self) -> None:
        if self.provenance is Provenance.GUIDELINE_FALLBACK and not self.supporting_evidence:
            raise ValueError("guideline fallback reports must carry supporting evidence")

    def with_extra_contradictions(self, *items: str) -> "DiagnosisReport":
        return DiagnosisReport(
            **{**_report_kwargs(self),
               "contradicting_evidence": self.contradicting_evidence + tuple(items)}
        )

    def with_confidence(self, confidence: ConfidenceLevel) -> "DiagnosisReport":
        return DiagnosisReport(**{**_report_kwargs(self), "confidence": confidence})

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "diagnosis": self.diagnosis.value,
            "confidence": self.confidence.value,
            "justification": {
                "clinical_reasoning": self.clinical_reasoning,
                "evidence_summary": {
                    "supporting_evidence": list(self.supporting_evidence),
                    "contradicting_evidence": list(self.contradicting_evidence),
                },
                "conflict_resolution": self.conflict_resolution,
                "diagnostic_criteria": self.diagnostic_criteria,
            },
            "recommendations": list(self.recommendations),
            "attachments": list(self.attachments),
            "provenance": self.provenance.value,
            "guideline_checksum": self.guideline_checksum,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "DiagnosisReport":
        justification = data["justification"]
        summary = justification["evidence_summary"]
        return cls(
            diagnosis=normalize_label(data["diagnosis"]),
            confidence=normalize_confidence(data["confidence"]),
            clinical_reasoning=justification["clinical_reasoning"],
            supporting_evidence=tuple(summary["supporting_evidence"]),
            contradicting_evidence=tuple(summary["contradicting_evidence"]),
            conflict_resolution=justification["conflict_resolution"],
            diagnostic_criteria=justification["diagnostic_criteria"],
            recommendations=tuple(data.get("recommendations", ())),
            attachments=tuple(data.get("attachments", ())),
            provenance=Provenance(data.get("provenance", "llm")),
            guideline_checksum=data.get("guideline_checksum", ""),
        )


def _report_kwargs(report: DiagnosisReport) -> dict[str, Any]:
    return {
        "diagnosis": report.diagnosis,
        "confidence": report.confidence,
        "clinical_reasoning": report.clinical_reasoning,
        "supporting_evidence": report.supporting_evidence,
        "contradicting_evidence": report.contradicting_evidence,
        "conflict_resolution": report.conflict_resolution,
        "diagnostic_criteria": report.diagnostic_criteria,
        "recommendations": report.recommendations,
        "attachments": report.attachments,
        "provenance": report.provenance,
        "guideline_checksum": report.guideline_checksum,
    }


def validation_rules_manifest() -> dict[str, Any]:
    """Machine-readable record-validation rules.

    Served to clients so that form-side validation applies exactly the same
    bounds as :func:`validate_patient_record`.
    """
    rules: dict[str, Any] = {
        "case_id": {"type": "string", "required": True},
        "age": {"type": "number", "gt": 0, "lt": 130},
        "sex": {"type": "enum", "values": [s.value for s in Sex]},
        "education": {"type": "number", "min": 0},
        "cdr": {"type": "enum", "values": list(CDR_ALLOWED)},
        "apoe_genotype": {"type": "pattern", "pattern": APOE_PATTERN.pattern},
        "doctor_prompt": {"type": "string"},
    }
    for name, (lo, hi) in _INT_RANGES.items():
        rules[name] = {"type": "integer", "min": lo, "max": hi}
    for name in _NONNEG_REALS:
        rules.setdefault(name, {"type": "number", "min": 0})
    return rules


def load_cohort_jsonl(path: str) -> list[PatientRecord]:
    """Load a cohort file: JSON Lines, one flat record object per line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(PatientRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad cohort line: {exc}") from exc
    return records
