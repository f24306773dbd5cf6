"""cogstage: a modality-agnostic cognitive-staging agent engine.

Plans specialized analysis tools over incomplete multimodal patient
records, executes them with verification-driven retries, aggregates the
evidence against explicit guideline rules (LLM-led with a deterministic
rule-engine fallback and cross-check), and emits schema-validated staged
diagnosis reports - plus a statistical evaluation harness (bootstrap CIs,
fairness dispersion, reader-study arithmetic, cost-effectiveness).
"""

__version__ = "0.1.0"

from .domain import (
    ConfidenceLevel,
    DiagnosisReport,
    PatientRecord,
    StagingLabel,
    convert_volume,
    normalize_label,
    validate_patient_record,
)

__all__ = [
    "ConfidenceLevel",
    "DiagnosisReport",
    "PatientRecord",
    "StagingLabel",
    "convert_volume",
    "normalize_label",
    "validate_patient_record",
    "__version__",
]
