"""Tool registry: declared usage specs plus bound backends.

Each tool carries a purpose line, machine-checkable input/output schemas,
and a documented parameter space; the serialized registry manifest is the
usage set the planner searches over.  The registry is immutable after
startup wiring and safe to share across concurrent case pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .schema import InvalidSchema, check_schema, validate_value

BackendFn = Callable[[dict], dict]


class DuplicateName(ValueError):
    pass


class UnknownTool(KeyError):
    pass


@dataclass(frozen=True)
class ToolSpec:
    name: str
    purpose: str
    input_schema: dict
    output_schema: dict
    parameter_space: dict = field(default_factory=dict)
    backend_kind: str = "fixture"  # external_process | fixture | native | stub

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "purpose": self.purpose,
            "input_schema": self.input_schema,
            "output_schema": self.output_schema,
            "parameter_space": self.parameter_space,
            "backend": self.backend_kind,
        }


class ToolRegistry:
    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._backends: dict[str, BackendFn] = {}

    def register_tool(self, spec: ToolSpec, backend: BackendFn) -> None:
        if spec.name in self._specs:
            raise DuplicateName(spec.name)
        check_schema(spec.input_schema)
        check_schema(spec.output_schema)
        self._specs[spec.name] = spec
        self._backends[spec.name] = backend

    def __len__(self) -> int:
        return len(self._specs)

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> list[str]:
        return list(self._specs)

    def spec(self, name: str) -> ToolSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownTool(name) from None

    def backend(self, name: str) -> BackendFn:
        try:
            return self._backends[name]
        except KeyError:
            raise UnknownTool(name) from None

    def validate_parameters(self, name: str, parameters: dict) -> list[str]:
        spec = self.spec(name)
        violations = validate_value(parameters, spec.input_schema)
        requires_any = spec.input_schema.get("requiresAny")
        if requires_any and not any(k in parameters for k in requires_any):
            violations.append(
                f"$.{'/'.join(requires_any)}: missing required input "
                f"(need at least one of {requires_any})"
            )
        return violations

    def manifest(self) -> list[dict[str, Any]]:
        """The serialized usage set: one document per registered tool."""
        return [spec.to_json_dict() for spec in self._specs.values()]


def _image_input_schema() -> dict:
    return {
        "type": "object",
        "properties": {"image_path": {"type": "string"}},
        "required": ["image_path"],
        "additionalProperties": False,
    }


def _volume_output_schema(measures: list[str]) -> dict:
    return {
        "type": "object",
        "properties": {m: {"type": "number", "exclusiveMinimum": 0} for m in measures},
        "required": measures,
        "additionalProperties": True,  # unit bookkeeping rides along
    }


BRAIN_VOLUME = "brain_volume_analyzer"
HIPPOCAMPUS = "hippocampus_analyzer"
GREY_MATTER = "grey_matter_analyzer"
WHITE_MATTER = "white_matter_analyzer"
PHS_CALCULATOR = "phs_calculator"
MRI_PREDICTOR = "mri_predictor"

IMAGING_ANALYZERS = (BRAIN_VOLUME, HIPPOCAMPUS, GREY_MATTER, WHITE_MATTER)

# Which payload keys each imaging analyzer must produce (values in mm^3).
VOLUME_MEASURES: dict[str, list[str]] = {
    BRAIN_VOLUME: ["total_brain", "icv"],
    HIPPOCAMPUS: ["left", "right", "total"],
    GREY_MATTER: ["total_gm"],
    WHITE_MATTER: ["total_wm"],
}


def builtin_specs(backend_kind: str = "fixture") -> dict[str, ToolSpec]:
    """Specs for the six built-in tools, keyed by name."""
    imaging_purpose = {
        BRAIN_VOLUME: "Extracts whole-brain volume and intracranial volume (ICV) "
                      "from a structural MRI; global atrophy tracks disease stage.",
        HIPPOCAMPUS: "Quantifies left, right, and total hippocampal volumes; "
                     "hippocampal atrophy is an early structural marker.",
        GREY_MATTER: "Estimates cortical and subcortical grey-matter volume.",
        WHITE_MATTER: "Estimates global white-matter volume.",
    }
    specs = {
        name: ToolSpec(
            name=name,
            purpose=imaging_purpose[name],
            input_schema=_image_input_schema(),
            output_schema=_volume_output_schema(VOLUME_MEASURES[name]),
            parameter_space={"image_path": "path to a preprocessed 3D NIfTI volume"},
            backend_kind=backend_kind,
        )
        for name in IMAGING_ANALYZERS
    }
    specs[PHS_CALCULATOR] = ToolSpec(
        name=PHS_CALCULATOR,
        purpose="Computes a polygenic hazard score from SNP genotype dosages "
                "(VCF file, genotype list, or APOE genotype); with age it adds "
                "age-specific risk estimates with confidence bands.",
        input_schema={
            "type": "object",
            "properties": {
                "vcf_path": {"type": "string"},
                "genotypes": {"type": "object"},
                "apoe": {"type": "string"},
                "age": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
            "requiresAny": ["vcf_path", "genotypes", "apoe"],
        },
        output_schema={
            "type": "object",
            "properties": {
                "raw_phs": {"type": "number"},
                "percentile": {"type": "number", "minimum": 0, "maximum": 100},
                "risk_curve": {"type": "array"},
                "diagnostics": {"type": "array"},
            },
            "required": ["raw_phs", "percentile"],
            "additionalProperties": True,
        },
        parameter_space={
            "vcf_path": "single-sample VCF with GT",
            "genotypes": "map rsid -> dosage in {0,1,2}",
            "apoe": "genotype string x/y with x,y in {2,3,4}",
            "age": "years; enables the age-specific risk curve",
        },
        backend_kind="native",
    )
    specs[MRI_PREDICTOR] = ToolSpec(
        name=MRI_PREDICTOR,
        purpose="Forecasts structural MRI progression over a given horizon "
                "from the current scan and age.",
        input_schema={
            "type": "object",
            "properties": {
                "image_path": {"type": "string"},
                "age": {"type": "number", "exclusiveMinimum": 0},
                "future_years": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["image_path", "age", "future_years"],
            "additionalProperties": False,
        },
        output_schema={
            "type": "object",
            "properties": {
                "predicted_image_ref": {"type": "string"},
                "horizon_years": {"type": "number", "exclusiveMinimum": 0},
                "model_id": {"type": "string"},
            },
            "required": ["predicted_image_ref", "horizon_years", "model_id"],
            "additionalProperties": True,
        },
        parameter_space={
            "image_path": "path to the current preprocessed scan",
            "age": "patient age in years",
            "future_years": "forecast horizon, e.g. 5.0",
        },
        backend_kind="stub",
    )
    return specs
