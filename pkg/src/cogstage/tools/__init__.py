"""Tool registry, execution with retries, and the six built-in tools."""

from .executor import (
    BackendProcessFailed,
    InvalidPredictedImage,
    MissingSidecar,
    ModelFileInvalid,
    NoUsableGenotypes,
    OutcomeStatus,
    ResolvedAction,
    RetryPolicy,
    ToolBackendError,
    ToolExecutor,
    ToolOutcome,
    UnparseableOutput,
)
from .imaging import (
    ExternalProcessImagingBackend,
    FixtureImagingBackend,
    write_volume_sidecar,
)
from .phs import PhsBackend, PhsModel, apoe_to_dosages, compute_phs, load_phs_model
from .predictor import ExternalPredictorBackend, StubPredictorBackend
from .registry import (
    BRAIN_VOLUME,
    GREY_MATTER,
    HIPPOCAMPUS,
    IMAGING_ANALYZERS,
    MRI_PREDICTOR,
    PHS_CALCULATOR,
    VOLUME_MEASURES,
    WHITE_MATTER,
    DuplicateName,
    ToolRegistry,
    ToolSpec,
    UnknownTool,
    builtin_specs,
)
from .schema import InvalidSchema, check_schema, validate_value


def default_registry(predictor_output_dir=None) -> ToolRegistry:
    """Registry with all six built-ins on fixture/stub backends (no external
    software, no GPU): the default test and demo profile."""
    registry = ToolRegistry()
    specs = builtin_specs()
    for name in IMAGING_ANALYZERS:
        registry.register_tool(specs[name], FixtureImagingBackend(name))
    registry.register_tool(specs[PHS_CALCULATOR], PhsBackend())
    registry.register_tool(
        specs[MRI_PREDICTOR], StubPredictorBackend(output_dir=predictor_output_dir)
    )
    return registry
