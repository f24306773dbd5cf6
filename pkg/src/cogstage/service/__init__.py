"""Case-session persistence, the staged pipeline runner, and the HTTP API."""

from .api import create_app
from .pipeline import Engine, EngineConfig, NoReport, ValidationFailed, build_engine
from .store import (
    CaseSession,
    PipelineEvent,
    SessionNotFound,
    SessionStatus,
    SessionStore,
    StorageFailure,
    WrongState,
)
