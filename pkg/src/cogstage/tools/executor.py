"""Action execution with verification-driven retry under a resource budget.

A backend call only counts as successful when its payload validates against
the tool's declared output schema; anything else is re-invoked until valid
or the budget (attempts, optionally wall time) runs out.  Failures never
raise out of :meth:`ToolExecutor.execute` - they are encoded in the outcome
status so aggregation can proceed on partial evidence.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .registry import ToolRegistry
from .schema import validate_value


class ToolBackendError(RuntimeError):
    """Raised by backends for any execution failure worth retrying."""


class BackendProcessFailed(ToolBackendError):
    pass


class UnparseableOutput(ToolBackendError):
    pass


class MissingSidecar(ToolBackendError):
    pass


class InvalidPredictedImage(ToolBackendError):
    pass


class NoUsableGenotypes(ToolBackendError):
    pass


class ModelFileInvalid(ToolBackendError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    cost_budget_usd: Optional[float] = None
    time_budget: Optional[float] = None  # seconds

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class OutcomeStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class ToolOutcome:
    tool: str
    status: OutcomeStatus
    payload: dict[str, Any] = field(default_factory=dict)
    diagnostics: str = ""
    attempts: int = 1
    wall_time: float = 0.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "tool": self.tool,
            "status": self.status.value,
            "payload": self.payload,
            "diagnostics": self.diagnostics,
            "attempts": self.attempts,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "ToolOutcome":
        return cls(
            tool=data["tool"],
            status=OutcomeStatus(data["status"]),
            payload=data.get("payload", {}),
            diagnostics=data.get("diagnostics", ""),
            attempts=int(data.get("attempts", 1)),
            wall_time=float(data.get("wall_time", 0.0)),
        )


@dataclass(frozen=True)
class ResolvedAction:
    """A validated tool call ready to execute."""

    tool: str
    parameters: dict[str, Any]

    def fingerprint(self) -> str:
        blob = json.dumps({"tool": self.tool, "parameters": self.parameters},
                          sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class ToolExecutor:
    def __init__(self, registry: ToolRegistry):
        self._registry = registry

    def execute(
        self,
        action: ResolvedAction,
        policy: RetryPolicy = RetryPolicy(),
        on_retry: Optional[Callable[[str, int, str], None]] = None,
    ) -> ToolOutcome:
        """Run one resolved action under the retry policy.

        ``on_retry(tool, attempt, reason)`` fires before each re-invocation
        so the pipeline can log the event.
        """
        started = time.monotonic()
        spec = self._registry.spec(action.tool)
        backend = self._registry.backend(action.tool)

        attempts = 0
        last_reason = ""
        while attempts < policy.max_attempts:
            if (
                policy.time_budget is not None
                and attempts > 0
                and time.monotonic() - started >= policy.time_budget
            ):
                last_reason += " | time budget reached"
                break
            attempts += 1
            try:
                payload = backend(dict(action.parameters))
            except ToolBackendError as exc:
                last_reason = f"{type(exc).__name__}: {exc}"
            except Exception as exc:  # defensive: backends must not crash the pipeline
                last_reason = f"unexpected {type(exc).__name__}: {exc}"
            else:
                violations = _check_payload(payload, spec.output_schema)
                if not violations:
                    return ToolOutcome(
                        tool=action.tool,
                        status=OutcomeStatus.OK,
                        payload=payload,
                        attempts=attempts,
                        wall_time=time.monotonic() - started,
                    )
                last_reason = "output schema violations: " + "; ".join(violations)
            if on_retry and attempts < policy.max_attempts:
                on_retry(action.tool, attempts, last_reason)

        return ToolOutcome(
            tool=action.tool,
            status=OutcomeStatus.FAILED,
            diagnostics=last_reason or "no attempts made",
            attempts=attempts,
            wall_time=time.monotonic() - started,
        )


def _check_payload(payload: Any, output_schema: dict) -> list[str]:
    if not isinstance(payload, dict):
        return [f"payload must be an object, got {type(payload).__name__}"]
    return validate_value(payload, output_schema)
