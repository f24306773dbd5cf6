"""Append-only, file-backed case-session persistence.

One directory per session under the data dir: ``session.json`` (canonical,
sorted-key JSON so round-trips are byte-identical), ``events.jsonl``
(append-only, gapless sequence numbers), ``report.json`` (the exact bytes
later served by the JSON export) plus versioned revisions, and an
``uploads/`` area where files are stored content-addressed by SHA-256.
A per-session lock serializes writers; reads are plain snapshots.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional
from uuid import uuid4

from ..domain import ChatHistory, DiagnosisReport, PatientRecord
from ..planner import DiagnosticPlan
from ..tools import ToolOutcome


class SessionNotFound(KeyError):
    pass


class WrongState(RuntimeError):
    pass


class StorageFailure(OSError):
    pass


class SessionStatus(str, Enum):
    CREATED = "created"
    PLANNING = "planning"
    EXECUTING = "executing"
    AGGREGATING = "aggregating"
    DONE = "done"
    FAILED = "failed"


_ORDER = [
    SessionStatus.CREATED,
    SessionStatus.PLANNING,
    SessionStatus.EXECUTING,
    SessionStatus.AGGREGATING,
    SessionStatus.DONE,
]

EVENT_KINDS = {"started", "tool_ok", "tool_failed", "retry", "fallback", "finished"}


@dataclass(frozen=True)
class PipelineEvent:
    sequence: int
    stage: str
    kind: str
    detail: str
    timestamp: float

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "stage": self.stage,
            "kind": self.kind,
            "detail": self.detail,
            "timestamp": self.timestamp,
        }


@dataclass
class CaseSession:
    session_id: str
    record: PatientRecord
    status: SessionStatus = SessionStatus.CREATED
    plan: Optional[DiagnosticPlan] = None
    plan_violations: list = field(default_factory=list)
    outcomes: list[ToolOutcome] = field(default_factory=list)
    executed_fingerprints: dict[str, int] = field(default_factory=dict)  # fp -> outcome index
    verification_flags: list[str] = field(default_factory=list)
    report: Optional[DiagnosisReport] = None
    report_versions: int = 0
    history: ChatHistory = field(default_factory=ChatHistory)
    created_at: float = field(default_factory=time.time)

    def advance_status(self, new: SessionStatus) -> None:
        if new is SessionStatus.FAILED:
            if self.status in (SessionStatus.DONE, SessionStatus.FAILED):
                raise WrongState(f"cannot fail a session in state {self.status.value}")
            self.status = new
            return
        if _ORDER.index(new) <= _ORDER.index(self.status):
            raise WrongState(f"cannot move from {self.status.value} to {new.value}")
        self.status = new

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "record": self.record.to_json_dict(),
            "status": self.status.value,
            "plan": self.plan.to_json_dict() | {"source": self.plan.source}
            if self.plan else None,
            "plan_violations": list(self.plan_violations),
            "outcomes": [o.to_json_dict() for o in self.outcomes],
            "executed_fingerprints": dict(self.executed_fingerprints),
            "verification_flags": list(self.verification_flags),
            "report": self.report.to_json_dict() if self.report else None,
            "report_versions": self.report_versions,
            "history": self.history.to_json_list(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "CaseSession":
        plan = None
        if data.get("plan"):
            plan_data = dict(data["plan"])
            source = plan_data.pop("source", "llm")
            plan = DiagnosticPlan.from_json_dict(plan_data, source=source)
        report = DiagnosisReport.from_json_dict(data["report"]) if data.get("report") else None
        return cls(
            session_id=data["session_id"],
            record=PatientRecord.from_json_dict(data["record"]),
            status=SessionStatus(data["status"]),
            plan=plan,
            plan_violations=[tuple(v) for v in data.get("plan_violations", [])],
            outcomes=[ToolOutcome.from_json_dict(o) for o in data.get("outcomes", [])],
            executed_fingerprints=dict(data.get("executed_fingerprints", {})),
            verification_flags=list(data.get("verification_flags", [])),
            report=report,
            report_versions=int(data.get("report_versions", 0)),
            history=ChatHistory.from_json_list(data.get("history", [])),
            created_at=float(data.get("created_at", 0.0)),
        )


def _canonical_bytes(data: dict[str, Any]) -> bytes:
    return (json.dumps(data, indent=2, sort_keys=True) + "\n").encode("utf-8")


class SessionStore:
    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(os.path.join(data_dir, "sessions"), exist_ok=True)
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    # -- paths ---------------------------------------------------------------

    def _session_dir(self, session_id: str) -> str:
        return os.path.join(self.data_dir, "sessions", session_id)

    def _session_path(self, session_id: str) -> str:
        return os.path.join(self._session_dir(session_id), "session.json")

    def _events_path(self, session_id: str) -> str:
        return os.path.join(self._session_dir(session_id), "events.jsonl")

    def report_path(self, session_id: str, version: int = 0) -> str:
        name = "report.json" if version == 0 else f"report_v{version + 1}.json"
        return os.path.join(self._session_dir(session_id), name)

    def uploads_dir(self, session_id: str) -> str:
        return os.path.join(self._session_dir(session_id), "uploads")

    def lock(self, session_id: str) -> threading.RLock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.RLock())

    # -- sessions ------------------------------------------------------------

    def create(self, record: PatientRecord) -> CaseSession:
        session = CaseSession(session_id=uuid4().hex[:12], record=record)
        os.makedirs(self._session_dir(session.session_id), exist_ok=True)
        os.makedirs(self.uploads_dir(session.session_id), exist_ok=True)
        self.save(session)
        return session

    def save(self, session: CaseSession) -> None:
        path = self._session_path(session.session_id)
        tmp = path + ".tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(_canonical_bytes(session.to_json_dict()))
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageFailure(f"cannot persist session: {exc}") from exc

    def load(self, session_id: str) -> CaseSession:
        path = self._session_path(session_id)
        if not os.path.exists(path):
            raise SessionNotFound(session_id)
        with open(path, "r", encoding="utf-8") as fh:
            return CaseSession.from_json_dict(json.load(fh))

    def session_bytes(self, session_id: str) -> bytes:
        path = self._session_path(session_id)
        if not os.path.exists(path):
            raise SessionNotFound(session_id)
        with open(path, "rb") as fh:
            return fh.read()

    def list_sessions(self) -> list[str]:
        root = os.path.join(self.data_dir, "sessions")
        return sorted(
            name for name in os.listdir(root)
            if os.path.exists(self._session_path(name))
        )

    # -- events ----------------------------------------------------------------

    def append_event(self, session_id: str, stage: str, kind: str, detail: str = "") -> PipelineEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self.lock(session_id):
            events = self.events(session_id)
            event = PipelineEvent(
                sequence=len(events) + 1,
                stage=stage,
                kind=kind,
                detail=detail,
                timestamp=time.time(),
            )
            try:
                with open(self._events_path(session_id), "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event.to_json_dict(), sort_keys=True) + "\n")
            except OSError as exc:
                raise StorageFailure(f"cannot append event: {exc}") from exc
            return event

    def events(self, session_id: str, after: int = 0) -> list[PipelineEvent]:
        path = self._events_path(session_id)
        if not os.path.exists(path):
            if not os.path.exists(self._session_path(session_id)):
                raise SessionNotFound(session_id)
            return []
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                if data["sequence"] > after:
                    out.append(PipelineEvent(**data))
        return out

    # -- uploads and reports ---------------------------------------------------

    def store_upload(self, session_id: str, filename: str, content: bytes) -> str:
        digest = hashlib.sha256(content).hexdigest()[:24]
        suffix = ""
        for ext in (".nii.gz", ".vcf.gz"):
            if filename.endswith(ext):
                suffix = ext
                break
        if not suffix:
            suffix = os.path.splitext(filename)[1]
        path = os.path.join(self.uploads_dir(session_id), digest + suffix)
        if not os.path.exists(path):
            tmp = path + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(content)
            os.replace(tmp, path)
        return path

    def save_report_bytes(self, session_id: str, content: bytes, version: int = 0) -> str:
        path = self.report_path(session_id, version)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(content)
        os.replace(tmp, path)
        return path

    def report_bytes(self, session_id: str, version: int = 0) -> bytes:
        path = self.report_path(session_id, version)
        if not os.path.exists(path):
            raise SessionNotFound(f"no persisted report for session {session_id}")
        with open(path, "rb") as fh:
            return fh.read()
