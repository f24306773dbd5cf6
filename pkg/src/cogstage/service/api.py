"""HTTP JSON API over the case pipeline (consumed by the web UI).

Endpoints:
  POST /cases                     multipart record + optional mri/vcf uploads
  POST /cases/{id}/run            start (or resume) the pipeline
  GET  /cases/{id}                status, record, outcomes, event log
  GET  /cases/{id}/events         server-sent event stream with resume offset
  GET  /cases/{id}/report         persisted report JSON
  POST /cases/{id}/chat           one chat turn over a finished case
  GET  /cases/{id}/export         report bytes as json or markdown
  GET  /meta/validation-rules     shared record-validation manifest
  GET  /meta/tools                serialized tool usage set

Progress is observable two ways (stream + polling), both fed by the same
gapless per-session event log.
"""

from __future__ import annotations

import json
import threading
import time
from typing import Iterator, Optional

from fastapi import FastAPI, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..domain import PatientRecord, validation_rules_manifest
from .pipeline import Engine, NoReport, ValidationFailed
from .store import SessionNotFound, SessionStatus, WrongState

SSE_POLL_SECONDS = 0.05
SSE_IDLE_TIMEOUT = 60.0


def create_app(engine: Engine, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="cogstage", version="0.1.0")

    @app.exception_handler(SessionNotFound)
    async def _not_found(request: Request, exc: SessionNotFound):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(WrongState)
    async def _wrong_state(request: Request, exc: WrongState):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.post("/cases")
    async def create_case(
        record: str = Form(...),
        mri: Optional[UploadFile] = None,
        vcf: Optional[UploadFile] = None,
    ):
        try:
            record_obj = PatientRecord.from_json_dict(json.loads(record))
        except (json.JSONDecodeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail={"violations": [str(exc)]})
        mri_upload = (mri.filename or "upload.nii", await mri.read()) if mri else None
        vcf_upload = (vcf.filename or "upload.vcf", await vcf.read()) if vcf else None
        try:
            session_id = engine.create_case_session(record_obj, mri_upload, vcf_upload)
        except ValidationFailed as exc:
            raise HTTPException(status_code=422, detail={"violations": exc.violations})
        return {"session_id": session_id}

    @app.post("/cases/{session_id}/run")
    def run_case(session_id: str, wait: bool = False, query: str = ""):
        session = engine.store.load(session_id)  # 404 before spawning anything
        if session.status in (SessionStatus.DONE, SessionStatus.FAILED):
            raise WrongState(f"session already {session.status.value}")
        if wait:
            status = engine.advance_pipeline(session_id, query=query)
            return {"status": status.value}
        thread = threading.Thread(
            target=_run_silently, args=(engine, session_id, query), daemon=True
        )
        thread.start()
        return {"status": "running"}

    @app.get("/cases/{session_id}")
    def get_case(session_id: str):
        return engine.session_view(session_id)

    @app.get("/cases/{session_id}/events")
    def stream_events(session_id: str, request: Request, after: int = 0):
        engine.store.load(session_id)  # 404 fast
        last_event_id = request.headers.get("last-event-id")
        if last_event_id and last_event_id.isdigit():
            after = max(after, int(last_event_id))
        return StreamingResponse(
            _sse_stream(engine, session_id, after),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    @app.get("/cases/{session_id}/report")
    def get_report(session_id: str):
        try:
            content = engine.export_report(session_id, "json")
        except NoReport as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=content, media_type="application/json")

    @app.post("/cases/{session_id}/chat")
    def chat(session_id: str, body: dict):
        message = (body or {}).get("message", "").strip()
        if not message:
            raise HTTPException(status_code=422, detail="message is required")
        reply = engine.chat_turn(session_id, message)
        session = engine.store.load(session_id)
        return {"reply": reply, "history": session.history.to_json_list()}

    @app.get("/cases/{session_id}/export")
    def export(session_id: str, format: str = "json"):
        if format not in ("json", "markdown"):
            raise HTTPException(status_code=422, detail=f"unknown format {format!r}")
        try:
            content = engine.export_report(session_id, format)
        except NoReport as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        media = "application/json" if format == "json" else "text/markdown"
        return Response(
            content=content,
            media_type=media,
            headers={
                "Content-Disposition":
                    f'attachment; filename="report-{session_id}.'
                    f'{"json" if format == "json" else "md"}"'
            },
        )

    @app.get("/meta/validation-rules")
    def validation_rules():
        return validation_rules_manifest()

    @app.get("/meta/tools")
    def tools_manifest():
        return {"tools": engine.registry.manifest()}

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _run_silently(engine: Engine, session_id: str, query: str) -> None:
    try:
        engine.advance_pipeline(session_id, query=query)
    except Exception:
        pass  # terminal state and events already persisted by the engine


def _sse_stream(engine: Engine, session_id: str, after: int) -> Iterator[str]:
    cursor = after
    idle_since = time.monotonic()
    while True:
        events = engine.store.events(session_id, after=cursor)
        for event in events:
            cursor = event.sequence
            idle_since = time.monotonic()
            payload = json.dumps(event.to_json_dict())
            yield f"id: {event.sequence}\nevent: {event.kind}\ndata: {payload}\n\n"
        session = engine.store.load(session_id)
        if session.status in (SessionStatus.DONE, SessionStatus.FAILED):
            done = json.dumps({"status": session.status.value})
            yield f"event: end\ndata: {done}\n\n"
            return
        if time.monotonic() - idle_since > SSE_IDLE_TIMEOUT:
            yield "event: end\ndata: {\"status\": \"timeout\"}\n\n"
            return
        time.sleep(SSE_POLL_SECONDS)
