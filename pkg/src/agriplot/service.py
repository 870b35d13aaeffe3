"""HTTP service exposing the chat pipeline, lookups, ingestion and evaluation."""

import threading
import time
from datetime import date
from typing import Optional

import httpx
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .config import AppConfig
from .errors import (
    AgriplotError,
    DuplicateDocId,
    EmptyIndex,
    GatewayError,
    MalformedPlotId,
    NoValidPixels,
    PlotNotFound,
)
from .gateway import Gateway
from .judge import ExperimentCase, load_cases_jsonl, run_experiments
from .pipeline import (
    ChatPipeline,
    PipelineStageError,
    SessionStore,
    Turn,
    history_from_turns,
    new_session_id,
)
from .rag import DocumentRecord
from .registry import format_plot_id, parse_plot_id


class ChatRequest(BaseModel):
    query: str
    session_id: Optional[str] = None


class IngestPage(BaseModel):
    page: int
    text: str


class IngestRequest(BaseModel):
    doc_id: str
    filename: str
    pages: list[IngestPage]
    replace: bool = False


class EvaluateRequest(BaseModel):
    corpus_path: Optional[str] = None
    cases: Optional[list[dict]] = None


def create_app(
    config: AppConfig,
    gateway: Optional[Gateway] = None,
    pipeline: Optional[ChatPipeline] = None,
) -> FastAPI:
    if gateway is None:
        gateway = Gateway(config.endpoints)
    if pipeline is None:
        pipeline = ChatPipeline(config, gateway)
    store = SessionStore(config.data_dir)
    session_locks: dict = {}
    locks_guard = threading.Lock()

    app = FastAPI(title="agriplot", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.pipeline = pipeline
    app.state.config = config

    def _session_lock(session_id: str) -> threading.Lock:
        with locks_guard:
            return session_locks.setdefault(session_id, threading.Lock())

    def _parse_id(raw: str):
        try:
            return parse_plot_id(raw)
        except MalformedPlotId as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/chat")
    def chat(req: ChatRequest):
        if not req.query.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        session_id = req.session_id or new_session_id()
        # one in-flight turn per session; cross-session requests stay parallel
        with _session_lock(session_id):
            history = history_from_turns(store.turns(session_id), config.history_window)
            started = time.time()
            try:
                response, qmode = pipeline.run_turn(req.query, history)
            except PlotNotFound as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except MalformedPlotId as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            except PipelineStageError as exc:
                raise HTTPException(status_code=502, detail={"stage": exc.stage, "error": str(exc.cause)}) from exc
            turn = Turn(
                query=req.query,
                response=response,
                mode=qmode.mode.value,
                started_at=started,
                finished_at=time.time(),
            )
            store.append(session_id, turn)
        return {"session_id": session_id, "mode": qmode.mode.value, **response.to_dict()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return {"session_id": session_id, "turns": store.turns(session_id)}

    @app.get("/plots/{plot_id}")
    def get_plot(plot_id: str):
        pid = _parse_id(plot_id)
        try:
            record = pipeline.resolve_plot(pid)
        except PlotNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except PipelineStageError as exc:
            raise HTTPException(status_code=502, detail={"stage": exc.stage, "error": str(exc.cause)}) from exc
        return record.to_dict()

    @app.get("/plots/{plot_id}/indices")
    def get_indices(plot_id: str, window: Optional[str] = None):
        pid = _parse_id(plot_id)
        win = None
        if window:
            try:
                start_s, end_s = window.split("/")
                win = (date.fromisoformat(start_s), date.fromisoformat(end_s))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail="window must be YYYY-MM-DD/YYYY-MM-DD") from exc
        try:
            record = pipeline.resolve_plot(pid)
            stats = pipeline.plot_indices(record, win)
        except PlotNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except PipelineStageError as exc:
            raise HTTPException(status_code=502, detail={"stage": exc.stage, "error": str(exc.cause)}) from exc
        return [
            {
                **s.to_dict(),
                "pixel_count": s.pixel_count,
                "window": [s.window[0].isoformat(), s.window[1].isoformat()],
            }
            for s in stats
        ]

    @app.post("/documents")
    def ingest(req: IngestRequest):
        doc = DocumentRecord(
            doc_id=req.doc_id,
            filename=req.filename,
            pages=[(p.page, p.text) for p in req.pages],
        )
        try:
            count = pipeline.index.ingest_document(
                doc,
                gateway,
                chunk_size=config.rag.chunk_size,
                overlap=config.rag.overlap,
                replace=req.replace,
            )
        except DuplicateDocId as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except AgriplotError as exc:
            raise HTTPException(status_code=502, detail={"stage": "rag-store", "error": str(exc)}) from exc
        return {"chunks": count}

    @app.post("/evaluate")
    def evaluate(req: EvaluateRequest):
        if req.corpus_path:
            try:
                cases = load_cases_jsonl(req.corpus_path)
            except (OSError, KeyError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=f"bad corpus: {exc}") from exc
        elif req.cases:
            try:
                cases = [ExperimentCase.from_json(c) for c in req.cases]
            except (KeyError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=f"bad case: {exc}") from exc
        else:
            raise HTTPException(status_code=400, detail="provide corpus_path or cases")
        try:
            report = run_experiments(cases, gateway)
        except AgriplotError as exc:
            raise HTTPException(status_code=502, detail={"stage": "judge-harness", "error": str(exc)}) from exc
        return report.to_dict()

    @app.get("/health")
    def health():
        roles = {}
        degraded = []
        for role in config.endpoints:
            ok = gateway.probe(role)
            roles[role] = "ok" if ok else "unreachable"
            if not ok:
                degraded.append(role)
        return {
            "status": "degraded" if degraded else "ok",
            "endpoints": roles,
            "degraded_roles": degraded,
        }

    return app
