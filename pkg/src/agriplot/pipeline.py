"""End-to-end chat pipeline: triage, retrieval, aggregation, answer.

Retrieval sub-tasks within one turn (orthophoto description, index
statistics, document search) run concurrently and join before the
aggregator builds the final prompt.
"""

import json
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import httpx

from .aggregate import (
    AssistantResponse,
    assemble_prompt,
    build_context_bundle,
    citations_of,
    extract_followups,
)
from .config import AppConfig
from .errors import AgriplotError, NoValidPixels, PlotNotFound
from .gateway import ChatMessage, Gateway
from .ortho import build_wms_request, describe_terrain, encode_base64, fetch_orthophoto
from .rag import RetrievalHit, VectorIndex
from .raster import (
    IndexKind,
    IndexStats,
    REQUIRED_BANDS,
    rasterize_polygon_mask,
    scl_cloud_mask,
    temporal_composite,
    zonal_stats,
)
from .registry import FixtureRegistry, PlotRecord, fetch_plot, format_plot_id
from .scenes import default_window, fetch_stac_scenes, load_local_scenes
from .triage import Mode, QueryMode, classify_mode, detect_plot_ids


class PipelineStageError(AgriplotError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Turn:
    query: str
    response: AssistantResponse
    mode: str
    started_at: float
    finished_at: float

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "response": self.response.to_dict(),
            "mode": self.mode,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


class SessionStore:
    """Append-only JSONL conversation log, one file per session."""

    def __init__(self, data_dir: str):
        self.root = Path(data_dir) / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in session_id)
        return self.root / f"{safe}.jsonl"

    def append(self, session_id: str, turn: Turn):
        with open(self._path(session_id), "a", encoding="utf-8") as f:
            f.write(json.dumps(turn.to_dict()) + "\n")

    def turns(self, session_id: str) -> List[dict]:
        path = self._path(session_id)
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


class ChatPipeline:
    def __init__(
        self,
        config: AppConfig,
        gateway: Gateway,
        index: Optional[VectorIndex] = None,
        fixture: Optional[FixtureRegistry] = None,
        http_client: Optional[httpx.Client] = None,
        today: Optional[date] = None,
    ):
        self.config = config
        self.gateway = gateway
        self.index = index if index is not None else VectorIndex()
        self.http_client = http_client
        self.today = today
        if fixture is None and config.registry.fixture_path:
            fixture = FixtureRegistry.load(config.registry.fixture_path)
        self.fixture = fixture

    # --- building blocks reused by the service endpoints ---

    def resolve_plot(self, plot_id) -> PlotRecord:
        try:
            return fetch_plot(plot_id, self.config.registry, fixture=self.fixture, client=self.http_client)
        except PlotNotFound:
            raise
        except AgriplotError as exc:
            raise PipelineStageError("plot-registry", exc) from exc

    def plot_indices(self, plot: PlotRecord, window: Optional[Tuple[date, date]] = None) -> List[IndexStats]:
        if window is None:
            window = default_window(self.config.stac.window_days, self.today)
        try:
            if self.config.scenes_dir:
                stacks = load_local_scenes(self.config.scenes_dir, window)
            elif self.config.stac.endpoint:
                stacks = fetch_stac_scenes(self.config, plot.geometry.bbox(), window, client=self.http_client)
            else:
                return []
            if not stacks:
                return []
            masks = [
                scl_cloud_mask(s.bands["scl"], self.config.excluded_scl_classes)
                if "scl" in s.bands
                else None
                for s in stacks
            ]
            out: List[IndexStats] = []
            for kind in IndexKind:
                usable = [i for i, s in enumerate(stacks) if all(b in s.bands for b in REQUIRED_BANDS[kind])]
                if not usable:
                    continue
                composite = temporal_composite([stacks[i] for i in usable], kind, [masks[i] for i in usable])
                zone = rasterize_polygon_mask(plot.geometry, composite)
                try:
                    out.append(zonal_stats(composite, zone, kind, window))
                except NoValidPixels:
                    continue
            return out
        except PipelineStageError:
            raise
        except AgriplotError as exc:
            raise PipelineStageError("raster-engine", exc) from exc

    def plot_visuals(self, plot: PlotRecord) -> Tuple[Optional[str], Optional[str]]:
        """(image data URI, terrain description text); skipped when no WMS is configured."""
        if not self.config.wms.endpoint:
            return None, None
        try:
            req = build_wms_request(
                plot.geometry,
                buffer_frac=self.config.wms.buffer_frac,
                target_px=self.config.wms.target_px,
                layer=self.config.wms.layer,
                image_format=self.config.wms.image_format,
            )
            img = fetch_orthophoto(req, self.config.wms.endpoint, client=self.http_client)
        except AgriplotError as exc:
            raise PipelineStageError("ortho-describe", exc) from exc
        data_uri = encode_base64(img)
        if "multimodal" not in self.gateway.endpoints:
            return data_uri, None
        try:
            desc = describe_terrain(img, plot.attributes, self.gateway)
        except AgriplotError as exc:
            raise PipelineStageError("ortho-describe", exc) from exc
        return data_uri, desc.text

    def search_documents(self, query: str) -> List[RetrievalHit]:
        if len(self.index) == 0:
            return []
        try:
            use_rr = self.config.rag.use_reranker and "reranker" in self.gateway.endpoints
            return self.index.search_topk(query, self.config.rag.top_k, self.gateway, use_reranker=use_rr)
        except AgriplotError as exc:
            raise PipelineStageError("rag-store", exc) from exc

    # --- the chat turn ---

    def run_turn(self, query: str, history: Sequence[ChatMessage] = ()) -> Tuple[AssistantResponse, QueryMode]:
        ids = detect_plot_ids(query)
        try:
            qmode = classify_mode(query, ids, self.gateway if "triage" in self.gateway.endpoints else None)
        except AgriplotError as exc:
            raise PipelineStageError("triage-router", exc) from exc

        plot = None
        terrain = None
        stats_list: List[IndexStats] = []
        hits: List[RetrievalHit] = []
        image_uri = None

        if qmode.mode in (Mode.MULTIMODAL, Mode.BOTH):
            plot = self.resolve_plot(qmode.detected_plot_ids[0])

        with ThreadPoolExecutor(max_workers=3) as pool:
            fut_visuals = fut_stats = fut_rag = None
            if plot is not None:
                fut_visuals = pool.submit(self.plot_visuals, plot)
                fut_stats = pool.submit(self.plot_indices, plot)
            if qmode.mode in (Mode.RAG, Mode.BOTH):
                fut_rag = pool.submit(self.search_documents, query)
            if fut_visuals is not None:
                image_uri, terrain = fut_visuals.result()
            if fut_stats is not None:
                stats_list = fut_stats.result()
            if fut_rag is not None:
                hits = fut_rag.result()

        bundle = build_context_bundle(
            qmode.mode,
            plot=plot,
            terrain_text=terrain,
            stats_list=stats_list,
            hits=hits,
            image_data_uri=image_uri,
        )
        assembled = assemble_prompt(bundle, query, history=history, budget_chars=self.config.context_budget)
        try:
            raw = self.gateway.chat_complete("final", assembled.messages)
        except AgriplotError as exc:
            raise PipelineStageError("llm-gateway", exc) from exc
        markdown, followups = extract_followups(raw)
        response = AssistantResponse(
            markdown=markdown,
            citations=citations_of(bundle),
            followups=followups,
            image_data_uri=image_uri,
        )
        return response, qmode


def history_from_turns(turns: List[dict], window: int) -> List[ChatMessage]:
    """Reconstruct the chat history sent to the final model from stored turns."""
    messages: List[ChatMessage] = []
    for turn in turns[-window:]:
        messages.append(ChatMessage(role="user", content=turn["query"]))
        messages.append(ChatMessage(role="assistant", content=turn["response"]["markdown"]))
    return messages


def new_session_id() -> str:
    return uuid.uuid4().hex
