"""Turn retrieved data into natural-language context and assemble prompts.

Everything here is pure assembly: deterministic templates over plot
attributes, index statistics, terrain narratives and retrieval hits,
plus the final encapsulated prompt for the answering model.
"""

import json
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import ModeComponentMismatch
from .gateway import ChatMessage
from .numfmt import compact, fixed
from .prompts import load_prompt
from .rag import RetrievalHit
from .raster import IndexStats
from .registry import PlotAttributes, PlotRecord
from .triage import Mode

DEFAULT_CONTEXT_BUDGET = 24000
MAX_FOLLOWUPS = 4


@dataclass
class CitationEntry:
    number: int
    source_label: str
    relevance_display: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "source_label": self.source_label,
            "relevance_display": self.relevance_display,
        }


@dataclass
class ContextBlock:
    kind: str  # terrain_description | plot_attributes | index_stats | document_chunk
    text: str
    citation: Optional[CitationEntry] = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("context block text must be non-empty")


@dataclass
class ContextBundle:
    blocks: List[ContextBlock]
    mode: Mode
    plot: Optional[PlotRecord] = None
    image_data_uri: Optional[str] = None
    empty_retrieval: bool = False


@dataclass
class AssistantResponse:
    markdown: str
    citations: List[CitationEntry] = field(default_factory=list)
    followups: List[str] = field(default_factory=list)
    image_data_uri: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "markdown": self.markdown,
            "citations": [c.to_dict() for c in self.citations],
            "followups": self.followups,
            "image_data_uri": self.image_data_uri,
        }


def attrs_to_text(attrs: PlotAttributes) -> str:
    """Fixed-order attribute sentence matching the registry display form."""
    return (
        f"Area in ha = {compact(attrs.area_ha)}, "
        f"Perimeter in meters = {compact(attrs.perimeter_m)}, "
        f"Average slope = {compact(attrs.slope_pct)} %, "
        f"Altitude in meters = {compact(attrs.altitude_m)}, "
        f"Land use = {attrs.land_use}."
    )


def stats_to_text(stats: IndexStats) -> str:
    k = stats.kind.value
    return (
        f"The {k} statistics are "
        f"'{k}_max': {fixed(stats.max, 4)}, "
        f"'{k}_mean': {fixed(stats.mean, 4)}, "
        f"'{k}_min': {fixed(stats.min, 4)}, "
        f"'{k}_stdDev': {fixed(stats.std_dev, 4)} in range [-1,1]."
    )


def build_context_bundle(
    mode: Mode,
    plot: Optional[PlotRecord] = None,
    terrain_text: Optional[str] = None,
    stats_list: Optional[Sequence[IndexStats]] = None,
    hits: Optional[Sequence[RetrievalHit]] = None,
    image_data_uri: Optional[str] = None,
) -> ContextBundle:
    """Ordered context blocks with contiguous citation numbering."""
    if mode in (Mode.MULTIMODAL, Mode.BOTH) and plot is None:
        raise ModeComponentMismatch(f"mode {mode.value} requires a plot record")
    if mode in (Mode.RAG, Mode.NONE) and (terrain_text or stats_list):
        raise ModeComponentMismatch(f"mode {mode.value} must not carry plot context")

    blocks: List[ContextBlock] = []
    if terrain_text:
        blocks.append(ContextBlock(kind="terrain_description", text=terrain_text))
    if plot is not None and mode in (Mode.MULTIMODAL, Mode.BOTH):
        blocks.append(ContextBlock(kind="plot_attributes", text=attrs_to_text(plot.attributes)))
    for stats in stats_list or []:
        blocks.append(ContextBlock(kind="index_stats", text=stats_to_text(stats)))

    empty_retrieval = False
    if mode in (Mode.RAG, Mode.BOTH):
        hit_list = list(hits or [])
        if not hit_list:
            empty_retrieval = True
        for n, hit in enumerate(hit_list, start=1):
            blocks.append(
                ContextBlock(
                    kind="document_chunk",
                    text=hit.chunk.text,
                    citation=CitationEntry(
                        number=n,
                        source_label=hit.source_label,
                        relevance_display=hit.relevance_display,
                    ),
                )
            )
    return ContextBundle(
        blocks=blocks,
        mode=mode,
        plot=plot,
        image_data_uri=image_data_uri,
        empty_retrieval=empty_retrieval,
    )


_SECTION_LABELS = {
    "terrain_description": "Terrain description",
    "plot_attributes": "Plot attributes",
    "index_stats": "Vegetation index statistics",
}


@dataclass
class AssembledPrompt:
    messages: List[ChatMessage]
    dropped_chunks: int = 0  # document chunks evicted to fit the budget


def assemble_prompt(
    bundle: ContextBundle,
    query: str,
    history: Optional[Sequence[ChatMessage]] = None,
    budget_chars: int = DEFAULT_CONTEXT_BUDGET,
) -> AssembledPrompt:
    """System framing + history + one user message with labeled context.

    Overflowing the character budget evicts document chunks lowest
    relevance first; plot and terrain blocks are never dropped.
    """
    blocks = list(bundle.blocks)

    def render_user() -> str:
        parts: List[str] = []
        for block in blocks:
            if block.kind == "document_chunk":
                cit = block.citation
                header = f"Document excerpt [{cit.number}] - {cit.source_label}"
                if cit.relevance_display:
                    header += f" - Relevance {cit.relevance_display}"
                parts.append(f"{header}:\n{block.text}")
            else:
                parts.append(f"{_SECTION_LABELS[block.kind]}:\n{block.text}")
        if bundle.empty_retrieval:
            parts.append("(Document retrieval returned no results for this query.)")
        parts.append(f"User question:\n{query}")
        return "\n\n".join(parts)

    dropped = 0
    user_text = render_user()
    while len(user_text) > budget_chars:
        doc_blocks = [b for b in blocks if b.kind == "document_chunk"]
        if not doc_blocks:
            break
        # citation order is retrieval order; the last one is lowest relevance
        blocks.remove(doc_blocks[-1])
        dropped += 1
        user_text = render_user()

    messages = [ChatMessage(role="system", content=load_prompt("answer_system"))]
    messages.extend(history or [])
    messages.append(ChatMessage(role="user", content=user_text))
    return AssembledPrompt(messages=messages, dropped_chunks=dropped)


_FOLLOWUP_RE = re.compile(r"```json\s*(\{.*?\})\s*```\s*$", re.DOTALL)


def extract_followups(model_text: str) -> Tuple[str, List[str]]:
    """Split the trailing fenced JSON follow-up block from the answer.

    Absent or malformed blocks fail open: the markdown is returned
    untouched with no follow-ups.
    """
    match = _FOLLOWUP_RE.search(model_text)
    if not match:
        return model_text, []
    try:
        obj = json.loads(match.group(1))
        followups = obj["followups"]
        if not isinstance(followups, list) or not all(isinstance(f, str) for f in followups):
            return model_text, []
    except (ValueError, KeyError, TypeError):
        return model_text, []
    markdown = model_text[: match.start()].rstrip()
    return markdown, followups[:MAX_FOLLOWUPS]


def citations_of(bundle: ContextBundle) -> List[CitationEntry]:
    return [b.citation for b in bundle.blocks if b.citation is not None]
