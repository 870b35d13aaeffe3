"""Query routing: which retrieval tools does a query need?

A deterministic ID detector plus an LLM intent call, with a hard
post-filter guaranteeing that plot-specific modes are never selected
without a detected plot ID.
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

from .gateway import ChatMessage, Gateway
from .prompts import load_prompt
from .registry import PlotId, format_plot_id, parse_plot_id


class Mode(str, Enum):
    MULTIMODAL = "multimodal"
    RAG = "rag"
    BOTH = "both"
    NONE = "none"


@dataclass
class QueryMode:
    mode: Mode
    detected_plot_ids: List[PlotId] = field(default_factory=list)

    def __post_init__(self):
        if self.mode in (Mode.MULTIMODAL, Mode.BOTH) and not self.detected_plot_ids:
            raise ValueError("plot-specific mode requires at least one plot ID")


_ID_PATTERN = re.compile(r"(?<![\d:])\d+(?::\d+){4,6}(?![\d:])")


def detect_plot_ids(text: str) -> List[PlotId]:
    """All maximal colon-integer ID substrings, deduplicated in order."""
    seen = set()
    out: List[PlotId] = []
    for match in _ID_PATTERN.finditer(text):
        pid = parse_plot_id(match.group(0))
        key = format_plot_id(pid)
        if key not in seen:
            seen.add(key)
            out.append(pid)
    return out


_TOKEN_MAP = {
    "MULTIMODAL": Mode.MULTIMODAL,
    "RAG": Mode.RAG,
    "BOTH": Mode.BOTH,
    "NONE": Mode.NONE,
}


def classify_mode(query: str, ids: Optional[List[PlotId]] = None, gateway: Optional[Gateway] = None) -> QueryMode:
    """Triage a query into a retrieval mode.

    The model emits one token from {MULTIMODAL, RAG, BOTH, NONE}; the
    post-filter downgrades plot-specific modes when no ID was detected,
    and unparsable outputs fall back to {ids -> both, no ids -> rag}.
    """
    if ids is None:
        ids = detect_plot_ids(query)

    mode: Optional[Mode] = None
    if gateway is not None:
        prompt = load_prompt("triage").format(
            ids=", ".join(format_plot_id(i) for i in ids) or "(none)",
            query=query,
        )
        try:
            raw = gateway.chat_complete("triage", [ChatMessage(role="user", content=prompt)], temperature=0.0)
            token = raw.strip().split()[0].strip(".,:;\"'").upper() if raw.strip() else ""
            mode = _TOKEN_MAP.get(token)
        except Exception:
            mode = None

    if mode is None:
        mode = Mode.BOTH if ids else Mode.RAG
    if not ids and mode in (Mode.MULTIMODAL, Mode.BOTH):
        mode = Mode.RAG
    return QueryMode(mode=mode, detected_plot_ids=list(ids))
