"""Judge harness: score assistant answers on four dimensions and aggregate.

The judge model is run zero-shot at temperature 0 and must emit a JSON
verdict; unparsable verdicts are re-asked twice before the case is
recorded as failed and excluded from the means.
"""

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import (
    AllCasesFailed,
    EmptyInput,
    MissingDimension,
    ScoreOutOfRange,
    VerdictUnparsable,
)
from .gateway import ChatMessage, Gateway
from .numfmt import round_half_up
from .prompts import load_prompt

DIMENSIONS = ("correctness", "relevance", "clarity", "completeness")
MODES = ("multimodal", "rag")

PARSE_RETRIES = 2


@dataclass
class JudgeVerdict:
    correctness: int
    relevance: int
    clarity: int
    completeness: int
    justification: str

    def __post_init__(self):
        for dim in DIMENSIONS:
            score = getattr(self, dim)
            if not isinstance(score, int) or isinstance(score, bool) or not (1 <= score <= 5):
                raise ScoreOutOfRange(f"{dim} score {score!r} not an integer in [1, 5]")
        if not self.justification.strip():
            raise VerdictUnparsable("justification must be non-empty")

    def scores(self) -> Dict[str, int]:
        return {dim: getattr(self, dim) for dim in DIMENSIONS}


@dataclass
class ExperimentCase:
    case_id: str
    query: str
    mode: str  # multimodal | rag
    context_text: str
    answer_markdown: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentCase":
        return cls(
            case_id=data["case_id"],
            query=data["query"],
            mode=data["mode"],
            context_text=data["context_text"],
            answer_markdown=data["answer_markdown"],
        )


@dataclass
class ExperimentReport:
    verdicts: List[Tuple[str, str, JudgeVerdict]]  # (case_id, mode, verdict)
    failed_cases: List[str] = field(default_factory=list)

    def counts(self) -> Dict[str, int]:
        out = {m: 0 for m in MODES}
        for _, mode, _ in self.verdicts:
            out[mode] += 1
        return out

    def mode_means(self, mode: str) -> Optional[Dict[str, float]]:
        scores = [v.scores() for _, m, v in self.verdicts if m == mode]
        if not scores:
            return None
        return {dim: sum(s[dim] for s in scores) / len(scores) for dim in DIMENSIONS}

    def total_means(self) -> Dict[str, float]:
        # pooled over every verdict, equivalent to the count-weighted
        # mean of the per-mode means
        scores = [v.scores() for _, _, v in self.verdicts]
        return {dim: sum(s[dim] for s in scores) / len(scores) for dim in DIMENSIONS}

    def to_dict(self) -> dict:
        rows = {}
        for mode in MODES:
            means = self.mode_means(mode)
            if means is not None:
                rows[mode] = {d: round_half_up(m, 3) for d, m in means.items()}
        return {
            "cases": [
                {"case_id": cid, "mode": mode, **v.scores(), "justification": v.justification}
                for cid, mode, v in self.verdicts
            ],
            "means": rows,
            "total": {d: round_half_up(m, 3) for d, m in self.total_means().items()},
            "counts": self.counts(),
            "failed_cases": self.failed_cases,
        }


def build_judge_prompt(case: ExperimentCase) -> List[ChatMessage]:
    """Two messages, zero-shot: criteria system prompt + labeled case."""
    user = (
        f"User's query:\n{case.query}\n\n"
        f"Retrieved context:\n{case.context_text}\n\n"
        f"Assistant's answer:\n{case.answer_markdown}"
    )
    return [
        ChatMessage(role="system", content=load_prompt("judge_system")),
        ChatMessage(role="user", content=user),
    ]


_JSON_OBJ_RE = re.compile(r"\{.*\}", re.DOTALL)


def parse_verdict(model_text: str) -> JudgeVerdict:
    """Extract and validate the first JSON object (fenced, bare, or brace-less).

    Judge models sometimes emit the key-value list without enclosing
    braces; that form is accepted by wrapping it.
    """
    candidates = []
    match = _JSON_OBJ_RE.search(model_text)
    if match:
        candidates.append(match.group(0))
    stripped = model_text.strip().strip("`").strip()
    candidates.append("{" + stripped.rstrip(",") + "}")
    obj = None
    for cand in candidates:
        try:
            parsed = json.loads(cand)
        except ValueError:
            continue
        if isinstance(parsed, dict):
            obj = parsed
            break
    if obj is None:
        raise VerdictUnparsable("no JSON object found in judge output")
    for dim in DIMENSIONS:
        if dim not in obj:
            raise MissingDimension(f"verdict missing dimension {dim!r}")
    scores = {}
    for dim in DIMENSIONS:
        raw = obj[dim]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or raw != int(raw):
            raise ScoreOutOfRange(f"{dim} score {raw!r} is not integral")
        scores[dim] = int(raw)
    justification = obj.get("justification", "")
    if not isinstance(justification, str) or not justification.strip():
        raise VerdictUnparsable("verdict missing a justification")
    return JudgeVerdict(**scores, justification=justification)


def run_experiments(cases: Sequence[ExperimentCase], gateway: Gateway) -> ExperimentReport:
    """Judge each case once at temperature 0, re-asking twice on parse failure."""
    if not cases:
        raise EmptyInput("no experiment cases")
    verdicts: List[Tuple[str, str, JudgeVerdict]] = []
    failed: List[str] = []
    for case in cases:
        messages = build_judge_prompt(case)
        verdict = None
        for _ in range(1 + PARSE_RETRIES):
            text = gateway.chat_complete("judge", messages, temperature=0.0)
            try:
                verdict = parse_verdict(text)
                break
            except (VerdictUnparsable, MissingDimension, ScoreOutOfRange):
                continue
        if verdict is None:
            failed.append(case.case_id)
        else:
            verdicts.append((case.case_id, case.mode, verdict))
    if not verdicts:
        raise AllCasesFailed(f"all {len(cases)} cases failed verdict parsing")
    return ExperimentReport(verdicts=verdicts, failed_cases=failed)


def aggregate(verdicts: Sequence[Tuple[str, JudgeVerdict]]) -> ExperimentReport:
    """Build a report from already-collected (mode, verdict) pairs."""
    if not verdicts:
        raise EmptyInput("no verdicts to aggregate")
    return ExperimentReport(verdicts=[(f"case-{i}", m, v) for i, (m, v) in enumerate(verdicts)])


def load_cases_jsonl(path: str) -> List[ExperimentCase]:
    cases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            cases.append(ExperimentCase.from_json(json.loads(line)))
    return cases


def summary_csv(report: ExperimentReport) -> str:
    """Means table: one row per mode plus the pooled total."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["mode", *DIMENSIONS, "n"])
    counts = report.counts()
    for mode in MODES:
        means = report.mode_means(mode)
        if means is None:
            continue
        writer.writerow([mode, *(f"{round_half_up(means[d], 3):.3f}" for d in DIMENSIONS), counts[mode]])
    total = report.total_means()
    writer.writerow(["total", *(f"{round_half_up(total[d], 3):.3f}" for d in DIMENSIONS), len(report.verdicts)])
    return buf.getvalue()


def write_report(report: ExperimentReport, out_dir: str) -> Dict[str, str]:
    """Write report.json, summary.csv and a score-means figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    csv_path = out / "summary.csv"
    fig_path = out / "scores.png"
    json_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    csv_path.write_text(summary_csv(report), encoding="utf-8")
    render_scores_figure(report, str(fig_path))
    return {"json": str(json_path), "csv": str(csv_path), "figure": str(fig_path)}


def render_scores_figure(report: ExperimentReport, path: str):
    """Grouped bar chart of per-mode and total means per dimension."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    groups = [m for m in MODES if report.mode_means(m) is not None] + ["total"]
    values = {
        g: (report.mode_means(g) if g != "total" else report.total_means())
        for g in groups
    }
    x = np.arange(len(DIMENSIONS))
    width = 0.8 / len(groups)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, g in enumerate(groups):
        ax.bar(x + i * width, [values[g][d] for d in DIMENSIONS], width, label=g)
    ax.set_xticks(x + width * (len(groups) - 1) / 2)
    ax.set_xticklabels(DIMENSIONS)
    ax.set_ylim(0, 5)
    ax.set_ylabel("mean score (1-5)")
    ax.set_title("Judge score means by query focus mode")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
