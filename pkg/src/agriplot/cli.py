"""Operator command line: serve, ask, plot, indices, ingest, evaluate.

Machine-readable output goes to stdout as JSON; human logs go to stderr.
Exit codes: 0 success, 1 domain error, 2 usage error (click's default).
"""

import json
import sys
from datetime import date
from pathlib import Path

import click

from .config import AppConfig, load_config
from .errors import AgriplotError
from .gateway import Gateway
from .judge import load_cases_jsonl, run_experiments, write_report
from .pipeline import ChatPipeline, PipelineStageError
from .rag import DocumentRecord, VectorIndex
from .registry import parse_plot_id


def _load(config_path, data_dir):
    cfg = load_config(config_path) if config_path else AppConfig()
    if data_dir:
        cfg.data_dir = data_dir
    return cfg


def _pipeline(cfg: AppConfig) -> ChatPipeline:
    gateway = Gateway(cfg.endpoints)
    index = VectorIndex()
    if cfg.rag.index_dir:
        vec = Path(cfg.rag.index_dir) / "vectors.bin"
        meta = Path(cfg.rag.index_dir) / "metadata.json"
        if vec.exists() and meta.exists():
            index = VectorIndex.load(str(vec), str(meta))
    return ChatPipeline(cfg, gateway, index=index)


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Config YAML path.")
@click.option("--data-dir", default=None, help="Override the data directory.")
@click.pass_context
def main(ctx, config_path, data_dir):
    """Conversational assistant for agricultural plot characterization."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load(config_path, data_dir)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    cfg = ctx.obj["config"]
    app = create_app(cfg, pipeline=_pipeline(cfg))
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("query")
@click.option("--mode", type=click.Choice(["multimodal", "rag", "both", "none"]), default=None, help="Force the triage mode.")
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="text")
@click.pass_context
def ask(ctx, query, mode, fmt):
    """Run one chat turn and print the answer."""
    from .triage import Mode, QueryMode, detect_plot_ids

    cfg = ctx.obj["config"]
    pipe = _pipeline(cfg)
    try:
        if mode:
            qmode = QueryMode(mode=Mode(mode), detected_plot_ids=detect_plot_ids(query))
            response, qmode = _run_forced(pipe, query, qmode)
        else:
            response, qmode = pipe.run_turn(query)
    except AgriplotError as exc:
        _fail(exc)
    if fmt == "json":
        click.echo(json.dumps({"mode": qmode.mode.value, **response.to_dict()}))
    else:
        click.echo(response.markdown)
        for cit in response.citations:
            line = f"[{cit.number}] {cit.source_label}"
            if cit.relevance_display:
                line += f" - Relevance {cit.relevance_display}"
            click.echo(line)
        if response.followups:
            click.echo("Follow up:")
            for f in response.followups:
                click.echo(f"  - {f}")


def _run_forced(pipe: ChatPipeline, query: str, qmode):
    from .aggregate import assemble_prompt, build_context_bundle, citations_of, extract_followups
    from .aggregate import AssistantResponse
    from .triage import Mode

    plot = terrain = image_uri = None
    stats_list, hits = [], []
    if qmode.mode in (Mode.MULTIMODAL, Mode.BOTH):
        plot = pipe.resolve_plot(qmode.detected_plot_ids[0])
        image_uri, terrain = pipe.plot_visuals(plot)
        stats_list = pipe.plot_indices(plot)
    if qmode.mode in (Mode.RAG, Mode.BOTH):
        hits = pipe.search_documents(query)
    bundle = build_context_bundle(qmode.mode, plot=plot, terrain_text=terrain, stats_list=stats_list, hits=hits, image_data_uri=image_uri)
    assembled = assemble_prompt(bundle, query, budget_chars=pipe.config.context_budget)
    raw = pipe.gateway.chat_complete("final", assembled.messages)
    markdown, followups = extract_followups(raw)
    return AssistantResponse(markdown=markdown, citations=citations_of(bundle), followups=followups, image_data_uri=image_uri), qmode


@main.command()
@click.argument("plot_id")
@click.pass_context
def plot(ctx, plot_id):
    """Print the resolved plot record as JSON."""
    cfg = ctx.obj["config"]
    pipe = _pipeline(cfg)
    try:
        record = pipe.resolve_plot(parse_plot_id(plot_id))
    except AgriplotError as exc:
        _fail(exc)
    click.echo(json.dumps(record.to_dict()))


@main.command()
@click.argument("plot_id")
@click.option("--window", default=None, help="Date range YYYY-MM-DD/YYYY-MM-DD.")
@click.pass_context
def indices(ctx, plot_id, window):
    """Print vegetation/water index statistics for a plot."""
    cfg = ctx.obj["config"]
    pipe = _pipeline(cfg)
    win = None
    if window:
        try:
            start_s, end_s = window.split("/")
            win = (date.fromisoformat(start_s), date.fromisoformat(end_s))
        except ValueError:
            click.echo("error: window must be YYYY-MM-DD/YYYY-MM-DD", err=True)
            sys.exit(2)
    try:
        record = pipe.resolve_plot(parse_plot_id(plot_id))
        stats = pipe.plot_indices(record, win)
    except AgriplotError as exc:
        _fail(exc)
    click.echo(json.dumps([
        {**s.to_dict(), "pixel_count": s.pixel_count,
         "window": [s.window[0].isoformat(), s.window[1].isoformat()]}
        for s in stats
    ]))


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--replace", is_flag=True, help="Replace documents with the same doc_id.")
@click.pass_context
def ingest(ctx, paths, replace):
    """Ingest documents (page-delimited JSON or plain text) into the index."""
    cfg = ctx.obj["config"]
    pipe = _pipeline(cfg)
    total = 0
    try:
        for path in paths:
            p = Path(path)
            if p.suffix == ".json":
                data = json.loads(p.read_text(encoding="utf-8"))
                doc = DocumentRecord.from_json(data)
            else:
                doc = DocumentRecord.from_text(p.stem, p.name, p.read_text(encoding="utf-8"))
            total += pipe.index.ingest_document(
                doc, pipe.gateway, chunk_size=cfg.rag.chunk_size, overlap=cfg.rag.overlap, replace=replace
            )
        if cfg.rag.index_dir:
            out = Path(cfg.rag.index_dir)
            out.mkdir(parents=True, exist_ok=True)
            pipe.index.save(str(out / "vectors.bin"), str(out / "metadata.json"))
    except AgriplotError as exc:
        _fail(exc)
    click.echo(json.dumps({"chunks": total}))


@main.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--out-dir", default="./report", help="Directory for report.json, summary.csv and scores.png.")
@click.pass_context
def evaluate(ctx, corpus, out_dir):
    """Run the judge over a JSONL experiment corpus and write report files."""
    cfg = ctx.obj["config"]
    gateway = Gateway(cfg.endpoints)
    try:
        cases = load_cases_jsonl(corpus)
        report = run_experiments(cases, gateway)
        paths = write_report(report, out_dir)
    except AgriplotError as exc:
        _fail(exc)
    click.echo(json.dumps({"report": report.to_dict(), "files": paths}))


if __name__ == "__main__":
    main()
