"""``attackwatch`` command line: ingest, detect, baseline, evaluate, plotdata.

Each stage reads the artifacts written by the previous one from the output
directory, so stages can be re-run independently.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .baseline import baseline_events, daily_series, default_keywords, parse_keywords, series_from_csv
from .config import PipelineConfig, load_config
from .corpus import Document, TimeSlot, attach_parses, bucket_by_day, load_conllu, load_jsonl
from .dqe import CATEGORY_ORDER, DqeConfig, QuerySet, parse_category, run_dqe, seed_queries
from .embeddings import EmbeddingError, EmbeddingTable, load_embeddings
from .evaluation import EvalEvent, load_manual_review, match_event, read_gsr, report_json, report_text, score
from .events import ACCEPTED, DedupState, EventRecord, detect_events, word_cloud

log = logging.getLogger("attackwatch")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3


class InputError(Exception):
    """Bad or missing user input (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- file helpers

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _need_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"no {what} given")
    if not Path(path).is_file():
        raise InputError(f"{what} not found: {path}")
    return Path(path)


def _read_jsonl_file(path: Path, what: str) -> list[dict]:
    rows = []
    for lineno, line in enumerate(_need_file(path, what).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise InputError(f"{path}:{lineno}: expected a JSON object")
        rows.append(obj)
    return rows


# ---------------------------------------------------------------- corpus store

def store_dir(cfg: PipelineConfig, override: Path | None = None) -> Path:
    return Path(override) if override else cfg.paths.output_dir / "store"


def write_store(directory: Path, slots: Sequence[TimeSlot], report: dict) -> None:
    days = {}
    for slot in slots:
        rel = f"days/{slot.day.isoformat()}.jsonl"
        write_atomic(directory / rel, _jsonl(d.to_json() for d in slot.documents))
        days[slot.day.isoformat()] = {"file": rel, "docs": slot.doc_count}
    # partitions from an earlier ingest must not leak into this one
    keep = {directory / v["file"] for v in days.values()}
    for old in sorted((directory / "days").glob("*.jsonl")) if (directory / "days").is_dir() else []:
        if old not in keep:
            old.unlink()
    manifest = {"format": 1, "days": days, "documents": sum(v["docs"] for v in days.values()), **report}
    write_atomic(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_store(directory: Path) -> list[TimeSlot]:
    man_path = directory / "manifest.json"
    if not man_path.is_file():
        raise InputError(f"no corpus store at {directory} (run ingest first)")
    try:
        manifest = json.loads(man_path.read_text(encoding="utf-8"))
        slots = []
        for day, meta in sorted(manifest["days"].items()):
            rows = _read_jsonl_file(directory / meta["file"], "store partition")
            docs = tuple(Document.from_json(r) for r in rows)
            if len(docs) != meta["docs"]:
                raise InputError(f"partition {day} holds {len(docs)} documents, manifest says {meta['docs']}")
            slots.append(TimeSlot(date.fromisoformat(day), docs))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"corrupt corpus store: {exc}") from None
    return slots


# ---------------------------------------------------------------- ingest

def cmd_ingest(args, cfg: PipelineConfig) -> int:
    texts = _need_file(args.texts or cfg.paths.corpus, "texts file")
    parses_path = args.parses or cfg.paths.parses
    docs, text_rejects = load_jsonl(texts.read_text(encoding="utf-8"))
    parse_rejects: list[dict] = []
    if parses_path is not None:
        entries, parse_rejects = load_conllu(_need_file(parses_path, "parses file").read_text(encoding="utf-8"))
        known = {d.doc_id for d in docs}
        orphans = sorted({doc_id for doc_id, _ in entries} - known)
        if orphans:
            log.warning("%d parsed documents have no text record", len(orphans))
        docs = attach_parses(docs, entries)
    if not docs:
        log.warning("no documents ingested; writing an empty store")
    slots = bucket_by_day(docs)
    out = store_dir(cfg, args.store)
    report = {
        "textRejects": len(text_rejects),
        "parseRejects": len(parse_rejects),
        "unparsed": sum(1 for d in docs if not d.has_parse),
        "perDay": {s.day.isoformat(): s.doc_count for s in slots},
    }
    rejects = [{"source": "texts", **r} for r in text_rejects] + [{"source": "parses", **r} for r in parse_rejects]
    write_atomic(out / "rejects.jsonl", _jsonl(rejects))
    write_store(out, slots, report)
    write_atomic(cfg.paths.output_dir / "ingest_report.json",
                 json.dumps({"documents": len(docs), "days": len(slots), **report}, indent=2, sort_keys=True) + "\n")
    if rejects:
        log.warning("%d input records rejected; see %s", len(rejects), out / "rejects.jsonl")
    log.info("ingested %d documents over %d days", len(docs), len(slots))
    return EXIT_OK


# ---------------------------------------------------------------- detect

_WORKER_TABLE: EmbeddingTable | None = None


def _init_worker(table: EmbeddingTable) -> None:
    global _WORKER_TABLE
    _WORKER_TABLE = table


def _dqe_unit(unit: tuple[TimeSlot, str, DqeConfig]):
    slot, cat, dqe_cfg = unit
    return run_dqe(seed_queries(cat), slot, dqe_cfg, _WORKER_TABLE)


def _categories(name: str) -> list[str]:
    if name.lower() == "all":
        return [c.value for c in CATEGORY_ORDER]
    try:
        return [parse_category(name).value]
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_table(path: Path | None) -> EmbeddingTable:
    p = _need_file(path, "embeddings file")
    try:
        return load_embeddings(p.read_bytes())
    except EmbeddingError as exc:
        raise InputError(f"{p}: {exc}") from None


def _event_docs(event: EventRecord, final: QuerySet, domain, slot: TimeSlot) -> list[str]:
    surfaces = {q.surface for q in event.queries}
    return sorted({slot.documents[dp].doc_id for dp, _, qp, _ in domain.pairs
                   if final.queries[qp].surface in surfaces})


def cmd_detect(args, cfg: PipelineConfig) -> int:
    table = _load_table(args.embeddings or cfg.paths.embeddings)
    slots = [s for s in read_store(store_dir(cfg, args.store)) if s.parsed]
    cats = _categories(cfg.seed_category)
    units = [(slot, cat, cfg.dqe) for slot in slots for cat in cats]
    if cfg.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(table,)) as pool:
            results = list(pool.map(_dqe_unit, units))
    else:
        _init_worker(table)
        results = [_dqe_unit(u) for u in units]

    all_seeds = seed_queries("all")
    dedup = DedupState()
    events: list[EventRecord] = []
    trace_rows: list[dict] = []
    query_rows: list[str] = ["day\tcategory\tsurface\tweight\titeration\torigin"]
    for (slot, cat, _), (final, domain, trace) in zip(units, results):
        day = slot.day.isoformat()
        for rec in trace:
            trace_rows.append({"kind": "iteration", "day": day, "category": cat, **rec})
        for q in final:
            query_rows.append(f"{day}\t{cat}\t{q.surface}\t{q.weight!r}\t{q.iteration}\t{q.origin}")
        found = detect_events(final, slot.day, all_seeds, table, dedup, cfg.ap, cfg.events, source=cat)
        if any(e.event_id in {x.event_id for x in events} for e in found):
            raise AssertionError("event id issued twice")
        events.extend(found)
        trace_rows.append({"kind": "event_docs", "day": day, "category": cat,
                           "event_docs": {e.event_id: _event_docs(e, final, domain, slot) for e in found}})

    out = cfg.paths.output_dir
    write_atomic(out / "events.jsonl", _jsonl(e.to_json() for e in events))
    write_atomic(out / "trace.jsonl", _jsonl(trace_rows))
    write_atomic(out / "queries.tsv", "\n".join(query_rows) + "\n")
    write_atomic(out / "wordclouds.csv", _csv(["event_id", "term", "weight"],
                                              [(e.event_id, t, repr(w)) for e in events for t, w in word_cloud(e)]))
    n_acc = sum(1 for e in events if e.status == ACCEPTED)
    log.info("%d event records (%d accepted) over %d days", len(events), n_acc, len(slots))
    return EXIT_OK


# ---------------------------------------------------------------- baseline

def cmd_baseline(args, cfg: PipelineConfig) -> int:
    kw_path = args.keywords or cfg.paths.keywords
    if kw_path is not None:
        keywords = parse_keywords(_need_file(kw_path, "keyword list").read_text(encoding="utf-8"))
    else:
        keywords = default_keywords()
    if not keywords:
        raise InputError("keyword list is empty")
    if args.counts:
        try:
            days, series = series_from_csv(_need_file(args.counts, "count CSV").read_text(encoding="utf-8"))
        except ValueError as exc:
            raise InputError(str(exc)) from None
        wanted = set(keywords)
        series = [s for s in series if s.keyword in wanted]
    else:
        days, series = daily_series(read_store(store_dir(cfg, args.store)), keywords)
    found = baseline_events(series, cfg.burst, days) if days else []
    rows, issued = [], {}
    for ev in found:
        issued[ev.date] = issued.get(ev.date, 0) + 1
        rows.append(ev.to_json(f"{ev.date.isoformat()}-B{issued[ev.date]:03d}"))
    write_atomic(cfg.paths.output_dir / "baseline_events.jsonl", _jsonl(rows))
    log.info("%d baseline events from %d keywords over %d days", len(rows), len(series), len(days))
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    out = cfg.paths.output_dir
    events_path = Path(args.events) if args.events else out / "events.jsonl"
    try:
        detected = [EvalEvent.from_json(r) for r in _read_jsonl_file(events_path, "events file")]
    except ValueError as exc:
        raise InputError(f"{events_path}: {exc}") from None
    gsr_path = _need_file(args.gsr or cfg.paths.gsr, "GSR file")
    try:
        loaded = read_gsr(gsr_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"{gsr_path}: {exc}") from None
    for r in loaded.rejects:
        log.warning("GSR line %d rejected: %s", r["line"], r["reason"])
    if not loaded.events:
        raise InputError(f"{gsr_path}: no usable GSR records")
    manual = {}
    manual_path = args.manual or cfg.paths.manual
    if manual_path is not None:
        try:
            manual = load_manual_review(_need_file(manual_path, "manual review file").read_text(encoding="utf-8"))
        except ValueError as exc:
            raise InputError(f"{manual_path}: {exc}") from None
    window = cfg.eval.window if args.window is None else args.window
    accepted = [e for e in detected if e.status == ACCEPTED]
    results = [match_event(e, loaded.events, window) for e in accepted]
    scores = score(results, detected, loaded.events, manual)
    payload = {
        "scores": report_json(scores),
        "matches": [{"eventId": r.event_id, "gsrId": r.matched_gsr_id, "stage": r.stage.value,
                     "manual": r.manual_flag, "label": manual.get(r.event_id)} for r in results],
        "gsrRejects": len(loaded.rejects),
        "window": window,
    }
    write_atomic(out / "metrics.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_atomic(out / "metrics.txt", report_text(scores))
    sys.stdout.write(report_text(scores))
    return EXIT_OK


# ---------------------------------------------------------------- plotdata

def streamgraph_rows(events: list[dict], trace: list[dict]) -> list[tuple[str, str, int, float]]:
    """``(day, type, matched documents, volume scaled to the type's maximum)``."""
    docs_of: dict[str, list[str]] = {}
    for row in trace:
        if row.get("kind") == "event_docs":
            docs_of.update(row["event_docs"])
    volume: dict[tuple[str, str], set[str]] = {}
    for e in events:
        if e.get("status") != ACCEPTED or not e.get("type"):
            continue
        volume.setdefault((e["date"], e["type"]), set()).update(docs_of.get(e["event_id"], ()))
    peak: dict[str, int] = {}
    for (_, etype), docs in volume.items():
        peak[etype] = max(peak.get(etype, 0), len(docs))
    rows = []
    for (day, etype), docs in sorted(volume.items()):
        n = len(docs)
        rows.append((day, etype, n, n / peak[etype] if peak[etype] else 0.0))
    return rows


def cmd_plotdata(args, cfg: PipelineConfig) -> int:
    out = cfg.paths.output_dir
    events = _read_jsonl_file(Path(args.events) if args.events else out / "events.jsonl", "events file")
    trace = _read_jsonl_file(Path(args.trace) if args.trace else out / "trace.jsonl", "trace file")
    try:
        rows = streamgraph_rows(events, trace)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed events or trace: {exc}") from None
    write_atomic(out / "streamgraph.csv",
                 _csv(["day", "type", "documents", "normalized"], [(d, t, n, repr(v)) for d, t, n, v in rows]))
    cloud_dir = out / "wordclouds"
    cloud_dir.mkdir(parents=True, exist_ok=True)
    for e in events:
        if e.get("status") != ACCEPTED:
            continue
        terms = sorted(((q["surface"], q["weight"]) for q in e.get("queries", [])), key=lambda t: (-t[1], t[0]))
        write_atomic(cloud_dir / f"{e['event_id']}.csv", _csv(["term", "weight"], [(t, repr(w)) for t, w in terms]))
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="TOML configuration file")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes for detect")
    common.add_argument("--output-dir", type=Path, default=argparse.SUPPRESS, help="artifact directory")
    common.add_argument("--seed-category", default=argparse.SUPPRESS,
                        help="dataBreach, ddos, accountHijacking or all")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)

    p = _Parser(prog="attackwatch", description="Cyber-attack event detection from parsed social-media text.",
                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="build the per-day corpus store")
    s.add_argument("--texts", type=Path, help="JSON Lines documents (id, timestamp, text)")
    s.add_argument("--parses", type=Path, help="CoNLL-U parses keyed by '# newdoc id'")
    s.add_argument("--store", type=Path, help="store directory (default: <output-dir>/store)")

    s = sub.add_parser("detect", parents=[common], help="run query expansion and event extraction")
    s.add_argument("--embeddings", type=Path, help="word2vec-style text vectors (optionally gzipped)")
    s.add_argument("--store", type=Path)

    s = sub.add_parser("baseline", parents=[common], help="keyword burst baseline")
    s.add_argument("--keywords", type=Path, help="one keyword per line (default: packaged list)")
    s.add_argument("--counts", type=Path, help="CSV of day,keyword,count,total instead of the store")
    s.add_argument("--store", type=Path)

    s = sub.add_parser("evaluate", parents=[common], help="score events against a GSR file")
    s.add_argument("--events", type=Path, help="events JSON Lines (default: <output-dir>/events.jsonl)")
    s.add_argument("--gsr", type=Path)
    s.add_argument("--manual", type=Path, help="manual review CSV (eventId,label,note)")
    s.add_argument("--window", type=int, help="date window in days (default 1)")

    s = sub.add_parser("plotdata", parents=[common], help="streamgraph and word-cloud CSVs")
    s.add_argument("--events", type=Path)
    s.add_argument("--trace", type=Path)
    return p


COMMANDS = {"ingest": cmd_ingest, "detect": cmd_detect, "baseline": cmd_baseline,
            "evaluate": cmd_evaluate, "plotdata": cmd_plotdata}


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    changes = {}
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise InputError("--jobs must be at least 1")
        changes["jobs"] = args.jobs
    if getattr(args, "seed_category", None) is not None:
        changes["seed_category"] = args.seed_category
    if getattr(args, "output_dir", None) is not None:
        changes["paths"] = dataclasses.replace(cfg.paths, output_dir=args.output_dir)
    return dataclasses.replace(cfg, **changes)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(args, "log_level", "WARNING"), format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    try:
        if getattr(args, "config", None) is not None and not Path(args.config).is_file():
            raise InputError(f"config file not found: {args.config}")
        cfg = resolve_config(args)
        _categories(cfg.seed_category)
        return COMMANDS[args.command](args, cfg)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except ValueError as exc:
        # configuration and loader validation
        log.error("%s", exc)
        return EXIT_INPUT
    except AssertionError as exc:
        log.error("internal invariant violated: %s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
