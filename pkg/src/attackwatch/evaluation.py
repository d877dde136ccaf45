"""Matching detected events against GSR incidents and per-type precision/recall."""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

from .corpus import normalize_text, word_tokens
from .dqe import CATEGORY_ORDER, EventType, default_stopwords, parse_category
from .events import ACCEPTED, EventRecord

log = logging.getLogger(__name__)

GSR_FIELDS = ("gsrId", "date", "type", "victim", "description", "source")
ALL = "all"


class Stage(str, enum.Enum):
    ENTITY_FAIL = "entityFail"
    DATE_FAIL = "dateFail"
    TYPE_FAIL = "typeFail"
    MATCHED = "matched"


@dataclass(frozen=True)
class GsrEvent:
    gsr_id: str
    date: date
    type: EventType
    victim: str
    description: str
    source: str = ""

    @property
    def tokens(self) -> frozenset[str]:
        return frozenset(word_tokens(normalize_text(f"{self.victim} {self.description}")))


@dataclass(frozen=True)
class EvalEvent:
    """What matching needs from a detection: id, day, type and entity terms.

    Baseline detections have no type; their terms are the bursting keywords.
    """

    event_id: str
    date: date
    type: EventType | None
    terms: tuple[str, ...]
    status: str = ACCEPTED

    @classmethod
    def from_record(cls, rec: EventRecord) -> "EvalEvent":
        return cls(rec.event_id, rec.date, rec.type, tuple(rec.exemplar.lemmas), rec.status)

    @classmethod
    def from_json(cls, obj: Mapping) -> "EvalEvent":
        try:
            terms = obj.get("exemplar_lemmas") or obj.get("keywords")
            if terms is None:
                raise KeyError("exemplar_lemmas or keywords")
            etype = parse_category(obj["type"]) if obj.get("type") else None
            return cls(str(obj["event_id"]), date.fromisoformat(obj["date"]), etype,
                       tuple(str(t) for t in terms), obj.get("status", ACCEPTED))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed event record: {exc}") from None


@dataclass(frozen=True)
class MatchResult:
    event_id: str
    matched_gsr_id: str | None
    stage: Stage
    manual_flag: bool = False

    def __post_init__(self):
        if (self.matched_gsr_id is not None) != (self.stage is Stage.MATCHED):
            raise ValueError("matched_gsr_id must be set exactly when stage is matched")


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f: float
    tp: int
    fp: int
    matched_gsr: int
    gsr_total: int
    matched_yes: int
    matched_no: int

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f": self.f, "tp": self.tp, "fp": self.fp,
                "matchedGsr": self.matched_gsr, "gsrTotal": self.gsr_total,
                "matchedYes": self.matched_yes, "matchedNo": self.matched_no}


@dataclass
class GsrLoad:
    events: list[GsrEvent] = field(default_factory=list)
    rejects: list[dict] = field(default_factory=list)


def read_gsr(stream) -> GsrLoad:
    """Parse a GSR CSV, keeping per-row diagnostics for rejected rows."""
    text = stream if isinstance(stream, str) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8-sig")
    out = GsrLoad()
    if not text.strip():
        return out
    reader = csv.DictReader(io.StringIO(text.lstrip("﻿")))
    missing = [f for f in GSR_FIELDS if f not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"GSR header lacks columns: {', '.join(missing)}")
    for lineno, row in enumerate(reader, start=2):
        try:
            day = date.fromisoformat((row["date"] or "").strip())
        except ValueError:
            out.rejects.append({"line": lineno, "reason": f"unparseable date {row['date']!r}"})
            continue
        try:
            etype = parse_category((row["type"] or "").strip())
        except ValueError:
            out.rejects.append({"line": lineno, "reason": f"unknown type {row['type']!r}"})
            continue
        out.events.append(GsrEvent(row["gsrId"].strip(), day, etype, row["victim"] or "",
                                   row["description"] or "", (row["source"] or "").strip()))
    return out


def load_gsr(stream) -> list[GsrEvent]:
    res = read_gsr(stream)
    for r in res.rejects:
        log.warning("GSR line %d rejected: %s", r["line"], r["reason"])
    return res.events


def _as_eval(e) -> EvalEvent:
    return e if isinstance(e, EvalEvent) else EvalEvent.from_record(e)


def match_event(e: EventRecord | EvalEvent, gsr: Sequence[GsrEvent], window: int = 1,
                stopwords: Iterable[str] | None = None) -> MatchResult:
    """Entity, then date window, then type. Untyped detections skip the type step."""
    ev = _as_eval(e)
    stop = default_stopwords() if stopwords is None else frozenset(stopwords)
    terms = {normalize_text(t) for t in ev.terms} - stop - {""}
    me = [g for g in gsr if terms & g.tokens]
    if not me:
        return MatchResult(ev.event_id, None, Stage.ENTITY_FAIL, manual_flag=True)
    fme = [g for g in me if abs((g.date - ev.date).days) <= window]
    if not fme:
        return MatchResult(ev.event_id, None, Stage.DATE_FAIL)
    if ev.type is not None:
        fme = [g for g in fme if g.type == ev.type]
        if not fme:
            return MatchResult(ev.event_id, None, Stage.TYPE_FAIL)
    best = min(fme, key=lambda g: (abs((g.date - ev.date).days), g.gsr_id))
    return MatchResult(ev.event_id, best.gsr_id, Stage.MATCHED)


def load_manual_review(stream) -> dict[str, str]:
    """``eventId,label,note`` rows with label TP or FP."""
    text = stream if isinstance(stream, str) else stream.read()
    labels: dict[str, str] = {}
    if not text.strip():
        return labels
    reader = csv.DictReader(io.StringIO(text.lstrip("﻿")))
    if reader.fieldnames is None or not {"eventId", "label"} <= set(reader.fieldnames):
        raise ValueError("manual review CSV needs eventId and label columns")
    for lineno, row in enumerate(reader, start=2):
        label = (row["label"] or "").strip().upper()
        if label not in ("TP", "FP"):
            raise ValueError(f"line {lineno}: label must be TP or FP, got {row['label']!r}")
        labels[row["eventId"].strip()] = label
    return labels


def _prf(tp: int, fp: int, hit: int, total: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = hit / total if total else 0.0
    f = 2 * p * r / (p + r) if p and r else 0.0
    return p, r, f


def score(results: Sequence[MatchResult], detected: Sequence[EventRecord | EvalEvent], gsr: Sequence[GsrEvent],
          manual: Mapping[str, str] | None = None) -> dict[str, TypeScore]:
    """Per-type and overall (``"all"``) precision, recall and F over accepted detections.

    Untyped detections only enter the overall row.
    """
    manual = manual or {}
    by_id = {r.event_id: r for r in results}
    gsr_type = {g.gsr_id: g.type for g in gsr}
    rows: dict[str, dict] = {k: {"tp": 0, "fp": 0, "yes": 0, "no": 0, "hits": set()}
                             for k in [c.value for c in CATEGORY_ORDER] + [ALL]}
    for e in sorted((_as_eval(x) for x in detected), key=lambda x: x.event_id):
        if e.status != ACCEPTED:
            continue
        res = by_id.get(e.event_id)
        if res is None:
            raise ValueError(f"accepted event {e.event_id} has no match result")
        keys = [ALL] + ([e.type.value] if e.type else [])
        if res.stage is Stage.MATCHED:
            tp, yes = True, True
        else:
            yes = False
            label = manual.get(e.event_id)
            if label is None:
                log.warning("event %s is unmatched and unlabelled; counted as a false positive", e.event_id)
            tp = label == "TP"
        for k in keys:
            row = rows[k]
            row["tp" if tp else "fp"] += 1
            row["yes" if yes else "no"] += 1
            if yes:
                row["hits"].add(res.matched_gsr_id)
    totals = {c.value: sum(1 for g in gsr if g.type == c) for c in CATEGORY_ORDER}
    totals[ALL] = len(gsr)
    out = {}
    for k, row in rows.items():
        hits = row["hits"] if k == ALL else {h for h in row["hits"] if gsr_type.get(h) and gsr_type[h].value == k}
        p, r, f = _prf(row["tp"], row["fp"], len(hits), totals[k])
        out[k] = TypeScore(p, r, f, row["tp"], row["fp"], len(hits), totals[k], row["yes"], row["no"])
    return out


def report_json(scores: Mapping[str, TypeScore]) -> dict:
    return {k: v.to_json() for k, v in scores.items()}


def report_text(scores: Mapping[str, TypeScore]) -> str:
    lines = [f"{'type':<18}{'P':>7}{'R':>7}{'F':>7}{'TP':>6}{'FP':>6}{'GSR hit':>9}{'GSR':>6}{'yes':>6}{'no':>6}"]
    for k, s in scores.items():
        lines.append(f"{k:<18}{s.precision:>7.3f}{s.recall:>7.3f}{s.f:>7.3f}{s.tp:>6}{s.fp:>6}"
                     f"{s.matched_gsr:>9}{s.gsr_total:>6}{s.matched_yes:>6}{s.matched_no:>6}")
    return "\n".join(lines) + "\n"
