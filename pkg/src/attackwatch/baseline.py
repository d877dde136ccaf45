"""Keyword burst baseline: two-state Kleinberg automaton over daily document counts.

A day becomes a baseline event when enough keywords are in their burst
state at once. Events carry the bursting keyword set and no type.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from importlib import resources
from typing import Iterable, Sequence

from .corpus import TimeSlot, word_tokens


@dataclass(frozen=True)
class KeywordSeries:
    keyword: str
    counts: tuple[int, ...]
    totals: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "totals", tuple(int(t) for t in self.totals))
        if len(self.counts) != len(self.totals):
            raise ValueError(f"{self.keyword!r}: {len(self.counts)} counts but {len(self.totals)} totals")
        for i, (r, d) in enumerate(zip(self.counts, self.totals)):
            if r < 0 or d < 0:
                raise ValueError(f"{self.keyword!r}: negative value on day {i}")
            if r > d:
                raise ValueError(f"{self.keyword!r}: count {r} exceeds total {d} on day {i}")

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class BurstConfig:
    s: float = 2.0
    gamma: float = 1.0
    Tb: int = 36
    strict: bool = False  # require more than Tb keywords instead of at least Tb
    max_rate: float = 0.9999

    def __post_init__(self):
        if not self.s > 1.0:
            raise ValueError("s must exceed 1")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if self.Tb < 1:
            raise ValueError("Tb must be a positive integer")
        if not 0.0 < self.max_rate < 1.0:
            raise ValueError("max_rate must lie in (0, 1)")


@dataclass(frozen=True)
class BaselineEvent:
    date: date
    keywords: tuple[str, ...]

    def to_json(self, event_id: str) -> dict:
        return {
            "event_id": event_id,
            "date": self.date.isoformat(),
            "type": None,
            "status": "accepted",
            "keywords": list(self.keywords),
            "source": "baseline",
        }


def _xlog(x: float, p: float) -> float:
    # x * ln(p) with 0 * ln(0) = 0
    if x == 0:
        return 0.0
    return x * math.log(p)


def _fit_cost(r: int, d: int, p: float) -> float:
    """Negative binomial log-likelihood without the coefficient (it cancels across states)."""
    if d == 0:
        return 0.0
    return -(_xlog(r, p) + _xlog(d - r, 1.0 - p))


def _tie_or_less(a: float, b: float) -> bool:
    # equal-cost paths can differ by rounding (e.g. a burst whose entry cost exactly offsets its gain);
    # treat them as ties so the base state wins
    return a <= b + 1e-9 * max(1.0, abs(a), abs(b))


def rates(series: KeywordSeries, cfg: BurstConfig) -> tuple[float, float]:
    total = sum(series.totals)
    p0 = sum(series.counts) / total if total else 0.0
    return p0, min(cfg.s * p0, cfg.max_rate)


def burst_states(series: KeywordSeries, cfg: BurstConfig | None = None) -> list[int]:
    """Optimal 0/1 state per day (Viterbi, starting in the base state)."""
    cfg = cfg or BurstConfig()
    n = len(series)
    if n == 0:
        raise ValueError("series has no days")
    p0, p1 = rates(series, cfg)
    if p0 == 0.0 or p1 <= p0:
        return [0] * n
    # the automaton sits in state 0 before day one, so bursting on day one also pays entry
    enter = cfg.gamma * math.log(n)
    cost = [0.0, math.inf]
    back: list[tuple[int, int]] = []
    for r, d in zip(series.counts, series.totals):
        c0, c1 = _fit_cost(r, d, p0), _fit_cost(r, d, p1)
        from0 = (0, cost[0]) if _tie_or_less(cost[0], cost[1]) else (1, cost[1])
        via0, via1 = cost[0] + enter, cost[1]
        from1 = (0, via0) if _tie_or_less(via0, via1) else (1, via1)
        back.append((from0[0], from1[0]))
        cost = [from0[1] + c0, from1[1] + c1]
    state = 0 if _tie_or_less(cost[0], cost[1]) else 1
    states = [state]
    for t in range(n - 1, 0, -1):
        state = back[t][state]
        states.append(state)
    return states[::-1]


def intervals(states: Sequence[int]) -> list[tuple[int, int]]:
    out = []
    start = None
    for i, s in enumerate(states):
        if s and start is None:
            start = i
        elif not s and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(states) - 1))
    return out


def kleinberg_bursts(series: KeywordSeries, cfg: BurstConfig | None = None) -> list[tuple[int, int]]:
    """Maximal burst intervals as inclusive ``(start, end)`` day offsets."""
    if not any(series.counts):
        return []
    return intervals(burst_states(series, cfg))


def baseline_events(all_series: Sequence[KeywordSeries], cfg: BurstConfig | None = None,
                    days: Sequence[date] | None = None) -> list[BaselineEvent]:
    """Days on which at least ``Tb`` keywords burst (more than ``Tb`` when strict)."""
    cfg = cfg or BurstConfig()
    if not all_series:
        return []
    n = len(all_series[0])
    if any(len(s) != n for s in all_series):
        raise ValueError("keyword series are not aligned on one day axis")
    if days is not None and len(days) != n:
        raise ValueError(f"{len(days)} day labels for {n} days")
    bursting: list[list[str]] = [[] for _ in range(n)]
    for s in all_series:
        for a, b in kleinberg_bursts(s, cfg):
            for t in range(a, b + 1):
                bursting[t].append(s.keyword)
    out = []
    for t, kws in enumerate(bursting):
        size = len(kws)
        if size > cfg.Tb or (size == cfg.Tb and not cfg.strict):
            label = days[t] if days is not None else t
            out.append(BaselineEvent(label, tuple(sorted(kws))))
    return out


def default_keywords() -> list[str]:
    text = resources.files("attackwatch").joinpath("data/cyber_keywords.txt").read_text(encoding="utf-8")
    return parse_keywords(text)


def parse_keywords(text: str) -> list[str]:
    seen = dict.fromkeys(w.strip().lower() for w in text.splitlines()
                         if w.strip() and not w.lstrip().startswith("#"))
    return list(seen)


def _doc_terms(doc) -> set[str]:
    return set(doc.lemma_tokens()) | set(word_tokens(doc.norm_text))


def daily_series(slots: Sequence[TimeSlot], keywords: Iterable[str]) -> tuple[list[date], list[KeywordSeries]]:
    """Per-keyword counts of documents mentioning the keyword, one entry per slot."""
    keywords = list(keywords)
    days = [s.day for s in slots]
    counts = {k: [0] * len(slots) for k in keywords}
    totals = []
    for t, slot in enumerate(slots):
        totals.append(slot.doc_count)
        for doc in slot.documents:
            terms = _doc_terms(doc)
            for k in keywords:
                if k in terms:
                    counts[k][t] += 1
    return days, [KeywordSeries(k, tuple(counts[k]), tuple(totals)) for k in keywords]


def series_from_csv(stream) -> tuple[list[date], list[KeywordSeries]]:
    """Read ``day,keyword,count,total`` rows; missing (day, keyword) cells count as zero."""
    text = stream if isinstance(stream, str) else stream.read()
    reader = csv.DictReader(io.StringIO(text))
    need = {"day", "keyword", "count", "total"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValueError(f"count CSV needs columns {sorted(need)}")
    cells: dict[tuple[date, str], int] = {}
    totals: dict[date, int] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            day = date.fromisoformat(row["day"].strip())
            count, total = int(row["count"]), int(row["total"])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if totals.setdefault(day, total) != total:
            raise ValueError(f"line {lineno}: conflicting total for {day}")
        cells[(day, row["keyword"].strip().lower())] = count
    days = sorted(totals)
    kws = sorted({k for _, k in cells})
    series = [KeywordSeries(k, tuple(cells.get((d, k), 0) for d in days), tuple(totals[d] for d in days))
              for k in kws]
    return days, series
