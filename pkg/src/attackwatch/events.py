"""From a converged query set to typed, de-duplicated event records."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .dqe import CATEGORY_ORDER, EXPANDED, EventType, Query, QuerySet, default_stopwords
from .embeddings import EmbeddingTable, cosine, query_vector

log = logging.getLogger(__name__)

ACCEPTED = "accepted"
DUPLICATE = "duplicate"
REJECTED = "rejected"
UNSPECIFIED = "unspecified"

MEDIAN = "median"


@dataclass(frozen=True)
class ApConfig:
    damping: float = 0.9
    max_iter: int = 200
    convergence_iter: int = 15
    preference: float | str = MEDIAN

    def __post_init__(self):
        if not 0.5 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0.5, 1)")
        if self.max_iter < 1 or self.convergence_iter < 1:
            raise ValueError("max_iter and convergence_iter must be positive")
        if self.preference != MEDIAN and not isinstance(self.preference, (int, float)):
            raise ValueError("preference must be 'median' or a number")


@dataclass(frozen=True)
class EventConfig:
    type_floor: float = 0.2
    dup_window_days: int = 3
    dup_jaccard: float = 0.5
    reject_percentile: float = 25.0


@dataclass(frozen=True)
class Cluster:
    exemplar: Query
    members: tuple[Query, ...]

    @property
    def weight(self) -> float:
        return math.fsum(q.weight for q in self.members)


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    queries: tuple[Query, ...]
    exemplar: Query
    date: date
    type: EventType | None
    type_score: float
    status: str
    weight: float = 0.0
    source: str | None = None  # seed category whose expansion produced the event

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "date": self.date.isoformat(),
            "type": self.type.value if self.type else None,
            "status": self.status,
            "exemplar": self.exemplar.surface,
            "exemplar_lemmas": self.exemplar.lemmas,
            "queries": [{"surface": q.surface, "weight": q.weight} for q in self.queries],
            "typeScore": self.type_score,
            "weight": self.weight,
            "source": self.source,
        }


def maximal_queries(queries: QuerySet) -> QuerySet:
    """Drop queries whose lemma multiset sits inside another query's.

    Of several queries with the same multiset, the heaviest survives (then the
    lexicographically smaller surface).
    """
    qs = list(queries)
    bags = [Counter(q.lemmas) for q in qs]
    keep = []
    for i, q in enumerate(qs):
        dominated = False
        for j, r in enumerate(qs):
            if i == j or not _sub_multiset(bags[i], bags[j]):
                continue
            if bags[i] != bags[j] or r.weight > q.weight or (r.weight == q.weight and r.surface < q.surface):
                dominated = True
                break
        if not dominated:
            keep.append(q)
    return QuerySet(tuple(keep), queries.iteration)


def _sub_multiset(a: Counter, b: Counter) -> bool:
    return all(b[k] >= v for k, v in a.items())


def _preference(sim: np.ndarray, pref) -> float:
    n = sim.shape[0]
    if pref != MEDIAN:
        return float(pref)
    off = sim[~np.eye(n, dtype=bool)]
    return float(np.median(off))


def affinity_propagation(sim: np.ndarray, cfg: ApConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Frey-Dueck message passing on a similarity matrix.

    Returns ``(exemplar indices, label per point)`` where the label is the
    exemplar index the point is assigned to. Ties are broken by a fixed-seed
    jitter, so results are reproducible.
    """
    cfg = cfg or ApConfig()
    S = np.array(sim, dtype=np.float64)
    n = S.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    if n == 1:
        return np.array([0]), np.array([0])
    pref = _preference(S, cfg.preference)
    S.flat[:: n + 1] = pref
    off = S[~np.eye(n, dtype=bool)]
    if np.all(off == off[0]) and off[0] == pref:
        # fully degenerate: every point is equally good as its own exemplar
        idx = np.arange(n)
        return idx, idx.copy()
    if np.all(off == off[0]) and off[0] > pref:
        return np.array([0]), np.zeros(n, dtype=int)

    # legacy generator on purpose: same tie-breaking draw as the common reference implementation
    jitter = np.random.RandomState(0).standard_normal((n, n))
    S = S + (np.finfo(np.float64).eps * S + np.finfo(np.float64).tiny * 100) * jitter

    A = np.zeros((n, n))
    R = np.zeros((n, n))
    rows = np.arange(n)
    history = np.zeros((n, cfg.convergence_iter), dtype=bool)
    lam = cfg.damping
    for it in range(cfg.max_iter):
        AS = A + S
        first = np.argmax(AS, axis=1)
        best = AS[rows, first]
        AS[rows, first] = -np.inf
        second = AS.max(axis=1)
        Rnew = S - best[:, None]
        Rnew[rows, first] = S[rows, first] - second
        R = lam * R + (1 - lam) * Rnew

        Rp = np.maximum(R, 0)
        Rp.flat[:: n + 1] = R.flat[:: n + 1]
        Anew = Rp.sum(axis=0)[None, :] - Rp
        self_avail = Anew.diagonal().copy()
        Anew = np.minimum(Anew, 0)
        Anew.flat[:: n + 1] = self_avail
        A = lam * A + (1 - lam) * Anew

        is_ex = (A.diagonal() + R.diagonal()) > 0
        history[:, it % cfg.convergence_iter] = is_ex
        if it >= cfg.convergence_iter:
            stable = history.sum(axis=1)
            converged = np.all((stable == cfg.convergence_iter) | (stable == 0))
            if converged and is_ex.any():
                break

    exemplars = np.flatnonzero(is_ex)
    if exemplars.size == 0:
        # no point claimed itself: fall back to the single most central point
        centre = int(np.argmax(S.sum(axis=0)))
        return np.array([centre]), np.full(n, centre)
    labels = np.argmax(S[:, exemplars], axis=1)
    labels[exemplars] = np.arange(exemplars.size)
    for k in range(exemplars.size):
        members = np.flatnonzero(labels == k)
        inner = S[np.ix_(members, members)].sum(axis=0)
        exemplars[k] = members[int(np.argmax(inner))]
    labels = np.argmax(S[:, exemplars], axis=1)
    labels[exemplars] = np.arange(exemplars.size)
    return exemplars, exemplars[labels]


def similarity_matrix(vectors: Sequence[np.ndarray]) -> np.ndarray:
    n = len(vectors)
    S = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            S[i, j] = S[j, i] = cosine(vectors[i], vectors[j])
    return S


def cluster_queries(queries: QuerySet, table: EmbeddingTable, cfg: ApConfig | None = None) -> list[Cluster]:
    """Affinity-propagation clusters over summed lemma vectors (cosine similarity).

    Queries with no in-vocabulary lemma are left out. Queries whose vectors
    are parallel are merged before message passing and re-expanded after.
    """
    usable, vecs = [], []
    for q in queries:
        v = query_vector(q.tree, table)
        if v is None or not np.any(v):
            log.info("query %r has no embedded lemma; not clustered", q.surface)
            continue
        usable.append(q)
        vecs.append(v)
    if not usable:
        return []

    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i, v in enumerate(vecs):
        for g, rep in zip(groups, reps):
            if cosine(v, rep) >= 1.0 - 1e-12:
                g.append(i)
                break
        else:
            groups.append([i])
            reps.append(v)

    exemplars, labels = affinity_propagation(similarity_matrix(reps), cfg)
    clusters = []
    for ex in exemplars:
        members = [i for g, lab in zip(groups, labels) if lab == ex for i in g]
        head = groups[ex][0]
        clusters.append(Cluster(usable[head], tuple(usable[i] for i in sorted(members))))
    clusters.sort(key=lambda c: usable.index(c.exemplar))
    return clusters


def assign_type(exemplar: Query, seeds: QuerySet, table: EmbeddingTable,
                floor: float = 0.2) -> tuple[EventType | None, float]:
    """Category of the seed most cosine-similar to the exemplar.

    Returns ``(None, score)`` when the best score falls below ``floor`` and
    ``(None, nan)`` when the exemplar has no usable vector.
    """
    v = query_vector(exemplar.tree, table)
    if v is None or not np.any(v):
        return None, math.nan
    best_cat, best = None, -math.inf
    for seed in seeds:
        sv = query_vector(seed.tree, table)
        if sv is None or seed.category is None:
            continue
        s = cosine(v, sv)
        if math.isnan(s):
            continue
        if s > best or (s == best and CATEGORY_ORDER.index(seed.category) < CATEGORY_ORDER.index(best_cat)):
            best_cat, best = seed.category, s
    if best_cat is None:
        return None, math.nan
    if best < floor:
        return None, best
    return best_cat, best


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class DedupState:
    """Accepted events seen so far; feed it days in ascending order."""

    accepted: list[EventRecord] = field(default_factory=list)
    issued: Counter = field(default_factory=Counter)

    def next_id(self, day: date) -> str:
        self.issued[day] += 1
        return f"{day.isoformat()}-{self.issued[day]:03d}"

    def duplicate_of(self, day: date, etype: EventType, lemmas: set[str], cfg: EventConfig) -> EventRecord | None:
        for prev in reversed(self.accepted):
            gap = (day - prev.date).days
            if 0 <= gap <= cfg.dup_window_days and prev.type == etype \
                    and jaccard(lemmas, set(prev.exemplar.lemmas)) >= cfg.dup_jaccard:
                return prev
        return None


def emit_events(clusters: Sequence[Cluster], day: date, seeds: QuerySet, table: EmbeddingTable,
                dedup: DedupState, cfg: EventConfig | None = None, source: str | None = None) -> list[EventRecord]:
    """One record per cluster; status precedence is unspecified > duplicate > rejected > accepted."""
    cfg = cfg or EventConfig()
    if not clusters:
        return []
    floor = float(np.percentile([c.weight for c in clusters], cfg.reject_percentile))
    out = []
    for c in clusters:
        etype, score = assign_type(c.exemplar, seeds, table, cfg.type_floor)
        if etype is None:
            status = UNSPECIFIED
        elif dedup.duplicate_of(day, etype, set(c.exemplar.lemmas), cfg) is not None:
            status = DUPLICATE
        elif c.weight < floor:
            status = REJECTED
        else:
            status = ACCEPTED
        rec = EventRecord(dedup.next_id(day), c.members, c.exemplar, day, etype, score, status, c.weight, source)
        if status == ACCEPTED:
            dedup.accepted.append(rec)
        out.append(rec)
    return out


def detect_events(final: QuerySet, day: date, seeds: QuerySet, table: EmbeddingTable, dedup: DedupState,
                  ap: ApConfig | None = None, cfg: EventConfig | None = None,
                  source: str | None = None) -> list[EventRecord]:
    """Expanded queries -> maximal set -> clusters -> typed records."""
    seed_surfaces = set(seeds.surfaces)
    expanded = QuerySet(tuple(q for q in final if q.origin == EXPANDED and q.surface not in seed_surfaces),
                        final.iteration)
    if not len(expanded):
        return []
    clusters = cluster_queries(maximal_queries(expanded), table, ap)
    return emit_events(clusters, day, seeds, table, dedup, cfg, source)


def entity_lemmas(lemmas: Sequence[str], stopwords=None) -> list[str]:
    stop = default_stopwords() if stopwords is None else stopwords
    return [lem for lem in dict.fromkeys(lemmas) if lem not in stop]


def word_cloud(event: EventRecord) -> list[tuple[str, float]]:
    return sorted(((q.surface, q.weight) for q in event.queries), key=lambda t: (-t[1], t[0]))
