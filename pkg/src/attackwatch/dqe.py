"""Dynamic typed query expansion over one day of parsed documents.

Starting from seed dependency queries, each round matches the queries
against the slot with the tree kernel, lifts the best-anchored subtree out of
every matched sentence, scores the candidates by how concentrated their terms
are in the matched documents, and keeps the top ``K``. Seeds stay in the set
throughout. The loop stops once a round adds no query surface that has not
been seen before.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import DepTree, TimeSlot, Token, TokenKind
from .depkernel import KernelConfig, TreeKernel, best_anchor
from .embeddings import EmbeddingTable, SemanticMatcher


class EventType(str, enum.Enum):
    DATA_BREACH = "dataBreach"
    DDOS = "ddos"
    ACCOUNT_HIJACKING = "accountHijacking"


CATEGORY_ORDER = (EventType.DATA_BREACH, EventType.DDOS, EventType.ACCOUNT_HIJACKING)

SEED = "seed"
EXPANDED = "expanded"

# (phrase, [(surface, lemma, head, deprel), ...]); participles head their noun
_SEED_TABLE: dict[EventType, list[tuple[str, list[tuple[str, str, int, str]]]]] = {
    EventType.DATA_BREACH: [
        ("data leak", [("data", "data", 2, "compound"), ("leak", "leak", 0, "root")]),
        ("security breach", [("security", "security", 2, "compound"), ("breach", "breach", 0, "root")]),
        ("information stolen", [("information", "information", 2, "nsubj:pass"), ("stolen", "steal", 0, "root")]),
        ("password stolen", [("password", "password", 2, "nsubj:pass"), ("stolen", "steal", 0, "root")]),
        ("hacker stole", [("hacker", "hacker", 2, "nsubj"), ("stole", "steal", 0, "root")]),
    ],
    EventType.DDOS: [
        ("DDoS attack", [("DDoS", "ddos", 2, "compound"), ("attack", "attack", 0, "root")]),
        ("slow internet", [("slow", "slow", 2, "amod"), ("internet", "internet", 0, "root")]),
        ("network infiltrated", [("network", "network", 2, "nsubj:pass"), ("infiltrated", "infiltrate", 0, "root")]),
        ("malicious activity", [("malicious", "malicious", 2, "amod"), ("activity", "activity", 0, "root")]),
        ("vulnerability exploit", [("vulnerability", "vulnerability", 2, "compound"), ("exploit", "exploit", 0, "root")]),
        ("phishing attack", [("phishing", "phishing", 2, "compound"), ("attack", "attack", 0, "root")]),
    ],
    EventType.ACCOUNT_HIJACKING: [
        ("unauthorized access", [("unauthorized", "unauthorized", 2, "amod"), ("access", "access", 0, "root")]),
        ("stolen identity", [("stolen", "steal", 0, "root"), ("identity", "identity", 1, "obj")]),
        ("hacked account", [("hacked", "hack", 0, "root"), ("account", "account", 1, "obj")]),
    ],
}


@dataclass(frozen=True)
class Query:
    tree: DepTree
    weight: float = 0.0
    origin: str = EXPANDED
    iteration: int = 0
    category: EventType | None = None
    phrase: str | None = None
    surface: str = field(init=False)

    def __post_init__(self):
        if len(self.tree) == 0:
            raise ValueError("empty query tree")
        object.__setattr__(self, "surface", self.tree.surface)

    @property
    def lemmas(self) -> list[str]:
        return self.tree.lemmas

    def to_json(self) -> dict:
        return {"surface": self.surface, "weight": self.weight, "origin": self.origin, "iteration": self.iteration}


@dataclass(frozen=True)
class QuerySet:
    queries: tuple[Query, ...]
    iteration: int = 0

    def __post_init__(self):
        surfaces = [q.surface for q in self.queries]
        if len(set(surfaces)) != len(surfaces):
            raise ValueError("duplicate query surfaces in a QuerySet")

    def __iter__(self) -> Iterator[Query]:
        return iter(self.queries)

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def surfaces(self) -> list[str]:
        return [q.surface for q in self.queries]

    def get(self, surface: str) -> Query | None:
        return next((q for q in self.queries if q.surface == surface), None)

    def to_tsv(self) -> str:
        rows = ["surface\tweight\titeration\torigin"]
        rows += [f"{q.surface}\t{q.weight!r}\t{q.iteration}\t{q.origin}" for q in self.queries]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class DocRef:
    doc_id: str
    sentence: int
    query: str
    score: float


@dataclass(frozen=True)
class TargetDomain:
    refs: tuple[DocRef, ...]
    iteration: int = 0
    # every (doc position, sentence, query position, score) at or above the threshold
    pairs: tuple[tuple[int, int, int, float], ...] = ()

    def __len__(self) -> int:
        return len(self.refs)

    @property
    def doc_ids(self) -> list[str]:
        return sorted({r.doc_id for r in self.refs})


@dataclass(frozen=True)
class DqeConfig:
    top_k: int = 20
    max_iterations: int = 10
    tau_match: float = 0.35
    kernel: KernelConfig = field(default_factory=KernelConfig)
    smoothing: float = 0.5
    max_subtree_nodes: int = 12
    # "tokens": smoothed term distributions; "documents": document frequency over document count
    probability_base: str = "tokens"

    def __post_init__(self):
        if self.top_k < 1 or self.max_iterations < 1:
            raise ValueError("top_k and max_iterations must be >= 1")
        if not 0.0 < self.tau_match <= 1.0:
            raise ValueError("tau_match must lie in (0, 1]")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if self.max_subtree_nodes < 1:
            raise ValueError("max_subtree_nodes must be >= 1")
        if self.probability_base not in ("tokens", "documents"):
            raise ValueError(f"unknown probability_base {self.probability_base!r}")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("attackwatch").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def parse_category(name: str | EventType) -> EventType:
    if isinstance(name, EventType):
        return name
    key = name.replace("_", "").replace("-", "").lower()
    for cat in EventType:
        if cat.value.lower() == key or cat.name.replace("_", "").lower() == key:
            return cat
    raise ValueError(f"unknown event category {name!r}")


def seed_queries(category: str | EventType = "all") -> QuerySet:
    """Seed query trees for one category, or for all three with ``"all"``."""
    if isinstance(category, str) and category.lower() == "all":
        cats: Sequence[EventType] = CATEGORY_ORDER
    else:
        cats = [parse_category(category)]
    out = []
    for cat in cats:
        for phrase, words in _SEED_TABLE[cat]:
            tokens = [
                Token(i, surface, lemma, "_", head, deprel, TokenKind.WORD)
                for i, (surface, lemma, head, deprel) in enumerate(words, start=1)
            ]
            out.append(Query(DepTree.from_tokens(tokens), 0.0, SEED, 0, cat, phrase))
    return QuerySet(tuple(out), 0)


class SlotStats:
    """Term counts for one slot plus a lemma -> sentence inverted index."""

    def __init__(self, slot: TimeSlot):
        self.slot = slot
        self.doc_terms: list[Counter] = [Counter(d.lemma_tokens()) for d in slot.documents]
        self.tf: Counter = Counter()
        self.df: Counter = Counter()
        for terms in self.doc_terms:
            self.tf.update(terms)
            self.df.update(terms.keys())
        self.tokens = sum(self.tf.values())
        self.vocabulary = sorted(self.tf)
        self.index: dict[str, list[tuple[int, int]]] = {}
        for dpos, doc in enumerate(slot.documents):
            for spos, tree in enumerate(doc.trees):
                for lemma in dict.fromkeys(tree.lemmas):
                    self.index.setdefault(lemma, []).append((dpos, spos))

    @property
    def vocab_size(self) -> int:
        return len(self.tf)


class ExpansionEngine:
    """Per-slot state shared by the expansion steps: kernel, statistics, caches."""

    def __init__(self, slot: TimeSlot, cfg: DqeConfig | None = None, table: EmbeddingTable | None = None,
                 stopwords: Iterable[str] | None = None):
        self.slot = slot
        self.cfg = cfg or DqeConfig()
        self.table = table
        self.matcher = SemanticMatcher(table, self.cfg.kernel.sem_eq)
        self.kernel = TreeKernel(self.cfg.kernel, matcher=self.matcher)
        self.stats = SlotStats(slot)
        self.stopwords = default_stopwords() if stopwords is None else frozenset(stopwords)
        self._equiv: dict[str, list[str]] = {}
        self._unit = None

    def _vocab_units(self):
        if self._unit is None:
            words = [w for w in self.stats.index if self.table is not None and w in self.table]
            mat = np.array([self.table.get(w) for w in words], dtype=np.float64).reshape(len(words), -1)
            norms = np.linalg.norm(mat, axis=1) if len(words) else np.zeros(0)
            keep = norms > 0
            self._unit = ([w for w, k in zip(words, keep) if k], mat[keep] / norms[keep, None] if len(words) else mat)
        return self._unit

    def equivalents(self, lemma: str) -> list[str]:
        """Slot lemmas that may match ``lemma``; a superset of the exact ``sem_eq`` set."""
        hit = self._equiv.get(lemma)
        if hit is not None:
            return hit
        out = set()
        if self.cfg.kernel.sem_eq.fallback == "exactLemma" and lemma in self.stats.index:
            out.add(lemma)
        vec = self.table.get(lemma) if self.table is not None else None
        if vec is not None and np.any(vec):
            words, unit = self._vocab_units()
            if words:
                sims = unit @ (vec / np.linalg.norm(vec))
                # loose prefilter; the exact decision happens in the kernel
                for i in np.nonzero(sims >= self.cfg.kernel.sem_eq.threshold - 1e-9)[0]:
                    out.add(words[i])
        hit = sorted(out)
        self._equiv[lemma] = hit
        return hit

    def candidate_sentences(self, q: Query) -> list[tuple[int, int]]:
        if self.cfg.kernel.literal:
            return [(dp, sp) for dp, d in enumerate(self.slot.documents) for sp in range(len(d.trees))]
        cands: set[tuple[int, int]] = set()
        for lemma in dict.fromkeys(q.lemmas):
            for w in self.equivalents(lemma):
                cands.update(self.stats.index.get(w, ()))
        return sorted(cands)

    def sentence(self, dpos: int, spos: int) -> DepTree:
        return self.slot.documents[dpos].trees[spos]

    def score(self, q: Query, dpos: int, spos: int) -> float:
        d = self.sentence(dpos, spos)
        raw = self.kernel.raw(q.tree, d)
        return self.kernel.normalize(raw, q.tree, d)

    def target_domain(self, queries: QuerySet) -> TargetDomain:
        tau = self.cfg.tau_match
        pairs = []
        best: dict[tuple[int, int], tuple[float, int]] = {}
        for qpos, q in enumerate(queries):
            for dpos, spos in self.candidate_sentences(q):
                s = self.score(q, dpos, spos)
                if s >= tau:
                    pairs.append((dpos, spos, qpos, s))
                    prev = best.get((dpos, spos))
                    if prev is None or s > prev[0]:
                        best[(dpos, spos)] = (s, qpos)
        pairs.sort(key=lambda p: (p[0], p[1], p[2]))
        refs = tuple(
            DocRef(self.slot.documents[dp].doc_id, sp, queries.queries[qp].surface, s)
            for (dp, sp), (s, qp) in sorted(best.items())
        )
        return TargetDomain(refs, queries.iteration, tuple(pairs))

    def extract_candidate(self, q: Query, d: DepTree, iteration: int | None = None) -> Query:
        _, peak, _ = self.kernel.tables(q.tree, d)
        anchor = best_anchor(peak)
        if anchor is None:
            return q
        sub = d.subtree(anchor, self.cfg.max_subtree_nodes)
        return Query(sub, 0.0, EXPANDED, q.iteration if iteration is None else iteration)

    def domain_doc_positions(self, domain: TargetDomain) -> list[int]:
        return sorted({p[0] for p in domain.pairs})

    def distributions(self, domain: TargetDomain) -> tuple[Counter, float, Counter, float]:
        """``(counts in D+, size of D+, counts in D, size of D)`` under the configured base."""
        positions = self.domain_doc_positions(domain)
        if self.cfg.probability_base == "documents":
            plus = Counter()
            for p in positions:
                plus.update(self.stats.doc_terms[p].keys())
            return plus, float(len(positions)), self.stats.df, float(len(self.slot.documents))
        plus = Counter()
        for p in positions:
            plus.update(self.stats.doc_terms[p])
        return plus, float(sum(plus.values())), self.stats.tf, float(self.stats.tokens)

    def probability(self, term: str, counts: Counter, size: float) -> float:
        a = self.cfg.smoothing
        return (counts.get(term, 0) + a) / (size + a * self.stats.vocab_size)

    def kl_score(self, term: str, domain: TargetDomain, _dist=None) -> float:
        plus, n_plus, full, n_full = _dist or self.distributions(domain)
        p_plus = self.probability(term, plus, n_plus)
        p_all = self.probability(term, full, n_full)
        return math.log(p_plus / p_all) * p_plus

    def query_weight(self, q: Query, domain: TargetDomain, _dist=None) -> float:
        dist = _dist or self.distributions(domain)
        terms = sorted({lem for lem in q.lemmas if lem not in self.stopwords})
        total = math.fsum(self.kl_score(f, domain, dist) for f in terms)
        return max(0.0, total)

    def rank_candidates(self, cands: Sequence[Query], domain: TargetDomain, iteration: int) -> QuerySet:
        dist = self.distributions(domain)
        best: dict[str, Query] = {}
        for c in cands:
            w = self.query_weight(c, domain, dist)
            prev = best.get(c.surface)
            if prev is None or w > prev.weight:
                best[c.surface] = replace(c, weight=w, iteration=iteration)
        ranked = sorted(best.values(), key=lambda q: (-q.weight, q.surface))
        return QuerySet(tuple(ranked[: self.cfg.top_k]), iteration)

    def run(self, seeds: QuerySet) -> tuple[QuerySet, TargetDomain, list[dict]]:
        if not len(seeds):
            raise ValueError("run_dqe needs at least one seed query")
        trace: list[dict] = []
        queries = seeds
        seen = set(seeds.surfaces)
        domain = self.target_domain(queries)
        trace.append(self._trace_record(0, queries, domain, sorted(seen)))
        if not len(domain):
            return queries, domain, trace
        for k in range(1, self.cfg.max_iterations + 1):
            cands = []
            for dpos, spos, qpos, _ in domain.pairs:
                cands.append(self.extract_candidate(queries.queries[qpos], self.sentence(dpos, spos), k))
            ranked = self.rank_candidates(cands, domain, k)
            merged = list(seeds)
            seed_surfaces = set(seeds.surfaces)
            merged += [q for q in ranked if q.surface not in seed_surfaces]
            queries = QuerySet(tuple(merged), k)
            new = sorted(set(queries.surfaces) - seen)
            seen.update(new)
            domain = self.target_domain(queries)
            trace.append(self._trace_record(k, queries, domain, new))
            if not new:
                break
        return queries, domain, trace

    def _trace_record(self, k: int, queries: QuerySet, domain: TargetDomain, new: list[str]) -> dict:
        return {
            "iteration": k,
            "queries": [q.to_json() for q in queries],
            "new_surfaces": new,
            "domain_sentences": len(domain),
            "domain_docs": len(domain.doc_ids),
        }


def target_domain(queries: QuerySet, slot: TimeSlot, cfg: DqeConfig | None = None,
                  table: EmbeddingTable | None = None) -> TargetDomain:
    return ExpansionEngine(slot, cfg, table).target_domain(queries)


def extract_candidate(q: Query, d: DepTree, cfg: DqeConfig | None = None,
                      table: EmbeddingTable | None = None) -> Query:
    """Subtree of ``d`` under the node that shares the most peaked paths with ``q``.

    Returns ``q`` unchanged when no node of ``d`` shares any path with it.
    """
    cfg = cfg or DqeConfig()
    kern = TreeKernel(cfg.kernel, table)
    _, peak, _ = kern.tables(q.tree, d)
    anchor = best_anchor(peak)
    if anchor is None:
        return q
    return Query(d.subtree(anchor, cfg.max_subtree_nodes), 0.0, EXPANDED, q.iteration)


def kl_score(term: str, domain: TargetDomain, slot: TimeSlot, cfg: DqeConfig | None = None,
             engine: ExpansionEngine | None = None) -> float:
    """``log(P(f|D+) / P(f|D)) * P(f|D+)`` with add-alpha smoothed probabilities (natural log)."""
    engine = engine or ExpansionEngine(slot, cfg)
    return engine.kl_score(term, domain)


def rank_candidates(cands: Sequence[Query], domain: TargetDomain, slot: TimeSlot, cfg: DqeConfig | None = None,
                    iteration: int = 1, engine: ExpansionEngine | None = None) -> QuerySet:
    if not cands:
        raise ValueError("no candidates to rank")
    engine = engine or ExpansionEngine(slot, cfg)
    return engine.rank_candidates(cands, domain, iteration)


def run_dqe(seeds: QuerySet, slot: TimeSlot, cfg: DqeConfig | None = None, table: EmbeddingTable | None = None,
            stopwords: Iterable[str] | None = None) -> tuple[QuerySet, TargetDomain, list[dict]]:
    return ExpansionEngine(slot, cfg, table, stopwords).run(seeds)
