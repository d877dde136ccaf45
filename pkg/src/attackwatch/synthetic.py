"""Deterministic synthetic corpora with planted attack reports.

Background documents are random dependency trees over a pseudo-word
vocabulary mixed with a few common real words. They never contain a
head/child edge that also occurs in a seed query, so a seed can only match a
background sentence weakly. Planted documents carry a seed edge plus an
entity bigram attached to the seed head.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DepTree, Document, dump_conllu, normalize_text
from .dqe import CATEGORY_ORDER, EventType, seed_queries
from .embeddings import EmbeddingTable

COMMON_WORDS = (
    "twitter account data internet phone people time game music love work school news video photo "
    "night week money team city home friend movie show life year world party food state service "
    "update app site website user users customer email online company bank card"
).split()

_SYLLABLES = "ba be bi bo bu da de di do du ka ke ki ko ku la le li lo lu ma me mi mo mu na ne ni no nu " \
             "ra re ri ro ru sa se si so su ta te ti to tu va ve vi vo vu za ze zi zo zu".split()


def pseudo_words(n: int, rng: random.Random) -> list[str]:
    words: list[str] = []
    seen = set(COMMON_WORDS)
    while len(words) < n:
        w = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def seed_edges() -> set[tuple[str, str]]:
    edges = set()
    for q in seed_queries("all"):
        t = q.tree
        for tok in t.nodes:
            if tok.head:
                edges.add((t.token(tok.head).lemma, tok.lemma))
    return edges


def seed_lemmas() -> set[str]:
    return {lem for q in seed_queries("all") for lem in q.lemmas}


def make_embeddings(words: Sequence[str], dim: int = 64, seed: int = 0) -> EmbeddingTable:
    """Independent Gaussian vectors: distinct words are nearly orthogonal."""
    rng = np.random.default_rng(seed)
    entries = {}
    for w in sorted(set(words)):
        entries[w] = rng.standard_normal(dim)
    return EmbeddingTable(dim, entries)


@dataclass
class Corpus:
    documents: list[Document]
    planted: dict[str, set[str]] = field(default_factory=dict)  # day iso -> planted doc ids
    vocabulary: set[str] = field(default_factory=set)

    def to_jsonl(self) -> str:
        lines = []
        for d in self.documents:
            stamp = datetime.fromtimestamp(d.timestamp, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            lines.append(json.dumps({"id": d.doc_id, "timestamp": stamp, "text": d.raw_text}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_conllu(self) -> str:
        return dump_conllu((d.doc_id, d.trees) for d in self.documents)

    def write(self, directory: Path) -> tuple[Path, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        texts, parses = directory / "texts.jsonl", directory / "parses.conllu"
        texts.write_text(self.to_jsonl(), encoding="utf-8")
        parses.write_text(self.to_conllu(), encoding="utf-8")
        return texts, parses


class CorpusBuilder:
    def __init__(self, seed: int = 0, n_pseudo: int = 600):
        self.rng = random.Random(seed)
        self.words = pseudo_words(n_pseudo, self.rng) + COMMON_WORDS
        self.forbidden = seed_edges()
        self.vocabulary: set[str] = set(self.words)

    def noise_tree(self, lo: int = 3, hi: int = 9) -> DepTree:
        rng = self.rng
        while True:
            n = rng.randint(lo, hi)
            lemmas = [rng.choice(self.words) for _ in range(n)]
            order = list(range(n))
            rng.shuffle(order)
            heads = [0] * n
            for pos, node in enumerate(order[1:], start=1):
                heads[node] = order[rng.randrange(pos)] + 1
            if any((lemmas[h - 1], lemmas[i]) in self.forbidden for i, h in enumerate(heads) if h):
                continue
            return DepTree.build(list(zip(lemmas, heads)))

    def planted_tree(self, seed_pair: tuple[str, str], entity: tuple[str, str],
                     modifier: str | None = None) -> DepTree:
        """``[modifier] e1 e2 child head``: e1 -> e2 -> head <- child, modifier -> head."""
        child, head = seed_pair
        words: list[tuple[str, int]] = []
        rels: list[str] = []
        off = 1 if modifier else 0
        head_idx = 4 + off
        if modifier:
            words.append((modifier, head_idx))
            rels.append("amod")
        words += [(entity[0], 2 + off), (entity[1], head_idx), (child, head_idx), (head, 0)]
        rels += ["compound", "nmod", "compound", "root"]
        for w, _ in words:
            self.vocabulary.add(w)
        return DepTree.build(words, rels)

    def decoy_tree(self, seed_pair: tuple[str, str]) -> DepTree:
        """A seed edge buried in unrelated words (a complaint, not an attack report)."""
        child, head = seed_pair
        extra = [self.rng.choice(self.words) for _ in range(self.rng.randint(2, 4))]
        words = [(child, 1 + len(extra) + 1)] + [(w, len(extra) + 2) for w in extra] + [(head, 0)]
        return DepTree.build(words)

    def document(self, doc_id: str, day: date, trees: Sequence[DepTree]) -> Document:
        second = self.rng.randrange(86400)
        ts = datetime(day.year, day.month, day.day, tzinfo=timezone.utc).timestamp() + second
        raw = " . ".join(" ".join(t.surface for t in tree.nodes) for tree in trees)
        if self.rng.random() < 0.2:
            raw = "@" + self.rng.choice(self.words) + " " + raw
        return Document(doc_id, ts, raw, normalize_text(raw), tuple(trees))

    def noise_document(self, doc_id: str, day: date) -> Document:
        n_sent = 1 if self.rng.random() < 0.7 else 2
        return self.document(doc_id, day, [self.noise_tree() for _ in range(n_sent)])

    def planted_document(self, doc_id: str, day: date, seed_pair, entity, modifiers=(None,)) -> Document:
        trees = [self.planted_tree(seed_pair, entity, self.rng.choice(list(modifiers)))]
        if self.rng.random() < 0.3:
            trees.append(self.noise_tree(2, 5))
        return self.document(doc_id, day, trees)


def planted_corpus(n_docs: int = 10_000, planted_frac: float = 0.02, day: date = date(2015, 7, 20),
                   seed_pair: tuple[str, str] = ("data", "leak"), entity: tuple[str, str] = ("ashley", "madison"),
                   decoy_frac: float = 0.005, seed: int = 0) -> Corpus:
    """One day of background chatter with ``planted_frac`` of documents reporting the entity.

    ``decoy_frac`` of the documents use the seed edge in an unrelated context.
    """
    b = CorpusBuilder(seed)
    n_planted = int(round(n_docs * planted_frac))
    n_decoy = int(round(n_docs * decoy_frac))
    picked = b.rng.sample(range(n_docs), n_planted + n_decoy)
    slots, decoys = set(picked[:n_planted]), set(picked[n_planted:])
    docs, planted = [], set()
    for i in range(n_docs):
        doc_id = f"{day.isoformat()}-{i:05d}"
        if i in slots:
            docs.append(b.planted_document(doc_id, day, seed_pair, entity, (None, "huge", "massive")))
            planted.add(doc_id)
        elif i in decoys:
            docs.append(b.document(doc_id, day, [b.decoy_tree(seed_pair)]))
        else:
            docs.append(b.noise_document(doc_id, day))
    return Corpus(docs, {day.isoformat(): planted}, b.vocabulary)


def burst_corpus(start: date = date(2015, 7, 20), days: int = 40, per_day: int = 150,
                 bursts: Sequence[tuple[int, int]] = ((0, 40), (31, 40)),
                 seed_pair: tuple[str, str] = ("data", "leak"), entity: tuple[str, str] = ("ashley", "madison"),
                 seed: int = 1) -> Corpus:
    """Several days of background with planted report bursts on the given day offsets."""
    b = CorpusBuilder(seed)
    burst_size = dict(bursts)
    docs, planted = [], {}
    for offset in range(days):
        day = start + timedelta(days=offset)
        ids = set()
        for i in range(per_day):
            docs.append(b.noise_document(f"{day.isoformat()}-{i:04d}", day))
        for j in range(burst_size.get(offset, 0)):
            doc_id = f"{day.isoformat()}-p{j:03d}"
            docs.append(b.planted_document(doc_id, day, seed_pair, entity))
            ids.add(doc_id)
        if ids:
            planted[day.isoformat()] = ids
    return Corpus(docs, planted, b.vocabulary)


def fixture_embeddings(corpus: Corpus, dim: int = 64, seed: int = 0) -> EmbeddingTable:
    return make_embeddings(sorted(corpus.vocabulary | seed_lemmas()), dim, seed)


GSR_COLUMNS = ["gsrId", "date", "type", "victim", "description", "source"]


def gsr_csv(counts: dict[EventType, int] | None = None, start: date = date(2014, 8, 1), seed: int = 3) -> str:
    """A GSR-shaped CSV with the requested number of rows per type."""
    counts = counts or {EventType.DATA_BREACH: 85, EventType.ACCOUNT_HIJACKING: 55, EventType.DDOS: 80}
    rng = random.Random(seed)
    names = pseudo_words(400, rng)
    spelled = {EventType.DATA_BREACH: ["dataBreach", "DATABREACH", "data_breach"],
               EventType.DDOS: ["ddos", "DDOS", "DDoS"],
               EventType.ACCOUNT_HIJACKING: ["accountHijacking", "account-hijacking", "ACCOUNTHIJACKING"]}
    blurbs = {EventType.DATA_BREACH: "customer records exposed after hack",
              EventType.DDOS: "service knocked offline by ddos attack",
              EventType.ACCOUNT_HIJACKING: "twitter account hijacked"}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GSR_COLUMNS)
    n = 0
    for cat in CATEGORY_ORDER:
        for _ in range(counts.get(cat, 0)):
            victim = f"{rng.choice(names).title()} {rng.choice(['Inc', 'Bank', 'Corp', 'Health', 'Games'])}"
            day = start + timedelta(days=rng.randrange(800))
            source = "PrivacyRights" if cat is EventType.DATA_BREACH else "Hackmageddon"
            writer.writerow([f"G{n:04d}", day.isoformat(), rng.choice(spelled[cat]), victim,
                             f"{victim} {blurbs[cat]}", source])
            n += 1
    return buf.getvalue()
