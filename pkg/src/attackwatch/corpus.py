"""Document ingestion: text normalization, CoNLL-U / JSON Lines readers, day slots.

Trees use 1-based token indices, with ``head == 0`` marking the root, as in
CoNLL-U itself.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from functools import cached_property
from typing import IO, Iterable, Iterator, Sequence, Union

import numpy as np

Stream = Union[IO[bytes], IO[str], bytes, str]

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#(?=\w)")
_SPACE_RE = re.compile(r"\s+")
_WORD_RE = re.compile(r"\w+")


class TokenKind(str, enum.Enum):
    WORD = "word"
    HASHTAG = "hashtag"
    MENTION = "mention"


def _fold_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", stripped)


def _normalize_once(text: str) -> str:
    text = _fold_accents(text.lower())
    text = _URL_RE.sub(" ", text)
    text = _HASHTAG_RE.sub("", text)
    text = _MENTION_RE.sub(" ", text)
    return _SPACE_RE.sub(" ", text).strip()


def normalize_text(raw: str) -> str:
    """Lowercase, fold accents, drop URLs and @mentions, unwrap #hashtags.

    The single pass is repeated until it reaches a fixed point so that the
    function is idempotent even for inputs like ``"@#x"``, where removing one
    marker exposes another.
    """
    text = raw
    for _ in range(16):
        out = _normalize_once(text)
        if out == text:
            return out
        text = out
    return text


def word_tokens(text: str) -> list[str]:
    """Alphanumeric tokens of already-normalized text."""
    return _WORD_RE.findall(text)


def normalize_lemma(lemma: str) -> str:
    lemma = _fold_accents(lemma.strip().lower())
    return lemma.lstrip("#@") or lemma


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    lemma: str
    upos: str = "_"
    head: int = 0
    deprel: str = "_"
    kind: TokenKind = TokenKind.WORD

    @staticmethod
    def kind_of(surface: str) -> TokenKind:
        if surface.startswith("#") and len(surface) > 1:
            return TokenKind.HASHTAG
        if surface.startswith("@") and len(surface) > 1:
            return TokenKind.MENTION
        return TokenKind.WORD


class TreeError(ValueError):
    """Head links that do not form a single rooted tree."""


@dataclass(frozen=True)
class TreeArrays:
    """0-based view of a tree used by the kernel backends."""

    lemmas: tuple[str, ...]
    children: tuple[tuple[int, ...], ...]
    postorder: tuple[int, ...]
    child_ptr: np.ndarray
    child_idx: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class DepTree:
    nodes: tuple[Token, ...]
    root_index: int

    @classmethod
    def from_tokens(cls, tokens: Sequence[Token]) -> "DepTree":
        tokens = tuple(tokens)
        problem = check_heads([t.head for t in tokens])
        if problem:
            raise TreeError(problem)
        root = next(t.index for t in tokens if t.head == 0)
        return cls(tokens, root)

    @classmethod
    def build(cls, words: Sequence[tuple[str, int]], deprels: Sequence[str] | None = None) -> "DepTree":
        """Small trees from ``(lemma, head)`` pairs, mostly for queries and tests."""
        tokens = []
        for i, (word, head) in enumerate(words, start=1):
            rel = deprels[i - 1] if deprels else ("root" if head == 0 else "dep")
            tokens.append(Token(i, word, normalize_lemma(word), "_", head, rel, Token.kind_of(word)))
        return cls.from_tokens(tokens)

    def __len__(self) -> int:
        return len(self.nodes)

    def token(self, index: int) -> Token:
        return self.nodes[index - 1]

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(len(self.nodes) + 1)]
        for tok in self.nodes:
            if tok.head:
                kids[tok.head].append(tok.index)
        return tuple(tuple(k) for k in kids)

    def children(self, index: int) -> tuple[int, ...]:
        return self._children[index]

    @property
    def lemmas(self) -> list[str]:
        return [t.lemma for t in self.nodes]

    @property
    def surface(self) -> str:
        return " ".join(t.lemma for t in self.nodes)

    def subtree(self, index: int, max_nodes: int | None = None) -> "DepTree":
        """Subtree rooted at token ``index``, truncated breadth-first.

        Kept tokens are renumbered 1..m in original token order.
        """
        keep = [index]
        frontier = [index]
        while frontier and (max_nodes is None or len(keep) < max_nodes):
            nxt = []
            for node in frontier:
                for child in self.children(node):
                    if max_nodes is not None and len(keep) >= max_nodes:
                        break
                    keep.append(child)
                    nxt.append(child)
            frontier = nxt
        keep.sort()
        renumber = {old: new for new, old in enumerate(keep, start=1)}
        tokens = []
        for old in keep:
            tok = self.token(old)
            head = 0 if old == index else renumber[tok.head]
            tokens.append(Token(renumber[old], tok.surface, tok.lemma, tok.upos, head,
                                "root" if head == 0 else tok.deprel, tok.kind))
        return DepTree(tuple(tokens), renumber[index])

    @cached_property
    def arrays(self) -> TreeArrays:
        n = len(self.nodes)
        children = tuple(tuple(c - 1 for c in self._children[i]) for i in range(1, n + 1))
        post: list[int] = []
        stack = [(self.root_index - 1, False)]
        while stack:
            node, done = stack.pop()
            if done:
                post.append(node)
                continue
            stack.append((node, True))
            for c in reversed(children[node]):
                stack.append((c, False))
        ptr = np.zeros(n + 1, dtype=np.int32)
        for i, kids in enumerate(children):
            ptr[i + 1] = ptr[i] + len(kids)
        idx = np.fromiter((c for kids in children for c in kids), dtype=np.int32, count=int(ptr[-1]))
        return TreeArrays(
            lemmas=tuple(t.lemma for t in self.nodes),
            children=children,
            postorder=tuple(post),
            child_ptr=ptr,
            child_idx=idx,
            order=np.asarray(post, dtype=np.int32),
        )

    def to_rows(self) -> list[list]:
        return [[t.index, t.surface, t.lemma, t.upos, t.head, t.deprel, t.kind.value] for t in self.nodes]

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence]) -> "DepTree":
        return cls.from_tokens(
            Token(int(r[0]), r[1], r[2], r[3], int(r[4]), r[5], TokenKind(r[6])) for r in rows
        )


def check_heads(heads: Sequence[int]) -> str | None:
    """Describe the first tree-invariant violation of a head list, if any.

    ``heads[i]`` is the head of token ``i + 1``.
    """
    n = len(heads)
    if n == 0:
        return "empty sentence"
    roots = [i + 1 for i, h in enumerate(heads) if h == 0]
    for i, h in enumerate(heads, start=1):
        if h == i:
            return f"self-loop at token {i}"
        if h < 0 or h > n:
            return f"head out of range at token {i}"
    if not roots:
        return "no root"
    if len(roots) > 1:
        return f"multiple roots at tokens {', '.join(map(str, roots))}"
    for start in range(1, n + 1):
        seen = set()
        node = start
        while node != 0:
            if node in seen:
                return f"cycle through token {start}"
            seen.add(node)
            node = heads[node - 1]
    return None


@dataclass(frozen=True)
class Document:
    doc_id: str
    timestamp: float
    raw_text: str
    norm_text: str
    trees: tuple[DepTree, ...] = ()

    @property
    def day(self) -> date:
        return datetime.fromtimestamp(self.timestamp, tz=timezone.utc).date()

    @property
    def has_parse(self) -> bool:
        return bool(self.trees)

    def lemma_tokens(self) -> list[str]:
        """Term occurrences used for corpus statistics.

        Parse lemmas when a parse is attached, otherwise normalized word tokens.
        """
        if self.trees:
            return [t.lemma for tree in self.trees for t in tree.nodes]
        return word_tokens(self.norm_text)

    def to_json(self) -> dict:
        return {
            "id": self.doc_id,
            "timestamp": self.timestamp,
            "raw": self.raw_text,
            "norm": self.norm_text,
            "trees": [tree.to_rows() for tree in self.trees],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Document":
        return cls(
            str(obj["id"]),
            float(obj["timestamp"]),
            obj.get("raw", ""),
            obj.get("norm", ""),
            tuple(DepTree.from_rows(rows) for rows in obj.get("trees", [])),
        )


@dataclass(frozen=True)
class TimeSlot:
    day: date
    documents: tuple[Document, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    @property
    def token_count(self) -> int:
        return sum(len(d.lemma_tokens()) for d in self.documents)

    @property
    def parsed(self) -> list[Document]:
        return [d for d in self.documents if d.trees]


def _read_text(stream: Stream) -> str:
    if isinstance(stream, bytes):
        return stream.decode("utf-8-sig")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    return data


def _iter_lines(stream: Stream) -> Iterator[str]:
    return iter(_read_text(stream).splitlines())


_NEWDOC_RE = re.compile(r"^#\s*newdoc(?:\s+id\s*=\s*(.*))?$")
_SENT_ID_RE = re.compile(r"^#\s*sent_id\s*=\s*(.*)$")


def load_conllu(stream: Stream) -> tuple[list[tuple[str, list[DepTree]]], list[dict]]:
    """Read CoNLL-U into ``(doc_id, trees)`` entries plus rejection diagnostics.

    Multiword-token ranges (``1-2``) and empty nodes (``1.1``) are skipped.
    A sentence violating the tree invariants is dropped and reported; the
    rest of the stream is still read.
    """
    docs: "OrderedDict[str, list[DepTree]]" = OrderedDict()
    rejects: list[dict] = []
    doc_id: str | None = None
    sent_id: str | None = None
    rows: list[tuple[int, list[str]]] = []
    anon = 0
    ordinal: dict[str, int] = {}

    def flush() -> None:
        nonlocal rows, sent_id, anon
        if not rows:
            sent_id = None
            return
        owner = doc_id
        if owner is None:
            owner = sent_id if sent_id is not None else f"_doc{anon}"
            anon += 1
        seq = ordinal.get(owner, 0)
        ordinal[owner] = seq + 1
        start_line = rows[0][0]
        try:
            tree = _tree_from_rows(rows)
        except TreeError as exc:
            rejects.append({"doc_id": owner, "sentence": seq, "line": start_line, "reason": str(exc)})
        else:
            docs.setdefault(owner, []).append(tree)
        rows = []
        sent_id = None

    for lineno, line in enumerate(_iter_lines(stream), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            m = _NEWDOC_RE.match(line.strip())
            if m:
                flush()
                doc_id = (m.group(1) or "").strip() or f"_doc{anon}"
                continue
            m = _SENT_ID_RE.match(line.strip())
            if m:
                sent_id = m.group(1).strip()
            continue
        rows.append((lineno, line.split("\t")))
    flush()
    return list(docs.items()), rejects


def _tree_from_rows(rows: list[tuple[int, list[str]]]) -> DepTree:
    tokens = []
    for lineno, cols in rows:
        if len(cols) != 10:
            raise TreeError(f"expected 10 columns at line {lineno}, got {len(cols)}")
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue
        try:
            index = int(tid)
        except ValueError:
            raise TreeError(f"bad token id {tid!r} at line {lineno}") from None
        if index != len(tokens) + 1:
            raise TreeError(f"non-sequential token id {index} at line {lineno}")
        try:
            head = int(cols[6])
        except ValueError:
            raise TreeError(f"non-integer head at token {index}") from None
        surface = cols[1]
        lemma = cols[2] if cols[2] not in ("", "_") else surface
        lemma = normalize_lemma(lemma) or normalize_lemma(surface) or surface
        tokens.append(Token(index, surface, lemma, cols[3], head, cols[7], Token.kind_of(surface)))
    if not tokens:
        raise TreeError("empty sentence")
    return DepTree.from_tokens(tokens)


def dump_conllu(entries: Iterable[tuple[str, Sequence[DepTree]]]) -> str:
    out = []
    for doc_id, trees in entries:
        out.append(f"# newdoc id = {doc_id}")
        for tree in trees:
            for t in tree.nodes:
                out.append("\t".join([str(t.index), t.surface, t.lemma, t.upos, "_", "_",
                                      str(t.head), t.deprel, "_", "_"]))
            out.append("")
    return "\n".join(out) + ("\n" if out else "")


def parse_timestamp(value) -> float:
    if isinstance(value, bool):
        raise ValueError("boolean timestamp")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def load_jsonl(stream: Stream) -> tuple[list[Document], list[dict]]:
    """Read ``{"id", "timestamp", "text"}`` lines; bad lines are skipped and reported."""
    docs = []
    rejects = []
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not a JSON object")
            missing = [k for k in ("id", "timestamp", "text") if k not in obj]
            if missing:
                raise ValueError(f"missing field(s): {', '.join(missing)}")
            ts = parse_timestamp(obj["timestamp"])
            text = str(obj["text"])
        except (ValueError, TypeError) as exc:
            rejects.append({"line": lineno, "reason": str(exc)})
            continue
        docs.append(Document(str(obj["id"]), ts, text, normalize_text(text)))
    return docs, rejects


def attach_parses(docs: Iterable[Document], parses: Iterable[tuple[str, Sequence[DepTree]]]) -> list[Document]:
    """Join parse trees onto documents by id; unparsed documents keep empty trees."""
    by_id: dict[str, list[DepTree]] = {}
    for doc_id, trees in parses:
        by_id.setdefault(doc_id, []).extend(trees)
    out = []
    for d in docs:
        trees = by_id.get(d.doc_id)
        out.append(Document(d.doc_id, d.timestamp, d.raw_text, d.norm_text, tuple(trees)) if trees else d)
    return out


def bucket_by_day(docs: Iterable[Document]) -> list[TimeSlot]:
    slots: dict[date, list[Document]] = {}
    for d in docs:
        slots.setdefault(d.day, []).append(d)
    return [TimeSlot(day, tuple(slots[day])) for day in sorted(slots)]
