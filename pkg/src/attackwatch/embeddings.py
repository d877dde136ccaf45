"""Word vectors, cosine similarity and the semantic node-equality test."""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Union

import numpy as np

from .corpus import DepTree, Token

EXACT_LEMMA = "exactLemma"
REJECT = "reject"


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise EmbeddingError("dim must be positive")
        for word, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"non-finite component in vector for {word!r}")

    @classmethod
    def from_dict(cls, vectors: dict[str, Iterable[float]]) -> "EmbeddingTable":
        entries: dict[str, np.ndarray] = {}
        dim = None
        for word, values in vectors.items():
            vec = np.asarray(list(values), dtype=np.float64)
            dim = dim or len(vec)
            entries.setdefault(word.lower(), vec)
        if dim is None:
            raise EmbeddingError("empty embedding table")
        return cls(dim, entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def get(self, word: str) -> np.ndarray | None:
        return self.entries.get(word.lower())

    def scaled(self, factor: float) -> "EmbeddingTable":
        return EmbeddingTable(self.dim, {w: v * factor for w, v in self.entries.items()})

    def dump(self) -> str:
        lines = [f"{len(self.entries)} {self.dim}"]
        for word, vec in self.entries.items():
            lines.append(word + " " + " ".join(repr(float(x)) for x in vec))
        return "\n".join(lines) + "\n"


def load_embeddings(stream: Union[IO[bytes], bytes, str]) -> EmbeddingTable:
    """Parse word2vec-style text vectors, optionally gzip-compressed.

    An optional ``"count dim"`` header is accepted. Duplicate words keep the
    first vector seen.
    """
    if isinstance(stream, str):
        data = stream.encode("utf-8")
    elif isinstance(stream, bytes):
        data = stream
    else:
        data = stream.read()
        if isinstance(data, str):
            data = data.encode("utf-8")
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    lines = data.decode("utf-8-sig").splitlines()

    dim = None
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if dim is None and lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            dim = int(parts[1])
            continue
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise EmbeddingError(f"line {lineno}: expected {dim} values, got {len(values)}")
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise EmbeddingError(f"line {lineno}: non-numeric component") from None
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"line {lineno}: non-finite component")
        entries.setdefault(word.lower(), vec)
    if not entries:
        raise EmbeddingError("empty embedding file")
    return EmbeddingTable(dim, entries)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; ``nan`` when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sa = float(np.max(np.abs(a))) if a.size else 0.0
    sb = float(np.max(np.abs(b))) if b.size else 0.0
    if sa == 0.0 or sb == 0.0:
        return math.nan
    # rescale first so tiny or huge components neither underflow nor overflow
    a, b = a / sa, b / sb
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    return min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb)))


@dataclass(frozen=True)
class SemEqConfig:
    threshold: float = 0.75
    fallback: str = EXACT_LEMMA

    def __post_init__(self):
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [-1, 1]")
        if self.fallback not in (EXACT_LEMMA, REJECT):
            raise ValueError(f"unknown fallback {self.fallback!r}")


def _lemma(x: Union[Token, str]) -> str:
    return (x.lemma if isinstance(x, Token) else x).lower()


def sem_eq(u: Union[Token, str], v: Union[Token, str], cfg: SemEqConfig, table: EmbeddingTable | None) -> bool:
    a, b = _lemma(u), _lemma(v)
    if a == b and cfg.fallback == EXACT_LEMMA:
        return True
    if table is None:
        return False
    va, vb = table.get(a), table.get(b)
    if va is None or vb is None:
        return False
    if a == b:
        # cos(v, v) is 1 up to rounding; a threshold of exactly 1 must still pass
        return bool(np.any(va))
    # fixed argument order keeps the test exactly symmetric
    if b < a:
        va, vb = vb, va
    sim = cosine(va, vb)
    return sim >= cfg.threshold


class SemanticMatcher:
    """Memoized lemma-level ``sem_eq`` for building node-match matrices.

    Caches unit vectors and pairwise decisions; the table itself is never
    mutated, so a matcher can be shared by read-only workers.
    """

    def __init__(self, table: EmbeddingTable | None, cfg: SemEqConfig | None = None):
        self.table = table
        self.cfg = cfg or SemEqConfig()
        self._pairs: dict[tuple[str, str], bool] = {}

    def __call__(self, a: str, b: str) -> bool:
        key = (a, b) if a < b else (b, a)
        hit = self._pairs.get(key)
        if hit is None:
            hit = sem_eq(key[0], key[1], self.cfg, self.table)
            self._pairs[key] = hit
        return hit

    def matrix(self, left: Iterable[str], right: Iterable[str]) -> np.ndarray:
        right = list(right)
        return np.array([[self(a, b) for b in right] for a in left], dtype=np.uint8).reshape(-1, len(right))

    def equivalents(self, lemma: str, vocabulary: Iterable[str]) -> list[str]:
        return [w for w in vocabulary if self(lemma, w)]


def query_vector(q: DepTree, table: EmbeddingTable) -> np.ndarray | None:
    """Sum of node lemma vectors; ``None`` when every lemma is out of vocabulary.

    Lemmas are summed in sorted order so the result does not depend on node
    order down to the last bit.
    """
    vecs = [table.get(lem) for lem in sorted(q.lemmas)]
    vecs = [v for v in vecs if v is not None]
    if not vecs:
        return None
    out = np.zeros(table.dim, dtype=np.float64)
    for v in vecs:
        out = out + v
    return out
