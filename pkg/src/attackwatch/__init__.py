"""Unsupervised cyber-attack event detection from parsed social-media text.

Typed dependency queries are matched against sentences with a dependency
tree kernel, expanded iteratively by KL-divergence term weighting, and the
resulting query sets are clustered and typed into event records.
"""

__version__ = "0.1.0"

from .corpus import DepTree, Document, TimeSlot, Token, TokenKind, bucket_by_day, load_conllu, load_jsonl
from .depkernel import KernelConfig, KernelResult, TreeKernel, kernel
from .dqe import DqeConfig, EventType, Query, QuerySet, run_dqe, seed_queries
from .embeddings import EmbeddingTable, SemEqConfig, load_embeddings
from .events import ApConfig, EventConfig, EventRecord, detect_events

__all__ = [
    "ApConfig", "DepTree", "Document", "DqeConfig", "EmbeddingTable", "EventConfig", "EventRecord", "EventType",
    "KernelConfig", "KernelResult", "Query", "QuerySet", "SemEqConfig", "TimeSlot", "Token", "TokenKind",
    "TreeKernel", "bucket_by_day", "detect_events", "kernel", "load_conllu", "load_embeddings", "load_jsonl",
    "run_dqe", "seed_queries",
]
