"""Convolution kernel over dependency trees built from shared label-matched paths.

For a node pair ``(u, v)`` two counts are kept:

* ``kappa(u, v)``: common downward paths leaving ``u`` and ``v``;
* ``H(u, v)``: common paths peaking at ``u`` and ``v``, i.e. ``kappa`` plus the
  through-paths that enter from one child and leave through another. Child
  pairs are taken *ordered*, so a through-path ``B-A-C`` counts twice.

The tree kernel sums ``1 + H`` over semantically matching node pairs. The
tables come from :mod:`attackwatch._core`, compiled when available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .corpus import DepTree
from .embeddings import EmbeddingTable, SemanticMatcher, SemEqConfig

ORACLE_MAX_NODES = 10


@dataclass(frozen=True)
class KernelConfig:
    lam: float = 1.0
    sem_eq: SemEqConfig = field(default_factory=SemEqConfig)
    normalize: bool = True
    # sum over all node pairs, non-matching ones contributing 1 (comparison only)
    literal: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")


@dataclass(frozen=True)
class KernelResult:
    raw: float
    normalized: float | None
    anchor: int | None  # 1-based token index in the document tree


class TreeKernel:
    """Kernel evaluator bound to one configuration and embedding table.

    Self-kernels are cached per tree object; node-pair tables are rebuilt for
    every ``(q, d)`` evaluation.
    """

    def __init__(self, cfg: KernelConfig | None = None, table: EmbeddingTable | None = None,
                 matcher: SemanticMatcher | None = None):
        self.cfg = cfg or KernelConfig()
        self.matcher = matcher or SemanticMatcher(table, self.cfg.sem_eq)
        self._sqrt_lam = math.sqrt(self.cfg.lam)
        self._self: dict[int, tuple[DepTree, float]] = {}

    def match_matrix(self, q: DepTree, d: DepTree) -> np.ndarray:
        return self.matcher.matrix(q.arrays.lemmas, d.arrays.lemmas)

    def tables(self, q: DepTree, d: DepTree) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(kappa, H, match)`` arrays indexed ``[q node, d node]`` (0-based)."""
        match = self.match_matrix(q, d)
        kappa, peak = _core.peak_tables(q.arrays, d.arrays, match, self._sqrt_lam, self.cfg.lam, self.cfg.literal)
        return kappa, peak, match

    def _raw(self, peak: np.ndarray, match: np.ndarray) -> float:
        if self.cfg.literal:
            terms = np.where(peak > 0, 1.0 + peak, 1.0)
            return math.fsum(terms.ravel().tolist())
        # fsum makes the total independent of summation order, so K(q,d) == K(d,q) exactly
        return math.fsum((1.0 + peak[match.astype(bool)]).tolist())

    def raw(self, q: DepTree, d: DepTree) -> float:
        _, peak, match = self.tables(q, d)
        return self._raw(peak, match)

    def self_kernel(self, t: DepTree) -> float:
        hit = self._self.get(id(t))
        if hit is not None and hit[0] is t:
            return hit[1]
        value = self.raw(t, t)
        self._self[id(t)] = (t, value)
        return value

    def __call__(self, q: DepTree, d: DepTree) -> KernelResult:
        _, peak, match = self.tables(q, d)
        raw = self._raw(peak, match)
        anchor = best_anchor(peak)
        normalized = None
        if self.cfg.normalize:
            normalized = self.normalize(raw, q, d)
        return KernelResult(raw, normalized, anchor)

    def normalize(self, raw: float, q: DepTree, d: DepTree) -> float:
        denom = self.self_kernel(q) * self.self_kernel(d)
        if raw <= 0.0 or denom <= 0.0:
            return 0.0
        # semantic (non-transitive) matching can push the ratio past 1
        return min(1.0, raw / math.sqrt(denom))


def best_anchor(peak: np.ndarray) -> int | None:
    """1-based document index maximizing the column sum of ``H``; smallest index on ties."""
    if peak.size == 0:
        return None
    sums = [math.fsum(col) for col in peak.T.tolist()]
    best = max(sums)
    if best <= 0.0:
        return None
    return sums.index(best) + 1


def kernel(q: DepTree, d: DepTree, cfg: KernelConfig | None = None,
           table: EmbeddingTable | None = None) -> KernelResult:
    return TreeKernel(cfg, table)(q, d)


def kappa(q: DepTree, u: int, d: DepTree, v: int, cfg: KernelConfig | None = None,
          table: EmbeddingTable | None = None) -> float:
    """Common downward paths from token ``u`` of ``q`` and token ``v`` of ``d`` (1-based)."""
    k, _, _ = TreeKernel(cfg, table).tables(q, d)
    return float(k[u - 1, v - 1])


def common_paths_peak(q: DepTree, u: int, d: DepTree, v: int, cfg: KernelConfig | None = None,
                      table: EmbeddingTable | None = None) -> float:
    _, h, _ = TreeKernel(cfg, table).tables(q, d)
    return float(h[u - 1, v - 1])


def _paths_by_peak(tree: DepTree) -> dict[int, list[tuple[tuple[int, ...], tuple[int, ...]]]]:
    """Every simple path with >= 1 edge, keyed by its topmost node (0-based).

    A path is ``(left arm, right arm)`` with arms listed outward from the peak.
    Downward paths have an empty left arm; through-paths appear once per
    orientation.
    """
    n = len(tree)
    parent = [tree.token(i + 1).head - 1 for i in range(n)]

    def ancestors(x: int) -> list[int]:
        chain = [x]
        while parent[chain[-1]] >= 0:
            chain.append(parent[chain[-1]])
        return chain

    chains = [ancestors(i) for i in range(n)]
    out: dict[int, list] = {i: [] for i in range(n)}
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            up_t = set(chains[t])
            peak = next(a for a in chains[s] if a in up_t)
            if peak == t:
                continue
            left = tuple(reversed(chains[s][: chains[s].index(peak)]))
            right = tuple(reversed(chains[t][: chains[t].index(peak)]))
            out[peak].append((left, right))
    return out


def brute_force_common_paths(q: DepTree, d: DepTree, cfg: KernelConfig | None = None,
                             table: EmbeddingTable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate explicit paths and count label-matched pairs (verification oracle).

    Returns ``(kappa, H)`` tables shaped like :meth:`TreeKernel.tables`. Only
    defined at ``lam == 1`` and for trees of at most ten nodes.
    """
    cfg = cfg or KernelConfig()
    if cfg.lam != 1.0:
        raise ValueError("the path oracle counts paths, so it requires lam == 1")
    if len(q) > ORACLE_MAX_NODES or len(d) > ORACLE_MAX_NODES:
        raise ValueError(f"oracle refuses trees over {ORACLE_MAX_NODES} nodes")
    matcher = SemanticMatcher(table, cfg.sem_eq)
    ql, dl = q.lemmas, d.lemmas

    def same(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
        return len(a) == len(b) and all(matcher(ql[x], dl[y]) for x, y in zip(a, b))

    qp, dp = _paths_by_peak(q), _paths_by_peak(d)
    nq, nd = len(q), len(d)
    kap = np.zeros((nq, nd))
    peak = np.zeros((nq, nd))
    for u in range(nq):
        for v in range(nd):
            down = through = 0
            for ql_arm, qr_arm in qp[u]:
                for dl_arm, dr_arm in dp[v]:
                    if bool(ql_arm) != bool(dl_arm):
                        continue
                    if same(ql_arm, dl_arm) and same(qr_arm, dr_arm):
                        if ql_arm:
                            through += 1
                        else:
                            down += 1
            kap[u, v] = down
            if matcher(ql[u], dl[v]):
                peak[u, v] = down + through
    return kap, peak
