"""Reference (pure-Python) common-path tables; mirrors ``_ckernel.pyx``."""

from __future__ import annotations

import numpy as np


def peak_tables(q, d, match, sqrt_lam: float, lam: float, literal: bool = False):
    """Return ``(kappa, H)`` as float arrays of shape ``(len(q), len(d))``.

    ``q`` and ``d`` are :class:`~attackwatch.corpus.TreeArrays`; ``match`` is
    the 0/1 node-equality matrix. ``kappa`` counts common downward paths
    leaving a node pair, ``H`` adds the through-paths peaking there.
    ``H`` is only filled for matching pairs unless ``literal`` is set.
    """
    nq, nd = len(q.lemmas), len(d.lemmas)
    m = match.tolist() if hasattr(match, "tolist") else match
    qc, dc = q.children, d.children
    kappa = [[0.0] * nd for _ in range(nq)]
    peak = [[0.0] * nd for _ in range(nq)]
    for u in q.postorder:
        cu = qc[u]
        krow = kappa[u]
        for v in d.postorder:
            cv = dc[v]
            if not cu or not cv:
                continue
            total = 0.0
            for mu in cu:
                mrow = m[mu]
                kmu = kappa[mu]
                for eta in cv:
                    if mrow[eta]:
                        total += 1.0 + kmu[eta]
                    elif literal:
                        total += 1.0
            krow[v] = total
    for u in range(nq):
        cu = qc[u]
        for v in range(nd):
            if not (literal or m[u][v]):
                continue
            cv = dc[v]
            count = 0
            paths = 0.0
            if len(cu) > 1 and len(cv) > 1:
                for ci in cu:
                    for cj in cu:
                        if ci == cj:
                            continue
                        for cm in cv:
                            if not m[ci][cm]:
                                continue
                            x = kappa[ci][cm]
                            for cn in cv:
                                if cn == cm or not m[cj][cn]:
                                    continue
                                y = kappa[cj][cn]
                                count += 1
                                paths += x + y + x * y
            peak[u][v] = kappa[u][v] + sqrt_lam * count + lam * paths
    return np.array(kappa, dtype=np.float64).reshape(nq, nd), np.array(peak, dtype=np.float64).reshape(nq, nd)
