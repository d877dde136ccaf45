# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled common-path tables; same contract as ``_pykernel.peak_tables``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def peak_tables(q, d, match, double sqrt_lam, double lam, bint literal=False):
    cdef const int[::1] qptr = q.child_ptr
    cdef const int[::1] qidx = q.child_idx
    cdef const int[::1] qord = q.order
    cdef const int[::1] dptr = d.child_ptr
    cdef const int[::1] didx = d.child_idx
    cdef const int[::1] dord = d.order
    cdef const unsigned char[:, ::1] m = np.ascontiguousarray(match, dtype=np.uint8)
    cdef Py_ssize_t nq = qord.shape[0]
    cdef Py_ssize_t nd = dord.shape[0]
    kappa_arr = np.zeros((nq, nd), dtype=np.float64)
    peak_arr = np.zeros((nq, nd), dtype=np.float64)
    cdef double[:, ::1] kappa = kappa_arr
    cdef double[:, ::1] peak = peak_arr
    cdef Py_ssize_t a, b, u, v, i, j, k, l, ci, cj, cm, cn
    cdef double total, paths, x, y
    cdef long count

    for a in range(nq):
        u = qord[a]
        if qptr[u] == qptr[u + 1]:
            continue
        for b in range(nd):
            v = dord[b]
            if dptr[v] == dptr[v + 1]:
                continue
            total = 0.0
            for i in range(qptr[u], qptr[u + 1]):
                ci = qidx[i]
                for k in range(dptr[v], dptr[v + 1]):
                    cm = didx[k]
                    if m[ci, cm]:
                        total += 1.0 + kappa[ci, cm]
                    elif literal:
                        total += 1.0
            kappa[u, v] = total

    for u in range(nq):
        for v in range(nd):
            if not literal and not m[u, v]:
                continue
            count = 0
            paths = 0.0
            for i in range(qptr[u], qptr[u + 1]):
                ci = qidx[i]
                for j in range(qptr[u], qptr[u + 1]):
                    if i == j:
                        continue
                    cj = qidx[j]
                    for k in range(dptr[v], dptr[v + 1]):
                        cm = didx[k]
                        if not m[ci, cm]:
                            continue
                        x = kappa[ci, cm]
                        for l in range(dptr[v], dptr[v + 1]):
                            if l == k:
                                continue
                            cn = didx[l]
                            if not m[cj, cn]:
                                continue
                            y = kappa[cj, cn]
                            count += 1
                            paths += x + y + x * y
            peak[u, v] = kappa[u, v] + sqrt_lam * count + lam * paths
    return kappa_arr, peak_arr
