# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the constrained linear-chain CRF.

Mirrors coordkit._crf_numpy operation for operation (same reduction order,
same tie-breaking) so both backends produce identical results; see
benchmarks/bench_crf.py for the speed comparison.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log

cnp.import_array()


def viterbi(
    double[:, ::1] em,
    double[:, ::1] trans,
    double[::1] start,
    double[::1] end,
    unsigned char[:, ::1] allowed,
):
    cdef Py_ssize_t m = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef cnp.ndarray[double, ndim=1] score_arr = np.empty(L, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] next_arr = np.empty(L, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] bp_arr = np.zeros((m, L), dtype=np.int64)
    cdef double[::1] score = score_arr
    cdef double[::1] nxt = next_arr
    cdef cnp.int64_t[:, ::1] bp = bp_arr
    cdef Py_ssize_t t, y, p, best_prev, last
    cdef double v, best, best_score

    for y in range(L):
        score[y] = start[y] + em[0, y] if allowed[0, y] else -INFINITY
    for t in range(1, m):
        for y in range(L):
            best = -INFINITY
            best_prev = 0
            for p in range(L):
                v = score[p] + trans[p, y]
                if v > best:
                    best = v
                    best_prev = p
            bp[t, y] = best_prev
            nxt[y] = best + em[t, y] if allowed[t, y] else -INFINITY
        for y in range(L):
            score[y] = nxt[y]

    best_score = -INFINITY
    last = 0
    for y in range(L):
        v = score[y] + end[y]
        if v > best_score:
            best_score = v
            last = y
    if best_score == -INFINITY or best_score != best_score:
        raise ValueError("all label paths are masked out")

    cdef cnp.ndarray[cnp.int64_t, ndim=1] path_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    path[m - 1] = last
    for t in range(m - 1, 0, -1):
        path[t - 1] = bp[t, path[t]]
    return path_arr, best_score


def path_score(
    double[:, ::1] em,
    double[:, ::1] trans,
    double[::1] start,
    double[::1] end,
    cnp.int64_t[::1] path,
):
    cdef Py_ssize_t m = path.shape[0]
    cdef Py_ssize_t t
    cdef double s = start[path[0]] + em[0, path[0]]
    for t in range(1, m):
        s = s + trans[path[t - 1], path[t]]
        s = s + em[t, path[t]]
    return s + end[path[m - 1]]


cdef double _lse6(double* v, Py_ssize_t L) noexcept:
    cdef double mx = -INFINITY
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(L):
        if v[i] > mx:
            mx = v[i]
    if mx == -INFINITY:
        return -INFINITY
    for i in range(L):
        s += exp(v[i] - mx)
    return mx + log(s)


cdef void _forward(
    double[:, ::1] em,
    double[:, ::1] trans,
    double[::1] start,
    unsigned char[:, ::1] allowed,
    double[:, ::1] alphas,
) noexcept:
    cdef Py_ssize_t m = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef Py_ssize_t t, y, p
    cdef double buf[16]
    for y in range(L):
        alphas[0, y] = start[y] + em[0, y] if allowed[0, y] else -INFINITY
    for t in range(1, m):
        for y in range(L):
            if allowed[t, y]:
                for p in range(L):
                    buf[p] = alphas[t - 1, p] + trans[p, y]
                alphas[t, y] = _lse6(buf, L) + em[t, y]
            else:
                alphas[t, y] = -INFINITY


def log_partition(
    double[:, ::1] em,
    double[:, ::1] trans,
    double[::1] start,
    double[::1] end,
    unsigned char[:, ::1] allowed,
):
    cdef Py_ssize_t m = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef cnp.ndarray[double, ndim=2] alphas_arr = np.empty((m, L), dtype=np.float64)
    cdef double[:, ::1] alphas = alphas_arr
    cdef double buf[16]
    cdef Py_ssize_t y
    cdef double logz
    _forward(em, trans, start, allowed, alphas)
    for y in range(L):
        buf[y] = alphas[m - 1, y] + end[y]
    logz = _lse6(buf, L)
    if logz == -INFINITY or logz != logz:
        raise ValueError("all label paths are masked out")
    return logz


def nll_gradients(
    double[:, ::1] em,
    double[:, ::1] trans,
    double[::1] start,
    double[::1] end,
    unsigned char[:, ::1] allowed,
    cnp.int64_t[::1] gold,
):
    cdef Py_ssize_t m = em.shape[0]
    cdef Py_ssize_t L = em.shape[1]
    cdef Py_ssize_t t, y, p
    cdef double buf[16]
    cdef double logz, v, nll

    for t in range(m):
        if not allowed[t, gold[t]]:
            raise ValueError(f"gold label at position {t} violates the position mask")
    if start[gold[0]] == -INFINITY or end[gold[m - 1]] == -INFINITY:
        raise ValueError("gold path uses a banned start/end label")
    for t in range(1, m):
        if trans[gold[t - 1], gold[t]] == -INFINITY:
            raise ValueError(f"gold transition at position {t} is banned")

    cdef cnp.ndarray[double, ndim=2] alphas_arr = np.empty((m, L), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] betas_arr = np.empty((m, L), dtype=np.float64)
    cdef double[:, ::1] alphas = alphas_arr
    cdef double[:, ::1] betas = betas_arr
    _forward(em, trans, start, allowed, alphas)
    for y in range(L):
        buf[y] = alphas[m - 1, y] + end[y]
    logz = _lse6(buf, L)
    if logz == -INFINITY or logz != logz:
        raise ValueError("all label paths are masked out")

    for y in range(L):
        betas[m - 1, y] = end[y] if allowed[m - 1, y] else -INFINITY
    for t in range(m - 2, -1, -1):
        for y in range(L):
            if allowed[t, y]:
                # Same association as the NumPy kernel: trans + (em + beta).
                for p in range(L):
                    buf[p] = trans[y, p] + (em[t + 1, p] + betas[t + 1, p])
                betas[t, y] = _lse6(buf, L)
            else:
                betas[t, y] = -INFINITY

    cdef cnp.ndarray[double, ndim=2] d_em_arr = np.empty((m, L), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] d_trans_arr = np.zeros((L, L), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d_start_arr = np.empty(L, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d_end_arr = np.empty(L, dtype=np.float64)
    cdef double[:, ::1] d_em = d_em_arr
    cdef double[:, ::1] d_trans = d_trans_arr
    cdef double[::1] d_start = d_start_arr
    cdef double[::1] d_end = d_end_arr

    for t in range(m):
        for y in range(L):
            v = alphas[t, y] + betas[t, y]
            d_em[t, y] = exp(v - logz) if v != -INFINITY else 0.0
    for t in range(1, m):
        for p in range(L):
            for y in range(L):
                v = alphas[t - 1, p] + trans[p, y] + (em[t, y] + betas[t, y])
                if v != -INFINITY:
                    d_trans[p, y] += exp(v - logz)
    for y in range(L):
        d_start[y] = d_em[0, y]
        d_end[y] = d_em[m - 1, y]

    for t in range(m):
        d_em[t, gold[t]] -= 1.0
    d_start[gold[0]] -= 1.0
    d_end[gold[m - 1]] -= 1.0
    for t in range(1, m):
        d_trans[gold[t - 1], gold[t]] -= 1.0

    nll = logz - path_score(em, trans, start, end, gold)
    return nll, d_em_arr, d_trans_arr, d_start_arr, d_end_arr
