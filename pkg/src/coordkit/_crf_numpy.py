"""Pure NumPy kernels for the constrained linear-chain CRF.

Fallback for the compiled extension (coordkit._crfc); both implement the
same contract with identical operation order so results agree to the last
ulp in practice:

    viterbi(em, trans, start, end, allowed)       -> (path, score)
    path_score(em, trans, start, end, path)       -> float
    log_partition(em, trans, start, end, allowed) -> float
    nll_gradients(em, trans, start, end, allowed, gold)
        -> (nll, d_em, d_trans, d_start, d_end)

`allowed` is a (m, L) uint8/bool position mask; structural transition bans
are encoded as -inf entries of `trans`/`start`/`end`. Ties in the Viterbi
maximization resolve to the lowest label index.
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


def viterbi(em, trans, start, end, allowed):
    m, L = em.shape
    allowed = np.asarray(allowed, dtype=bool)
    score = np.where(allowed[0], start + em[0], NEG_INF)
    backptr = np.zeros((m, L), dtype=np.int64)
    cols = np.arange(L)
    for t in range(1, m):
        cand = score[:, None] + trans
        best_prev = np.argmax(cand, axis=0)  # first maximum: lowest prev index
        best = cand[best_prev, cols]
        score = np.where(allowed[t], best + em[t], NEG_INF)
        backptr[t] = best_prev
    final = score + end
    last = int(np.argmax(final))
    best_score = float(final[last])
    if not np.isfinite(best_score):
        raise ValueError("all label paths are masked out")
    path = np.empty(m, dtype=np.int64)
    path[m - 1] = last
    for t in range(m - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path, best_score


def path_score(em, trans, start, end, path):
    # Same left-fold association as the Viterbi recurrence.
    s = start[path[0]] + em[0, path[0]]
    for t in range(1, len(path)):
        s = s + trans[path[t - 1], path[t]]
        s = s + em[t, path[t]]
    return float(s + end[path[-1]])


def _logsumexp(v):
    mx = np.max(v)
    if mx == NEG_INF:
        return NEG_INF
    return float(mx + np.log(np.sum(np.exp(v - mx))))


def _forward(em, trans, start, end, allowed):
    m, L = em.shape
    alphas = np.full((m, L), NEG_INF)
    alphas[0] = np.where(allowed[0], start + em[0], NEG_INF)
    for t in range(1, m):
        prev = alphas[t - 1]
        for y in range(L):
            if allowed[t, y]:
                alphas[t, y] = _logsumexp(prev + trans[:, y]) + em[t, y]
    return alphas


def log_partition(em, trans, start, end, allowed):
    allowed = np.asarray(allowed, dtype=bool)
    alphas = _forward(em, trans, start, end, allowed)
    logz = _logsumexp(alphas[-1] + end)
    if not np.isfinite(logz):
        raise ValueError("all label paths are masked out")
    return logz


def nll_gradients(em, trans, start, end, allowed, gold):
    m, L = em.shape
    allowed = np.asarray(allowed, dtype=bool)
    gold = np.asarray(gold, dtype=np.int64)
    for t in range(m):
        if not allowed[t, gold[t]]:
            raise ValueError(f"gold label at position {t} violates the position mask")
    if not np.isfinite(start[gold[0]]) or not np.isfinite(end[gold[-1]]):
        raise ValueError("gold path uses a banned start/end label")
    for t in range(1, m):
        if not np.isfinite(trans[gold[t - 1], gold[t]]):
            raise ValueError(f"gold transition at position {t} is banned")

    alphas = _forward(em, trans, start, end, allowed)
    logz = _logsumexp(alphas[-1] + end)
    if not np.isfinite(logz):
        raise ValueError("all label paths are masked out")

    betas = np.full((m, L), NEG_INF)
    betas[m - 1] = np.where(allowed[m - 1], end, NEG_INF)
    for t in range(m - 2, -1, -1):
        nxt = em[t + 1] + betas[t + 1]
        for y in range(L):
            if allowed[t, y]:
                betas[t, y] = _logsumexp(trans[y] + nxt)

    d_em = np.exp(alphas + betas - logz)
    d_trans = np.zeros((L, L))
    for t in range(1, m):
        # Pairwise posterior over (label at t-1, label at t).
        xi = alphas[t - 1][:, None] + trans + (em[t] + betas[t])[None, :] - logz
        d_trans += np.exp(xi)
    d_start = d_em[0].copy()
    d_end = d_em[m - 1].copy()

    d_em[np.arange(m), gold] -= 1.0
    d_start[gold[0]] -= 1.0
    d_end[gold[-1]] -= 1.0
    for t in range(1, m):
        d_trans[gold[t - 1], gold[t]] -= 1.0

    nll = logz - path_score(em, trans, start, end, gold)
    return float(nll), d_em, d_trans, d_start, d_end
