"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

Set ``MHDKIT_NO_NUMBA=1`` to force the vectorized numpy fallbacks
everywhere. In the default configuration the active path is chosen per
kernel by measurement (see benchmarks/bench_kernels.py): the per-step
sampling and batch-1 row mixing run ~2-4x faster jitted, while the
permutation test is dominated by a matmul that BLAS wins outright, so its
active implementation is the vectorized one on both settings.

Both variants of each kernel perform the identical sequence of
floating-point operations wherever a decision depends on the result
(sampling, truncation), so token choices do not depend on the path. Kernels
operate on plain float64 arrays only; anything involving strings or Python
objects lives in the regular modules.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("MHDKIT_NO_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on"
}

if not NUMBA_DISABLED:
    from numba import njit
else:  # pragma: no cover - exercised via the env flag in the benchmark
    njit = None

TOP_K, TOP_P, EPSILON = 0, 1, 2
METRIC_BLEU, METRIC_CHRF = 0, 1


# ---------------------------------------------------------------------------
# Truncated sampling: mask a next-token distribution (top-k / top-p / epsilon
# floor), renormalize implicitly, and pick the token for a uniform draw u.
# Support order is probability-descending with ties broken by token id, which
# both variants obtain from the same stable argsort.
# ---------------------------------------------------------------------------

def _truncated_sample_loop(probs, mode, k, p, eps, u):
    order = np.argsort(-probs, kind="mergesort")
    size = order.size
    n = 0
    if mode == 0:
        n = k if k < size else size
    elif mode == 1:
        acc = 0.0
        for i in range(size):
            if acc < p:
                n += 1
                acc += probs[order[i]]
            else:
                break
    else:
        for i in range(size):
            if probs[order[i]] >= eps:
                n += 1
            else:
                break
        if n == 0:
            return order[0], True
    total = 0.0
    for i in range(n):
        total += probs[order[i]]
    target = u * total
    tok = order[n - 1]
    acc = 0.0
    for i in range(n):
        acc += probs[order[i]]
        if acc > target:
            tok = order[i]
            break
    return tok, False


def _truncated_sample_vec(probs, mode, k, p, eps, u):
    order = np.argsort(-probs, kind="mergesort")
    sorted_probs = probs[order]
    if mode == 0:
        support = order[:k]
        weights = sorted_probs[:k]
    elif mode == 1:
        cum = np.cumsum(sorted_probs)
        keep = (cum - sorted_probs) < p
        support = order[keep]
        weights = sorted_probs[keep]
    else:
        keep = sorted_probs >= eps
        if not keep.any():
            return int(order[0]), True
        n = int(keep.sum())  # floor mask is a prefix of the sorted order
        support = order[:n]
        weights = sorted_probs[:n]
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    if idx >= support.size:
        idx = support.size - 1
    return int(support[idx]), False


# ---------------------------------------------------------------------------
# Table-model rows: log(mix * lex_row + (1 - mix) * bigram_row) for a batch
# of bigram rows sharing one lexical row (all prefixes of one source).
# ---------------------------------------------------------------------------

def _mix_log_rows_loop(lex_row, bigram_rows, mix):
    n_rows, n_cols = bigram_rows.shape
    out = np.empty((n_rows, n_cols))
    for i in range(n_rows):
        for j in range(n_cols):
            x = mix * lex_row[j] + (1.0 - mix) * bigram_rows[i, j]
            out[i, j] = np.log(x) if x > 0.0 else -np.inf
    return out


def _mix_log_rows_vec(lex_row, bigram_rows, mix):
    x = mix * lex_row[np.newaxis, :] + (1.0 - mix) * bigram_rows
    with np.errstate(divide="ignore"):
        return np.log(x)


# ---------------------------------------------------------------------------
# Corpus scores from summed sufficient statistics.
#
# BLEU vector layout:  [match_1..4, total_1..4, hyp_len, ref_len]
# chrF vector layout:  [hyp_o, ref_o, match_o] per order, concatenated.
# ---------------------------------------------------------------------------

def _bleu_from_vec(vec):
    hyp_len = vec[8]
    ref_len = vec[9]
    if hyp_len <= 0.0:
        return 0.0
    log_sum = 0.0
    smooth = 1.0
    for n in range(4):
        total = vec[4 + n]
        if total <= 0.0:
            return 0.0
        match = vec[n]
        if match <= 0.0:
            smooth *= 2.0
            prec = 1.0 / (smooth * total)
        else:
            prec = match / total
        log_sum += np.log(prec)
    bp = 1.0
    if hyp_len < ref_len:
        bp = np.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * np.exp(log_sum / 4.0)


def _chrf_from_vec(vec, n_orders, beta, effective):
    factor = beta * beta
    f_sum = 0.0
    used = 0
    hyp_total = 0.0
    for o in range(n_orders):
        hyp = vec[3 * o]
        ref = vec[3 * o + 1]
        match = vec[3 * o + 2]
        hyp_total += hyp
        if effective and ref <= 0.0:
            continue
        used += 1
        if hyp > 0.0 and ref > 0.0 and match > 0.0:
            prec = match / hyp
            rec = match / ref
            f_sum += (1.0 + factor) * prec * rec / (factor * prec + rec)
    if used == 0:
        return 100.0 if hyp_total <= 0.0 else 0.0
    return 100.0 * f_sum / used


# ---------------------------------------------------------------------------
# Paired-randomization deltas: for each permutation row, swap segment stats
# between systems where the mask is set, then rescore both corpora.
# ---------------------------------------------------------------------------

def _perm_deltas_loop(stats_a, stats_b, swap, metric, n_orders, beta, effective):
    n_perm, n_seg = swap.shape
    dim = stats_a.shape[1]
    totals = np.zeros(dim)
    for i in range(n_seg):
        for d in range(dim):
            totals[d] += stats_a[i, d] + stats_b[i, d]
    deltas = np.empty(n_perm)
    sum_a = np.empty(dim)
    sum_b = np.empty(dim)
    for r in range(n_perm):
        for d in range(dim):
            sum_a[d] = 0.0
        for i in range(n_seg):
            if swap[r, i]:
                for d in range(dim):
                    sum_a[d] += stats_b[i, d]
            else:
                for d in range(dim):
                    sum_a[d] += stats_a[i, d]
        for d in range(dim):
            sum_b[d] = totals[d] - sum_a[d]
        if metric == 0:
            deltas[r] = _bleu_from_vec(sum_a) - _bleu_from_vec(sum_b)
        else:
            deltas[r] = _chrf_from_vec(sum_a, n_orders, beta, effective) - \
                _chrf_from_vec(sum_b, n_orders, beta, effective)
    return deltas


def _bleu_rows(mat):
    hyp_len = mat[:, 8]
    ref_len = mat[:, 9]
    log_sum = np.zeros(mat.shape[0])
    smooth = np.ones(mat.shape[0])
    dead = hyp_len <= 0.0
    for n in range(4):
        total = mat[:, 4 + n]
        match = mat[:, n]
        dead |= total <= 0.0
        zero = match <= 0.0
        smooth = np.where(zero, smooth * 2.0, smooth)
        safe_total = np.where(total > 0.0, total, 1.0)
        prec = np.where(zero, 1.0 / (smooth * safe_total),
                        match / safe_total)
        log_sum += np.log(prec)
    with np.errstate(divide="ignore", invalid="ignore"):
        bp = np.where(hyp_len < ref_len,
                      np.exp(1.0 - ref_len / np.where(hyp_len > 0, hyp_len, 1.0)),
                      1.0)
    score = 100.0 * bp * np.exp(log_sum / 4.0)
    return np.where(dead, 0.0, score)


def _chrf_rows(mat, n_orders, beta, effective):
    factor = beta * beta
    f_sum = np.zeros(mat.shape[0])
    used = np.zeros(mat.shape[0])
    hyp_total = np.zeros(mat.shape[0])
    for o in range(n_orders):
        hyp = mat[:, 3 * o]
        ref = mat[:, 3 * o + 1]
        match = mat[:, 3 * o + 2]
        hyp_total += hyp
        counted = ~(np.logical_and(effective, ref <= 0.0))
        used += counted
        pos = (hyp > 0.0) & (ref > 0.0) & (match > 0.0) & counted
        prec = np.where(pos, match / np.where(hyp > 0, hyp, 1.0), 0.0)
        rec = np.where(pos, match / np.where(ref > 0, ref, 1.0), 0.0)
        denom = factor * prec + rec
        f_sum += np.where(pos, (1.0 + factor) * prec * rec /
                          np.where(denom > 0, denom, 1.0), 0.0)
    empty_all = used <= 0.0
    score = 100.0 * f_sum / np.where(used > 0, used, 1.0)
    return np.where(empty_all, np.where(hyp_total <= 0.0, 100.0, 0.0), score)


def _perm_deltas_vec(stats_a, stats_b, swap, metric, n_orders, beta, effective):
    diff = stats_b - stats_a
    base_a = stats_a.sum(axis=0)
    totals = base_a + stats_b.sum(axis=0)
    sum_a = base_a[np.newaxis, :] + swap.astype(np.float64) @ diff
    sum_b = totals[np.newaxis, :] - sum_a
    if metric == METRIC_BLEU:
        return _bleu_rows(sum_a) - _bleu_rows(sum_b)
    return _chrf_rows(sum_a, n_orders, beta, effective) - \
        _chrf_rows(sum_b, n_orders, beta, effective)


if not NUMBA_DISABLED:
    truncated_sample = njit(cache=True)(_truncated_sample_loop)
    mix_log_rows = njit(cache=True)(_mix_log_rows_loop)
    bleu_from_vec = njit(cache=True)(_bleu_from_vec)
    chrf_from_vec = njit(cache=True)(_chrf_from_vec)

    def _make_perm_jit():
        bleu = bleu_from_vec
        chrf = chrf_from_vec

        def _perm(stats_a, stats_b, swap, metric, n_orders, beta, effective):
            n_perm, n_seg = swap.shape
            dim = stats_a.shape[1]
            totals = np.zeros(dim)
            for i in range(n_seg):
                for d in range(dim):
                    totals[d] += stats_a[i, d] + stats_b[i, d]
            deltas = np.empty(n_perm)
            sum_a = np.empty(dim)
            sum_b = np.empty(dim)
            for r in range(n_perm):
                for d in range(dim):
                    sum_a[d] = 0.0
                for i in range(n_seg):
                    if swap[r, i]:
                        for d in range(dim):
                            sum_a[d] += stats_b[i, d]
                    else:
                        for d in range(dim):
                            sum_a[d] += stats_a[i, d]
                for d in range(dim):
                    sum_b[d] = totals[d] - sum_a[d]
                if metric == 0:
                    deltas[r] = bleu(sum_a) - bleu(sum_b)
                else:
                    deltas[r] = chrf(sum_a, n_orders, beta, effective) - \
                        chrf(sum_b, n_orders, beta, effective)
            return deltas

        return njit(cache=True)(_perm)

    perm_deltas_jit = _make_perm_jit()
    perm_deltas = _perm_deltas_vec
else:
    truncated_sample = _truncated_sample_vec
    mix_log_rows = _mix_log_rows_vec
    bleu_from_vec = _bleu_from_vec
    chrf_from_vec = _chrf_from_vec
    perm_deltas_jit = None
    perm_deltas = _perm_deltas_vec


def warmup() -> None:
    """Trigger jit compilation ahead of timed sections (no-op on fallback)."""
    probs = np.array([0.5, 0.3, 0.2])
    truncated_sample(probs, TOP_K, 2, 0.9, 0.01, 0.5)
    truncated_sample(probs, TOP_P, 2, 0.9, 0.01, 0.5)
    truncated_sample(probs, EPSILON, 2, 0.9, 0.01, 0.5)
    mix_log_rows(probs, probs[np.newaxis, :], 0.5)
    vec = np.ones(10)
    bleu_from_vec(vec)
    chrf_from_vec(np.ones(24), 8, 2.0, True)
    perm_deltas(np.ones((2, 10)), np.ones((2, 10)),
                np.zeros((2, 2), dtype=np.uint8), METRIC_BLEU, 0, 2.0, True)
    perm_deltas(np.ones((2, 24)), np.ones((2, 24)),
                np.zeros((2, 2), dtype=np.uint8), METRIC_CHRF, 8, 2.0, True)
