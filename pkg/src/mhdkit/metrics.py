"""String metrics and the paired significance test.

BLEU is pinned to: 13a tokenization, 4-gram, exponential smoothing of
zero-match orders (the n-th zero precision becomes 1/(2^n_zeros * total)),
effective order off, mixed case, brevity penalty exp(1 - r/c) for c < r.
chrF++ is pinned to: character orders 1-6 plus word orders 1-2, beta=2,
effective order on (orders with no reference n-grams are skipped), spaces
excluded from character n-grams, punctuation split from word edges for the
word n-grams.

Both metrics decompose into per-segment sufficient statistics
(:class:`SegmentStats`), and every corpus score is computed from summed
statistics, which is what makes the paired approximate randomization test
exact under segment swaps. All functions are pure.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import InputError
from .rng import stream

# --- 13a tokenization (language-independent mteval rules) ------------------

_13A_PUNCT = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_13A_PERIOD_AFTER = re.compile(r"([^0-9])([\.,])")
_13A_PERIOD_BEFORE = re.compile(r"([\.,])([^0-9])")
_13A_DIGIT_DASH = re.compile(r"([0-9])(-)")


def tokenize_13a(line: str) -> list[str]:
    norm = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in norm:
        norm = (norm.replace("&quot;", '"').replace("&amp;", "&")
                .replace("&lt;", "<").replace("&gt;", ">"))
    norm = f" {norm} "
    norm = _13A_PUNCT.sub(r" \1 ", norm)
    norm = _13A_PERIOD_AFTER.sub(r"\1 \2 ", norm)
    norm = _13A_PERIOD_BEFORE.sub(r" \1 \2", norm)
    norm = _13A_DIGIT_DASH.sub(r"\1 \2 ", norm)
    return norm.split()


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    tokenizer: str = "13a"
    smooth: str = "exp"
    effective_order: bool = False
    lowercase: bool = False


@dataclass(frozen=True)
class ChrfConfig:
    char_order: int = 6
    word_order: int = 2
    beta: float = 2.0
    effective_order: bool = True
    include_space: bool = False

    @property
    def n_orders(self) -> int:
        return self.char_order + self.word_order


BLEU_DEFAULT = BleuConfig()
CHRFPP_DEFAULT = ChrfConfig()


@dataclass(frozen=True)
class SegmentStats:
    """Per-segment sufficient statistics; summing them scores a corpus.

    BLEU layout: [match_1..4, total_1..4, hyp_len, ref_len].
    chrF layout: [hyp_count, ref_count, match] per order, concatenated.
    """

    metric: str  # "bleu" | "chrfpp"
    vec: np.ndarray
    chrf: ChrfConfig | None = None

    def score_from(self, vec: np.ndarray) -> float:
        if self.metric == "bleu":
            return float(_kernels.bleu_from_vec(vec))
        cfg = self.chrf or CHRFPP_DEFAULT
        return float(_kernels.chrf_from_vec(vec, cfg.n_orders, cfg.beta,
                                            cfg.effective_order))

    @property
    def score(self) -> float:
        return self.score_from(self.vec)


def corpus_score_from_stats(stats: Sequence[SegmentStats]) -> float:
    if not stats:
        raise InputError("cannot score an empty corpus")
    total = np.zeros_like(stats[0].vec)
    for s in stats:
        total = total + s.vec
    return stats[0].score_from(total)


# --- BLEU -------------------------------------------------------------------

def _ngram_counts(tokens: list[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order])
                   for i in range(len(tokens) - order + 1))


def _bleu_tokens(text: str, config: BleuConfig) -> list[str]:
    if config.lowercase:
        text = text.lower()
    return tokenize_13a(text)


def bleu_segment_stats(hyp: str, refs: str | Sequence[str],
                       config: BleuConfig = BLEU_DEFAULT) -> SegmentStats:
    """Statistics of one hypothesis against one or more references.

    Multi-reference clipping uses the per-n-gram maximum over references;
    the reference length is the one closest to the hypothesis length
    (shorter wins ties).
    """
    if isinstance(refs, str):
        refs = [refs]
    hyp_tokens = _bleu_tokens(hyp, config)
    ref_tokens = [_bleu_tokens(r, config) for r in refs]
    vec = np.zeros(2 * config.max_order + 2)
    for n in range(1, config.max_order + 1):
        hyp_counts = _ngram_counts(hyp_tokens, n)
        best: Counter = Counter()
        for toks in ref_tokens:
            for gram, count in _ngram_counts(toks, n).items():
                if count > best[gram]:
                    best[gram] = count
        vec[n - 1] = sum(min(c, best[g]) for g, c in hyp_counts.items())
        vec[config.max_order + n - 1] = max(len(hyp_tokens) - n + 1, 0)
    vec[-2] = len(hyp_tokens)
    vec[-1] = min((abs(len(t) - len(hyp_tokens)), len(t))
                  for t in ref_tokens)[1]
    return SegmentStats(metric="bleu", vec=vec)


def bleu_corpus(hyps: Sequence[str], refs: Sequence[str],
                config: BleuConfig = BLEU_DEFAULT) -> float:
    if len(hyps) != len(refs):
        raise InputError("hypothesis and reference counts differ")
    if not hyps:
        raise InputError("cannot score an empty corpus")
    return corpus_score_from_stats(
        [bleu_segment_stats(h, r, config) for h, r in zip(hyps, refs)])


def sentence_bleu(hyp: str, refs: str | Sequence[str],
                  config: BleuConfig = BLEU_DEFAULT) -> float:
    return bleu_segment_stats(hyp, refs, config).score


def self_bleu(hyps: Sequence[str]) -> float:
    """Mean BLEU of each hypothesis against its M-1 siblings (multi-ref).

    High values mean the M hypotheses are near-duplicates.
    """
    if len(hyps) < 2:
        raise InputError("self-BLEU needs at least two hypotheses")
    scores = []
    for m, hyp in enumerate(hyps):
        others = [h for i, h in enumerate(hyps) if i != m]
        scores.append(sentence_bleu(hyp, others))
    return float(np.mean(scores))


# --- chrF++ -----------------------------------------------------------------

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def chrf_words(text: str) -> list[str]:
    """Whitespace tokens with a single leading/trailing punctuation mark
    split off, the word-unit rule of the chrF++ word n-grams."""
    words: list[str] = []
    for word in text.split():
        if len(word) > 1 and _is_punct(word[-1]):
            words.extend((word[:-1], word[-1]))
        elif len(word) > 1 and _is_punct(word[0]):
            words.extend((word[0], word[1:]))
        else:
            words.append(word)
    return words


def _chrf_chars(text: str, include_space: bool) -> list[str]:
    text = " ".join(text.split())
    if not include_space:
        text = text.replace(" ", "")
    return list(text)


def chrf_segment_stats(hyp: str, ref: str,
                       config: ChrfConfig = CHRFPP_DEFAULT) -> SegmentStats:
    vec = np.zeros(3 * config.n_orders)
    hyp_chars = _chrf_chars(hyp, config.include_space)
    ref_chars = _chrf_chars(ref, config.include_space)
    hyp_words = chrf_words(hyp) if config.word_order else []
    ref_words = chrf_words(ref) if config.word_order else []
    units = [(hyp_chars, ref_chars, n + 1) for n in range(config.char_order)]
    units += [(hyp_words, ref_words, n + 1) for n in range(config.word_order)]
    for o, (h_units, r_units, n) in enumerate(units):
        hyp_counts = _ngram_counts(h_units, n)
        ref_counts = _ngram_counts(r_units, n)
        vec[3 * o] = sum(hyp_counts.values())
        vec[3 * o + 1] = sum(ref_counts.values())
        vec[3 * o + 2] = sum(min(c, ref_counts[g])
                             for g, c in hyp_counts.items())
    return SegmentStats(metric="chrfpp", vec=vec, chrf=config)


def chrfpp(hyp: str, ref: str, config: ChrfConfig = CHRFPP_DEFAULT) -> float:
    """Segment-level chrF++ (empty vs. empty is defined as 100)."""
    return chrf_segment_stats(hyp, ref, config).score


def chrfpp_corpus(hyps: Sequence[str], refs: Sequence[str],
                  config: ChrfConfig = CHRFPP_DEFAULT) -> float:
    if len(hyps) != len(refs):
        raise InputError("hypothesis and reference counts differ")
    if not hyps:
        raise InputError("cannot score an empty corpus")
    return corpus_score_from_stats(
        [chrf_segment_stats(h, r, config) for h, r in zip(hyps, refs)])


# --- Paired approximate randomization ---------------------------------------

@dataclass(frozen=True)
class RandomizationResult:
    p_value: float
    delta: float
    score_a: float
    score_b: float
    rounds: int


def paired_randomization_test(stats_a: Sequence[SegmentStats],
                              stats_b: Sequence[SegmentStats],
                              rounds: int = 10000,
                              seed: int = 0,
                              chunk_rows: int | None = None) -> RandomizationResult:
    """Two-sided paired approximate randomization over corpus scores.

    Each permutation independently swaps each aligned segment pair with
    probability 1/2 and recomputes both corpus scores from summed
    statistics; p = (1 + #{|delta*| >= |delta|}) / (1 + rounds).
    """
    if len(stats_a) != len(stats_b):
        raise InputError("paired test needs equally many segments per system")
    if not stats_a:
        raise InputError("paired test needs at least one segment")
    first = stats_a[0]
    for s in (*stats_a, *stats_b):
        if s.metric != first.metric or s.chrf != first.chrf:
            raise InputError("all segment statistics must share one metric")
    mat_a = np.stack([s.vec for s in stats_a])
    mat_b = np.stack([s.vec for s in stats_b])
    score_a = first.score_from(mat_a.sum(axis=0))
    score_b = first.score_from(mat_b.sum(axis=0))
    delta = score_a - score_b
    if first.metric == "bleu":
        code, n_orders, beta, eff = _kernels.METRIC_BLEU, 0, 0.0, False
    else:
        cfg = first.chrf or CHRFPP_DEFAULT
        code = _kernels.METRIC_CHRF
        n_orders, beta, eff = cfg.n_orders, cfg.beta, cfg.effective_order
    rng = stream(seed)
    n_seg = len(stats_a)
    extreme = 0
    # Swap masks are drawn row-major from one stream, so any chunking yields
    # the same permutations; chunks only bound peak memory.
    chunk = chunk_rows or max(1, min(rounds, 8_000_000 // max(n_seg, 1)))
    done = 0
    while done < rounds:
        take = min(chunk, rounds - done)
        swap = (rng.random((take, n_seg)) < 0.5).astype(np.uint8)
        deltas = _kernels.perm_deltas(mat_a, mat_b, swap, code, n_orders,
                                      beta, eff)
        extreme += int(np.sum(np.abs(deltas) >= abs(delta)))
        done += take
    p_value = (1 + extreme) / (1 + rounds)
    return RandomizationResult(p_value=p_value, delta=delta, score_a=score_a,
                               score_b=score_b, rounds=rounds)
