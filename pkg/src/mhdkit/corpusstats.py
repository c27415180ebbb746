"""Corpus-level diagnostics: rank-frequency, uniqueness, coverage, and the
probability analyses of multi-hypothesis generation.

Word tokenization for every statistic here is plain whitespace splitting,
case-sensitive. All outputs are deterministic and order-independent where
the underlying quantity is.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decode import HypothesisSet
from .errors import InputError

ZIPF_DEFAULT_CUTOFF = 10_000
LENGTH_BUCKET_WIDTH = 10
LENGTH_BUCKET_CAP = 200


@dataclass
class ZipfProfile:
    """Rank-frequency table with a log-log least-squares fit over the head."""

    words: list[str]
    frequencies: np.ndarray
    slope: float
    intercept: float
    cutoff: int
    degenerate: bool
    total_tokens: int

    def as_dict(self) -> dict:
        return {
            "unique_words": len(self.words),
            "total_tokens": self.total_tokens,
            "slope": self.slope,
            "intercept": self.intercept,
            "cutoff": self.cutoff,
            "degenerate": self.degenerate,
            "head": [
                {"rank": i + 1, "word": w, "frequency": int(f)}
                for i, (w, f) in enumerate(
                    zip(self.words[:50], self.frequencies[:50]))],
        }


def zipf_profile(corpus: Sequence[str],
                 cutoff: int = ZIPF_DEFAULT_CUTOFF) -> ZipfProfile:
    """Rank words by frequency and fit ln(freq) ~ ln(rank) by OLS.

    The fit uses ranks 1..min(cutoff, vocabulary) so tail hapax noise does
    not dominate. A single-rank corpus has no defined slope and is flagged
    degenerate with slope 0.
    """
    if not corpus:
        raise InputError("cannot profile an empty corpus")
    counts = Counter()
    total = 0
    for sentence in corpus:
        tokens = sentence.split()
        counts.update(tokens)
        total += len(tokens)
    if not counts:
        raise InputError("corpus contains no tokens")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked]
    freqs = np.array([f for _, f in ranked], dtype=np.float64)
    k = min(cutoff, len(words))
    if k < 2:
        return ZipfProfile(words=words, frequencies=freqs, slope=0.0,
                           intercept=float(np.log(freqs[0])), cutoff=k,
                           degenerate=True, total_tokens=total)
    x = np.log(np.arange(1, k + 1, dtype=np.float64))
    y = np.log(freqs[:k])
    slope, intercept = np.polyfit(x, y, 1)
    return ZipfProfile(words=words, frequencies=freqs, slope=float(slope),
                       intercept=float(intercept), cutoff=k,
                       degenerate=False, total_tokens=total)


def unique_counts(corpus: Sequence[str]) -> tuple[int, int]:
    """(unique whitespace words, unique exact-match sentences)."""
    words = set()
    sentences = set()
    for sentence in corpus:
        sentences.add(sentence)
        words.update(sentence.split())
    return len(words), len(sentences)


@dataclass
class CoverageReport:
    train_unique_words: int
    test_unique_words: int
    covered: int
    ratio: float

    def as_dict(self) -> dict:
        return {"train_unique_words": self.train_unique_words,
                "test_unique_words": self.test_unique_words,
                "covered": self.covered, "ratio": self.ratio}


def vocab_coverage(train_targets: Sequence[str],
                   test_targets: Sequence[str]) -> CoverageReport:
    """Fraction of the test-side vocabulary present in the training targets."""
    train_words = {w for s in train_targets for w in s.split()}
    test_words = {w for s in test_targets for w in s.split()}
    if not test_words:
        raise InputError("test corpus contains no tokens")
    covered = len(train_words & test_words)
    return CoverageReport(train_unique_words=len(train_words),
                          test_unique_words=len(test_words),
                          covered=covered,
                          ratio=covered / len(test_words))


@dataclass
class RankCurve:
    """Mean and spread of length-normalized log-probability per rank m.

    For beam-family sets the rank is the selection order; for sampling sets
    it is the sample index. Normalization divides by generated token count
    (EOS included); that choice is recorded in the metadata.
    """

    M: int
    means: np.ndarray
    stds: np.ndarray
    count: int
    normalization: str = "per-token (EOS included)"

    def as_dict(self) -> dict:
        return {"M": self.M, "count": self.count,
                "normalization": self.normalization,
                "means": [float(v) for v in self.means],
                "stds": [float(v) for v in self.stds]}


def rank_curves(sets: Sequence[HypothesisSet]) -> RankCurve:
    if not sets:
        raise InputError("rank curves need at least one hypothesis set")
    m = len(sets[0].hyps)
    values = np.empty((len(sets), m))
    for i, hyp_set in enumerate(sets):
        if len(hyp_set.hyps) != m:
            raise InputError("all hypothesis sets must share the same M")
        for r, hyp in enumerate(hyp_set.hyps):
            values[i, r] = hyp.norm_logprob
    return RankCurve(M=m, means=values.mean(axis=0), stds=values.std(axis=0),
                     count=len(sets))


@dataclass
class FilterReport:
    """Which evaluated hypotheses fall under the epsilon-pool median."""

    thresholds: list[float]
    discard_flags: list[list[bool]]
    overall_discard_rate: float
    bucket_rates: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"overall_discard_rate": self.overall_discard_rate,
                "buckets": self.bucket_rates}


def median_probability_filter(eps_pools: Sequence[HypothesisSet],
                              eval_sets: Sequence[HypothesisSet],
                              source_texts: Sequence[str],
                              ) -> FilterReport:
    """Flag evaluated hypotheses whose sequence probability falls below the
    median of the source's epsilon-sampled pool.

    The median is taken in log space over the pool's sequence
    log-probabilities. Discard rates are aggregated into 10-character
    source-length buckets capped at 200 characters.
    """
    if not (len(eps_pools) == len(eval_sets) == len(source_texts)):
        raise InputError("pools, evaluated sets and sources must align")
    if not eps_pools:
        raise InputError("need at least one source")
    thresholds: list[float] = []
    flags: list[list[bool]] = []
    bucket_hit: Counter = Counter()
    bucket_tot: Counter = Counter()
    discarded = 0
    total = 0
    for pool, eval_set, text in zip(eps_pools, eval_sets, source_texts):
        if not pool.hyps:
            raise InputError("epsilon pool must be non-empty")
        threshold = float(np.median([h.logprob for h in pool.hyps]))
        thresholds.append(threshold)
        row = [h.logprob < threshold for h in eval_set.hyps]
        flags.append(row)
        bucket = min(len(text), LENGTH_BUCKET_CAP) // LENGTH_BUCKET_WIDTH \
            * LENGTH_BUCKET_WIDTH
        bucket_hit[bucket] += sum(row)
        bucket_tot[bucket] += len(row)
        discarded += sum(row)
        total += len(row)
    buckets = [{"length_lo": b, "length_hi": b + LENGTH_BUCKET_WIDTH,
                "discard_rate": bucket_hit[b] / bucket_tot[b],
                "count": bucket_tot[b]}
               for b in sorted(bucket_tot)]
    return FilterReport(thresholds=thresholds, discard_flags=flags,
                        overall_discard_rate=discarded / max(total, 1),
                        bucket_rates=buckets)
