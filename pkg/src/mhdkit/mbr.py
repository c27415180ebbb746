"""Minimum-Bayes-risk selection over an epsilon-sampled candidate pool.

A pool of candidate translations is scored with a chrF-family utility; the
selected hypotheses are those with the highest expected utility under the
pool's weights (the candidates' renormalized model probabilities by default,
or uniform). Two utility modes exist:

* ``pairwise_chrf``: the plain character-n-gram F-score between two
  sentences, giving the O(n^2) expected-utility computation.
* ``fastchrf_aggregate``: candidate n-gram counts are pooled once with their
  weights and every hypothesis is scored against the pooled statistics,
  making selection O(pool + hypotheses). On a singleton pool this equals the
  pairwise utility exactly.

Duplicated candidates are merged by summing their weights before any utility
evaluation; identical strings have identical utilities, so this is an exact
optimization.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .decode import DecodeParams, HypothesisSet, sample_epsilon
from .errors import ConfigError, InputError
from .metrics import _chrf_chars, _ngram_counts
from .seqmodel import CondSeqModel, Hypothesis, TokenSeq, Vocab

WEIGHTINGS = ("model_prob", "uniform")


@dataclass(frozen=True)
class UtilityParams:
    char_order: int = 6
    beta: float = 2.0
    include_space: bool = True
    mode: str = "fastchrf_aggregate"

    def validate(self) -> None:
        if self.char_order < 1:
            raise ConfigError("char_order must be at least 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.mode not in ("pairwise_chrf", "fastchrf_aggregate"):
            raise ConfigError(f"unknown utility mode {self.mode!r}")


@dataclass(frozen=True)
class MbrParams:
    M: int = 1
    n_candidates: int = 256
    epsilon: float = 0.02
    seed: int = 0
    max_steps: int = 64
    weighting: str = "model_prob"
    utility: UtilityParams = UtilityParams()

    def validate(self) -> None:
        if self.M < 1 or self.n_candidates < 1:
            raise ConfigError("M and n_candidates must be at least 1")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in [0, 1)")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        self.utility.validate()


@dataclass
class CandidatePool:
    """Weighted candidates for one source; duplicates allowed until merged."""

    hyps: list[Hypothesis]
    texts: list[str]
    weights: np.ndarray
    weighting: str

    def __post_init__(self) -> None:
        if len(self.hyps) != len(self.texts) or \
                len(self.hyps) != len(self.weights):
            raise InputError("pool fields must have equal lengths")
        if not self.hyps:
            raise InputError("candidate pool must be non-empty")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise InputError("pool weights must sum to 1")

    @classmethod
    def from_hypotheses(cls, hyps: Sequence[Hypothesis], vocab: Vocab,
                        weighting: str = "model_prob") -> "CandidatePool":
        if not hyps:
            raise InputError("candidate pool must be non-empty")
        if weighting == "model_prob":
            logprobs = np.array([h.logprob for h in hyps])
            shifted = logprobs - logprobs.max()
            weights = np.exp(shifted)
            weights /= weights.sum()
        elif weighting == "uniform":
            weights = np.full(len(hyps), 1.0 / len(hyps))
        else:
            raise ConfigError(f"unknown weighting {weighting!r}")
        texts = [vocab.decode(h.tokens) for h in hyps]
        return cls(hyps=list(hyps), texts=texts, weights=weights,
                   weighting=weighting)

    def merged(self) -> "CandidatePool":
        """Collapse duplicate token sequences, summing their weights."""
        order: dict[TokenSeq, int] = {}
        hyps: list[Hypothesis] = []
        texts: list[str] = []
        weights: list[float] = []
        for hyp, text, weight in zip(self.hyps, self.texts, self.weights):
            at = order.get(hyp.tokens)
            if at is None:
                order[hyp.tokens] = len(hyps)
                hyps.append(hyp)
                texts.append(text)
                weights.append(float(weight))
            else:
                weights[at] += float(weight)
        return CandidatePool(hyps=hyps, texts=texts,
                             weights=np.array(weights),
                             weighting=self.weighting)


def pool_to_jsonl(pool: CandidatePool, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"weighting": pool.weighting,
                             "size": len(pool.hyps)}) + "\n")
        for hyp, text, weight in zip(pool.hyps, pool.texts, pool.weights):
            fh.write(json.dumps({
                "tokens": list(hyp.tokens), "text": text,
                "logprob": hyp.logprob,
                "step_logprobs": list(hyp.step_logprobs),
                "weight": float(weight)}) + "\n")


def pool_from_jsonl(path: str | Path) -> CandidatePool:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InputError(f"empty pool file {path}")
    header = json.loads(lines[0])
    hyps, texts, weights = [], [], []
    for line in lines[1:]:
        rec = json.loads(line)
        hyps.append(Hypothesis(tuple(rec["tokens"]), rec["logprob"],
                               tuple(rec["step_logprobs"])))
        texts.append(rec["text"])
        weights.append(rec["weight"])
    return CandidatePool(hyps=hyps, texts=texts, weights=np.array(weights),
                         weighting=header["weighting"])


# --- Utilities ---------------------------------------------------------------

def _utility_stats(hyp_counts: list[Counter], cand_counts: list[Counter],
                   n_orders: int) -> np.ndarray:
    vec = np.zeros(3 * n_orders)
    for o in range(n_orders):
        hc, cc = hyp_counts[o], cand_counts[o]
        vec[3 * o] = sum(hc.values())
        vec[3 * o + 1] = sum(cc.values())
        vec[3 * o + 2] = sum(min(c, cc[g]) for g, c in hc.items())
    return vec


def _order_counts(text: str, params: UtilityParams) -> list[Counter]:
    chars = _chrf_chars(text, params.include_space)
    return [_ngram_counts(chars, n + 1) for n in range(params.char_order)]


def chrf_utility(hyp: str, cand: str,
                 params: UtilityParams = UtilityParams(
                     mode="pairwise_chrf")) -> float:
    """Character-n-gram F-score between a hypothesis and one candidate."""
    if params.mode != "pairwise_chrf":
        raise ConfigError("chrf_utility requires mode=pairwise_chrf")
    params.validate()
    vec = _utility_stats(_order_counts(hyp, params),
                         _order_counts(cand, params), params.char_order)
    return float(_kernels.chrf_from_vec(vec, params.char_order, params.beta,
                                        True))


class PooledStats:
    """Weight-averaged candidate n-gram statistics, built once per pool."""

    def __init__(self, pool: CandidatePool, params: UtilityParams):
        params.validate()
        self.params = params
        self.counts: list[dict] = [dict() for _ in range(params.char_order)]
        self.totals = np.zeros(params.char_order)
        for text, weight in zip(pool.texts, pool.weights):
            w = float(weight)
            for o, counter in enumerate(_order_counts(text, params)):
                pooled = self.counts[o]
                for gram, count in counter.items():
                    pooled[gram] = pooled.get(gram, 0.0) + w * count
                self.totals[o] += w * sum(counter.values())

    def score(self, hyp: str) -> float:
        params = self.params
        vec = np.zeros(3 * params.char_order)
        for o, counter in enumerate(_order_counts(hyp, params)):
            pooled = self.counts[o]
            vec[3 * o] = sum(counter.values())
            vec[3 * o + 1] = self.totals[o]
            vec[3 * o + 2] = sum(min(float(c), pooled.get(g, 0.0))
                                 for g, c in counter.items())
        return float(_kernels.chrf_from_vec(vec, params.char_order,
                                            params.beta, True))


def fastchrf_aggregate(hyp: str, pool: CandidatePool,
                       params: UtilityParams = UtilityParams()) -> float:
    """Score ``hyp`` against the pool's weight-averaged n-gram statistics."""
    if params.mode != "fastchrf_aggregate":
        raise ConfigError("fastchrf_aggregate requires mode=fastchrf_aggregate")
    return PooledStats(pool.merged(), params).score(hyp)


def expected_utilities(pool: CandidatePool,
                       params: UtilityParams = UtilityParams(),
                       utility_fn: Callable[[str, str], float] | None = None,
                       ) -> np.ndarray:
    """Expected utility of every (merged) pool candidate against the pool.

    ``utility_fn`` overrides the configured utility with an arbitrary
    sentence-pair function (used for indicator-utility checks).
    """
    merged = pool.merged()
    if utility_fn is not None or params.mode == "pairwise_chrf":
        fn = utility_fn or (lambda h, c: chrf_utility(h, c, params))
        return np.array([
            sum(w * fn(h, c)
                for c, w in zip(merged.texts, merged.weights))
            for h in merged.texts])
    pooled = PooledStats(merged, params)
    return np.array([pooled.score(h) for h in merged.texts])


def mbr_select(pool: CandidatePool, M: int,
               params: UtilityParams = UtilityParams(),
               decode_params: DecodeParams | None = None,
               utility_fn: Callable[[str, str], float] | None = None,
               ) -> HypothesisSet:
    """Top-M unique candidates by expected utility.

    Ties break toward higher model log-probability, then lexicographic token
    order. Requesting more hypotheses than there are unique candidates
    returns them all with a warning.
    """
    merged = pool.merged()
    utilities = expected_utilities(pool, params, utility_fn=utility_fn)
    ranked = sorted(range(len(merged.hyps)),
                    key=lambda i: (-utilities[i], -merged.hyps[i].logprob,
                                   merged.hyps[i].tokens))
    warnings = []
    if M > len(ranked):
        warnings.append(f"only {len(ranked)} unique candidates for M={M}")
    take = ranked[:M]
    return HypothesisSet(
        source=(), hyps=[merged.hyps[i] for i in take], method="mbr",
        params=decode_params, seed=decode_params.seed if decode_params else 0,
        selection_scores=[float(utilities[i]) for i in take],
        warnings=warnings,
        meta={"weighting": merged.weighting,
              "pool_logprobs": [h.logprob for h in merged.hyps],
              "pool_weights": [float(w) for w in merged.weights]})


def mbr_decode(model: CondSeqModel, source: TokenSeq,
               params: MbrParams = MbrParams(),
               source_index: int = 0) -> HypothesisSet:
    """Epsilon-sample a candidate pool, then select by expected utility."""
    params.validate()
    sample_params = DecodeParams(method="epsilon", M=params.n_candidates,
                                 epsilon=params.epsilon, seed=params.seed,
                                 max_steps=params.max_steps)
    sampled = sample_epsilon(model, source, sample_params,
                             source_index=source_index)
    pool = CandidatePool.from_hypotheses(sampled.hyps, model.vocab(),
                                         weighting=params.weighting)
    chosen = mbr_select(pool, params.M, params.utility,
                        decode_params=sample_params)
    chosen.source = source
    chosen.seed = params.seed
    chosen.warnings = sampled.warnings + chosen.warnings
    return chosen
