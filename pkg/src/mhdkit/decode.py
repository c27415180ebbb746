"""Decoding families: greedy, beam, diverse beam, top-k / top-p / epsilon.

Each method can return M hypotheses per source. Deterministic methods rank
the n-best candidates; sampling methods draw M independent sequences from
seeded per-(source, sample) streams, so generation parallelizes across
sources without changing results. Reported hypothesis log-probabilities are
always the raw model chain, never the truncated/renormalized or penalized
selection scores, so every emitted hypothesis re-scores identically through
``CondSeqModel.score_sequence``.

Tie-breaking everywhere is by lexicographic token-id order, which keeps
outputs platform-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, DecodeError
from .rng import stream
from .seqmodel import CondSeqModel, Hypothesis, TokenSeq

METHODS = ("greedy", "beam", "diverse_beam", "top_k", "top_p", "epsilon")
SAMPLING_METHODS = ("top_k", "top_p", "epsilon")


@dataclass(frozen=True)
class DecodeParams:
    """Method selector plus every knob any method consumes.

    ``n`` is the beam width, ``G`` the diverse-beam group count, ``lam`` the
    diversity penalty weight, ``k``/``p``/``epsilon`` the truncation
    parameters of the sampling families, ``M`` the number of hypotheses
    requested, and ``seed`` the root of all sampling randomness. With
    ``length_normalize`` the finished pool of the beam families is ranked by
    per-token score instead of the raw sum (selection during expansion is
    always raw).
    """

    method: str
    M: int = 1
    n: int = 10
    G: int = 1
    lam: float = 0.5
    k: int = 10
    p: float = 0.7
    epsilon: float = 0.02
    max_steps: int = 64
    seed: int = 0
    length_normalize: bool = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown decoding method {self.method!r}")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.method == "beam" and self.n < self.M:
            raise ConfigError("beam width n must be at least M")
        if self.method == "diverse_beam":
            if self.G < 1 or self.n % self.G != 0:
                raise ConfigError("beam width n must be divisible by G")
            if self.n < self.M:
                raise ConfigError("beam width n must be at least M")
        if self.method == "top_k" and self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.method == "top_p" and not 0.0 < self.p <= 1.0:
            raise ConfigError("p must lie in (0, 1]")
        if self.method == "epsilon" and not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in [0, 1)")


@dataclass
class HypothesisSet:
    """M hypotheses for one source, with the exact settings that made them."""

    source: TokenSeq
    hyps: list[Hypothesis]
    method: str
    params: DecodeParams | None
    seed: int
    selection_scores: list[float] | None = None
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def greedy_decode(model: CondSeqModel, source: TokenSeq,
                  max_steps: int = 64) -> Hypothesis:
    """Follow the argmax token until EOS (forced at ``max_steps``)."""
    eos = model.vocab().eos
    tokens: list[int] = []
    steps: list[float] = []
    total = 0.0
    for _ in range(max_steps):
        row = model.next_logprobs(source, tuple(tokens))
        tok = int(np.argmax(row))
        total += float(row[tok])
        steps.append(float(row[tok]))
        tokens.append(tok)
        if tok == eos:
            break
    else:
        row = model.next_logprobs(source, tuple(tokens))
        total += float(row[eos])
        steps.append(float(row[eos]))
        tokens.append(eos)
    return Hypothesis(tuple(tokens), total, tuple(steps))


class _Beam:
    """Active prefixes of one (group's) beam plus its finished pool."""

    __slots__ = ("active", "finished", "stopped")

    def __init__(self) -> None:
        self.active: list[tuple[TokenSeq, float, tuple[float, ...]]] = \
            [((), 0.0, ())]
        self.finished: list[Hypothesis] = []
        self.stopped = False

    def should_stop(self, m: int) -> bool:
        if not self.active:
            return True
        if len(self.finished) < m:
            return False
        mth_best = sorted(h.logprob for h in self.finished)[-m]
        return max(score for _, score, _ in self.active) < mth_best

    def expand(self, model: CondSeqModel, source: TokenSeq, width: int,
               eos: int, penalty: np.ndarray | None = None,
               lam: float = 0.0) -> np.ndarray:
        """One synchronous step; returns the tokens this beam selected.

        Candidates are laid out prefix-lexicographic-major with ascending
        token ids, so a stable sort on score alone realizes the full
        (score desc, sequence lexicographic) order. ``penalty`` holds
        per-token counts from beams expanded earlier in the same step; those
        adjust selection scores only, never the stored chain scores.
        """
        prefixes = [a[0] for a in self.active]
        rows = model.next_logprobs_batch(source, prefixes)
        vocab_size = rows.shape[1]
        lex_order = sorted(range(len(self.active)),
                           key=lambda i: self.active[i][0])
        base = np.array([self.active[i][1] for i in lex_order])
        raw = (base[:, None] + rows[lex_order]).ravel()
        if penalty is not None and lam > 0.0:
            flat = raw - np.tile(lam * penalty, len(lex_order))
        else:
            flat = raw
        order = np.argsort(-flat, kind="mergesort")

        new_active: list[tuple[TokenSeq, float, tuple[float, ...]]] = []
        chosen = np.zeros(vocab_size)
        overall = 0
        for idx in order:
            if not np.isfinite(flat[idx]):
                break
            if overall >= width and len(new_active) >= width:
                break
            li, tok = divmod(int(idx), vocab_size)
            prefix, _, steps = self.active[lex_order[li]]
            score = float(raw[idx])
            step_lp = float(rows[lex_order[li], tok])
            if tok == eos:
                if overall < width:
                    self.finished.append(Hypothesis(
                        prefix + (eos,), score, steps + (step_lp,)))
                    chosen[tok] += 1
            elif len(new_active) < width:
                new_active.append(
                    (prefix + (tok,), score, steps + (step_lp,)))
                chosen[tok] += 1
            overall += 1
        self.active = new_active
        return chosen


def _finish_beam(finished: list[Hypothesis], params: DecodeParams,
                 source: TokenSeq, method: str) -> HypothesisSet:
    if params.length_normalize:
        key: Callable[[Hypothesis], tuple] = \
            lambda h: (-h.norm_logprob, h.tokens)
    else:
        key = lambda h: (-h.logprob, h.tokens)
    ranked = sorted(finished, key=key)[:params.M]
    warnings = []
    if not ranked:
        raise DecodeError(
            f"{method}: no hypothesis completed within {params.max_steps} "
            "steps")
    if len(ranked) < params.M:
        warnings.append(f"search exhausted with {len(ranked)} of "
                        f"{params.M} requested hypotheses")
    scores = [h.norm_logprob if params.length_normalize else h.logprob
              for h in ranked]
    return HypothesisSet(source=source, hyps=ranked, method=method,
                         params=params, seed=params.seed,
                         selection_scores=scores, warnings=warnings)


def beam_search(model: CondSeqModel, source: TokenSeq,
                params: DecodeParams) -> HypothesisSet:
    """Width-n beam search returning the M best completed hypotheses.

    Completed hypotheses move to a finished pool when they rank within the
    step's top-n candidates; the active beam keeps width n over incomplete
    prefixes. The search stops once no active prefix can still enter the
    top-M of the finished pool.
    """
    params.validate()
    if params.method not in ("beam", "diverse_beam"):
        raise ConfigError("beam_search expects beam params")
    eos = model.vocab().eos
    beam = _Beam()
    for _ in range(params.max_steps):
        if beam.should_stop(params.M):
            break
        beam.expand(model, source, params.n, eos)
    if not beam.finished and beam.active:
        best = max(beam.active, key=lambda a: a[1])
        raise DecodeError(
            f"beam: no hypothesis completed within {params.max_steps} steps; "
            f"best partial {best[0]} with logprob {best[1]:.4f}")
    return _finish_beam(beam.finished, params, source, "beam")


def diverse_beam_search(model: CondSeqModel, source: TokenSeq,
                        params: DecodeParams) -> HypothesisSet:
    """Group-wise beam search with a Hamming diversity penalty.

    The beam splits into G groups of width n/G expanded sequentially at each
    time step; a token picked by earlier groups at the current step costs
    ``lam`` per occurrence when later groups score their candidates. The
    returned set is the top-M of the deduplicated union of group pools.
    """
    params.validate()
    if params.method != "diverse_beam":
        raise ConfigError("diverse_beam_search expects diverse_beam params")
    eos = model.vocab().eos
    group_width = params.n // params.G
    groups = [_Beam() for _ in range(params.G)]
    for _ in range(params.max_steps):
        for g in groups:
            g.stopped = g.stopped or g.should_stop(params.M)
        if all(g.stopped for g in groups):
            break
        chosen = np.zeros(model.vocab().size)
        for g in groups:
            if g.stopped:
                continue
            chosen += g.expand(model, source, group_width, eos,
                               penalty=chosen, lam=params.lam)
    merged: dict[TokenSeq, Hypothesis] = {}
    for g in groups:
        for hyp in g.finished:
            merged.setdefault(hyp.tokens, hyp)
    if not merged:
        raise DecodeError(
            f"diverse_beam: no hypothesis completed within "
            f"{params.max_steps} steps")
    return _finish_beam(list(merged.values()), params, source, "diverse_beam")


_MODE_BY_METHOD = {"top_k": _kernels.TOP_K, "top_p": _kernels.TOP_P,
                   "epsilon": _kernels.EPSILON}


def _sample_sequence(model: CondSeqModel, source: TokenSeq,
                     params: DecodeParams, rng: np.random.Generator,
                     counters: dict[str, int]) -> Hypothesis:
    eos = model.vocab().eos
    mode = _MODE_BY_METHOD[params.method]
    tokens: list[int] = []
    steps: list[float] = []
    total = 0.0
    for _ in range(params.max_steps):
        row = model.next_logprobs(source, tuple(tokens))
        probs = np.exp(row)
        tok, fell_back = _kernels.truncated_sample(
            probs, mode, params.k, params.p, params.epsilon, rng.random())
        tok = int(tok)
        if fell_back:
            counters["floor_fallbacks"] = counters.get("floor_fallbacks", 0) + 1
        total += float(row[tok])
        steps.append(float(row[tok]))
        tokens.append(tok)
        if tok == eos:
            break
    else:
        row = model.next_logprobs(source, tuple(tokens))
        total += float(row[eos])
        steps.append(float(row[eos]))
        tokens.append(eos)
    return Hypothesis(tuple(tokens), total, tuple(steps))


def _sample_set(model: CondSeqModel, source: TokenSeq, params: DecodeParams,
                source_index: int) -> HypothesisSet:
    params.validate()
    counters: dict[str, int] = {}
    hyps = []
    for m in range(1, params.M + 1):
        rng = stream(params.seed, source_index, m)
        hyps.append(_sample_sequence(model, source, params, rng, counters))
    warnings = []
    if counters.get("floor_fallbacks"):
        warnings.append(
            f"epsilon floor removed all tokens {counters['floor_fallbacks']} "
            "times; fell back to argmax")
    return HypothesisSet(source=source, hyps=hyps, method=params.method,
                         params=params, seed=params.seed, warnings=warnings)


def sample_top_k(model: CondSeqModel, source: TokenSeq, params: DecodeParams,
                 source_index: int = 0) -> HypothesisSet:
    """M independent draws restricted to the k most probable tokens."""
    if params.method != "top_k":
        raise ConfigError("sample_top_k expects top_k params")
    return _sample_set(model, source, params, source_index)


def sample_top_p(model: CondSeqModel, source: TokenSeq, params: DecodeParams,
                 source_index: int = 0) -> HypothesisSet:
    """M independent draws from the smallest token set with mass >= p."""
    if params.method != "top_p":
        raise ConfigError("sample_top_p expects top_p params")
    return _sample_set(model, source, params, source_index)


def sample_epsilon(model: CondSeqModel, source: TokenSeq,
                   params: DecodeParams,
                   source_index: int = 0) -> HypothesisSet:
    """M independent draws after zeroing tokens below the epsilon floor."""
    if params.method != "epsilon":
        raise ConfigError("sample_epsilon expects epsilon params")
    return _sample_set(model, source, params, source_index)


def decode(model: CondSeqModel, source: TokenSeq, params: DecodeParams,
           source_index: int = 0) -> HypothesisSet:
    """Dispatch to the configured decoding family."""
    params.validate()
    if params.method == "greedy":
        hyp = greedy_decode(model, source, params.max_steps)
        return HypothesisSet(source=source, hyps=[hyp] * params.M,
                             method="greedy", params=params,
                             seed=params.seed)
    if params.method == "beam":
        return beam_search(model, source, params)
    if params.method == "diverse_beam":
        return diverse_beam_search(model, source, params)
    return _sample_set(model, source, params, source_index)

