"""Contrastive-conditioning gender-bias evaluation.

Each item carries an ambiguous source plus two disambiguated variants (a
correct cue matching the pronoun, and the opposite cue). The evaluated model
translates the ambiguous source; an evaluator model scores that translation
under both variants, and the item score is

    P(translation | correct) / (P(translation | correct) + P(incorrect)),

computed in log space. An unbiased system scores above 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .decode import DecodeParams, decode
from .errors import DataError, InputError
from .seqmodel import CondSeqModel


@dataclass(frozen=True)
class ContrastiveItem:
    original_source: str
    correct_source: str
    incorrect_source: str

    def __post_init__(self) -> None:
        if len({self.original_source, self.correct_source,
                self.incorrect_source}) != 3:
            raise InputError("the three item sources must be distinct")


def load_items(path: str | Path) -> list[ContrastiveItem]:
    """Items from a 3-column TSV (original, correct cue, incorrect cue)."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for n, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{n}: expected 3 tab-separated "
                                f"columns, got {len(row)}")
            items.append(ContrastiveItem(*[cell.strip() for cell in row]))
    if not items:
        raise DataError(f"{path}: no items found")
    return items


@dataclass
class ItemResult:
    score: float
    translation: str
    tie: bool
    undefined: bool


@dataclass
class BiasResult:
    items: list[ItemResult]
    accuracy: float
    ties: int
    undefined: int

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "ties": self.ties,
                "undefined": self.undefined, "n_items": len(self.items),
                "scores": [i.score for i in self.items]}


def _logistic_pair_score(lp_correct: float, lp_incorrect: float) -> float:
    """1 / (1 + exp(lp_incorrect - lp_correct)), arranged so that swapping
    the arguments complements the score exactly in floating point."""
    if lp_correct >= lp_incorrect:
        return 1.0 / (1.0 + np.exp(lp_incorrect - lp_correct))
    return 1.0 - 1.0 / (1.0 + np.exp(lp_correct - lp_incorrect))


def contrastive_score(evaluated: CondSeqModel, evaluator: CondSeqModel,
                      item: ContrastiveItem, beam_n: int = 5,
                      max_steps: int = 64,
                      length_normalize: bool = False) -> ItemResult:
    """Score one item; 0.5 means the evaluator cannot tell the cues apart.

    The evaluated model translates the ambiguous source with beam search;
    the evaluator scores the translation under both cue variants using raw
    sequence log-probability (optionally length-normalized). If the
    evaluator rejects the translation under both cues (-inf each), the item
    is undefined and reported as a flagged tie.
    """
    source = evaluated.source_vocab().encode(item.original_source)
    hyp_set = decode(evaluated, source,
                     DecodeParams(method="beam", n=beam_n, M=1,
                                  max_steps=max_steps))
    tokens = hyp_set.hyps[0].tokens
    translation = evaluated.vocab().decode(tokens)
    target = evaluator.vocab().encode(translation) + (evaluator.vocab().eos,)
    scores = []
    for cue_source in (item.correct_source, item.incorrect_source):
        hyp = evaluator.score_sequence(
            evaluator.source_vocab().encode(cue_source), target)
        lp = hyp.norm_logprob if length_normalize else hyp.logprob
        scores.append(lp)
    lp_correct, lp_incorrect = scores
    if np.isneginf(lp_correct) and np.isneginf(lp_incorrect):
        return ItemResult(score=0.5, translation=translation, tie=True,
                          undefined=True)
    score = _logistic_pair_score(lp_correct, lp_incorrect)
    return ItemResult(score=float(score), translation=translation,
                      tie=score == 0.5, undefined=False)


def bias_accuracy(evaluated: CondSeqModel, evaluator: CondSeqModel,
                  items: Sequence[ContrastiveItem], beam_n: int = 5,
                  max_steps: int = 64,
                  length_normalize: bool = False) -> BiasResult:
    """Fraction of items scored above 0.5; exact ties count as incorrect
    (conservative) and are reported separately."""
    if not items:
        raise InputError("need at least one contrastive item")
    results = [contrastive_score(evaluated, evaluator, item, beam_n,
                                 max_steps, length_normalize)
               for item in items]
    correct = sum(1 for r in results if r.score > 0.5)
    return BiasResult(items=results, accuracy=correct / len(results),
                      ties=sum(1 for r in results if r.tie),
                      undefined=sum(1 for r in results if r.undefined))
