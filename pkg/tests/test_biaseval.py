import numpy as np
import pytest

from mhdkit.biaseval import (BiasResult, ContrastiveItem, bias_accuracy,
                             contrastive_score, load_items,
                             _logistic_pair_score)
from mhdkit.errors import DataError, InputError
from mhdkit.fixtures import (bias_evaluator, bias_items, bias_items_path,
                             biased_student, unbiased_student)
from mhdkit.rng import stream


class TestLogisticScore:
    def test_equal_logprobs_tie(self):
        assert _logistic_pair_score(-3.0, -3.0) == 0.5

    def test_hand_case(self):
        # P(correct) = e^-10, P(incorrect) = e^-12 -> 1 / (1 + e^-2)
        score = _logistic_pair_score(-10.0, -12.0)
        assert score == pytest.approx(0.8808, abs=1e-4)

    def test_exact_complementarity_on_random_pairs(self):
        rng = stream(99)
        for _ in range(1000):
            a, b = rng.uniform(-80, 0, size=2)
            assert _logistic_pair_score(a, b) + _logistic_pair_score(b, a) \
                == 1.0

    def test_monotone_in_correct_logprob(self):
        lows = [-12.0, -11.0, -10.5, -10.0, -9.0]
        scores = [_logistic_pair_score(lp, -11.0) for lp in lows]
        assert all(x < y for x, y in zip(scores, scores[1:]))


class TestItems:
    def test_triple_must_differ(self):
        with pytest.raises(InputError):
            ContrastiveItem("same", "same", "other")

    def test_bundled_file_loads(self):
        items = load_items(bias_items_path())
        assert len(items) == 20
        assert items == bias_items()

    def test_malformed_file_rejected(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("only\ttwo\n")
        with pytest.raises(DataError):
            load_items(bad)


class TestContrastiveScoring:
    def test_faithful_teacher_scores_above_half(self):
        evaluator = bias_evaluator()
        item = bias_items()[0]
        result = contrastive_score(evaluator, evaluator, item)
        assert result.score > 0.5

    def test_symmetric_item_ties(self):
        evaluator = bias_evaluator()
        # Swapping cue and anti-cue inverts the score exactly.
        item = bias_items()[0]
        flipped = ContrastiveItem(item.original_source,
                                  item.incorrect_source,
                                  item.correct_source)
        a = contrastive_score(evaluator, evaluator, item)
        b = contrastive_score(evaluator, evaluator, flipped)
        assert a.score + b.score == 1.0

    def test_accuracy_aggregation(self):
        evaluator = bias_evaluator()
        result = bias_accuracy(unbiased_student(), evaluator, bias_items())
        assert isinstance(result, BiasResult)
        assert 0.0 <= result.accuracy <= 1.0
        assert len(result.items) == 20

    def test_biased_student_strictly_worse(self):
        evaluator = bias_evaluator()
        items = bias_items()
        fair = bias_accuracy(unbiased_student(), evaluator, items)
        skewed = bias_accuracy(biased_student(), evaluator, items)
        assert skewed.accuracy < fair.accuracy

    def test_item_order_invariance(self):
        evaluator = bias_evaluator()
        items = bias_items()
        forward = bias_accuracy(unbiased_student(), evaluator, items)
        backward = bias_accuracy(unbiased_student(), evaluator, items[::-1])
        assert forward.accuracy == backward.accuracy

    def test_empty_items_rejected(self):
        evaluator = bias_evaluator()
        with pytest.raises(InputError):
            bias_accuracy(evaluator, evaluator, [])
