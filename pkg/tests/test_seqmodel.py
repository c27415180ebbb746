import json

import numpy as np
import pytest

from mhdkit.errors import ConfigError, InputError
from mhdkit.rng import stream
from mhdkit.seqmodel import (Vocab, build_table_teacher, make_toy_teacher,
                             score_sequence, teacher_from_dict,
                             teacher_to_dict)

from conftest import assert_normalized


class TestVocab:
    def test_build_places_specials_first(self):
        v = Vocab.build(["x", "y"])
        assert v.bos == 0 and v.eos == 1 and v.unk == 2
        assert v.size == 5
        assert v.content_ids == (3, 4)

    def test_roundtrip_and_unk(self):
        v = Vocab.build(["x", "y"])
        assert v.encode("x y zzz") == (3, 4, v.unk)
        assert v.decode((3, 4, v.eos)) == "x y"

    def test_duplicate_entries_rejected(self):
        with pytest.raises(ConfigError):
            Vocab(entries=("<s>", "</s>", "<unk>", "x", "x"),
                  bos=0, eos=1, unk=2)

    def test_special_ids_must_be_distinct(self):
        with pytest.raises(ConfigError):
            Vocab(entries=("<s>", "</s>", "<unk>"), bos=0, eos=0, unk=2)


class TestNextLogprobs:
    def build(self, mix):
        src = Vocab.build(["s"])
        tgt = Vocab.build(["a", "b"])
        return build_table_teacher(
            src, tgt,
            {"s": {"a": 0.8, "b": 0.2}},
            {"<s>": {"a": 0.2, "b": 0.4, "</s>": 0.4},
             "a": {"b": 0.5, "</s>": 0.5},
             "b": {"a": 0.5, "</s>": 0.5}},
            mix=mix, max_len=4)

    def test_pure_lexical(self):
        src = Vocab.build(["s"])
        tgt = Vocab.build(["a", "b"])
        model = build_table_teacher(
            src, tgt, {"s": {"a": 0.7, "b": 0.3}},
            {"<s>": {"a": 0.2, "b": 0.4, "</s>": 0.4}}, mix=1.0, max_len=4)
        probs = np.exp(model.next_logprobs((src.id("s"),), ()))
        expected = np.zeros(tgt.size)
        expected[tgt.id("a")] = 0.7
        expected[tgt.id("b")] = 0.3
        np.testing.assert_allclose(probs, expected, atol=1e-12)

    def test_pure_language_model(self):
        model = self.build(mix=0.0)
        tgt = model.vocab()
        probs = np.exp(model.next_logprobs((3,), ()))
        assert probs[tgt.id("a")] == pytest.approx(0.2, abs=1e-12)
        assert probs[tgt.id("b")] == pytest.approx(0.4, abs=1e-12)
        assert probs[tgt.eos] == pytest.approx(0.4, abs=1e-12)

    def test_even_mixture_hand_arithmetic(self):
        model = self.build(mix=0.5)
        tgt = model.vocab()
        probs = np.exp(model.next_logprobs((3,), ()))
        assert probs[tgt.id("a")] == pytest.approx(0.5, abs=1e-12)
        assert probs[tgt.id("b")] == pytest.approx(0.3, abs=1e-12)
        assert probs[tgt.eos] == pytest.approx(0.2, abs=1e-12)

    def test_out_of_range_source(self):
        model = self.build(0.5)
        with pytest.raises(InputError):
            model.next_logprobs((99,), ())

    def test_empty_source(self):
        model = self.build(0.5)
        with pytest.raises(InputError):
            model.next_logprobs((), ())

    def test_prefix_with_eos_rejected(self):
        model = self.build(0.5)
        with pytest.raises(InputError):
            model.next_logprobs((3,), (model.vocab().eos,))

    def test_forced_eos_at_max_len(self):
        model = self.build(0.5)
        tgt = model.vocab()
        row = model.next_logprobs((3,), (3, 4, 3, 4))
        assert row[tgt.eos] == 0.0
        assert np.isneginf(np.delete(row, tgt.eos)).all()

    def test_unseen_source_uniform_row(self):
        model = self.build(1.0)
        tgt = model.vocab()
        probs = np.exp(model.next_logprobs((model.source_vocab().unk,), ()))
        np.testing.assert_allclose(probs[list(tgt.content_ids)], 0.5,
                                   atol=1e-12)


class TestScoreSequence:
    def test_two_step_hand_computation(self, tiny_teacher):
        tgt = tiny_teacher.vocab()
        src = (tiny_teacher.source_vocab().id("s"),)
        a = tgt.id("a")
        hyp = score_sequence(tiny_teacher, src, (a, tgt.eos))
        step0 = np.log(0.5 * 0.7 + 0.5 * 0.2)
        step1 = np.log(0.5 * 0.0 + 0.5 * 0.4)
        assert hyp.step_logprobs == pytest.approx((step0, step1), abs=1e-12)
        assert hyp.logprob == pytest.approx(step0 + step1, abs=1e-12)

    def test_eos_only_target(self, tiny_teacher):
        tgt = tiny_teacher.vocab()
        src = (tiny_teacher.source_vocab().id("s"),)
        hyp = score_sequence(tiny_teacher, src, (tgt.eos,))
        assert hyp.logprob == pytest.approx(np.log(0.5 * 0.4), abs=1e-12)
        assert len(hyp.step_logprobs) == 1

    def test_missing_eos_rejected(self, tiny_teacher):
        with pytest.raises(InputError):
            score_sequence(tiny_teacher, (3,), (3,))

    def test_double_eos_rejected(self, tiny_teacher):
        eos = tiny_teacher.vocab().eos
        with pytest.raises(InputError):
            score_sequence(tiny_teacher, (3,), (eos, eos))

    def test_logprob_is_sum_of_steps(self, tiny_teacher):
        src = (3,)
        hyp = score_sequence(tiny_teacher, src, (3, 4, tiny_teacher.vocab().eos))
        assert abs(hyp.logprob - sum(hyp.step_logprobs)) <= 1e-9


class TestToyTeacher:
    def test_same_seed_byte_identical(self):
        a = json.dumps(teacher_to_dict(make_toy_teacher(7)), sort_keys=True)
        b = json.dumps(teacher_to_dict(make_toy_teacher(7)), sort_keys=True)
        assert a == b

    def test_different_seeds_differ(self):
        a = json.dumps(teacher_to_dict(make_toy_teacher(1)), sort_keys=True)
        b = json.dumps(teacher_to_dict(make_toy_teacher(2)), sort_keys=True)
        assert a != b

    def test_vocab_too_small(self):
        with pytest.raises(ConfigError):
            make_toy_teacher(0, src_vocab_size=2)
        with pytest.raises(ConfigError):
            make_toy_teacher(0, tgt_vocab_size=3)

    def test_normalization_probe(self):
        model = make_toy_teacher(3)
        rng = stream(99)
        src_ids = model.source_vocab().content_ids
        tgt_ids = model.vocab().content_ids
        for _ in range(1000):
            source = tuple(rng.choice(src_ids,
                                      size=int(rng.integers(1, 5))))
            prefix = tuple(rng.choice(tgt_ids,
                                      size=int(rng.integers(0, model.max_len + 1))))
            assert_normalized(model.next_logprobs(source, prefix))

    def test_serialization_roundtrip(self):
        model = make_toy_teacher(11)
        clone = teacher_from_dict(teacher_to_dict(model))
        assert np.array_equal(model.lex, clone.lex)
        assert np.array_equal(model.bigram, clone.bigram)
        assert model.mix == clone.mix and model.max_len == clone.max_len

    def test_batch_matches_single(self):
        model = make_toy_teacher(5)
        source = (3, 4)
        prefixes = [(), (3,), (4, 5), tuple([3] * model.max_len)]
        batch = model.next_logprobs_batch(source, prefixes)
        for row, prefix in zip(batch, prefixes):
            np.testing.assert_array_equal(
                row, model.next_logprobs(source, prefix))
