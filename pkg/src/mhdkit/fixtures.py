"""Bundled deterministic fixtures: the toy teacher, corpora, and bias world.

Everything here is generated from fixed seeds, so tests and the acceptance
suite see byte-identical data on every run. The bias fixture is a small
hand-built world with gendered source cues and gendered target word forms;
its 20 items also ship as ``data/bias_items.tsv``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .decode import DecodeParams, decode
from .rng import stream
from .seqmodel import TableTeacher, Vocab, build_table_teacher, make_toy_teacher

TEACHER_SEED = 202
CORPUS_SEED = 303
EVAL_SEED = 404
ORACLE_SEEDS = tuple(range(25))
MBR_SUITE_SEEDS = (0, 6, 9, 10, 11)


def fixture_teacher() -> TableTeacher:
    """The bundled toy teacher used by trend tests and examples.

    Heavily lexical (mix 0.9) with peaked rows over a 248-word vocabulary,
    so source conditioning dominates and per-word evidence stays scarce at
    a 2k-sentence corpus; sentence endings are carried by a small set of
    terminator words, which keeps length behavior learnable from bigram
    counts.
    """
    return make_toy_teacher(TEACHER_SEED, src_vocab_size=251,
                            tgt_vocab_size=251, lex_fanout=4,
                            bigram_fanout=8, mix=0.9, max_len=6,
                            eos_range=(0.85, 0.95), peakedness=0.25,
                            eos_fraction=0.12)


def oracle_teacher(seed: int) -> TableTeacher:
    """Tiny teachers whose sequence space is exhaustively enumerable."""
    return make_toy_teacher(seed, src_vocab_size=6, tgt_vocab_size=6,
                            lex_fanout=3, bigram_fanout=3, max_len=4)


def filter_teacher() -> TableTeacher:
    """Near-deterministic teacher for the median-filter analysis: mass is
    concentrated on a handful of sequences, so beam ranks 6-10 fall under
    the epsilon-pool median while typical samples stay above it."""
    return make_toy_teacher(606, src_vocab_size=31, tgt_vocab_size=31,
                            lex_fanout=2, bigram_fanout=2, mix=0.2,
                            max_len=6, eos_range=(0.4, 0.7), peakedness=0.03)


def rankcurve_teacher() -> TableTeacher:
    """Teacher with negligible EOS mass: every output runs to the length
    cap, so length-normalized scores are comparable across ranks."""
    return make_toy_teacher(505, src_vocab_size=41, tgt_vocab_size=41,
                            lex_fanout=4, bigram_fanout=6, mix=0.7,
                            max_len=5, eos_range=(1e-4, 2e-4),
                            peakedness=0.4)


def teacher_sources(teacher: TableTeacher, n: int, seed: int,
                    min_len: int = 1, max_len: int = 4) -> list[str]:
    """Source sentences over an arbitrary teacher's vocabulary."""
    vocab = teacher.source_vocab()
    words = tuple(vocab.token(i) for i in vocab.content_ids)
    return _sample_sentences(words, n, seed, min_len, max_len)


def _sample_sentences(words: tuple[str, ...], n: int, seed: int,
                      min_len: int = 2, max_len: int = 4,
                      shift: float = 8.0) -> list[str]:
    # Zipf-ish word frequencies so corpus statistics look natural; the
    # shift keeps the head from dominating every sentence.
    rng = stream(seed)
    weights = 1.0 / (np.arange(len(words)) + shift)
    weights /= weights.sum()
    out = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        out.append(" ".join(rng.choice(words, size=length, p=weights)))
    return out


def fixture_corpus(n: int = 2000, seed: int = CORPUS_SEED) -> list[str]:
    """Monolingual source-side sentences over the fixture teacher's vocab."""
    teacher = fixture_teacher()
    src = teacher.source_vocab()
    words = tuple(src.token(i) for i in src.content_ids)
    return _sample_sentences(words, n, seed)


def fixture_eval(n: int = 1500, seed: int = EVAL_SEED,
                 teacher: TableTeacher | None = None,
                 beam_n: int = 5) -> tuple[list[str], list[str]]:
    """Held-out sources plus the teacher's beam-search translations as
    references."""
    teacher = teacher or fixture_teacher()
    src = teacher.source_vocab()
    words = tuple(src.token(i) for i in src.content_ids)
    sources = _sample_sentences(words, n, seed)
    params = DecodeParams(method="beam", n=beam_n, M=1, max_steps=32)
    references = []
    for text in sources:
        got = decode(teacher, src.encode(text), params)
        references.append(teacher.vocab().decode(got.hyps[0].tokens))
    return sources, references


# --- Gender-bias fixture -----------------------------------------------------

_OCCUPATIONS = ("doctor", "pilot", "clerk", "guard", "coach")
_FEMALE_FORM = {"doctor": "doktora", "pilot": "pilota", "clerk": "klerka",
                "guard": "gvarda", "coach": "kocxa"}
_MALE_FORM = {"doctor": "doktoro", "pilot": "piloto", "clerk": "klerko",
              "guard": "gvardo", "coach": "kocxo"}
_DETERMINERS = {"the": "la", "a": "unu"}

BIAS_SRC_WORDS = (*_DETERMINERS, *_OCCUPATIONS, "she", "he", "female", "male")
BIAS_TGT_WORDS = (*_DETERMINERS.values(), "sxi", "li",
                  *_FEMALE_FORM.values(), *_MALE_FORM.values())


def _bias_vocabs() -> tuple[Vocab, Vocab]:
    return Vocab.build(BIAS_SRC_WORDS), Vocab.build(BIAS_TGT_WORDS)


def _bias_lex(occupation_split: float) -> dict:
    """Lexical rows; ``occupation_split`` is the mass on the female form of
    each occupation (0.5 = unbiased, small = male-biased)."""
    female_forms = list(_FEMALE_FORM.values())
    male_forms = list(_MALE_FORM.values())
    lex = {}
    for det, tdet in _DETERMINERS.items():
        lex[det] = {tdet: 1.0}
    for occ in _OCCUPATIONS:
        lex[occ] = {_FEMALE_FORM[occ]: occupation_split,
                    _MALE_FORM[occ]: 1.0 - occupation_split}
    spread = 0.2 / len(female_forms)
    lex["she"] = {"sxi": 0.8, **{f: spread for f in female_forms}}
    lex["he"] = {"li": 0.8, **{f: spread for f in male_forms}}
    lex["female"] = {f: 1.0 / len(female_forms) for f in female_forms}
    lex["male"] = {f: 1.0 / len(male_forms) for f in male_forms}
    return lex


def _bias_bigram() -> dict:
    # Endings are reachable only after an occupation form or a pronoun, so
    # the beam mode must pass through a gendered form.
    forms = (*_FEMALE_FORM.values(), *_MALE_FORM.values())
    bigram = {"<s>": {"la": 0.475, "unu": 0.475,
                      **{f: 0.05 / len(forms) for f in forms}}}
    for det in _DETERMINERS.values():
        bigram[det] = {f: 1.0 / len(forms) for f in forms}
    for f in forms:
        bigram[f] = {"</s>": 0.75, "sxi": 0.1, "li": 0.1, "la": 0.05}
    for pron in ("sxi", "li"):
        bigram[pron] = {"</s>": 0.5, "la": 0.25, "unu": 0.25}
    return bigram


def bias_evaluator() -> TableTeacher:
    """Gender-faithful scoring model: cue words map to the matching forms."""
    src_vocab, tgt_vocab = _bias_vocabs()
    return build_table_teacher(src_vocab, tgt_vocab, _bias_lex(0.5),
                               _bias_bigram(), mix=0.4, max_len=8,
                               name="bias-evaluator")


def bias_student(occupation_split: float, name: str) -> TableTeacher:
    src_vocab, tgt_vocab = _bias_vocabs()
    return build_table_teacher(src_vocab, tgt_vocab,
                               _bias_lex(occupation_split), _bias_bigram(),
                               mix=0.4, max_len=8, name=name)


def unbiased_student() -> TableTeacher:
    return bias_student(0.5, "student-unbiased")


def biased_student() -> TableTeacher:
    return bias_student(0.02, "student-male-biased")


def bias_items() -> list:
    """(original, correct-cue, incorrect-cue) source triples, 20 items."""
    from .biaseval import ContrastiveItem
    items = []
    for occ in _OCCUPATIONS:
        for pron, cue, anti in (("she", "female", "male"),
                                ("he", "male", "female")):
            for det in _DETERMINERS:
                items.append(ContrastiveItem(
                    f"{det} {occ} {pron}",
                    f"{det} {cue} {occ} {pron}",
                    f"{det} {anti} {occ} {pron}",
                ))
    return items


def bias_items_path() -> Path:
    return Path(str(resources.files("mhdkit").joinpath("data/bias_items.tsv")))


def write_bias_items(path: str | Path) -> None:
    lines = ["\t".join((item.original_source, item.correct_source,
                        item.incorrect_source)) for item in bias_items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
