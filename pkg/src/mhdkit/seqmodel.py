"""Conditional sequence models: vocabularies, hypotheses, and table teachers.

Everything downstream (decoding, MBR, distillation) runs against the
``CondSeqModel`` interface: a next-token log-probability distribution given a
source sequence and a target prefix. The built-in ``TableTeacher`` is a small
parametric translation model, a per-source lexical distribution linearly
mixed with a target bigram language model. It is expressive enough for source
conditioning, prefix conditioning and end-of-sentence behavior to all matter,
yet small enough that the full sequence space can be enumerated exactly.

All probabilities are carried in natural-log space; products become sums.
Models are immutable after construction and safe for concurrent read-only
use.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, InputError
from .rng import stream

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"

# A token sequence is a plain tuple of vocabulary ids.
TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class Vocab:
    """Bijective token-string <-> id mapping with BOS/EOS/UNK ids."""

    entries: tuple[str, ...]
    bos: int
    eos: int
    unk: int
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {tok: i for i, tok in enumerate(self.entries)}
        if len(index) != len(self.entries):
            raise ConfigError("vocabulary entries must be unique")
        specials = (self.bos, self.eos, self.unk)
        if len(set(specials)) != 3:
            raise ConfigError("BOS, EOS and UNK ids must be pairwise distinct")
        if any(i < 0 or i >= len(self.entries) for i in specials):
            raise ConfigError("special ids must lie within the vocabulary")
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocab":
        """Vocab with the reserved specials first, then ``words`` in order."""
        entries = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, *words)
        return cls(entries=entries, bos=0, eos=1, unk=2)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def content_ids(self) -> tuple[int, ...]:
        specials = {self.bos, self.eos, self.unk}
        return tuple(i for i in range(self.size) if i not in specials)

    def id(self, token: str) -> int:
        return self._index.get(token, self.unk)

    def token(self, token_id: int) -> str:
        return self.entries[token_id]

    def encode(self, text: str) -> TokenSeq:
        return tuple(self.id(tok) for tok in text.split())

    def decode(self, ids: Sequence[int]) -> str:
        skip = {self.bos, self.eos}
        return " ".join(self.entries[i] for i in ids if i not in skip)


@dataclass(frozen=True)
class Hypothesis:
    """A completed target sequence with its accumulated log-probability."""

    tokens: TokenSeq
    logprob: float
    step_logprobs: tuple[float, ...]

    @property
    def length(self) -> int:
        return len(self.step_logprobs)

    @property
    def norm_logprob(self) -> float:
        """Log-probability divided by generated token count (EOS included)."""
        return self.logprob / max(self.length, 1)


class CondSeqModel(ABC):
    """Next-token distribution given (source sequence, target prefix)."""

    @abstractmethod
    def vocab(self) -> Vocab:
        """Target-side vocabulary; distributions have exactly this size."""

    def source_vocab(self) -> Vocab:
        return self.vocab()

    @property
    def model_id(self) -> str:
        return type(self).__name__

    @abstractmethod
    def next_logprobs(self, source: TokenSeq, prefix: TokenSeq) -> np.ndarray:
        """Dense log-probability vector over the target vocabulary.

        exp of the returned vector sums to 1 within 1e-9; entries are finite
        or ``-inf``. Raises :class:`InputError` for out-of-range ids, an
        empty source, or a prefix containing EOS.
        """

    def next_logprobs_batch(self, source: TokenSeq,
                            prefixes: Sequence[TokenSeq]) -> np.ndarray:
        """(len(prefixes), vocab size) matrix; override for batched backends."""
        return np.stack([self.next_logprobs(source, p) for p in prefixes])

    def score_sequence(self, source: TokenSeq, target: TokenSeq) -> Hypothesis:
        """Chain-rule score of a completed target (must end with EOS)."""
        eos = self.vocab().eos
        if not target or target[-1] != eos:
            raise InputError("target must end with EOS")
        if eos in target[:-1]:
            raise InputError("target must contain exactly one EOS, at the end")
        rows = self.next_logprobs_batch(
            source, [tuple(target[:t]) for t in range(len(target))])
        steps = []
        total = 0.0
        for t, tok in enumerate(target):
            lp = float(rows[t, tok])
            steps.append(lp)
            total += lp
        return Hypothesis(tokens=tuple(target), logprob=total,
                          step_logprobs=tuple(steps))


def score_sequence(model: CondSeqModel, source: TokenSeq,
                   target: TokenSeq) -> Hypothesis:
    return model.score_sequence(source, target)


def _validate_ids(seq: Sequence[int], size: int, what: str) -> None:
    for i in seq:
        if not 0 <= int(i) < size:
            raise InputError(f"{what} id {i} out of range [0, {size})")


class TableTeacher(CondSeqModel):
    """Lexical-table x target-bigram mixture with a hard length cap.

    ``lex`` holds one distribution over target words per source id (specials
    and unseen sources fall back to the uniform row). ``bigram`` holds one
    distribution over target words plus EOS per previous-target id, with the
    BOS row used at the first step. The next-token distribution is::

        P(y | x, prefix) = mix * mean_s lex[s] + (1 - mix) * bigram[prev]

    At ``max_len`` generated tokens the distribution is forced to a one-hot
    on EOS, so the space of complete sequences is finite and exactly
    enumerable.
    """

    def __init__(self, src_vocab: Vocab, tgt_vocab: Vocab, lex: np.ndarray,
                 bigram: np.ndarray, mix: float, max_len: int,
                 name: str | None = None):
        lex = np.asarray(lex, dtype=np.float64)
        bigram = np.asarray(bigram, dtype=np.float64)
        if lex.shape != (src_vocab.size, tgt_vocab.size):
            raise ConfigError("lex table shape must be (src size, tgt size)")
        if bigram.shape != (tgt_vocab.size, tgt_vocab.size):
            raise ConfigError("bigram table shape must be (tgt size, tgt size)")
        if not 0.0 <= mix <= 1.0:
            raise ConfigError("mix weight must lie in [0, 1]")
        if max_len < 1:
            raise ConfigError("max_len must be positive")
        for row in (*lex, *bigram):
            if abs(row.sum() - 1.0) > 1e-9:
                raise ConfigError("every stored distribution must sum to 1")
        if lex[:, tgt_vocab.bos].any() or bigram[:, tgt_vocab.bos].any():
            raise ConfigError("no distribution may assign mass to BOS")
        if lex[:, tgt_vocab.eos].any():
            raise ConfigError("lexical rows must not assign mass to EOS")
        self._src_vocab = src_vocab
        self._tgt_vocab = tgt_vocab
        self.lex = lex
        self.bigram = bigram
        self.mix = float(mix)
        self.max_len = int(max_len)
        self._name = name
        self._eos_row = np.full(tgt_vocab.size, -np.inf)
        self._eos_row[tgt_vocab.eos] = 0.0
        self._eos_row.setflags(write=False)
        self.lex.setflags(write=False)
        self.bigram.setflags(write=False)

    def vocab(self) -> Vocab:
        return self._tgt_vocab

    def source_vocab(self) -> Vocab:
        return self._src_vocab

    @property
    def model_id(self) -> str:
        if self._name:
            return self._name
        digest = hashlib.blake2b(
            json.dumps(teacher_to_dict(self), sort_keys=True).encode(),
            digest_size=6).hexdigest()
        return f"table:{digest}"

    def _check_inputs(self, source: TokenSeq, prefix: TokenSeq) -> None:
        if len(source) == 0:
            raise InputError("source must be non-empty")
        _validate_ids(source, self._src_vocab.size, "source")
        _validate_ids(prefix, self._tgt_vocab.size, "prefix")
        if self._tgt_vocab.eos in prefix:
            raise InputError("prefix must not contain EOS")

    def _lex_mean(self, source: TokenSeq) -> np.ndarray:
        return self.lex[np.asarray(source, dtype=np.intp)].mean(axis=0)

    def next_logprobs(self, source: TokenSeq, prefix: TokenSeq) -> np.ndarray:
        self._check_inputs(source, prefix)
        if len(prefix) >= self.max_len:
            return self._eos_row.copy()
        prev = prefix[-1] if prefix else self._tgt_vocab.bos
        rows = _kernels.mix_log_rows(self._lex_mean(source),
                                     self.bigram[np.array([prev])], self.mix)
        return rows[0]

    def next_logprobs_batch(self, source: TokenSeq,
                            prefixes: Sequence[TokenSeq]) -> np.ndarray:
        if not prefixes:
            return np.zeros((0, self._tgt_vocab.size))
        for p in prefixes:
            self._check_inputs(source, p)
        bos = self._tgt_vocab.bos
        prev = np.array([p[-1] if p else bos for p in prefixes], dtype=np.intp)
        out = _kernels.mix_log_rows(self._lex_mean(source), self.bigram[prev],
                                    self.mix)
        for i, p in enumerate(prefixes):
            if len(p) >= self.max_len:
                out[i] = self._eos_row
        return out


def _uniform_over(size: int, ids: Sequence[int]) -> np.ndarray:
    row = np.zeros(size)
    row[list(ids)] = 1.0 / len(ids)
    return row


def build_table_teacher(src_vocab: Vocab, tgt_vocab: Vocab,
                        lex_rows: dict[str, dict[str, float]],
                        bigram_rows: dict[str, dict[str, float]],
                        mix: float, max_len: int,
                        name: str | None = None) -> TableTeacher:
    """Assemble a teacher from sparse string-keyed rows.

    Rows absent from ``lex_rows`` (including the specials and UNK) fall back
    to the uniform distribution over target words; absent bigram rows fall
    back to uniform over target words plus EOS. The BOS bigram row comes from
    the ``BOS_TOKEN`` key.
    """
    content = tgt_vocab.content_ids
    if not content:
        raise ConfigError("target vocabulary has no word entries")
    lex = np.tile(_uniform_over(tgt_vocab.size, content), (src_vocab.size, 1))
    for word, row in lex_rows.items():
        vec = np.zeros(tgt_vocab.size)
        for tgt_word, prob in row.items():
            vec[tgt_vocab.id(tgt_word)] = prob
        lex[src_vocab.id(word)] = vec
    bigram = np.tile(_uniform_over(tgt_vocab.size, (*content, tgt_vocab.eos)),
                     (tgt_vocab.size, 1))
    for word, row in bigram_rows.items():
        vec = np.zeros(tgt_vocab.size)
        for tgt_word, prob in row.items():
            vec[tgt_vocab.id(tgt_word)] = prob
        bigram[tgt_vocab.id(word) if word != BOS_TOKEN else tgt_vocab.bos] = vec
    eos_onehot = np.zeros(tgt_vocab.size)
    eos_onehot[tgt_vocab.eos] = 1.0
    bigram[tgt_vocab.eos] = eos_onehot
    return TableTeacher(src_vocab, tgt_vocab, lex, bigram, mix, max_len,
                        name=name)


_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _make_words(rng: np.random.Generator, count: int, prefix: str = "") -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        word = prefix + "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))] +
            _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syll))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def make_toy_teacher(seed: int, src_vocab_size: int = 15,
                     tgt_vocab_size: int = 15, lex_fanout: int = 4,
                     bigram_fanout: int = 5, mix: float = 0.6,
                     max_len: int = 8,
                     eos_range: tuple[float, float] = (0.08, 0.3),
                     peakedness: float = 0.5,
                     eos_fraction: float = 1.0) -> TableTeacher:
    """Deterministically generate a seeded toy teacher.

    Vocabulary sizes count the three specials; each must be at least 4 so
    there is at least one word entry. ``lex_fanout`` / ``bigram_fanout``
    bound the nonzero entries per row, ``peakedness`` is the Dirichlet
    concentration used for row weights (smaller = spikier), and the EOS mass
    of each bigram row is drawn from ``eos_range``. ``eos_fraction`` < 1
    concentrates sentence endings on that fraction of words (terminators),
    which keeps length behavior learnable by bigram counts; the BOS row
    never gets EOS mass, so the empty translation is unreachable.
    """
    if src_vocab_size < 4 or tgt_vocab_size < 4:
        raise ConfigError("vocab sizes must be at least 4 (specials + 1 word)")
    rng = stream(seed)
    src_vocab = Vocab.build(_make_words(rng, src_vocab_size - 3))
    tgt_vocab = Vocab.build(_make_words(rng, tgt_vocab_size - 3))
    content = np.array(tgt_vocab.content_ids)
    n_term = max(1, int(round(eos_fraction * len(content))))
    terminators = set(int(i) for i in rng.choice(content, size=n_term,
                                                 replace=False))

    def sparse_row(fanout: int, total_mass: float) -> np.ndarray:
        fanout = min(fanout, len(content))
        picks = rng.choice(content, size=fanout, replace=False)
        weights = rng.dirichlet(np.full(fanout, peakedness))
        row = np.zeros(tgt_vocab.size)
        row[picks] = weights * total_mass
        return row

    lex = np.tile(_uniform_over(tgt_vocab.size, content), (src_vocab.size, 1))
    for sid in src_vocab.content_ids:
        lex[sid] = sparse_row(lex_fanout, 1.0)
    bigram = np.tile(
        _uniform_over(tgt_vocab.size, (*content, tgt_vocab.eos)),
        (tgt_vocab.size, 1))
    for prev in (tgt_vocab.bos, *tgt_vocab.content_ids):
        ends = prev != tgt_vocab.bos and prev in terminators
        eos_mass = float(rng.uniform(*eos_range)) if ends else 0.0
        row = sparse_row(bigram_fanout, 1.0 - eos_mass)
        row[tgt_vocab.eos] = eos_mass
        bigram[prev] = row
    eos_onehot = np.zeros(tgt_vocab.size)
    eos_onehot[tgt_vocab.eos] = 1.0
    bigram[tgt_vocab.eos] = eos_onehot
    return TableTeacher(src_vocab, tgt_vocab, lex, bigram, mix, max_len,
                        name=f"toy:{seed}")


def teacher_to_dict(model: TableTeacher) -> dict:
    """JSON-ready form: sparse string-keyed rows, specials omitted."""
    src_vocab = model.source_vocab()
    tgt_vocab = model.vocab()

    def row_dict(vec: np.ndarray) -> dict[str, float]:
        return {tgt_vocab.token(j): float(v) for j, v in enumerate(vec) if v}

    lex = {src_vocab.token(i): row_dict(model.lex[i])
           for i in src_vocab.content_ids}
    bigram = {BOS_TOKEN: row_dict(model.bigram[tgt_vocab.bos])}
    for i in tgt_vocab.content_ids:
        bigram[tgt_vocab.token(i)] = row_dict(model.bigram[i])
    return {
        "vocab_src": [src_vocab.token(i) for i in src_vocab.content_ids],
        "vocab_tgt": [tgt_vocab.token(i) for i in tgt_vocab.content_ids],
        "lex": lex,
        "bigram": bigram,
        "mix": model.mix,
        "max_len": model.max_len,
    }


def teacher_from_dict(doc: dict, name: str | None = None) -> TableTeacher:
    src_vocab = Vocab.build(doc["vocab_src"])
    tgt_vocab = Vocab.build(doc["vocab_tgt"])
    return build_table_teacher(src_vocab, tgt_vocab, doc["lex"], doc["bigram"],
                               float(doc["mix"]), int(doc["max_len"]),
                               name=name)


def save_teacher(model: TableTeacher, path: str | Path) -> None:
    Path(path).write_text(json.dumps(teacher_to_dict(model), indent=1,
                                     sort_keys=True))


def load_teacher(path: str | Path) -> TableTeacher:
    doc = json.loads(Path(path).read_text())
    return teacher_from_dict(doc, name=f"file:{Path(path).name}")
