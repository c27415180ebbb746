"""Distillation datasets and count-based students.

A dataset pairs each source sentence with M teacher hypotheses produced by
one decoding method (duplicates kept, as trained on). Students share the
teacher's parametric family (lexical table x target bigram mixture), so
sequence-level training is relative-frequency estimation with add-alpha
smoothing, word-level training adds the teacher's fractional next-token
counts, and the mixture weight is fit by golden-section search on a held-out
split.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .decode import (METHODS, DecodeParams, HypothesisSet, decode)
from .errors import ConfigError, DataError, DecodeError, InputError
from .mbr import MbrParams, UtilityParams, mbr_decode
from .metrics import (bleu_corpus, chrf_segment_stats, chrfpp_corpus,
                      corpus_score_from_stats, paired_randomization_test)
from .rng import derive_seed, stream
from .seqmodel import CondSeqModel, TableTeacher, Vocab

log = logging.getLogger(__name__)

DATASET_METHODS = (*METHODS, "mbr")


@dataclass(frozen=True)
class GenerationSpec:
    """Everything needed to produce M hypotheses per source for a dataset."""

    method: str
    M: int = 1
    n: int = 10
    G: int = 10
    lam: float = 0.5
    k: int = 10
    p: float = 0.7
    epsilon: float = 0.02
    n_candidates: int = 256
    mbr_epsilon: float = 0.02
    weighting: str = "model_prob"
    max_steps: int = 64
    seed: int = 0

    def validate(self) -> None:
        if self.method not in DATASET_METHODS:
            raise ConfigError(f"unknown generation method {self.method!r}")
        if self.method == "mbr":
            self.mbr_params().validate()
        else:
            self.decode_params().validate()

    def decode_params(self) -> DecodeParams:
        if self.method == "mbr":
            raise ConfigError("mbr uses mbr_params()")
        return DecodeParams(method=self.method, M=self.M,
                            n=max(self.n, self.M), G=self.G, lam=self.lam,
                            k=self.k, p=self.p, epsilon=self.epsilon,
                            max_steps=self.max_steps, seed=self.seed)

    def mbr_params(self) -> MbrParams:
        return MbrParams(M=self.M, n_candidates=self.n_candidates,
                         epsilon=self.mbr_epsilon, seed=self.seed,
                         max_steps=self.max_steps, weighting=self.weighting,
                         utility=UtilityParams())


def generate_set(model: CondSeqModel, source_text: str, spec: GenerationSpec,
                 source_index: int) -> HypothesisSet:
    source = model.source_vocab().encode(source_text)
    if spec.method == "mbr":
        return mbr_decode(model, source, spec.mbr_params(),
                          source_index=source_index)
    return decode(model, source, spec.decode_params(),
                  source_index=source_index)


@dataclass(frozen=True)
class DistillRecord:
    source: str
    target: str
    method: str
    m: int
    seq_logprob: float
    seed: int
    teacher_id: str

    def to_json(self) -> str:
        return json.dumps({"src": self.source, "tgt": self.target,
                           "method": self.method, "m": self.m,
                           "logprob": self.seq_logprob, "seed": self.seed},
                          ensure_ascii=False)


@dataclass
class DistillDataset:
    records: list[DistillRecord]
    manifest: dict

    def pairs(self) -> list[tuple[str, str]]:
        return [(r.source, r.target) for r in self.records]


class _Journal:
    """Append-only progress log enabling byte-identical resumption."""

    def __init__(self, data_path: Path):
        self.path = data_path.with_suffix(data_path.suffix + ".journal")

    def load(self) -> tuple[int, int, list[dict]]:
        """(last completed source index, byte offset, skip events)."""
        last, offset, skips = -1, 0, []
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    break  # truncated tail from an interrupt
                if "done" in event:
                    last, offset = event["done"], event["offset"]
                elif "skip" in event:
                    skips.append(event)
        return last, offset, [s for s in skips if s["skip"] <= last]

    def mark_done(self, index: int, offset: int) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"done": index, "offset": offset}) + "\n")

    def mark_skip(self, index: int, reason: str) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"skip": index, "reason": reason}) + "\n")

    def remove(self) -> None:
        if self.path.exists():
            self.path.unlink()


def _records_for_source(model: CondSeqModel, text: str, index: int,
                        spec: GenerationSpec,
                        sets_sink=None) -> tuple[list[DistillRecord], int]:
    hyp_set = generate_set(model, text, spec, index)
    if sets_sink is not None:
        sets_sink(index, text, hyp_set)
    tgt_vocab = model.vocab()
    records = []
    empties = 0
    for m, hyp in enumerate(hyp_set.hyps, start=1):
        target = tgt_vocab.decode(hyp.tokens)
        if not target:
            empties += 1
            continue
        records.append(DistillRecord(
            source=text, target=target, method=spec.method, m=m,
            seq_logprob=hyp.logprob, seed=spec.seed,
            teacher_id=model.model_id))
    return records, empties


def build_dataset(model: CondSeqModel, sources: Sequence[str],
                  spec: GenerationSpec, out_path: str | Path | None = None,
                  resume: bool = True, failure_threshold: float = 0.1,
                  sets_sink=None) -> DistillDataset:
    """Decode every source with the configured method and collect records.

    With ``out_path`` the records stream to JSONL as sources complete and a
    sidecar journal makes interrupted runs resumable: rerunning finishes the
    remaining sources and yields output byte-identical to an uninterrupted
    run (per-source seeding makes each source independent). Per-source
    decode failures are skipped and logged; the build fails only if the
    failure rate exceeds ``failure_threshold``.
    """
    spec.validate()
    if not sources:
        raise InputError("need at least one source sentence")
    records: list[DistillRecord] = []
    skips: list[dict] = []
    empty_targets = 0
    start = 0
    fh = None
    journal = None
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        journal = _Journal(out_path)
        if resume and journal.path.exists() and out_path.exists():
            last, offset, skips = journal.load()
            with open(out_path, "r+", encoding="utf-8") as trunc:
                trunc.truncate(offset)
            for line in out_path.read_text(encoding="utf-8").splitlines():
                rec = json.loads(line)
                records.append(DistillRecord(
                    source=rec["src"], target=rec["tgt"],
                    method=rec["method"], m=rec["m"],
                    seq_logprob=rec["logprob"], seed=rec["seed"],
                    teacher_id=model.model_id))
            start = last + 1
            log.info("resuming %s at source %d", out_path, start)
        else:
            journal.remove()
            out_path.write_text("")
        fh = open(out_path, "a", encoding="utf-8")
    try:
        for i in range(start, len(sources)):
            text = sources[i]
            try:
                new_records, empties = _records_for_source(model, text, i,
                                                           spec, sets_sink)
            except DecodeError as err:
                log.warning("source %d skipped: %s", i, err)
                skips.append({"skip": i, "reason": str(err)})
                if journal is not None:
                    journal.mark_skip(i, str(err))
                continue
            empty_targets += empties
            records.extend(new_records)
            if fh is not None:
                for rec in new_records:
                    fh.write(rec.to_json() + "\n")
                fh.flush()
                journal.mark_done(i, fh.tell())
        if len(skips) > failure_threshold * len(sources):
            raise DataError(
                f"{len(skips)} of {len(sources)} sources failed to decode "
                f"(threshold {failure_threshold:.0%})")
    finally:
        if fh is not None:
            fh.close()
    manifest = {
        "method": spec.method,
        "M": spec.M,
        "N": len(sources),
        "seed": spec.seed,
        "teacher_id": model.model_id,
        "params": asdict(spec),
        "records": len(records),
        "skipped_sources": skips,
        "empty_targets": empty_targets,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if out_path is not None:
        manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=1))
        journal.remove()
    return DistillDataset(records=records, manifest=manifest)


def load_dataset(path: str | Path) -> DistillDataset:
    path = Path(path)
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        try:
            rec = json.loads(line)
            records.append(DistillRecord(
                source=rec["src"], target=rec["tgt"], method=rec["method"],
                m=rec["m"], seq_logprob=rec["logprob"], seed=rec["seed"],
                teacher_id=""))
        except (json.JSONDecodeError, KeyError) as err:
            raise DataError(f"{path}:{n}: bad record ({err})") from err
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    manifest = json.loads(manifest_path.read_text()) \
        if manifest_path.exists() else {}
    return DistillDataset(records=records, manifest=manifest)


class CountStudent(TableTeacher):
    """A mixture model estimated from counts; decodes like any teacher."""

    def __init__(self, src_vocab: Vocab, tgt_vocab: Vocab, lex: np.ndarray,
                 bigram: np.ndarray, mix: float, max_len: int,
                 lex_counts: np.ndarray, bigram_counts: np.ndarray,
                 alpha: float, name: str | None = None):
        super().__init__(src_vocab, tgt_vocab, lex, bigram, mix, max_len,
                         name=name)
        self.lex_counts = lex_counts
        self.bigram_counts = bigram_counts
        self.alpha = alpha


def _vocabs_from_pairs(pairs: Sequence[tuple[str, str]]) -> tuple[Vocab, Vocab]:
    src_words = sorted({w for src, _ in pairs for w in src.split()})
    tgt_words = sorted({w for _, tgt in pairs for w in tgt.split()})
    return Vocab.build(src_words), Vocab.build(tgt_words)


def _smooth_rows(counts: np.ndarray, columns: Sequence[int],
                 alpha: float) -> np.ndarray:
    out = np.zeros_like(counts)
    cols = np.asarray(columns)
    sub = counts[:, cols]
    totals = sub.sum(axis=1, keepdims=True)
    if alpha > 0:
        out[:, cols] = (sub + alpha) / (totals + alpha * len(cols))
    else:
        uniform = np.full(len(cols), 1.0 / len(cols))
        with np.errstate(invalid="ignore"):
            normalized = sub / totals
        out[:, cols] = np.where(totals > 0, normalized, uniform)
    return out


def _golden_section_max(fn: Callable[[float], float], lo: float = 0.0,
                        hi: float = 1.0, iters: int = 80) -> float:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
        if b - a < 1e-6:
            break
    return (a + b) / 2.0


class _CountAccumulator:
    def __init__(self, src_vocab: Vocab, tgt_vocab: Vocab):
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.lex = np.zeros((src_vocab.size, tgt_vocab.size))
        self.bigram = np.zeros((tgt_vocab.size, tgt_vocab.size))
        self.max_content_len = 1

    def add_pair(self, src_text: str, tgt_text: str, beta: float,
                 teacher: CondSeqModel | None) -> None:
        src = self.src_vocab.encode(src_text)
        tgt = self.tgt_vocab.encode(tgt_text)
        if not src or not tgt:
            return
        self.max_content_len = max(self.max_content_len, len(tgt))
        eos = self.tgt_vocab.eos
        bos = self.tgt_vocab.bos
        share = 1.0 / len(src)
        sequence = (*tgt, eos)
        prev = bos
        for t, tok in enumerate(sequence):
            self.bigram[prev, tok] += beta
            if tok != eos:
                for s in src:
                    self.lex[s, tok] += beta * share
            if teacher is not None and beta < 1.0:
                probs = np.exp(teacher.next_logprobs(src, tgt[:t]))
                frac = (1.0 - beta)
                self.bigram[prev] += frac * probs
                lex_part = frac * share * probs
                lex_part[eos] = 0.0
                lex_part[bos] = 0.0
                for s in src:
                    self.lex[s] += lex_part
            prev = tok

    def finalize(self, mix: float, alpha: float,
                 name: str | None = None) -> CountStudent:
        tgt = self.tgt_vocab
        content = tgt.content_ids
        lex = _smooth_rows(self.lex, content, alpha)
        bigram = _smooth_rows(self.bigram, (*content, tgt.eos), alpha)
        bigram[tgt.eos] = 0.0
        bigram[tgt.eos, tgt.eos] = 1.0
        # Cap at the longest observed target: the length behavior of the
        # family lives in the forced-EOS cap, not in the bigram counts.
        max_len = self.max_content_len
        return CountStudent(self.src_vocab, tgt, lex, bigram, mix, max_len,
                            lex_counts=self.lex.copy(),
                            bigram_counts=self.bigram.copy(), alpha=alpha,
                            name=name)


def _holdout_loglik(student_tables: _CountAccumulator, alpha: float,
                    pairs: Sequence[tuple[str, str]]) -> Callable[[float], float]:
    """Precompute per-token lexical/bigram probabilities on the held-out
    pairs so the mixture-weight search is a vectorized one-liner."""
    tgt_vocab = student_tables.tgt_vocab
    src_vocab = student_tables.src_vocab
    content = tgt_vocab.content_ids
    lex = _smooth_rows(student_tables.lex, content, alpha)
    bigram = _smooth_rows(student_tables.bigram,
                          (*content, tgt_vocab.eos), alpha)
    lex_terms = []
    bigram_terms = []
    for src_text, tgt_text in pairs:
        src = src_vocab.encode(src_text)
        tgt = tgt_vocab.encode(tgt_text)
        if not src or not tgt:
            continue
        lex_mean = lex[np.asarray(src)].mean(axis=0)
        prev = tgt_vocab.bos
        for tok in (*tgt, tgt_vocab.eos):
            lex_terms.append(lex_mean[tok])
            bigram_terms.append(bigram[prev, tok])
            prev = tok
    lex_arr = np.array(lex_terms)
    big_arr = np.array(bigram_terms)

    def loglik(mix: float) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(mix * lex_arr + (1 - mix) * big_arr)))

    return loglik


def _train_from_pairs(pairs: Sequence[tuple[str, str]], alpha: float,
                      teacher: CondSeqModel | None, beta: float,
                      src_vocab: Vocab | None, tgt_vocab: Vocab | None,
                      split_seed: int, holdout: float,
                      name: str | None) -> CountStudent:
    if not pairs:
        raise InputError("cannot train on an empty dataset")
    if alpha < 0:
        raise ConfigError("smoothing alpha must be non-negative")
    if not 0.0 <= beta <= 1.0:
        raise ConfigError("beta must lie in [0, 1]")
    if src_vocab is None or tgt_vocab is None:
        if teacher is not None:
            src_vocab = src_vocab or teacher.source_vocab()
            tgt_vocab = tgt_vocab or teacher.vocab()
        else:
            derived = _vocabs_from_pairs(pairs)
            src_vocab = src_vocab or derived[0]
            tgt_vocab = tgt_vocab or derived[1]
    if teacher is not None and beta < 1.0 and (
            tgt_vocab.entries != teacher.vocab().entries
            or src_vocab.entries != teacher.source_vocab().entries):
        raise ConfigError("word-level training requires the student to share "
                          "the teacher's vocabularies")
    n_hold = int(round(holdout * len(pairs)))
    if 0 < n_hold < len(pairs):
        perm = stream(split_seed).permutation(len(pairs))
        hold_idx = set(int(i) for i in perm[:n_hold])
        train_pairs = [p for i, p in enumerate(pairs) if i not in hold_idx]
        hold_pairs = [p for i, p in enumerate(pairs) if i in hold_idx]
        acc = _CountAccumulator(src_vocab, tgt_vocab)
        for src_text, tgt_text in train_pairs:
            acc.add_pair(src_text, tgt_text, beta, teacher)
        loglik = _holdout_loglik(acc, alpha, hold_pairs)
        mix = _golden_section_max(loglik)
    else:
        mix = 0.5
    final = _CountAccumulator(src_vocab, tgt_vocab)
    for src_text, tgt_text in pairs:
        final.add_pair(src_text, tgt_text, beta, teacher)
    return final.finalize(mix, alpha, name=name)


def select_best(dataset: DistillDataset, scorer) -> DistillDataset:
    """Keep only each source's best record under an external quality scorer.

    ``scorer(source, target) -> float`` (higher is better) can be any
    per-pair estimator, e.g. a neural QE model attached over the wire
    protocol. Ties break toward the lower sample index.
    """
    best: dict[str, DistillRecord] = {}
    scores: dict[str, float] = {}
    order: list[str] = []
    for record in dataset.records:
        score = float(scorer(record.source, record.target))
        if record.source not in best:
            order.append(record.source)
            best[record.source] = record
            scores[record.source] = score
        elif score > scores[record.source]:
            best[record.source] = record
            scores[record.source] = score
    manifest = dict(dataset.manifest)
    manifest["selected"] = "best-of-M by external scorer"
    manifest["records"] = len(order)
    return DistillDataset(records=[best[s] for s in order],
                          manifest=manifest)


def train_student_sequence(dataset: DistillDataset, alpha: float = 0.1,
                           src_vocab: Vocab | None = None,
                           tgt_vocab: Vocab | None = None,
                           split_seed: int = 13, holdout: float = 0.1,
                           name: str | None = None) -> CountStudent:
    """Relative-frequency student from (source, hypothesis) pairs.

    Lexical counts spread each target word uniformly over the source words;
    bigram counts follow target transitions including EOS. The mixture
    weight maximizes held-out log-likelihood (seeded 10% split by default).
    """
    return _train_from_pairs(dataset.pairs(), alpha, teacher=None, beta=1.0,
                             src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                             split_seed=split_seed, holdout=holdout,
                             name=name)


def train_student_word(teacher: CondSeqModel,
                       pairs: Sequence[tuple[str, str]], beta: float = 0.5,
                       alpha: float = 0.1, src_vocab: Vocab | None = None,
                       tgt_vocab: Vocab | None = None, split_seed: int = 13,
                       holdout: float = 0.1,
                       name: str | None = None) -> CountStudent:
    """Word-level student: beta-weighted observed counts plus (1 - beta)
    fractional counts from the teacher's next-token distribution at every
    observed prefix. With beta=1 this reduces exactly to the sequence
    trainer on the same pairs (and the same vocabularies)."""
    return _train_from_pairs(pairs, alpha, teacher=teacher, beta=beta,
                             src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                             split_seed=split_seed, holdout=holdout,
                             name=name)


# --- Experiment grid ---------------------------------------------------------

@dataclass
class ExperimentConfig:
    teacher: CondSeqModel
    train_sources: list[str]
    eval_sources: list[str]
    eval_references: list[str]
    methods: list[str]
    m_values: list[int]
    repetitions: int = 3
    base_spec: GenerationSpec = GenerationSpec(method="top_p")
    alpha: float = 0.1
    holdout: float = 0.1
    eval_beam_n: int = 5
    seed: int = 0
    include_word_level: bool = False
    word_beta: float = 0.5
    baseline: tuple[str, int] = ("beam", 1)
    significance_rounds: int = 2000
    max_eval_steps: int = 64


def _evaluate_student(student: CondSeqModel, eval_sources: Sequence[str],
                      references: Sequence[str], beam_n: int,
                      max_steps: int) -> dict:
    hyps = []
    params = DecodeParams(method="beam", n=beam_n, M=1, max_steps=max_steps)
    for text in eval_sources:
        source = student.source_vocab().encode(text)
        got = decode(student, source, params)
        hyps.append(student.vocab().decode(got.hyps[0].tokens))
    stats = [chrf_segment_stats(h, r) for h, r in zip(hyps, references)]
    return {
        "chrfpp": corpus_score_from_stats(stats),
        "bleu": bleu_corpus(hyps, references),
        "hypotheses": hyps,
        "chrf_stats": stats,
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Full grid: build datasets, train students, evaluate, test significance.

    Sampling methods redraw their translations in every repetition (each
    cell repetition derives its own seed); deterministic methods vary only
    through the held-out split used for mixture fitting. Stage failures are
    recorded and the remaining grid still runs.
    """
    methods = list(config.methods)
    report: dict = {"cells": {}, "failures": [], "config": {
        "methods": methods, "m_values": list(config.m_values),
        "repetitions": config.repetitions, "seed": config.seed,
        "teacher_id": config.teacher.model_id,
        "n_train": len(config.train_sources),
        "n_eval": len(config.eval_sources),
        "eval_beam_n": config.eval_beam_n,
    }}
    baseline_key = f"{config.baseline[0]}:{config.baseline[1]}"
    grid = [(method, m) for method in methods for m in config.m_values]
    if config.baseline not in grid:
        grid.insert(0, config.baseline)
    for method, m in grid:
        key = f"{method}:{m}"
        cell = {"method": method, "M": m, "per_rep": []}
        for rep in range(config.repetitions):
            # The seed is keyed on (method, rep) but not on M: sample streams
            # derive per (source, m), so within one repetition the dataset
            # for a larger M is a superset of the smaller one, exactly as if
            # one generation run had kept more hypotheses.
            cell_seed = derive_seed(config.seed,
                                    DATASET_METHODS.index(method), rep)
            spec = replace(config.base_spec, method=method, M=m,
                           seed=cell_seed)
            try:
                dataset = build_dataset(config.teacher, config.train_sources,
                                        spec)
                student = train_student_sequence(
                    dataset, config.alpha,
                    split_seed=derive_seed(cell_seed, 999),
                    holdout=config.holdout,
                    name=f"student:{key}:r{rep}")
                scores = _evaluate_student(student, config.eval_sources,
                                           config.eval_references,
                                           config.eval_beam_n,
                                           config.max_eval_steps)
            except (DataError, DecodeError, InputError) as err:
                report["failures"].append({"cell": key, "rep": rep,
                                           "error": str(err)})
                continue
            cell["per_rep"].append({"chrfpp": scores["chrfpp"],
                                    "bleu": scores["bleu"]})
            if rep == 0:
                cell["_chrf_stats"] = scores["chrf_stats"]
        if cell["per_rep"]:
            for metric in ("chrfpp", "bleu"):
                vals = [r[metric] for r in cell["per_rep"]]
                cell[f"{metric}_mean"] = float(np.mean(vals))
                cell[f"{metric}_std"] = float(np.std(vals))
        report["cells"][key] = cell
    if config.include_word_level:
        try:
            wl_seed = derive_seed(config.seed, 7001)
            spec = replace(config.base_spec, method="beam", M=1, seed=wl_seed)
            dataset = build_dataset(config.teacher, config.train_sources,
                                    spec)
            student = train_student_word(config.teacher, dataset.pairs(),
                                         beta=config.word_beta,
                                         alpha=config.alpha,
                                         split_seed=derive_seed(wl_seed, 999),
                                         holdout=config.holdout,
                                         name="student:word_level")
            scores = _evaluate_student(student, config.eval_sources,
                                       config.eval_references,
                                       config.eval_beam_n,
                                       config.max_eval_steps)
            report["word_level"] = {"chrfpp": scores["chrfpp"],
                                    "bleu": scores["bleu"],
                                    "beta": config.word_beta}
        except (DataError, DecodeError, InputError) as err:
            report["failures"].append({"cell": "word_level", "error": str(err)})
    significance = {}
    base_stats = report["cells"].get(baseline_key, {}).get("_chrf_stats")
    for key, cell in report["cells"].items():
        stats = cell.pop("_chrf_stats", None)
        if key == baseline_key or base_stats is None or stats is None:
            continue
        result = paired_randomization_test(
            stats, base_stats, rounds=config.significance_rounds,
            seed=derive_seed(config.seed, 555))
        significance[key] = {"vs": baseline_key, "p_value": result.p_value,
                             "delta": result.delta}
    report["significance"] = significance
    return report
