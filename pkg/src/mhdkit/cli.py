"""Command-line surface.

Subcommands: generate, train, eval, analyze (zipf|coverage|selfbleu|
rankcurves|filter), bias, halluc, sweep, significance, experiment, serve.
Exit codes: 0 ok, 1 usage, 2 data error, 3 protocol error. The environment
variable ``MHDKIT_CONFIG`` supplies a default ``--config`` path.

All randomness flows from the config's root seed through documented
derivations, so every subcommand is deterministic for fixed inputs (the
dataset manifest's creation timestamp being the one mandated exception).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shlex
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import fixtures
from .biaseval import bias_accuracy, load_items
from .corpusstats import (median_probability_filter, rank_curves,
                          unique_counts, vocab_coverage, zipf_profile)
from .decode import DecodeParams, HypothesisSet, decode
from .distill import (DATASET_METHODS, ExperimentConfig, GenerationSpec,
                      build_dataset, load_dataset, run_experiment,
                      train_student_sequence, train_student_word)
from .errors import (ConfigError, DataError, DecodeError, InputError,
                     ProtocolError)
from .halluceval import builtin_embedder, hallucination_profile
from .metrics import (bleu_corpus, bleu_segment_stats, chrf_segment_stats,
                      chrfpp_corpus, paired_randomization_test, self_bleu)
from .protocol import ExternalEmbedder, ExternalModel, serve_model
from .seqmodel import CondSeqModel, Hypothesis, load_teacher, save_teacher

CONFIG_ENV = "MHDKIT_CONFIG"

GENERATE_SCHEMA = {
    "type": "object",
    "properties": {
        "teacher": {"type": ["object", "string"]},
        "method": {"enum": list(DATASET_METHODS)},
        "M": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "corpus": {"type": "string"},
        "out": {"type": "string"},
        "sets_out": {"type": "string"},
        "failure_threshold": {"type": "number", "minimum": 0, "maximum": 1},
        "decode": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "G": {"type": "integer", "minimum": 1},
                "lam": {"type": "number", "minimum": 0},
                "k": {"type": "integer", "minimum": 1},
                "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "epsilon": {"type": "number", "minimum": 0,
                            "exclusiveMaximum": 1},
                "n_candidates": {"type": "integer", "minimum": 1},
                "mbr_epsilon": {"type": "number", "minimum": 0,
                                "exclusiveMaximum": 1},
                "weighting": {"enum": ["model_prob", "uniform"]},
                "max_steps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["teacher", "method", "corpus", "out"],
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "teacher": {"type": ["object", "string"]},
        "methods": {"type": "array",
                    "items": {"enum": list(DATASET_METHODS)},
                    "minItems": 1},
        "m_values": {"type": "array", "items": {"type": "integer",
                                                "minimum": 1},
                     "minItems": 1},
        "corpus": {"type": "string"},
        "eval_sources": {"type": "string"},
        "eval_references": {"type": "string"},
        "repetitions": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "alpha": {"type": "number", "minimum": 0},
        "holdout": {"type": "number", "minimum": 0, "maximum": 0.5},
        "eval_beam_n": {"type": "integer", "minimum": 1},
        "include_word_level": {"type": "boolean"},
        "word_beta": {"type": "number", "minimum": 0, "maximum": 1},
        "baseline": {"type": "array", "minItems": 2, "maxItems": 2},
        "significance_rounds": {"type": "integer", "minimum": 1},
        "decode": GENERATE_SCHEMA["properties"]["decode"],
        "out": {"type": "string"},
    },
    "required": ["teacher", "methods", "m_values", "corpus"],
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "teacher": {"type": ["object", "string"]},
        "corpus": {"type": "string"},
        "references": {"type": "string"},
        "p_values": {"type": "array", "items": {"type": "number"}},
        "k_values": {"type": "array", "items": {"type": "integer"}},
        "M": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer"},
        "max_sources": {"type": "integer", "minimum": 1},
        "train_students": {"type": "boolean"},
        "train_corpus": {"type": "string"},
        "alpha": {"type": "number", "minimum": 0},
        "out": {"type": "string"},
        "csv": {"type": "string"},
    },
    "required": ["teacher", "corpus"],
    "additionalProperties": False,
}


def _read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    return [line for line in text.splitlines() if line.strip()]


def _load_config(args, schema) -> dict:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError("no --config given and MHDKIT_CONFIG is unset")
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise DataError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"config {path} is not valid JSON: {err}") from err
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config: {err.message}") from err
    return config


def _resolve_model(spec) -> CondSeqModel:
    """Teacher/student references: a file path, "@fixture", "@toy:SEED",
    {"path": ...}, {"builtin_seed": ...}, or {"command": [...]} for an
    external protocol server."""
    if isinstance(spec, dict):
        if "command" in spec:
            return ExternalModel(spec["command"])
        if "path" in spec:
            return load_teacher(spec["path"])
        if "builtin_seed" in spec:
            from .seqmodel import make_toy_teacher
            return make_toy_teacher(int(spec["builtin_seed"]))
        raise ConfigError(f"cannot interpret model spec {spec!r}")
    name = str(spec)
    if name == "@fixture":
        return fixtures.fixture_teacher()
    if name == "@filter-fixture":
        return fixtures.filter_teacher()
    if name.startswith("@toy:"):
        from .seqmodel import make_toy_teacher
        return make_toy_teacher(int(name.split(":", 1)[1]))
    if name.startswith("cmd:"):
        return ExternalModel(shlex.split(name[4:]))
    return load_teacher(name)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _spec_from_config(config: dict) -> GenerationSpec:
    decode_cfg = dict(config.get("decode", {}))
    return GenerationSpec(method=config["method"],
                          M=int(config.get("M", 1)),
                          seed=int(config.get("seed", 0)), **decode_cfg)


# --- Subcommands -------------------------------------------------------------

def cmd_generate(args) -> int:
    config = _load_config(args, GENERATE_SCHEMA)
    spec = _spec_from_config(config)
    spec.validate()
    model = _resolve_model(config["teacher"])
    sources = _read_lines(config["corpus"])
    sets_fh = None
    sets_sink = None
    if config.get("sets_out"):
        sets_path = Path(config["sets_out"])
        if args.resume and Path(config["out"]).exists():
            raise ConfigError("sets_out does not support resuming; remove "
                              "the partial output or pass --no-resume")
        sets_fh = open(sets_path, "w", encoding="utf-8")

        def sets_sink(index: int, text: str, hyp_set: HypothesisSet) -> None:
            vocab = model.vocab()
            for m, hyp in enumerate(hyp_set.hyps, start=1):
                sets_fh.write(json.dumps({
                    "i": index, "src": text, "method": hyp_set.method,
                    "m": m, "tgt": vocab.decode(hyp.tokens),
                    "logprob": hyp.logprob, "tokens": hyp.length},
                    ensure_ascii=False) + "\n")
    try:
        dataset = build_dataset(
            model, sources, spec, out_path=config["out"], resume=args.resume,
            failure_threshold=float(config.get("failure_threshold", 0.1)),
            sets_sink=sets_sink)
    finally:
        if sets_fh is not None:
            sets_fh.close()
    print(f"wrote {len(dataset.records)} records to {config['out']}")
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    if args.word_level:
        if not args.teacher:
            raise ConfigError("--word-level requires --teacher")
        teacher = _resolve_model(args.teacher)
        student = train_student_word(teacher, dataset.pairs(),
                                     beta=args.beta, alpha=args.alpha,
                                     split_seed=args.split_seed,
                                     holdout=args.holdout)
    else:
        student = train_student_sequence(dataset, alpha=args.alpha,
                                         split_seed=args.split_seed,
                                         holdout=args.holdout)
    save_teacher(student, args.out)
    print(f"student saved to {args.out} (mix={student.mix:.4f})")
    return 0


def cmd_eval(args) -> int:
    hyps = _read_lines(args.hyp)
    refs = _read_lines(args.ref)
    if len(hyps) != len(refs):
        raise DataError("hypothesis and reference files differ in length")
    doc = {}
    if args.metric in ("chrfpp", "both"):
        doc["chrfpp"] = chrfpp_corpus(hyps, refs)
    if args.metric in ("bleu", "both"):
        doc["bleu"] = bleu_corpus(hyps, refs)
    _emit(doc, args.out)
    return 0


def _load_sets(path: str) -> dict[int, dict]:
    """Sets JSONL grouped by source index."""
    grouped: dict[int, dict] = {}
    for n, line in enumerate(_read_lines(path), 1):
        try:
            rec = json.loads(line)
            entry = grouped.setdefault(rec["i"], {"src": rec["src"],
                                                  "hyps": []})
            entry["hyps"].append(rec)
        except (json.JSONDecodeError, KeyError) as err:
            raise DataError(f"{path}:{n}: bad sets record ({err})") from err
    return grouped


def _sets_to_hypsets(grouped: dict[int, dict]) -> list[HypothesisSet]:
    sets = []
    for i in sorted(grouped):
        hyps = [Hypothesis((0,) * max(rec["tokens"], 1),
                           rec["logprob"],
                           tuple([rec["logprob"] / max(rec["tokens"], 1)]
                                 * max(rec["tokens"], 1)))
                for rec in sorted(grouped[i]["hyps"], key=lambda r: r["m"])]
        sets.append(HypothesisSet(source=(), hyps=hyps,
                                  method=grouped[i]["hyps"][0]["method"],
                                  params=None, seed=0))
    return sets


def cmd_analyze(args) -> int:
    if args.what == "zipf":
        profile = zipf_profile(_read_lines(args.corpus), cutoff=args.cutoff)
        doc = profile.as_dict()
        words, sentences = unique_counts(_read_lines(args.corpus))
        doc["unique_sentences"] = sentences
        if args.csv:
            _write_csv(args.csv, ["rank", "word", "frequency"],
                       [[i + 1, w, int(f)] for i, (w, f) in enumerate(
                           zip(profile.words, profile.frequencies))])
        if args.plot:
            _plot_zipf(profile, args.plot)
    elif args.what == "coverage":
        report = vocab_coverage(_read_lines(args.train),
                                _read_lines(args.test))
        doc = report.as_dict()
        if args.csv:
            _write_csv(args.csv, ["train_unique_words", "test_unique_words",
                                  "covered", "ratio"],
                       [[report.train_unique_words, report.test_unique_words,
                         report.covered, report.ratio]])
        if args.plot:
            _plot_coverage(report, args.plot)
    elif args.what == "selfbleu":
        grouped = _load_sets(args.sets)
        scores = []
        for i in sorted(grouped):
            texts = [rec["tgt"] for rec in
                     sorted(grouped[i]["hyps"], key=lambda r: r["m"])]
            if len(texts) >= 2:
                scores.append(self_bleu(texts))
        if not scores:
            raise DataError("no source has at least two hypotheses")
        doc = {"mean_self_bleu": float(np.mean(scores)),
               "per_source": scores}
    elif args.what == "rankcurves":
        curve = rank_curves(_sets_to_hypsets(_load_sets(args.sets)))
        doc = curve.as_dict()
        if args.csv:
            _write_csv(args.csv, ["rank", "mean", "std"],
                       [[m + 1, float(curve.means[m]), float(curve.stds[m])]
                        for m in range(curve.M)])
        if args.plot:
            _plot_rankcurve(curve, args.plot)
    elif args.what == "filter":
        pools_grouped = _load_sets(args.pools)
        eval_grouped = _load_sets(args.sets)
        common = sorted(set(pools_grouped) & set(eval_grouped))
        if not common:
            raise DataError("pool and evaluated sets share no source index")
        pools = _sets_to_hypsets({i: pools_grouped[i] for i in common})
        evals = _sets_to_hypsets({i: eval_grouped[i] for i in common})
        texts = [pools_grouped[i]["src"] for i in common]
        report = median_probability_filter(pools, evals, texts)
        doc = report.as_dict()
        if args.csv:
            _write_csv(args.csv,
                       ["length_lo", "length_hi", "discard_rate", "count"],
                       [[b["length_lo"], b["length_hi"], b["discard_rate"],
                         b["count"]] for b in report.bucket_rates])
        if args.plot:
            _plot_filter(report, args.plot)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown analysis {args.what!r}")
    _emit(doc, args.out)
    return 0


def cmd_bias(args) -> int:
    evaluated = _resolve_model(args.evaluated)
    evaluator = _resolve_model(args.evaluator)
    items = load_items(args.items) if args.items != "@fixture" \
        else fixtures.bias_items()
    result = bias_accuracy(evaluated, evaluator, items, beam_n=args.beam_n,
                           length_normalize=args.length_normalize)
    doc = result.as_dict()
    doc["translations"] = [i.translation for i in result.items]
    _emit(doc, args.out)
    return 0


def cmd_halluc(args) -> int:
    outputs = _read_lines(args.outputs)
    refs = _read_lines(args.refs)
    if args.embed_cmd:
        provider = ExternalEmbedder(shlex.split(args.embed_cmd))
    else:
        provider = builtin_embedder(dim=args.dim, char_order=args.char_order)
    profile = hallucination_profile(outputs, refs, provider=provider,
                                    kde_bandwidth=args.bandwidth,
                                    seed=args.seed)
    if args.plot:
        _plot_halluc(profile, args.plot)
    _emit(profile.as_dict(), args.out)
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args, SWEEP_SCHEMA)
    teacher = _resolve_model(config["teacher"])
    sources = _read_lines(config["corpus"])
    limit = config.get("max_sources")
    if limit:
        sources = sources[:int(limit)]
    seed = int(config.get("seed", 0))
    m = int(config.get("M", 10))
    references = _read_lines(config["references"]) \
        if config.get("references") else None
    src_vocab = teacher.source_vocab()
    tgt_vocab = teacher.vocab()
    if references is None:
        beam = DecodeParams(method="beam", n=5, M=1, max_steps=64)
        references = [tgt_vocab.decode(
            decode(teacher, src_vocab.encode(t), beam).hyps[0].tokens)
            for t in sources]
    rows = []
    grid = [("top_p", {"p": v}) for v in config.get("p_values", [])]
    grid += [("top_k", {"k": int(v)}) for v in config.get("k_values", [])]
    if not grid:
        raise ConfigError("sweep config needs p_values and/or k_values")
    for method, knob in grid:
        spec = GenerationSpec(method=method, M=m, seed=seed, **knob)
        firsts = []
        diversity = []
        for i, text in enumerate(sources):
            hyp_set = decode(teacher, src_vocab.encode(text),
                             spec.decode_params(), source_index=i)
            texts = [tgt_vocab.decode(h.tokens) for h in hyp_set.hyps]
            firsts.append(texts[0])
            diversity.append(self_bleu(texts))
        row = {"method": method, **knob,
               "teacher_chrfpp": chrfpp_corpus(firsts, references),
               "teacher_bleu": bleu_corpus(firsts, references),
               "self_bleu": float(np.mean(diversity))}
        if config.get("train_students"):
            train_corpus = _read_lines(config["train_corpus"]) \
                if config.get("train_corpus") else sources
            dataset = build_dataset(teacher, train_corpus, spec)
            student = train_student_sequence(
                dataset, alpha=float(config.get("alpha", 0.1)))
            beam = DecodeParams(method="beam", n=5, M=1, max_steps=64)
            hyps = [student.vocab().decode(
                decode(student, student.source_vocab().encode(t),
                       beam).hyps[0].tokens) for t in sources]
            row["student_chrfpp"] = chrfpp_corpus(hyps, references)
            row["student_bleu"] = bleu_corpus(hyps, references)
        rows.append(row)
    doc = {"M": m, "seed": seed, "rows": rows}
    if config.get("csv"):
        header = sorted({k for row in rows for k in row})
        _write_csv(config["csv"], header,
                   [[row.get(k, "") for k in header] for row in rows])
    _emit(doc, config.get("out") or args.out)
    return 0


def cmd_significance(args) -> int:
    hyps_a = _read_lines(args.hyp_a)
    hyps_b = _read_lines(args.hyp_b)
    refs = _read_lines(args.ref)
    if not len(hyps_a) == len(hyps_b) == len(refs):
        raise DataError("system and reference files differ in length")
    if args.metric == "bleu":
        stats_a = [bleu_segment_stats(h, r) for h, r in zip(hyps_a, refs)]
        stats_b = [bleu_segment_stats(h, r) for h, r in zip(hyps_b, refs)]
    else:
        stats_a = [chrf_segment_stats(h, r) for h, r in zip(hyps_a, refs)]
        stats_b = [chrf_segment_stats(h, r) for h, r in zip(hyps_b, refs)]
    result = paired_randomization_test(stats_a, stats_b, rounds=args.rounds,
                                       seed=args.seed)
    _emit({"metric": args.metric, "p_value": result.p_value,
           "delta": result.delta, "score_a": result.score_a,
           "score_b": result.score_b, "rounds": result.rounds}, args.out)
    return 0


def cmd_experiment(args) -> int:
    config = _load_config(args, EXPERIMENT_SCHEMA)
    teacher = _resolve_model(config["teacher"])
    train_sources = _read_lines(config["corpus"])
    if config.get("eval_sources"):
        eval_sources = _read_lines(config["eval_sources"])
        if config.get("eval_references"):
            eval_references = _read_lines(config["eval_references"])
        else:
            beam = DecodeParams(method="beam", n=5, M=1, max_steps=64)
            eval_references = [teacher.vocab().decode(
                decode(teacher, teacher.source_vocab().encode(t),
                       beam).hyps[0].tokens) for t in eval_sources]
    else:
        eval_sources, eval_references = fixtures.fixture_eval(
            teacher=teacher if isinstance(config["teacher"], str) and
            config["teacher"] == "@fixture" else teacher)
    decode_cfg = dict(config.get("decode", {}))
    experiment = ExperimentConfig(
        teacher=teacher, train_sources=train_sources,
        eval_sources=eval_sources, eval_references=eval_references,
        methods=list(config["methods"]),
        m_values=[int(v) for v in config["m_values"]],
        repetitions=int(config.get("repetitions", 3)),
        base_spec=GenerationSpec(method=config["methods"][0], **decode_cfg),
        alpha=float(config.get("alpha", 0.1)),
        holdout=float(config.get("holdout", 0.1)),
        eval_beam_n=int(config.get("eval_beam_n", 5)),
        seed=int(config.get("seed", 0)),
        include_word_level=bool(config.get("include_word_level", False)),
        word_beta=float(config.get("word_beta", 0.5)),
        baseline=tuple(config.get("baseline", ("beam", 1))),
        significance_rounds=int(config.get("significance_rounds", 2000)))
    report = run_experiment(experiment)
    _emit(report, config.get("out") or args.out)
    return 0


def cmd_serve(args) -> int:
    model = _resolve_model(args.model)
    embedder = None
    if not args.no_embed:
        embedder = builtin_embedder(dim=args.embed_dim,
                                    char_order=args.embed_order)
    serve_model(model, embedder=embedder)
    return 0


# --- Plot helpers (lazy matplotlib) ------------------------------------------

def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        return plt
    except ImportError as err:
        raise ConfigError("--plot requires matplotlib (pip install "
                          "mhdkit[plot])") from err


def _plot_zipf(profile, path: str) -> None:
    plt = _pyplot()
    ranks = np.arange(1, len(profile.frequencies) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ranks, profile.frequencies, marker=".", linestyle="none",
              markersize=3)
    if not profile.degenerate:
        head = ranks[:profile.cutoff]
        ax.loglog(head, np.exp(profile.intercept) * head ** profile.slope,
                  linewidth=1)
    ax.set_xlabel("rank")
    ax.set_ylabel("frequency")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_rankcurve(curve, path: str) -> None:
    plt = _pyplot()
    ranks = np.arange(1, curve.M + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ranks, curve.means, marker="o")
    ax.fill_between(ranks, curve.means - curve.stds,
                    curve.means + curve.stds, alpha=0.25)
    ax.set_xlabel("hypothesis rank m")
    ax.set_ylabel("mean log-probability per token")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_coverage(report, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar(["covered", "missing"],
           [report.covered, report.test_unique_words - report.covered])
    ax.set_ylabel("test vocabulary words")
    ax.set_title(f"coverage {report.ratio:.1%}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_filter(report, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [b["length_lo"] for b in report.bucket_rates]
    ys = [b["discard_rate"] for b in report.bucket_rates]
    ax.bar(xs, ys, width=8)
    ax.axhline(report.overall_discard_rate, linestyle="--", color="gray")
    ax.set_xlabel("source length (characters)")
    ax.set_ylabel("discard rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_halluc(profile, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(profile.grid, profile.density, label="system")
    ax.fill_between(profile.grid, profile.baseline_density, alpha=0.3,
                    label="shuffled")
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- Entry point --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mhdkit",
                     description="Multi-hypothesis distillation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a distillation dataset")
    p.add_argument("--config", help=f"JSON config (default ${CONFIG_ENV})")
    p.add_argument("--no-resume", dest="resume", action="store_false")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a count student")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--split-seed", type=int, default=13)
    p.add_argument("--word-level", action="store_true")
    p.add_argument("--teacher", help="teacher for --word-level")
    p.add_argument("--beta", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("chrfpp", "bleu", "both"),
                   default="both")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="corpus diagnostics")
    p.add_argument("what", choices=("zipf", "coverage", "selfbleu",
                                    "rankcurves", "filter"))
    p.add_argument("--corpus", help="text corpus (zipf)")
    p.add_argument("--cutoff", type=int, default=10_000)
    p.add_argument("--train", help="training corpus (coverage)")
    p.add_argument("--test", help="test corpus (coverage)")
    p.add_argument("--sets", help="hypothesis-sets JSONL")
    p.add_argument("--pools", help="epsilon-pool sets JSONL (filter)")
    p.add_argument("--csv", help="write a headered CSV series")
    p.add_argument("--plot", help="write a PNG figure")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bias", help="contrastive-conditioning bias eval")
    p.add_argument("--evaluated", required=True)
    p.add_argument("--evaluator", required=True)
    p.add_argument("--items", default="@fixture")
    p.add_argument("--beam-n", type=int, default=5)
    p.add_argument("--length-normalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("halluc", help="hallucination profile")
    p.add_argument("--outputs", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--char-order", type=int, default=3)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embed-cmd", help="external embedding server command")
    p.add_argument("--plot")
    p.add_argument("--out")
    p.set_defaults(func=cmd_halluc)

    p = sub.add_parser("sweep", help="p/k grid: quality vs self-BLEU")
    p.add_argument("--config", help=f"JSON config (default ${CONFIG_ENV})")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("significance",
                       help="paired approximate randomization test")
    p.add_argument("--hyp-a", required=True)
    p.add_argument("--hyp-b", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("chrfpp", "bleu"), default="chrfpp")
    p.add_argument("--rounds", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("experiment", help="full distillation grid")
    p.add_argument("--config", help=f"JSON config (default ${CONFIG_ENV})")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="expose a model over stdio")
    p.add_argument("--model", required=True)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--embed-order", type=int, default=3)
    p.add_argument("--no-embed", action="store_true")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # usage errors -> exit code 1
        return 1 if exit_.code else 0
    try:
        return args.func(args)
    except ProtocolError as err:
        print(f"protocol error: {err}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, InputError, DecodeError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
