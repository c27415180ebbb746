import json
import sys

import pytest

from mhdkit.cli import main
from mhdkit.fixtures import (bias_items_path, fixture_teacher,
                             teacher_sources)
from mhdkit.seqmodel import load_teacher, make_toy_teacher, save_teacher


@pytest.fixture()
def toy_world(tmp_path):
    teacher = make_toy_teacher(55, src_vocab_size=14, tgt_vocab_size=14,
                               max_len=5)
    teacher_path = tmp_path / "teacher.json"
    save_teacher(teacher, teacher_path)
    corpus_path = tmp_path / "corpus.txt"
    corpus_path.write_text(
        "\n".join(teacher_sources(teacher, 12, seed=4)) + "\n")
    return teacher, teacher_path, corpus_path, tmp_path


def run(argv):
    return main([str(a) for a in argv])


class TestGenerate:
    def config(self, toy_world, **extra):
        teacher, teacher_path, corpus_path, tmp = toy_world
        config = {"teacher": str(teacher_path), "method": "top_p", "M": 3,
                  "seed": 5, "corpus": str(corpus_path),
                  "out": str(tmp / "ds.jsonl"), **extra}
        path = tmp / "config.json"
        path.write_text(json.dumps(config))
        return config, path

    def test_generate_writes_dataset_and_manifest(self, toy_world, capsys):
        config, path = self.config(toy_world)
        assert run(["generate", "--config", path]) == 0
        lines = open(config["out"]).read().splitlines()
        assert len(lines) == 36
        rec = json.loads(lines[0])
        assert set(rec) == {"src", "tgt", "method", "m", "logprob", "seed"}
        manifest = json.loads(open(config["out"] + ".manifest.json").read())
        assert manifest["method"] == "top_p"
        assert manifest["params"]["p"] == 0.7
        assert manifest["M"] == 3

    def test_invalid_method_fails_before_work(self, toy_world, capsys):
        config, path = self.config(toy_world)
        config["method"] = "nonsense"
        path.write_text(json.dumps(config))
        assert run(["generate", "--config", path]) == 2
        assert "error" in capsys.readouterr().err
        assert not json.loads(path.read_text()).get("never")

    def test_env_var_supplies_config(self, toy_world, monkeypatch):
        config, path = self.config(toy_world)
        monkeypatch.setenv("MHDKIT_CONFIG", str(path))
        assert run(["generate"]) == 0

    def test_sets_out(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        config, path = self.config(toy_world,
                                   sets_out=str(tmp / "sets.jsonl"))
        assert run(["generate", "--config", path]) == 0
        sets = [json.loads(l) for l in
                open(tmp / "sets.jsonl").read().splitlines()]
        assert {s["m"] for s in sets} == {1, 2, 3}
        assert all("logprob" in s and "src" in s for s in sets)


class TestTrainEval:
    def test_train_then_eval(self, toy_world, capsys):
        teacher, teacher_path, corpus_path, tmp = toy_world
        config = {"teacher": str(teacher_path), "method": "top_k", "M": 4,
                  "seed": 2, "corpus": str(corpus_path),
                  "out": str(tmp / "ds.jsonl")}
        cfg_path = tmp / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        assert run(["generate", "--config", cfg_path]) == 0
        student_path = tmp / "student.json"
        assert run(["train", "--dataset", tmp / "ds.jsonl", "--out",
                    student_path, "--alpha", "0.05"]) == 0
        student = load_teacher(student_path)
        assert student.vocab().size > 3

        hyp = tmp / "hyp.txt"
        ref = tmp / "ref.txt"
        hyp.write_text("a b c d e\nf g h i j\n")
        ref.write_text("a b c d e\nf g h i j\n")
        out = tmp / "scores.json"
        assert run(["eval", "--hyp", hyp, "--ref", ref, "--out", out]) == 0
        scores = json.loads(out.read_text())
        assert scores["chrfpp"] == pytest.approx(100.0)
        assert scores["bleu"] == pytest.approx(100.0)

    def test_word_level_requires_teacher(self, toy_world, capsys):
        teacher, teacher_path, corpus_path, tmp = toy_world
        ds = tmp / "d.jsonl"
        ds.write_text(json.dumps({"src": "a", "tgt": "b", "method": "beam",
                                  "m": 1, "logprob": -1.0, "seed": 0}) + "\n")
        assert run(["train", "--dataset", ds, "--out", tmp / "s.json",
                    "--word-level"]) == 2


class TestAnalyze:
    def test_zipf_json_and_csv(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        out = tmp / "zipf.json"
        csv_path = tmp / "zipf.csv"
        assert run(["analyze", "zipf", "--corpus", corpus_path,
                    "--out", out, "--csv", csv_path]) == 0
        doc = json.loads(out.read_text())
        assert doc["total_tokens"] > 0
        header = open(csv_path).readline().strip()
        assert header == "rank,word,frequency"

    def test_coverage(self, toy_world, capsys):
        teacher, teacher_path, corpus_path, tmp = toy_world
        train = tmp / "train.txt"
        test = tmp / "test.txt"
        train.write_text("a b c\n")
        test.write_text("b c d e\n")
        assert run(["analyze", "coverage", "--train", train,
                    "--test", test]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["ratio"] == 0.5

    def test_selfbleu_and_rankcurves_and_filter(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        config = {"teacher": str(teacher_path), "method": "top_k", "M": 4,
                  "seed": 9, "corpus": str(corpus_path),
                  "out": str(tmp / "ds2.jsonl"),
                  "sets_out": str(tmp / "sets2.jsonl")}
        cfg = tmp / "c2.json"
        cfg.write_text(json.dumps(config))
        assert run(["generate", "--config", cfg]) == 0
        out = tmp / "selfbleu.json"
        assert run(["analyze", "selfbleu", "--sets", tmp / "sets2.jsonl",
                    "--out", out]) == 0
        assert 0 <= json.loads(out.read_text())["mean_self_bleu"] <= 100
        out = tmp / "curve.json"
        assert run(["analyze", "rankcurves", "--sets", tmp / "sets2.jsonl",
                    "--out", out]) == 0
        assert len(json.loads(out.read_text())["means"]) == 4
        out = tmp / "filter.json"
        assert run(["analyze", "filter", "--pools", tmp / "sets2.jsonl",
                    "--sets", tmp / "sets2.jsonl", "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert 0 <= doc["overall_discard_rate"] <= 1

    def test_zipf_plot(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        png = tmp / "zipf.png"
        code = run(["analyze", "zipf", "--corpus", corpus_path,
                    "--plot", png, "--out", tmp / "z.json"])
        assert code == 0
        assert png.stat().st_size > 0


class TestBiasHalluc:
    def test_bias_fixture_roundtrip(self, tmp_path):
        out = tmp_path / "bias.json"
        teacher_path = tmp_path / "eval.json"
        from mhdkit.fixtures import bias_evaluator, unbiased_student
        save_teacher(bias_evaluator(), teacher_path)
        student_path = tmp_path / "student.json"
        save_teacher(unbiased_student(), student_path)
        assert run(["bias", "--evaluated", student_path,
                    "--evaluator", teacher_path,
                    "--items", bias_items_path(), "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["n_items"] == 20
        assert doc["accuracy"] == 1.0

    def test_halluc(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        refs = tmp / "refs.txt"
        lines = [f"ref sentence number {i} with words" for i in range(15)]
        refs.write_text("\n".join(lines) + "\n")
        out = tmp / "halluc.json"
        assert run(["halluc", "--outputs", refs, "--refs", refs,
                    "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["mean_similarity"] == pytest.approx(1.0, abs=1e-9)
        assert doc["overlap"] < 0.1


class TestSweepSignificance:
    def test_sweep_selfbleu_decreases_in_k(self, toy_world):
        teacher, teacher_path, corpus_path, tmp = toy_world
        vocab_size = teacher.vocab().size
        config = {"teacher": str(teacher_path), "corpus": str(corpus_path),
                  "k_values": [1, 2, vocab_size], "M": 6, "seed": 3,
                  "max_sources": 8, "out": str(tmp / "sweep.json"),
                  "csv": str(tmp / "sweep.csv")}
        cfg = tmp / "sweep_cfg.json"
        cfg.write_text(json.dumps(config))
        assert run(["sweep", "--config", cfg]) == 0
        doc = json.loads((tmp / "sweep.json").read_text())
        rows = {r["k"]: r["self_bleu"] for r in doc["rows"]}
        assert rows[1] > rows[2] > rows[vocab_size]
        assert (tmp / "sweep.csv").read_text().startswith("k,method")

    def test_significance_identical_systems(self, toy_world, capsys):
        teacher, teacher_path, corpus_path, tmp = toy_world
        a = tmp / "a.txt"
        r = tmp / "r.txt"
        a.write_text("x y z\nu v w\n")
        r.write_text("x y q\nu v q\n")
        assert run(["significance", "--hyp-a", a, "--hyp-b", a, "--ref", r,
                    "--rounds", "200"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["p_value"] == 1.0
        assert doc["delta"] == 0.0


class TestUsageErrors:
    def test_unknown_subcommand_exits_1(self):
        assert run(["transmogrify"]) == 1

    def test_missing_required_flag_exits_1(self):
        assert run(["eval", "--hyp", "x.txt"]) == 1

    def test_missing_file_exits_2(self, tmp_path):
        assert run(["eval", "--hyp", tmp_path / "no.txt",
                    "--ref", tmp_path / "no.txt"]) == 2
