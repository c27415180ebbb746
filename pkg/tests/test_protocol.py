import json
import sys

import numpy as np
import pytest

from mhdkit.decode import DecodeParams, decode
from mhdkit.distill import GenerationSpec
from mhdkit.errors import ProtocolError
from mhdkit.fixtures import teacher_sources
from mhdkit.halluceval import builtin_embedder
from mhdkit.mbr import MbrParams, mbr_decode
from mhdkit.protocol import ExternalEmbedder, ExternalModel
from mhdkit.seqmodel import make_toy_teacher, save_teacher


@pytest.fixture(scope="module")
def served_teacher(tmp_path_factory):
    teacher = make_toy_teacher(77, src_vocab_size=12, tgt_vocab_size=12,
                               max_len=5)
    path = tmp_path_factory.mktemp("models") / "teacher.json"
    save_teacher(teacher, path)
    command = [sys.executable, "-m", "mhdkit", "serve", "--model", str(path)]
    with ExternalModel(command) as remote:
        yield teacher, remote


class TestLoopback:
    def test_vocab_roundtrip(self, served_teacher):
        teacher, remote = served_teacher
        assert remote.vocab().entries == teacher.vocab().entries
        assert remote.source_vocab().entries == \
            teacher.source_vocab().entries

    def test_next_logprobs_bit_identical(self, served_teacher):
        teacher, remote = served_teacher
        for prefix in ((), (3,), (4, 5)):
            np.testing.assert_array_equal(
                remote.next_logprobs((3, 4), prefix),
                teacher.next_logprobs((3, 4), prefix))

    def test_decoding_bit_identical_across_method_grid(self, served_teacher):
        teacher, remote = served_teacher
        sources = teacher_sources(teacher, 3, seed=5, min_len=1, max_len=3)
        for method in ("greedy", "beam", "diverse_beam", "top_k", "top_p",
                       "epsilon"):
            spec = GenerationSpec(method=method, M=3, n=6, G=2, seed=21)
            for i, text in enumerate(sources):
                source = teacher.source_vocab().encode(text)
                local = decode(teacher, source, spec.decode_params(),
                               source_index=i)
                wire = decode(remote, source, spec.decode_params(),
                              source_index=i)
                assert [h.tokens for h in local.hyps] == \
                    [h.tokens for h in wire.hyps], method
                for a, b in zip(local.hyps, wire.hyps):
                    assert a.logprob == b.logprob
                    assert a.step_logprobs == b.step_logprobs

    def test_mbr_bit_identical(self, served_teacher):
        teacher, remote = served_teacher
        source = (3, 4)
        params = MbrParams(M=2, n_candidates=32, seed=9)
        local = mbr_decode(teacher, source, params)
        wire = mbr_decode(remote, source, params)
        assert [h.tokens for h in local.hyps] == \
            [h.tokens for h in wire.hyps]
        assert local.selection_scores == wire.selection_scores

    def test_score_sequence_round_trip(self, served_teacher):
        teacher, remote = served_teacher
        target = (3, 4, teacher.vocab().eos)
        local = teacher.score_sequence((3,), target)
        wire = remote.score_sequence((3,), target)
        assert local.logprob == wire.logprob
        assert local.step_logprobs == wire.step_logprobs

    def test_server_error_isolated(self, served_teacher):
        _, remote = served_teacher
        with pytest.raises(ProtocolError, match="server error"):
            remote.score_sequence((3,), (3,))  # missing EOS -> error reply
        # the connection stays usable afterwards
        assert remote.next_logprobs((3,), ()).shape[0] == \
            remote.vocab().size


class TestEmbedLoopback:
    def test_embed_matches_builtin(self, tmp_path):
        teacher = make_toy_teacher(3, src_vocab_size=8, tgt_vocab_size=8)
        path = tmp_path / "teacher.json"
        save_teacher(teacher, path)
        command = [sys.executable, "-m", "mhdkit", "serve", "--model",
                   str(path), "--embed-dim", "64", "--embed-order", "3"]
        local = builtin_embedder(dim=64, char_order=3)
        with ExternalEmbedder(command) as remote:
            assert remote.dimension() == 64
            for text in ("hello there", "another sentence"):
                np.testing.assert_array_equal(remote.embed(text),
                                              local.embed(text))


def _stub_command(body: str) -> list[str]:
    return [sys.executable, "-c", body]


class TestProtocolFailures:
    def test_malformed_json_line(self):
        stub = _stub_command(
            "import sys\n"
            "sys.stdin.readline()\n"
            "print('this is not json', flush=True)\n")
        with pytest.raises(ProtocolError, match="malformed JSON on line 1"):
            ExternalModel(stub)

    def test_child_exits_mid_stream(self):
        stub = _stub_command("import sys; sys.stdin.readline()")
        with pytest.raises(ProtocolError, match="exited mid-stream"):
            ExternalModel(stub)

    def test_non_normalized_probe_rejected(self):
        stub = _stub_command(
            "import sys, json\n"
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    if req['op'] == 'hello':\n"
            "        reply = {'id': req['id'], 'ok': True,\n"
            "                 'vocab': ['<s>', '</s>', '<unk>', 'a'],\n"
            "                 'bos': 0, 'eos': 1, 'unk': 2}\n"
            "    else:\n"
            "        reply = {'id': req['id'], 'ok': True,\n"
            "                 'logprobs': [[None, -0.1, None, -0.1]\n"
            "                              for _ in req['prefixes']]}\n"
            "    print(json.dumps(reply), flush=True)\n")
        with pytest.raises(ProtocolError, match="sums to"):
            ExternalModel(stub)

    def test_mismatched_id_rejected(self):
        stub = _stub_command(
            "import sys, json\n"
            "line = sys.stdin.readline()\n"
            "req = json.loads(line)\n"
            "print(json.dumps({'id': 999, 'ok': True, 'vocab':\n"
            "    ['<s>', '</s>', '<unk>'], 'bos': 0, 'eos': 1, 'unk': 2}),\n"
            "    flush=True)\n"
            "sys.stdin.readline()\n")
        with pytest.raises(ProtocolError, match="does not match"):
            ExternalModel(stub)

    def test_missing_command(self):
        with pytest.raises(ProtocolError, match="cannot start"):
            ExternalModel(["/nonexistent/binary-for-sure"])
