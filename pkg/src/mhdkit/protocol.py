"""Newline-delimited JSON wire protocol for external models and embedders.

A model server is any child process that answers requests on stdin/stdout,
one JSON object per line:

    -> {"id": 1, "op": "hello"}
    <- {"id": 1, "ok": true, "vocab": [...], "bos": 0, "eos": 1, "unk": 2,
        "dim": 256}                       # dim only if it can embed;
                                          # optional "vocab_src" for models
                                          # with a distinct source vocabulary
    -> {"id": 2, "op": "next_logprobs", "source": [5], "prefixes": [[], [7]]}
    <- {"id": 2, "ok": true, "logprobs": [[...], [...]]}
    -> {"id": 3, "op": "score_sequence", "source": [5], "target": [7, 1]}
    <- {"id": 3, "ok": true, "logprob": -1.2, "step_logprobs": [-0.7, -0.5]}
    -> {"id": 4, "op": "embed", "text": "a sentence"}
    <- {"id": 4, "ok": true, "vector": [...]}

Floats ride through JSON with repr round-tripping, so a builtin teacher
served over the loopback decodes bit-identically to in-process use. The
client verifies the contract at handshake with three normalization probes.
"""

from __future__ import annotations

import json
import selectors
import subprocess
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ProtocolError
from .halluceval import EmbeddingProvider
from .seqmodel import CondSeqModel, Hypothesis, TokenSeq, Vocab

HANDSHAKE_TIMEOUT = 30.0
REQUEST_TIMEOUT = 300.0


# --- Server ------------------------------------------------------------------

def serve_model(model: CondSeqModel,
                embedder: EmbeddingProvider | None = None,
                stdin=None, stdout=None) -> None:
    """Answer protocol requests until stdin closes. Single-threaded; run
    several processes for parallelism."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    vocab = model.vocab()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            stdout.write(json.dumps(
                {"id": None, "ok": False, "error": "malformed JSON"}) + "\n")
            stdout.flush()
            continue
        req_id = request.get("id")
        try:
            op = request.get("op")
            if op == "hello":
                reply = {"id": req_id, "ok": True,
                         "vocab": list(vocab.entries), "bos": vocab.bos,
                         "eos": vocab.eos, "unk": vocab.unk}
                src_vocab = model.source_vocab()
                if src_vocab.entries != vocab.entries:
                    reply["vocab_src"] = list(src_vocab.entries)
                if embedder is not None:
                    reply["dim"] = embedder.dimension()
            elif op == "next_logprobs":
                source = tuple(request["source"])
                prefixes = [tuple(p) for p in request["prefixes"]]
                rows = model.next_logprobs_batch(source, prefixes)
                reply = {"id": req_id, "ok": True,
                         "logprobs": [_encode_row(r) for r in rows]}
            elif op == "score_sequence":
                hyp = model.score_sequence(tuple(request["source"]),
                                           tuple(request["target"]))
                reply = {"id": req_id, "ok": True, "logprob": hyp.logprob,
                         "step_logprobs": list(hyp.step_logprobs)}
            elif op == "embed":
                if embedder is None:
                    raise ValueError("this server has no embedder")
                vec = embedder.embed(request["text"])
                reply = {"id": req_id, "ok": True,
                         "vector": [float(x) for x in vec]}
            else:
                raise ValueError(f"unknown op {op!r}")
        except Exception as err:  # per-request isolation
            reply = {"id": req_id, "ok": False, "error": str(err)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def _encode_row(row: np.ndarray) -> list:
    return [None if np.isneginf(x) else float(x) for x in row]


def _decode_row(values: Sequence) -> np.ndarray:
    return np.array([-np.inf if v is None else float(v) for v in values])


# --- Client ------------------------------------------------------------------

class _Transport:
    """One child process speaking the protocol, with id-matched replies."""

    def __init__(self, command: Sequence[str], timeout: float):
        self.command = list(command)
        self.timeout = timeout
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as err:
            raise ProtocolError(f"cannot start {self.command!r}: {err}")
        self.selector = selectors.DefaultSelector()
        self.selector.register(self.proc.stdout, selectors.EVENT_READ)
        self.next_id = 1
        self.lines_read = 0

    def request(self, op: str, timeout: float | None = None, **payload) -> dict:
        req_id = self.next_id
        self.next_id += 1
        message = json.dumps({"id": req_id, "op": op, **payload})
        try:
            self.proc.stdin.write(message + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as err:
            raise ProtocolError(
                f"server {self.command[0]} closed its stdin: {err}")
        reply = self._read_reply(timeout or self.timeout)
        if reply.get("id") != req_id:
            raise ProtocolError(
                f"response id {reply.get('id')} does not match request "
                f"{req_id}")
        if not reply.get("ok"):
            raise ProtocolError(
                f"server error for op {op!r}: {reply.get('error')}")
        return reply

    def _read_reply(self, timeout: float) -> dict:
        if not self.selector.select(timeout):
            raise ProtocolError(
                f"server {self.command[0]} timed out after {timeout}s")
        line = self.proc.stdout.readline()
        self.lines_read += 1
        if not line:
            code = self.proc.poll()
            raise ProtocolError(
                f"server {self.command[0]} exited mid-stream "
                f"(code {code}) after {self.lines_read - 1} lines")
        try:
            return json.loads(line)
        except json.JSONDecodeError as err:
            raise ProtocolError(
                f"malformed JSON on line {self.lines_read} from "
                f"{self.command[0]}: {err}")

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()
        self.selector.close()


class ExternalModel(CondSeqModel):
    """CondSeqModel backed by a protocol child process.

    The handshake fetches the vocabulary and runs three normalization
    probes; a server whose distributions do not sum to 1 is rejected up
    front with a diagnostic.
    """

    def __init__(self, command: Sequence[str], probe_tolerance: float = 1e-6,
                 handshake_timeout: float = HANDSHAKE_TIMEOUT,
                 request_timeout: float = REQUEST_TIMEOUT):
        self._transport = _Transport(command, request_timeout)
        hello = self._transport.request("hello", timeout=handshake_timeout)
        try:
            self._vocab = Vocab(entries=tuple(hello["vocab"]),
                                bos=int(hello["bos"]), eos=int(hello["eos"]),
                                unk=int(hello.get("unk", hello["eos"])))
        except (KeyError, TypeError) as err:
            raise ProtocolError(f"bad hello payload: {err}")
        if "vocab_src" in hello:
            self._src_vocab = Vocab(entries=tuple(hello["vocab_src"]),
                                    bos=int(hello["bos"]),
                                    eos=int(hello["eos"]),
                                    unk=int(hello.get("unk", hello["eos"])))
        else:
            self._src_vocab = self._vocab
        self.embed_dim = hello.get("dim")
        self._name = f"external:{Path(command[0]).name}"
        self._probe(probe_tolerance)

    def _probe(self, tol: float) -> None:
        content = self._src_vocab.content_ids
        probe_tok = content[0] if content else self._src_vocab.unk
        probes = [((probe_tok,), ()),
                  ((probe_tok,), (self._pick_target(),)),
                  ((probe_tok, probe_tok), ())]
        for source, prefix in probes:
            row = self.next_logprobs(source, prefix)
            if len(row) != self._vocab.size:
                raise ProtocolError(
                    f"probe returned {len(row)} log-probabilities for a "
                    f"vocabulary of {self._vocab.size}")
            total = float(np.exp(row).sum())
            if abs(total - 1.0) > tol:
                raise ProtocolError(
                    f"probe distribution sums to {total!r}, outside "
                    f"1 +/- {tol}")

    def _pick_target(self) -> int:
        content = self._vocab.content_ids
        return content[0] if content else self._vocab.unk

    def vocab(self) -> Vocab:
        return self._vocab

    def source_vocab(self) -> Vocab:
        return self._src_vocab

    @property
    def model_id(self) -> str:
        return self._name

    def next_logprobs(self, source: TokenSeq, prefix: TokenSeq) -> np.ndarray:
        return self.next_logprobs_batch(source, [prefix])[0]

    def next_logprobs_batch(self, source: TokenSeq,
                            prefixes: Sequence[TokenSeq]) -> np.ndarray:
        if not prefixes:
            return np.zeros((0, self._vocab.size))
        reply = self._transport.request(
            "next_logprobs", source=[int(t) for t in source],
            prefixes=[[int(t) for t in p] for p in prefixes])
        rows = reply["logprobs"]
        if len(rows) != len(prefixes):
            raise ProtocolError(
                f"got {len(rows)} rows for {len(prefixes)} prefixes")
        return np.stack([_decode_row(r) for r in rows])

    def score_sequence(self, source: TokenSeq, target: TokenSeq) -> Hypothesis:
        reply = self._transport.request(
            "score_sequence", source=[int(t) for t in source],
            target=[int(t) for t in target])
        return Hypothesis(tokens=tuple(target),
                          logprob=float(reply["logprob"]),
                          step_logprobs=tuple(reply["step_logprobs"]))

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "ExternalModel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ExternalEmbedder(EmbeddingProvider):
    """Embedding provider speaking the same protocol (op "embed")."""

    def __init__(self, command: Sequence[str],
                 handshake_timeout: float = HANDSHAKE_TIMEOUT,
                 request_timeout: float = REQUEST_TIMEOUT):
        self._transport = _Transport(command, request_timeout)
        hello = self._transport.request("hello", timeout=handshake_timeout)
        dim = hello.get("dim")
        if not dim:
            raise ProtocolError("server does not advertise an embedding "
                                "dimension")
        self._dim = int(dim)

    def dimension(self) -> int:
        return self._dim

    def embed(self, sentence: str) -> np.ndarray:
        reply = self._transport.request("embed", text=sentence)
        vec = np.asarray(reply["vector"], dtype=np.float64)
        if vec.shape != (self._dim,):
            raise ProtocolError(
                f"embedding has shape {vec.shape}, expected ({self._dim},)")
        return vec

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "ExternalEmbedder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def external_model_client(command: Sequence[str],
                          probe_tolerance: float = 1e-6) -> ExternalModel:
    return ExternalModel(command, probe_tolerance=probe_tolerance)
