import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mhdkit.seqmodel import Vocab, build_table_teacher


@pytest.fixture(scope="session")
def tiny_teacher():
    """Two target words, fully hand-specified; used for hand-arithmetic tests."""
    src_vocab = Vocab.build(["s", "q"])
    tgt_vocab = Vocab.build(["a", "b"])
    lex = {"s": {"a": 0.7, "b": 0.3}, "q": {"a": 0.1, "b": 0.9}}
    bigram = {
        "<s>": {"a": 0.2, "b": 0.4, "</s>": 0.4},
        "a": {"a": 0.1, "b": 0.5, "</s>": 0.4},
        "b": {"a": 0.6, "b": 0.1, "</s>": 0.3},
    }
    return build_table_teacher(src_vocab, tgt_vocab, lex, bigram,
                               mix=0.5, max_len=4, name="tiny")


def assert_normalized(row: np.ndarray, tol: float = 1e-9) -> None:
    total = np.exp(row).sum()
    assert abs(total - 1.0) <= tol, f"distribution sums to {total}"
