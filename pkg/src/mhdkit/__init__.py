"""Multi-hypothesis distillation toolkit.

Generate M translation hypotheses per source from any conditional sequence
model (beam, diverse beam, top-k, top-p, epsilon, MBR), build distillation
corpora, train count-based students at sequence or word level, and run the
corpus diagnostics (metrics, diversity, coverage, bias, hallucination).
"""

from .decode import (DecodeParams, HypothesisSet, beam_search, decode,
                     diverse_beam_search, greedy_decode, sample_epsilon,
                     sample_top_k, sample_top_p)
from .errors import (ConfigError, DataError, DecodeError, InputError,
                     ProtocolError)
from .seqmodel import (CondSeqModel, Hypothesis, TableTeacher, TokenSeq,
                       Vocab, build_table_teacher, load_teacher,
                       make_toy_teacher, save_teacher, score_sequence,
                       teacher_from_dict, teacher_to_dict)

__version__ = "0.1.0"
