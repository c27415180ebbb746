import sys

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import MarianConfig, MarianMTModel, PreTrainedTokenizerFast

VOCAB_WORDS = ["<pad>", "</s>", "<unk>"] + [f"tok{i}" for i in range(40)]


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny seq2seq checkpoint with a word-level tokenizer, built locally
    and loaded through the standard from_pretrained path."""
    vocab = {w: i for i, w in enumerate(VOCAB_WORDS)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, pad_token="<pad>",
                                   eos_token="</s>", unk_token="<unk>")
    config = MarianConfig(
        vocab_size=len(VOCAB_WORDS), d_model=32, encoder_layers=1,
        decoder_layers=1, encoder_attention_heads=2,
        decoder_attention_heads=2, encoder_ffn_dim=64, decoder_ffn_dim=64,
        max_position_embeddings=64, pad_token_id=0, eos_token_id=1,
        unk_token_id=2, decoder_start_token_id=0, bos_token_id=None,
        share_encoder_decoder_embeddings=True)
    torch.manual_seed(1234)
    model = MarianMTModel(config)
    with torch.no_grad():
        # Random weights rarely emit EOS; bias it so sequences terminate
        # within a small step budget like a trained model's would.
        model.final_logits_bias[0, config.eos_token_id] = 4.0
    path = tmp_path_factory.mktemp("checkpoint") / "tiny-marian"
    model.save_pretrained(path)
    fast.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def bridge_command(checkpoint):
    return [sys.executable, "-m", "pybridge", "serve", "--model", checkpoint,
            "--embed"]
