"""Builds a miniature offline sentence-transformers model for the tests.

The model is randomly initialized but saved to disk once per session, so
every test sees the same fixed weights; nothing is downloaded.
"""

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    from transformers import BertConfig, BertModel, BertTokenizerFast
    from sentence_transformers import SentenceTransformer, models

    root = tmp_path_factory.mktemp("tiny_model")
    bert_dir = root / "bert"
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=64,
        hidden_size=24,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=37,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(bert_dir)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + list("abcdefghijklmnopqrstuvwxyz0123456789'- ")
    (bert_dir / "vocab.txt").write_text("\n".join(vocab))
    BertTokenizerFast(vocab_file=str(bert_dir / "vocab.txt"), do_lower_case=True).save_pretrained(bert_dir)

    word = models.Transformer(str(bert_dir), max_seq_length=32)
    pooling = models.Pooling(word.get_word_embedding_dimension(), pooling_mode="mean")
    st_dir = root / "st"
    SentenceTransformer(modules=[word, pooling]).save(str(st_dir))
    return str(st_dir)


@pytest.fixture()
def name_list(tmp_path):
    path = tmp_path / "names.txt"
    path.write_text(
        "GARCIA\nNGUYEN\nKENNEDY-WALL\nO'BRIEN\nSMITH\n"
        "MARTINEZ-VEGA\nCHEN\nWASHINGTON\nREYES\nKOWALCZYK\n"
    )
    return path
