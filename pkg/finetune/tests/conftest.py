import json
from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

FIXTURES = Path(__file__).parent / "fixtures"
DATASET_100 = FIXTURES / "dataset_100.jsonl"

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


@pytest.fixture(scope="session")
def dataset_path() -> Path:
    return DATASET_100


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory) -> str:
    """A small randomly initialized local encoder checkpoint.

    The network in CI cannot reach model hubs, so tests exercise the
    training/export contracts against a locally built checkpoint; passing
    a published checkpoint name works identically when a hub is reachable.
    """
    out = tmp_path_factory.mktemp("tiny-encoder")
    words = set()
    with open(DATASET_100, encoding="utf-8") as fh:
        for line in fh:
            words.update(json.loads(line)["text"].lower().split())
    vocab = SPECIALS + sorted(words) + [str(d) for d in range(10)]
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(dict.fromkeys(vocab)) + "\n", encoding="utf-8")

    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    config = BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)
