"""Encoder + three-logit head, checkpoint persistence, parameter checksums."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import torch
from torch import nn
from transformers import AutoModel, AutoTokenizer

N_LABELS = 3
POOLING = "first_token"

METADATA_FILE = "pio_finetune.json"
HEAD_FILE = "head.pt"


class EncoderClassifier(nn.Module):
    """A pre-trained encoder pooled at the first token, feeding 3 logits."""

    def __init__(self, encoder, tokenizer, encoder_name: str):
        super().__init__()
        self.encoder = encoder
        self.tokenizer = tokenizer
        self.encoder_name = encoder_name
        self.head = nn.Linear(encoder.config.hidden_size, N_LABELS)

    @property
    def encoder_limit(self) -> int:
        return int(self.encoder.config.max_position_embeddings)

    def forward(self, input_ids, attention_mask):
        hidden = self.encoder(input_ids=input_ids, attention_mask=attention_mask)
        pooled = hidden.last_hidden_state[:, 0]  # first-token vector
        return self.head(pooled)

    def set_encoder_trainable(self, trainable: bool) -> None:
        for parameter in self.encoder.parameters():
            parameter.requires_grad = trainable


def load_encoder(encoder_name: str) -> tuple:
    """Resolve a published checkpoint name or local path to encoder+tokenizer."""
    encoder = AutoModel.from_pretrained(encoder_name)
    tokenizer = AutoTokenizer.from_pretrained(encoder_name)
    return encoder, tokenizer


def parameter_checksum(module: nn.Module) -> str:
    """Order-stable SHA-256 over all parameter tensors."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(model: EncoderClassifier, out_dir: str | Path, metadata: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.encoder.save_pretrained(out)
    model.tokenizer.save_pretrained(out)
    torch.save(model.head.state_dict(), out / HEAD_FILE)
    payload = dict(metadata)
    payload["pooling"] = POOLING
    payload["encoder_name"] = model.encoder_name
    (out / METADATA_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return out


def load_checkpoint(path: str | Path) -> tuple[EncoderClassifier, dict]:
    path = Path(path)
    meta_path = path / METADATA_FILE
    if not meta_path.exists():
        raise ValueError(f"{path} is not a fine-tuned checkpoint (missing {METADATA_FILE})")
    metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    encoder, tokenizer = load_encoder(str(path))
    model = EncoderClassifier(encoder, tokenizer, metadata["encoder_name"])
    model.head.load_state_dict(torch.load(path / HEAD_FILE, weights_only=True))
    model.eval()
    return model, metadata
