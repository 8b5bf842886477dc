"""Fine-tuning loop: frozen encoder for epoch 1, full model afterwards."""

from __future__ import annotations

import logging
from pathlib import Path

import torch
from torch import nn

from .config import FinetuneConfig
from .data import Example
from .model import EncoderClassifier, load_encoder, parameter_checksum, save_checkpoint

log = logging.getLogger(__name__)


def _encode(model: EncoderClassifier, texts: list[str], max_length: int):
    """Tokenize once up front; returns encodings plus the truncation count."""
    full = model.tokenizer(texts, truncation=False, padding=False)
    truncated = sum(1 for ids in full["input_ids"] if len(ids) > max_length)
    clipped = model.tokenizer(texts, truncation=True, max_length=max_length, padding=False)
    return clipped, truncated


def finetune(
    dataset: list[Example],
    config: FinetuneConfig,
    out_dir: str | Path,
) -> Path:
    """Train the 3-logit head (and, after epoch 1, the encoder) on a dataset.

    The caller is responsible for passing base-split sequences only when
    the output feeds a stacker. Returns the checkpoint directory; its
    metadata records the per-epoch loss trajectory, per-epoch encoder
    checksums (index 0 = before training) and the truncation count.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    torch.manual_seed(config.seed)

    encoder, tokenizer = load_encoder(config.encoder_name)
    model = EncoderClassifier(encoder, tokenizer, config.encoder_name)
    if config.max_sequence_length > model.encoder_limit:
        raise ValueError(
            f"max_sequence_length {config.max_sequence_length} exceeds the "
            f"encoder limit {model.encoder_limit}"
        )

    texts = [ex.text for ex in dataset]
    targets = torch.tensor([ex.target for ex in dataset], dtype=torch.float32)
    encodings, truncated = _encode(model, texts, config.max_sequence_length)
    if truncated:
        log.warning("%d of %d sequences exceeded %d tokens and were truncated",
                    truncated, len(dataset), config.max_sequence_length)

    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()
    generator = torch.Generator().manual_seed(config.seed)

    loss_history: list[float] = []
    encoder_checksums: list[str] = [parameter_checksum(model.encoder)]

    model.train()
    for epoch in range(1, config.epochs + 1):
        frozen = config.freeze_first_epoch and epoch == 1
        model.set_encoder_trainable(not frozen)

        order = torch.randperm(len(dataset), generator=generator).tolist()
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = model.tokenizer.pad(
                {
                    "input_ids": [encodings["input_ids"][k] for k in idx],
                    "attention_mask": [encodings["attention_mask"][k] for k in idx],
                },
                return_tensors="pt",
            )
            optimizer.zero_grad()
            logits = model(batch["input_ids"], batch["attention_mask"])
            loss = loss_fn(logits, targets[idx])
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(idx)
        loss_history.append(epoch_loss / len(dataset))
        encoder_checksums.append(parameter_checksum(model.encoder))
        log.info("epoch %d/%d: loss %.4f%s", epoch, config.epochs,
                 loss_history[-1], " (encoder frozen)" if frozen else "")

    model.eval()
    metadata = {
        "config": config.as_dict(),
        "loss_history": loss_history,
        "encoder_checksums": encoder_checksums,
        "truncated_sequences": truncated,
        "n_training_sequences": len(dataset),
    }
    return save_checkpoint(model, out_dir, metadata)
