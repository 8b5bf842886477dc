"""Emit probability interchange files from a fine-tuned checkpoint.

Format (the only contract with the stacker): UTF-8 CSV, header
``id,model,p_P,p_I,p_O``, '.' decimal separator, 17 significant digits;
the model column is the encoder name the checkpoint was trained from.
"""

from __future__ import annotations

import csv
from pathlib import Path

import torch

from .data import Example
from .model import EncoderClassifier

PROBABILITY_HEADER = ("id", "model", "p_P", "p_I", "p_O")


def predict_probabilities(
    model: EncoderClassifier,
    examples: list[Example],
    max_sequence_length: int,
    batch_size: int = 32,
) -> list[tuple[str, tuple[float, float, float]]]:
    rows: list[tuple[str, tuple[float, float, float]]] = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            batch = model.tokenizer(
                [ex.text for ex in chunk],
                truncation=True,
                max_length=max_sequence_length,
                padding=True,
                return_tensors="pt",
            )
            probs = torch.sigmoid(model(batch["input_ids"], batch["attention_mask"]))
            for ex, p in zip(chunk, probs.tolist()):
                rows.append((ex.seq_id, (p[0], p[1], p[2])))
    return rows


def export_probabilities(
    model: EncoderClassifier,
    examples: list[Example],
    out_path: str | Path,
    max_sequence_length: int,
    model_name: str | None = None,
) -> int:
    """Write one row per example; duplicate ids are refused."""
    ids = [ex.seq_id for ex in examples]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"id collision in export dataset (e.g. {dupes[:3]})")
    model_name = model_name or model.encoder_name
    rows = predict_probabilities(model, examples, max_sequence_length)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROBABILITY_HEADER)
        for seq_id, p in rows:
            writer.writerow([seq_id, model_name] + [format(v, ".17g") for v in p])
    return len(rows)
