"""Reader for the one-record-per-line labeled-sequence dataset format.

Each line is a JSON object with ``seq_id``, ``pmid``, ``heading``,
``text``, ``labels`` (letter code over P/I/O, empty string = NEGATIVE)
and ``is_negative``. The format is shared with the corpus toolkit; this
module parses it independently so the file stays the only coupling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Example:
    seq_id: str
    text: str
    target: tuple[float, float, float]  # P, I, O


def _target_from_code(code: str) -> tuple[float, float, float]:
    letters = set(code.upper())
    if not letters <= {"P", "I", "O"}:
        raise ValueError(f"invalid label code {code!r}")
    return (float("P" in letters), float("I" in letters), float("O" in letters))


def read_dataset(path: str | Path) -> list[Example]:
    examples: list[Example] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                example = Example(
                    seq_id=str(obj["seq_id"]),
                    text=str(obj["text"]),
                    target=_target_from_code(obj["labels"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"bad dataset line {lineno}: {exc}") from exc
            if example.seq_id in seen:
                raise ValueError(f"duplicate seq_id {example.seq_id!r} at line {lineno}")
            seen.add(example.seq_id)
            examples.append(example)
    return examples


def select_split(
    examples: list[Example], splits_path: str | Path, which: str
) -> list[Example]:
    """Subset a dataset by a persisted base/stack split.

    The stacking protocol requires base learners to train on base ids
    only; exporting probabilities for stacking uses the stack ids.
    """
    if which not in ("base", "stack"):
        raise ValueError("split must be 'base' or 'stack'")
    obj = json.loads(Path(splits_path).read_text(encoding="utf-8"))
    try:
        wanted = set(obj[f"{which}_ids"])
    except KeyError as exc:
        raise ValueError(f"splits file has no {which}_ids") from exc
    return [ex for ex in examples if ex.seq_id in wanted]
