"""Corpus cleaning: unicode normalization, language check, length filter, dedup.

The pipeline order is fixed: normalize -> drop empty -> drop non-English ->
drop out-of-length -> drop exact duplicates (first occurrence wins). Each
stage's drop count is reported so kept + dropped always equals the input
size, and running the pipeline on its own output drops nothing.
"""

from __future__ import annotations

import re
import string
import unicodedata
from dataclasses import dataclass, replace
from typing import Iterable

from .errors import ConfigError
from .labeling import LabeledSequence

# The 100 most common English word lemmas; used for a dependency-free
# stopword-ratio language check. Abstracts sections are long enough that
# English text reliably clears the ratio threshold.
ENGLISH_STOPWORDS = frozenset("""
the be to of and a in that have i it for not on with he as you do at this
but his by from they we say her she or an will my one all would there their
what so up out if about who get which go me when make can like time no just
him know take people into year your good some could them see other than
then now look only come its over think also back after use two how our work
first well way even new want because any these give day most us
""".split())

assert len(ENGLISH_STOPWORDS) == 100

_CONTROL_CHARS = re.compile("[" + re.escape("".join(map(chr, [*range(0, 9), 11, 12, *range(14, 32), *range(127, 160)]))) + "]")
_WS_RUNS = re.compile(r"\s+")


@dataclass(frozen=True)
class CleanConfig:
    min_words: int = 5
    max_words: int = 200
    english_stopword_ratio_threshold: float = 0.12
    dedup_on: str = "exact_text"

    def __post_init__(self):
        if not 0 < self.min_words <= self.max_words:
            raise ConfigError(
                f"need 0 < min_words <= max_words, got {self.min_words}/{self.max_words}"
            )
        if self.dedup_on != "exact_text":
            raise ConfigError(f"unsupported dedup key {self.dedup_on!r}")


def normalize_text(text: str) -> str:
    """Compatibility-compose unicode, drop control chars, collapse whitespace."""
    text = unicodedata.normalize("NFKC", text)
    text = _CONTROL_CHARS.sub("", text)  # newline/tab survive, collapsed next
    return _WS_RUNS.sub(" ", text).strip()


def passes_length(text: str, config: CleanConfig) -> bool:
    """True iff the whitespace-token count is within [min_words, max_words]."""
    n = len(text.split())
    return config.min_words <= n <= config.max_words


def english_stopword_ratio(text: str) -> float:
    tokens = [tok.strip(string.punctuation) for tok in text.lower().split()]
    tokens = [tok for tok in tokens if tok]
    if not tokens:
        return 0.0
    hits = sum(1 for tok in tokens if tok in ENGLISH_STOPWORDS)
    return hits / len(tokens)


def is_english(text: str, config: CleanConfig) -> bool:
    return english_stopword_ratio(text) >= config.english_stopword_ratio_threshold


@dataclass
class DropReport:
    empty: int = 0
    non_english: int = 0
    length: int = 0
    duplicate: int = 0

    def total(self) -> int:
        return self.empty + self.non_english + self.length + self.duplicate

    def as_dict(self) -> dict[str, int]:
        return {
            "empty": self.empty,
            "non_english": self.non_english,
            "length": self.length,
            "duplicate": self.duplicate,
        }


def clean_dataset(
    records: Iterable[LabeledSequence], config: CleanConfig | None = None
) -> tuple[list[LabeledSequence], DropReport]:
    """Run the full cleaning pipeline, preserving input order of kept records."""
    config = config or CleanConfig()
    report = DropReport()
    kept: list[LabeledSequence] = []
    seen: set[str] = set()
    for record in records:
        text = normalize_text(record.text or "")
        if not text:
            report.empty += 1
            continue
        if not is_english(text, config):
            report.non_english += 1
            continue
        if not passes_length(text, config):
            report.length += 1
            continue
        if text in seen:
            report.duplicate += 1
            continue
        seen.add(text)
        kept.append(replace(record, text=text))
    return kept, report
