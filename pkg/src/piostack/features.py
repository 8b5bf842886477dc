"""Per-instance stacker features: average TF-IDF score and QIEF counts.

QIEF = quantitative information element frequency: how often a sequence
mentions percentages, population sizes, medicine doses, and standalone
numbers. The four detector patterns are fixed and dumpable so the exact
definitions are always inspectable; a span may count toward more than one
detector on purpose (a dose is also a number) because the downstream trees
treat the counts as independent signals.
"""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .errors import ConfigError, DataError, ValidationError
from .labeling import LabeledSequence

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric, keep len>=2 tokens and single digits."""
    parts = _TOKEN_SPLIT.split(text.lower())
    return [t for t in parts if len(t) >= 2 or t.isdigit()]


@dataclass(frozen=True)
class TfIdfStats:
    """Document frequencies fitted on one designated split only.

    Fitting on the base-learner split and applying everywhere keeps idf
    statistics free of stacker-split leakage.
    """

    doc_count: int
    doc_frequency: dict[str, int]

    @property
    def vocabulary(self) -> set[str]:
        return set(self.doc_frequency)

    def idf(self, token: str) -> float:
        # Smoothed form: defined (and > 0) even for unseen tokens (df = 0),
        # which stay informative as rarity signals.
        df = self.doc_frequency.get(token, 0)
        return math.log((1 + self.doc_count) / (1 + df)) + 1.0


def fit_tfidf(corpus: Sequence[list[str]]) -> TfIdfStats:
    """df(t) = number of documents containing t at least once; N = len(corpus)."""
    if len(corpus) == 0:
        raise DataError("cannot fit TF-IDF statistics on an empty corpus")
    df: Counter[str] = Counter()
    for tokens in corpus:
        df.update(set(tokens))
    return TfIdfStats(doc_count=len(corpus), doc_frequency=dict(df))


def avg_tfidf(tokens: Sequence[str], stats: TfIdfStats) -> float:
    """Mean over the instance's distinct tokens of tf(t) * idf(t).

    tf is count normalized by instance length, so the score does not grow
    with document length. Empty token lists score 0.
    """
    if not tokens:
        return 0.0
    counts = Counter(tokens)
    total = len(tokens)
    score = sum((c / total) * stats.idf(tok) for tok, c in counts.items())
    return score / len(counts)


# -- QIEF detectors --------------------------------------------------------

_NUM = r"\d+(?:\.\d+)?"
_POPULATION_WORDS = r"(?:patients|subjects|participants|adults|children|women|men)"
_DOSE_UNITS = r"(?:mg/kg|mg/day|mcg|µg|mg|ml|iu|units|g)"

#: The four detectors, in fixed column order. Matches are counted
#: non-overlapping per detector, case-insensitively.
DEFAULT_QIEF_PATTERNS: tuple[tuple[str, str], ...] = (
    ("percentage", rf"\b{_NUM}\s*(?:%|percent\b)"),
    (
        "population",
        rf"\b{_NUM}\s+{_POPULATION_WORDS}\b|\b{_POPULATION_WORDS}\s+{_NUM}\b",
    ),
    ("dose", rf"\b{_NUM}\s*{_DOSE_UNITS}\b"),
    ("numeric", rf"\b{_NUM}\b"),
)

QIEF_NAMES = tuple(name for name, _ in DEFAULT_QIEF_PATTERNS)


def compile_qief_patterns(
    patterns: Iterable[tuple[str, str]] = DEFAULT_QIEF_PATTERNS,
) -> dict[str, re.Pattern]:
    compiled = {}
    for name, pattern in patterns:
        try:
            compiled[name] = re.compile(pattern, re.IGNORECASE)
        except re.error as exc:
            raise ConfigError(f"bad QIEF pattern {name!r}: {exc}") from exc
    missing = set(QIEF_NAMES) - set(compiled)
    if missing:
        raise ConfigError(f"QIEF pattern file missing detectors: {sorted(missing)}")
    return compiled


def dump_qief_patterns(patterns: Iterable[tuple[str, str]] = DEFAULT_QIEF_PATTERNS) -> str:
    """Render patterns in the pattern-file format: one ``name TAB regex`` per line."""
    return "".join(f"{name}\t{pattern}\n" for name, pattern in patterns)


def parse_qief_patterns(text: str) -> tuple[tuple[str, str], ...]:
    patterns = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ConfigError(f"QIEF pattern line {lineno}: expected TAB separator")
        name, pattern = line.split("\t", 1)
        patterns.append((name.strip(), pattern))
    return tuple(patterns)


@dataclass(frozen=True)
class QiefFeatures:
    percentage_count: int = 0
    population_count: int = 0
    dose_count: int = 0
    numeric_count: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (
            self.percentage_count,
            self.population_count,
            self.dose_count,
            self.numeric_count,
        )


def qief_features(text: str, compiled: dict[str, re.Pattern] | None = None) -> QiefFeatures:
    """Count non-overlapping matches of each detector in the text."""
    compiled = compiled or _DEFAULT_COMPILED
    counts = {name: len(rx.findall(text)) for name, rx in compiled.items()}
    return QiefFeatures(
        percentage_count=counts["percentage"],
        population_count=counts["population"],
        dose_count=counts["dose"],
        numeric_count=counts["numeric"],
    )


_DEFAULT_COMPILED = compile_qief_patterns()


@dataclass(frozen=True)
class FeatureVector:
    seq_id: str
    avg_tfidf: float
    qief: QiefFeatures

    def values(self) -> tuple[float, float, float, float, float]:
        return (self.avg_tfidf, *map(float, self.qief.as_tuple()))


#: Column order of the feature matrix file.
FEATURE_COLUMNS = ("id", "avg_tfidf", "pct", "pop", "dose", "num")


def featurize_dataset(
    records: Sequence[LabeledSequence],
    stats: TfIdfStats,
    compiled: dict[str, re.Pattern] | None = None,
) -> list[FeatureVector]:
    """One FeatureVector per record, order-preserving."""
    out = []
    for record in records:
        tokens = tokenize(record.text)
        out.append(
            FeatureVector(
                seq_id=record.seq_id,
                avg_tfidf=avg_tfidf(tokens, stats),
                qief=qief_features(record.text, compiled),
            )
        )
    return out


def write_feature_file(vectors: Iterable[FeatureVector], fh: TextIO) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FEATURE_COLUMNS)
    n = 0
    for vec in vectors:
        pct, pop, dose, num = vec.qief.as_tuple()
        writer.writerow([vec.seq_id, format(vec.avg_tfidf, ".17g"), pct, pop, dose, num])
        n += 1
    return n


def read_feature_file(fh: TextIO) -> list[FeatureVector]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != FEATURE_COLUMNS:
        raise ValidationError(f"feature file header must be {','.join(FEATURE_COLUMNS)}")
    out = []
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(FEATURE_COLUMNS):
            raise ValidationError(f"feature file row {rowno}: expected {len(FEATURE_COLUMNS)} columns")
        try:
            value = float(row[1])
            counts = [int(c) for c in row[2:6]]
        except ValueError as exc:
            raise ValidationError(f"feature file row {rowno}: {exc}") from exc
        if not math.isfinite(value) or value < 0 or any(c < 0 for c in counts):
            raise ValidationError(f"feature file row {rowno}: negative or non-finite value")
        out.append(
            FeatureVector(
                seq_id=row[0],
                avg_tfidf=value,
                qief=QiefFeatures(*counts),
            )
        )
    return out
