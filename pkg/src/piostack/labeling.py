"""Heading-driven multi-label annotation of structured abstracts.

Section headings are normalized (lowercased, punctuation stripped,
plural-collapsed) and looked up verbatim in a curated heading map that
decides between a positive P/I/O label set, the NEGATIVE class, or a
discard. Lookup is exact-match only: keyword containment is deliberately
not used because it admits ambiguous sections (a "population and methods"
section is not purely about the population).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

from .errors import ConfigError, UnstructuredAbstractError, ValidationError
from .ingest import RawAbstract

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelSet:
    """A subset of {P, I, O}; the empty set is the NEGATIVE class."""

    p: bool = False
    i: bool = False
    o: bool = False

    def is_empty(self) -> bool:
        return not (self.p or self.i or self.o)

    def code(self) -> str:
        """Compact letter code in canonical P, I, O order ('' when empty)."""
        return "".join(c for c, on in (("P", self.p), ("I", self.i), ("O", self.o)) if on)

    def name(self) -> str:
        return self.code() or "NEGATIVE"

    def as_tuple(self) -> tuple[int, int, int]:
        return (int(self.p), int(self.i), int(self.o))

    @classmethod
    def from_code(cls, code: str) -> "LabelSet":
        letters = set(code.upper())
        if not letters <= {"P", "I", "O"}:
            raise ConfigError(f"invalid label code {code!r}")
        return cls(p="P" in letters, i="I" in letters, o="O" in letters)


NO_LABELS = LabelSet()

#: The eight possible masks, in the order histograms are reported.
CATEGORY_ORDER = ("P", "I", "O", "PI", "PO", "IO", "PIO", "NEGATIVE")


class DecisionKind(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    DISCARD = "discard"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    labels: LabelSet | None = None

    def __post_init__(self):
        if self.kind is DecisionKind.POSITIVE:
            if self.labels is None or self.labels.is_empty():
                raise ConfigError("a positive decision needs a non-empty label set")
        elif self.labels is not None:
            raise ConfigError(f"{self.kind.value} decision cannot carry labels")

    @classmethod
    def positive(cls, labels: LabelSet) -> "Decision":
        return cls(DecisionKind.POSITIVE, labels)


NEGATIVE = Decision(DecisionKind.NEGATIVE)
DISCARD = Decision(DecisionKind.DISCARD)

# Words the plural-stripper must leave alone: lexical plurals and
# mass nouns that end in "s" but have no singular heading variant.
_LEMMA_EXCEPTIONS = frozenset(
    {"aids", "diabetes", "herpes", "measles", "news", "series", "species"}
)


def _lemmatize_token(token: str) -> str:
    """Collapse English noun plurals by suffix rules.

    Headings are short noun phrases, so rule-based stripping is enough to
    make singular/plural variants collide ("subjects" -> "subject",
    "studies" -> "study"); words ending in -ss/-is/-us are kept as is
    ("class", "analysis", "status").
    """
    if token in _LEMMA_EXCEPTIONS:
        return token
    if token.endswith("ies") and len(token) > 3:
        return token[:-3] + "y"
    if token.endswith(("ss", "is", "us")):
        return token
    if token.endswith("s") and len(token) > 1:
        return token[:-1]
    return token


def normalize_heading(raw: str) -> str:
    """Lowercase, strip punctuation/digits, collapse whitespace, lemmatize.

    Idempotent: applying it to its own output is a no-op.
    """
    lowered = raw.lower()
    stripped = re.sub(r"[^a-z\s]+", " ", lowered)
    return " ".join(_lemmatize_token(tok) for tok in stripped.split())


# Seed heading map. One decision per normalized heading; users extend or
# replace it via a plain-text config (see HeadingMap.from_text). Headings
# not listed here are discarded by default, so only unambiguous headings
# ever yield training sequences.
DEFAULT_HEADING_MAP_TEXT = """\
# heading<TAB>decision, decision in {P, I, O, PI, PO, IO, PIO, NEG, DISCARD}
# population / problem
population\tP
patient\tP
subject\tP
participant\tP
study population\tP
patient population\tP
study subject\tP
study participant\tP
population studied\tP
subject and setting\tP
setting and subject\tP
setting and participant\tP
# intervention
intervention\tI
treatment\tI
therapy\tI
study intervention\tI
therapeutic intervention\tI
treatment protocol\tI
procedure\tI
exposure\tI
new method\tI
technique\tI
# outcome
outcome\tO
outcome measure\tO
outcome measurement\tO
main outcome\tO
main outcome measure\tO
main outcome measurement\tO
primary outcome\tO
primary outcome measure\tO
secondary outcome\tO
secondary outcome measure\tO
end point\tO
endpoint\tO
primary endpoint\tO
primary end point\tO
measurement\tO
main measure\tO
# multi-label sections
population and intervention\tPI
patient and intervention\tPI
subject and intervention\tPI
intervention and outcome\tIO
treatment and outcome\tIO
population and outcome\tPO
patient and outcome\tPO
# negatives: general framing sections with no P/I/O content
aim\tNEG
objective\tNEG
purpose\tNEG
background\tNEG
introduction\tNEG
context\tNEG
rationale\tNEG
conclusion\tNEG
discussion\tNEG
implication\tNEG
# explicit discards: mixed or design-centric sections
method\tDISCARD
material and method\tDISCARD
patient and method\tDISCARD
population and method\tDISCARD
subject and method\tDISCARD
design\tDISCARD
study design\tDISCARD
setting\tDISCARD
result\tDISCARD
finding\tDISCARD
analysis\tDISCARD
statistical analysis\tDISCARD
"""

_DECISION_CODES = {"NEG": NEGATIVE, "DISCARD": DISCARD}


def _parse_decision(code: str) -> Decision:
    code = code.strip().upper()
    if code in _DECISION_CODES:
        return _DECISION_CODES[code]
    return Decision.positive(LabelSet.from_code(code))


@dataclass
class HeadingMap:
    """Exact-match mapping from normalized heading to a labeling decision."""

    entries: dict[str, Decision]
    default_decision: Decision = DISCARD

    @classmethod
    def from_text(cls, text: str) -> "HeadingMap":
        entries: dict[str, Decision] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise ConfigError(f"heading map line {lineno}: expected TAB separator")
            heading, code = line.split("\t", 1)
            key = normalize_heading(heading)
            if not key:
                raise ConfigError(f"heading map line {lineno}: empty heading")
            try:
                decision = _parse_decision(code)
            except ConfigError as exc:
                raise ConfigError(f"heading map line {lineno}: {exc}") from exc
            if key in entries:
                log.warning("heading map repeats %r (line %d); last entry wins", key, lineno)
            entries[key] = decision
        return cls(entries=entries)

    @classmethod
    def from_file(cls, path) -> "HeadingMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        def code(d: Decision) -> str:
            if d.kind is DecisionKind.POSITIVE:
                return d.labels.code()
            return "NEG" if d.kind is DecisionKind.NEGATIVE else "DISCARD"

        lines = [f"{heading}\t{code(decision)}" for heading, decision in self.entries.items()]
        return "\n".join(lines) + "\n"


def default_heading_map() -> HeadingMap:
    return HeadingMap.from_text(DEFAULT_HEADING_MAP_TEXT)


def map_heading(normalized: str, heading_map: HeadingMap) -> Decision:
    """Exact-match lookup; anything unknown falls to the default (discard)."""
    return heading_map.entries.get(normalized, heading_map.default_decision)


@dataclass(frozen=True)
class LabeledSequence:
    """One full abstract section with its P/I/O label set.

    The text is never sentence-split: a section is kept whole so each
    training sequence stays feature-rich. ``seq_id`` makes individual
    sections addressable downstream (several sequences share a pmid).
    """

    seq_id: str
    pmid: int
    heading: str
    text: str
    labels: LabelSet

    @property
    def is_negative(self) -> bool:
        return self.labels.is_empty()


def label_abstract(abstract: RawAbstract, heading_map: HeadingMap) -> list[LabeledSequence]:
    """Turn one structured abstract into labeled sequences.

    Sections mapping to a positive label set or NEGATIVE are kept with
    their body verbatim; discards are dropped. Raises
    UnstructuredAbstractError for abstracts without any labeled section.
    """
    if not abstract.is_structured:
        raise UnstructuredAbstractError(abstract.pmid)
    out: list[LabeledSequence] = []
    for section in abstract.sections:
        decision = map_heading(normalize_heading(section.heading), heading_map)
        if decision.kind is DecisionKind.DISCARD:
            continue
        labels = decision.labels if decision.kind is DecisionKind.POSITIVE else NO_LABELS
        out.append(
            LabeledSequence(
                seq_id=f"{abstract.pmid}-{len(out)}",
                pmid=abstract.pmid,
                heading=section.heading,
                text=section.body,
                labels=labels,
            )
        )
    return out


@dataclass
class LabelingSummary:
    labeled: int = 0
    skipped_unstructured: int = 0
    sequences: int = 0


def label_corpus(
    abstracts: Iterable[RawAbstract], heading_map: HeadingMap
) -> tuple[list[LabeledSequence], LabelingSummary]:
    """Label a batch, skipping unstructured abstracts with a counted reason."""
    summary = LabelingSummary()
    sequences: list[LabeledSequence] = []
    for abstract in abstracts:
        try:
            seqs = label_abstract(abstract, heading_map)
        except UnstructuredAbstractError:
            summary.skipped_unstructured += 1
            continue
        summary.labeled += 1
        sequences.extend(seqs)
    summary.sequences = len(sequences)
    return sequences, summary


def category_histogram(dataset: Iterable[LabeledSequence]) -> dict[str, int]:
    """Exact counts for all eight label masks, zeros included."""
    counts = {name: 0 for name in CATEGORY_ORDER}
    for record in dataset:
        counts[record.labels.name()] += 1
    return counts


def heading_census(
    abstracts: Iterable[RawAbstract],
    heading_map: HeadingMap,
    samples_per_heading: int = 3,
) -> dict[str, dict]:
    """Per-heading counts, decisions and sample bodies across a corpus.

    Curating the heading map is a manual loop: someone has to look at a
    few samples per heading to judge whether its sections are pure enough
    for a label. This census (discards included) is the artifact that
    supports that loop.
    """
    census: dict[str, dict] = {}
    for abstract in abstracts:
        for section in abstract.sections:
            key = normalize_heading(section.heading)
            decision = map_heading(key, heading_map)
            if decision.kind is DecisionKind.POSITIVE:
                verdict = decision.labels.code()
            else:
                verdict = "NEG" if decision.kind is DecisionKind.NEGATIVE else "DISCARD"
            entry = census.setdefault(
                key or "<empty>", {"decision": verdict, "count": 0, "samples": []}
            )
            entry["count"] += 1
            if len(entry["samples"]) < samples_per_heading:
                entry["samples"].append(section.body[:240])
    return census


# One-record-per-line serialization shared by the labeling and cleaning
# stages (and consumed by the fine-tuning component).

def sequence_to_json(record: LabeledSequence) -> str:
    return json.dumps(
        {
            "seq_id": record.seq_id,
            "pmid": record.pmid,
            "heading": record.heading,
            "text": record.text,
            "labels": record.labels.code(),
            "is_negative": record.is_negative,
        },
        ensure_ascii=True,
    )


def sequence_from_json(line: str, lineno: int = 0) -> LabeledSequence:
    try:
        obj = json.loads(line)
        record = LabeledSequence(
            seq_id=obj["seq_id"],
            pmid=int(obj["pmid"]),
            heading=obj["heading"],
            text=obj["text"],
            labels=LabelSet.from_code(obj["labels"]),
        )
        stated_negative = bool(obj["is_negative"])
    except (KeyError, ValueError, ConfigError) as exc:
        raise ValidationError(f"bad labeled sequence at line {lineno}: {exc}") from exc
    if stated_negative != record.is_negative:
        raise ValidationError(
            f"line {lineno}: is_negative={stated_negative} contradicts labels "
            f"{record.labels.code()!r}"
        )
    return record


def write_labeled_sequences(records: Iterable[LabeledSequence], fh: TextIO) -> int:
    n = 0
    for record in records:
        fh.write(sequence_to_json(record) + "\n")
        n += 1
    return n


def read_labeled_sequences(fh: TextIO) -> list[LabeledSequence]:
    return [
        sequence_from_json(line, lineno)
        for lineno, line in enumerate(fh, start=1)
        if line.strip()
    ]
