"""Deterministic synthetic corpora for experiments, demos and fixtures.

The generator plants the label signal in two places on purpose:

* in the text, as quantitative phrases the QIEF detectors can see
  (population mentions for P, doses for I, percentages for O), and
* in a per-sequence numeric vector handed to the in-repo base learner,
  which encodes P and I but deliberately NOT O.

A base learner trained on the planted vectors is therefore blind on O,
while the text features recover it, so a correctly wired stacker must beat
the base learner on macro ROC_AUC. That separation is what the end-to-end
tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import RawAbstract, RawSection
from .labeling import LabeledSequence, LabelSet

#: Mask frequencies used when sampling sequence labels. PIO never occurs,
#: matching what heading-mapped corpora actually produce.
MASK_WEIGHTS = {
    "P": 0.22,
    "I": 0.20,
    "O": 0.20,
    "": 0.25,
    "PI": 0.05,
    "PO": 0.04,
    "IO": 0.04,
}

HEADING_POOLS = {
    "P": ("SUBJECTS", "PATIENTS", "POPULATION", "PARTICIPANTS", "STUDY POPULATION"),
    "I": ("INTERVENTION", "INTERVENTIONS", "TREATMENT", "THERAPY"),
    "O": ("OUTCOMES", "MAIN OUTCOME MEASURES", "END POINTS", "PRIMARY OUTCOME"),
    "PI": ("POPULATION AND INTERVENTION", "PATIENTS AND INTERVENTIONS"),
    "PO": ("PATIENTS AND OUTCOMES", "POPULATION AND OUTCOMES"),
    "IO": ("TREATMENT AND OUTCOMES", "INTERVENTION AND OUTCOME"),
    "": ("AIM", "OBJECTIVE", "BACKGROUND", "CONCLUSIONS", "INTRODUCTION"),
}

#: Headings that the default map discards; sprinkled into raw abstracts so
#: pipelines exercise the discard path.
DISCARD_HEADINGS = ("METHODS", "RESULTS", "STUDY DESIGN", "STATISTICAL ANALYSIS")

_CONDITIONS = (
    "hypertension", "asthma", "migraine", "arthritis", "insomnia",
    "dermatitis", "anemia", "gastritis", "neuropathy", "bronchitis",
)
_DRUGS = (
    "metoprolol", "salbutamol", "ibuprofen", "amoxicillin", "lisinopril",
    "omeprazole", "sertraline", "prednisone", "gabapentin", "atorvastatin",
)
_VERBS = ("assessed", "compared", "examined", "monitored", "recorded", "reviewed")
_QUALITIES = ("overall", "clinical", "functional", "reported", "observed", "measured")

_POP_WORDS = ("patients", "subjects", "participants", "adults", "women", "men")


def _filler(rng: np.random.Generator) -> str:
    templates = (
        "the {q} course of {c} was {v} over the study period",
        "we {v} the {q} status of the {c} cohort in this trial",
        "a {q} review of {c} management was part of the protocol",
        "the study team {v} adherence to the {c} care plan",
        "findings on {c} were {v} by the investigators during follow up",
    )
    t = templates[rng.integers(len(templates))]
    return t.format(
        q=_QUALITIES[rng.integers(len(_QUALITIES))],
        c=_CONDITIONS[rng.integers(len(_CONDITIONS))],
        v=_VERBS[rng.integers(len(_VERBS))],
    )


def _population_phrase(rng: np.random.Generator) -> str:
    n = int(rng.integers(20, 500))
    word = _POP_WORDS[rng.integers(len(_POP_WORDS))]
    templates = (
        "a total of {n} {w} with {c} were enrolled",
        "the trial included {n} {w} recruited from two clinics",
        "we randomized {n} {w} to the study arms",
    )
    t = templates[rng.integers(len(templates))]
    return t.format(n=n, w=word, c=_CONDITIONS[rng.integers(len(_CONDITIONS))])


def _dose_phrase(rng: np.random.Generator) -> str:
    dose = int(rng.integers(5, 400))
    unit = ("mg", "ml", "mcg", "mg/kg")[rng.integers(4)]
    templates = (
        "the active group received {d} {u} of {drug} daily",
        "treatment consisted of {drug} at {d} {u} for six weeks",
        "participants in the intervention arm took {d} {u} of {drug}",
    )
    t = templates[rng.integers(len(templates))]
    return t.format(d=dose, u=unit, drug=_DRUGS[rng.integers(len(_DRUGS))])


def _percent_phrase(rng: np.random.Generator) -> str:
    pct = int(rng.integers(5, 95))
    templates = (
        "the response rate reached {p}% in the active arm",
        "an improvement of {p}% was observed at week twelve",
        "symptom scores fell by {p}% relative to baseline",
    )
    t = templates[rng.integers(len(templates))]
    return t.format(p=pct)


def _body_for(labels: LabelSet, rng: np.random.Generator) -> str:
    parts = [_filler(rng)]
    if labels.p or rng.random() < 0.05:
        parts.append(_population_phrase(rng))
        if labels.p and rng.random() < 0.4:
            parts.append(_population_phrase(rng))
    if labels.i or rng.random() < 0.05:
        parts.append(_dose_phrase(rng))
    if labels.o or rng.random() < 0.05:
        parts.append(_percent_phrase(rng))
        if labels.o and rng.random() < 0.5:
            parts.append(_percent_phrase(rng))
    parts.append(_filler(rng))
    return ". ".join(p.capitalize() for p in parts) + "."


def _sample_mask(rng: np.random.Generator) -> str:
    codes = list(MASK_WEIGHTS)
    weights = np.array([MASK_WEIGHTS[c] for c in codes])
    return codes[rng.choice(len(codes), p=weights / weights.sum())]


@dataclass
class SyntheticCorpus:
    sequences: list[LabeledSequence]
    planted: dict[str, np.ndarray]
    planted_dim: int

    def planted_matrix(self, ids: list[str]) -> np.ndarray:
        return np.array([self.planted[i] for i in ids], dtype=np.float64)

    def targets(self, ids: list[str]) -> np.ndarray:
        by_id = {s.seq_id: s for s in self.sequences}
        return np.array([by_id[i].labels.as_tuple() for i in ids], dtype=np.float64)


def generate_labeled_corpus(
    n_sequences: int,
    seed: int,
    planted_dim: int = 6,
    planted_noise: float = 0.8,
) -> SyntheticCorpus:
    """Labeled sequences plus planted base-learner vectors.

    Planted vector layout: dim 0 encodes P, dim 1 encodes I (as 2t - 1
    plus gaussian noise); remaining dims are pure noise. O is only
    recoverable from the text.
    """
    if planted_dim < 2:
        raise ValueError("planted_dim must be >= 2")
    rng = np.random.default_rng(seed)
    sequences: list[LabeledSequence] = []
    planted: dict[str, np.ndarray] = {}
    for k in range(n_sequences):
        mask = _sample_mask(rng)
        labels = LabelSet.from_code(mask)
        pool = HEADING_POOLS[mask]
        heading = pool[rng.integers(len(pool))]
        pmid = 100001 + k
        seq = LabeledSequence(
            seq_id=f"{pmid}-0",
            pmid=pmid,
            heading=heading,
            text=_body_for(labels, rng),
            labels=labels,
        )
        vec = rng.normal(0.0, 1.0, size=planted_dim)
        vec[0] = (2.0 * labels.p - 1.0) + rng.normal(0.0, planted_noise)
        vec[1] = (2.0 * labels.i - 1.0) + rng.normal(0.0, planted_noise)
        sequences.append(seq)
        planted[seq.seq_id] = vec
    return SyntheticCorpus(sequences=sequences, planted=planted, planted_dim=planted_dim)


def generate_raw_abstracts(
    n_abstracts: int, seed: int, unstructured_rate: float = 0.03
) -> list[RawAbstract]:
    """Raw abstracts whose sections exercise every labeling decision."""
    rng = np.random.default_rng(seed)
    abstracts = []
    for k in range(n_abstracts):
        pmid = 900001 + k
        if rng.random() < unstructured_rate:
            labels = LabelSet.from_code(_sample_mask(rng))
            abstracts.append(
                RawAbstract(
                    pmid=pmid,
                    sections=(RawSection("", None, _body_for(labels, rng)),),
                    is_structured=False,
                )
            )
            continue
        sections = []
        n_sections = int(rng.integers(2, 5))
        for _ in range(n_sections):
            if rng.random() < 0.2:
                heading = DISCARD_HEADINGS[rng.integers(len(DISCARD_HEADINGS))]
                body_labels = LabelSet.from_code("")
            else:
                mask = _sample_mask(rng)
                heading = HEADING_POOLS[mask][rng.integers(len(HEADING_POOLS[mask]))]
                body_labels = LabelSet.from_code(mask)
            sections.append(
                RawSection(
                    heading=heading,
                    nlm_category="METHODS" if heading in DISCARD_HEADINGS else None,
                    body=_body_for(body_labels, rng),
                )
            )
        abstracts.append(
            RawAbstract(pmid=pmid, sections=tuple(sections), is_structured=True)
        )
    return abstracts
