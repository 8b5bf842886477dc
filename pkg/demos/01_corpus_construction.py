"""Build a labeled corpus from PubMed-style XML: parse, label, clean.

Runs entirely offline on the bundled fixtures. The same calls back the
`piostack fetch/label/clean` pipeline stages.
"""

from pathlib import Path

from piostack.cleaning import CleanConfig, clean_dataset
from piostack.ingest import parse_pubmed_xml, read_raw_abstracts
from piostack.labeling import (
    CATEGORY_ORDER,
    category_histogram,
    default_heading_map,
    label_corpus,
    map_heading,
    normalize_heading,
)

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# -- 1. parse raw PubMed XML ------------------------------------------------

payload = (FIXTURES / "pubmed_mixed.xml").read_bytes()
result = parse_pubmed_xml(payload)
print(f"parsed {len(result.abstracts)} abstracts "
      f"({result.skipped_no_abstract} skipped: no Abstract element)")
for abstract in result.abstracts:
    headings = [s.heading or "<unlabeled>" for s in abstract.sections]
    print(f"  pmid={abstract.pmid} structured={abstract.is_structured} sections={headings}")

# -- 2. heading normalization decides the label ------------------------------

hmap = default_heading_map()
print("\nheading decisions:")
for heading in ["SUBJECTS", "Patients and Methods:", "POPULATION AND INTERVENTION", "AIM"]:
    normalized = normalize_heading(heading)
    decision = map_heading(normalized, hmap)
    label = decision.labels.code() if decision.labels else decision.kind.value
    print(f"  {heading!r:38} -> {normalized!r:30} -> {label}")

# -- 3. label and clean the bundled 200-abstract corpus ----------------------

with open(FIXTURES / "raw_abstracts_200.jsonl", encoding="utf-8") as fh:
    corpus = read_raw_abstracts(fh)
sequences, summary = label_corpus(corpus, hmap)
print(f"\nlabeled {summary.labeled} abstracts into {summary.sequences} sequences "
      f"({summary.skipped_unstructured} unstructured skipped)")

kept, drops = clean_dataset(sequences, CleanConfig())
print(f"cleaning kept {len(kept)}; drops: {drops.as_dict()}")

histogram = category_histogram(kept)
print("category histogram:")
for name in CATEGORY_ORDER:
    print(f"  {name:8} {histogram[name]}")
