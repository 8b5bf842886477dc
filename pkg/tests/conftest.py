from pathlib import Path

import pytest

from piostack.labeling import LabeledSequence, LabelSet

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def make_sequence(seq_id="100-0", pmid=100, heading="SUBJECTS",
                  text="the study enrolled twelve patients in total",
                  labels="P") -> LabeledSequence:
    return LabeledSequence(
        seq_id=seq_id,
        pmid=pmid,
        heading=heading,
        text=text,
        labels=LabelSet.from_code(labels),
    )
