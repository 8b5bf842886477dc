"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion. Large-corpus scores from full-scale crawls and GPU fine-tuning
are out of reach at desk scale by design; every criterion here is
property-based and runs on synthetic or bundled data in seconds.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from piostack.base_learner import (
    TrainConfig,
    bce_with_logits,
    forward_logits,
    gradient,
    predict_proba,
    sigmoid,
    train,
    LinearHead,
)
from piostack.cleaning import CleanConfig, clean_dataset
from piostack.errors import ProtocolError, XmlError
from piostack.features import featurize_dataset, fit_tfidf, tokenize
from piostack.gbdt import BoostedTrees, GbdtConfig, fit_gbdt
from piostack.ingest import SearchSpec, fetch_corpus, parse_pubmed_xml
from piostack.labeling import (
    LabelSet,
    category_histogram,
    default_heading_map,
    map_heading,
    normalize_heading,
    DecisionKind,
)
from piostack.metrics import macro_roc_auc, roc_auc
from piostack.stacker import (
    SplitAssignment,
    SplitProtocol,
    build_stack_instances,
    fit_stacked,
    make_folds,
    split_base_stack,
)
from piostack.synthetic import generate_labeled_corpus

from conftest import make_sequence
from test_base_learner import _naive_bce
from test_metrics import brute_force_auc

FIXTURES = Path(__file__).parent / "fixtures"

# Frozen before the main build: seed verified to give stacker OOF macro
# ROC_AUC ~0.995 vs base-learner ~0.86 on the 2000-sequence corpus.
E2E_SEED = 20240611


def _announce(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS")


def test_equation_fidelity():
    started = time.monotonic()
    rng = np.random.default_rng(101)

    # loss: fused form vs direct evaluation, 1000 draws
    for _ in range(1000):
        s = rng.uniform(-30.0, 30.0, size=3)
        t = rng.integers(0, 2, size=3).astype(float)
        assert bce_with_logits(s, t) == pytest.approx(_naive_bce(s, t), abs=1e-9)

    # gradient vs central finite differences (step 1e-5), 100 draws
    step = 1e-5
    for _ in range(100):
        d = int(rng.integers(1, 6))
        head = LinearHead(weights=rng.normal(size=(d, 3)), bias=rng.normal(size=3))
        h = rng.normal(size=d)
        t = rng.integers(0, 2, size=3).astype(float)
        dw, db = gradient(forward_logits(h, head), t, h)
        for j in range(d):
            for i in range(3):
                wp, wm = head.weights.copy(), head.weights.copy()
                wp[j, i] += step
                wm[j, i] -= step
                fd = (
                    bce_with_logits(h @ wp + head.bias, t)
                    - bce_with_logits(h @ wm + head.bias, t)
                ) / (2 * step)
                assert dw[j, i] == pytest.approx(fd, rel=1e-6, abs=1e-8)
        for i in range(3):
            bp, bm = head.bias.copy(), head.bias.copy()
            bp[i] += step
            bm[i] -= step
            fd = (
                bce_with_logits(h @ head.weights + bp, t)
                - bce_with_logits(h @ head.weights + bm, t)
            ) / (2 * step)
            assert db[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    # logistic function: midpoint and symmetry
    assert float(sigmoid(np.array(0.0))) == pytest.approx(0.5, abs=1e-12)
    grid = np.linspace(-30, 30, 1201)
    assert np.max(np.abs(sigmoid(grid) + sigmoid(-grid) - 1.0)) < 1e-12

    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"equation fidelity took {elapsed:.2f}s"
    _announce("equation-fidelity")


def test_auc_against_pair_counting_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(202)
    for trial in range(50):
        n = 200
        if trial % 3 == 0:  # heavy ties
            scores = rng.integers(0, 3, size=n).astype(float)
        elif trial % 3 == 1:
            scores = rng.normal(size=n)
        else:
            scores = np.round(rng.normal(size=n), 1)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert roc_auc(scores, labels) == pytest.approx(
            brute_force_auc(scores, labels), abs=1e-12
        )
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"AUC oracle took {elapsed:.2f}s"
    _announce("auc-oracle")


def test_protocol_integrity():
    ids = [f"s{k}" for k in range(123)]
    protocol = SplitProtocol(seed=5)
    assignment = split_base_stack(ids, protocol)
    assert not set(assignment.base_ids) & set(assignment.stack_ids)
    assert sorted(assignment.base_ids + assignment.stack_ids) == sorted(ids)

    folds = make_folds(assignment.stack_ids, k=5, seed=5)
    flat = [i for fold in folds for i in fold]
    assert sorted(flat) == sorted(assignment.stack_ids)
    assert max(len(f) for f in folds) - min(len(f) for f in folds) <= 1

    rng = np.random.default_rng(6)
    instances = build_stack_instances(
        assignment.stack_ids,
        {"m": {i: tuple(rng.uniform(size=3)) for i in assignment.stack_ids}},
        {i: tuple(rng.uniform(size=5)) for i in assignment.stack_ids},
        {i: (int(rng.integers(2)), int(rng.integers(2)), 1 if int(i[1:]) % 2 else 0)
         for i in assignment.stack_ids},
        ["m"],
    )
    result = fit_stacked(instances, assignment, GbdtConfig(num_rounds=5))
    assert sorted(result.oof_ids) == sorted(assignment.stack_ids)
    assert not np.any(np.isnan(result.oof_probabilities))

    corrupted = SplitAssignment(
        base_ids=assignment.base_ids + [assignment.stack_ids[0]],
        stack_ids=assignment.stack_ids,
        protocol=protocol,
    )
    with pytest.raises(ProtocolError):
        fit_stacked(instances, corrupted, GbdtConfig(num_rounds=5))
    _announce("protocol-integrity")


def test_gbdt_correctness():
    rng = np.random.default_rng(303)

    # training logloss never increases across 100 rounds, 20 random fixtures
    for _ in range(20):
        n = int(rng.integers(40, 120))
        f = int(rng.integers(1, 6))
        X = rng.normal(size=(n, f))
        y = (X[:, 0] + rng.normal(scale=0.8, size=n) > 0).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        model = fit_gbdt(X, y, GbdtConfig(num_rounds=100))
        assert np.all(np.diff(model.loss_history) <= 1e-15)

    # the separable single-feature fixture is solved within 10 rounds
    x = rng.uniform(0, 1, size=20)
    y = (x > 0.5).astype(float)
    model = fit_gbdt(x.reshape(-1, 1), y, GbdtConfig(num_rounds=10))
    assert np.mean((model.predict_proba(x.reshape(-1, 1)) >= 0.5) == y) == 1.0

    # serialization round-trip reproduces predictions bitwise
    X = rng.normal(size=(100, 4))
    yy = (X[:, 0] * X[:, 1] > 0).astype(float)
    model = fit_gbdt(X, yy, GbdtConfig(num_rounds=30))
    restored = BoostedTrees.from_dict(json.loads(json.dumps(model.to_dict())))
    X_new = rng.normal(size=(64, 4))
    assert np.array_equal(model.predict_proba(X_new), restored.predict_proba(X_new))
    _announce("gbdt-correctness")


def test_end_to_end_synthetic_experiment():
    started = time.monotonic()
    corpus = generate_labeled_corpus(2000, seed=E2E_SEED)
    kept, _ = clean_dataset(corpus.sequences)
    ids = [r.seq_id for r in kept]
    by_id = {r.seq_id: r for r in kept}

    assignment = split_base_stack(ids, SplitProtocol(seed=E2E_SEED))
    stats = fit_tfidf([tokenize(by_id[i].text) for i in assignment.base_ids])
    feats = {
        v.seq_id: v.values() for v in featurize_dataset([by_id[i] for i in ids], stats)
    }

    # train_base: the planted vectors encode P and I but not O
    head = train(
        (corpus.planted_matrix(assignment.base_ids), corpus.targets(assignment.base_ids)),
        TrainConfig(seed=E2E_SEED),
    )
    P_stack = predict_proba(head, corpus.planted_matrix(assignment.stack_ids))
    T_stack = corpus.targets(assignment.stack_ids)
    base_macro = macro_roc_auc(P_stack, T_stack)

    # stack: base probabilities + the text features carrying the O signal
    probabilities = {"lin": {i: tuple(p) for i, p in zip(assignment.stack_ids, P_stack)}}
    targets = {i: tuple(int(v) for v in t) for i, t in zip(assignment.stack_ids, T_stack)}
    instances = build_stack_instances(
        assignment.stack_ids, probabilities, feats, targets, ["lin"]
    )
    result = fit_stacked(instances, assignment, GbdtConfig())

    # eval on identical instances
    stack_macro = macro_roc_auc(result.oof_probabilities, result.oof_targets)
    elapsed = time.monotonic() - started
    print(
        f"\n  stacker OOF macro ROC_AUC {stack_macro:.4f} vs base {base_macro:.4f} "
        f"({elapsed:.1f}s)"
    )
    assert stack_macro >= 0.90
    assert stack_macro >= base_macro
    assert elapsed < 180.0, f"end-to-end run took {elapsed:.1f}s"
    _announce("end-to-end-synthetic")


def test_dataset_rules():
    config = CleanConfig()

    # word-count boundaries: 4/5/200/201 -> drop/keep/keep/drop
    def text_of(n):  # n words, stopword-rich so only length can drop it
        base = "the of and to a in that it for on".split()
        return " ".join(base[k % len(base)] for k in range(n))

    for n, expected in ((4, False), (5, True), (200, True), (201, False)):
        record = make_sequence(seq_id=f"n{n}", text=text_of(n))
        kept, report = clean_dataset([record], config)
        assert bool(kept) is expected, (n, report.as_dict())

    # heading decisions
    hmap = default_heading_map()
    assert map_heading(normalize_heading("subjects"), hmap).labels == LabelSet(p=True)
    assert map_heading(normalize_heading("population and intervention"), hmap).labels == \
        LabelSet(p=True, i=True)
    assert map_heading(normalize_heading("aim"), hmap).kind is DecisionKind.NEGATIVE
    assert map_heading(normalize_heading("population and method"), hmap).kind is \
        DecisionKind.DISCARD

    # cleaning is idempotent on its own output
    from test_cleaning import _ten_record_fixture

    kept, _ = clean_dataset(_ten_record_fixture(), config)
    again, report = clean_dataset(kept, config)
    assert again == kept and report.total() == 0

    # histogram exact on the hand-audited fixture
    records = [
        make_sequence(seq_id=f"h{k}", labels=code)
        for k, code in enumerate(["P", "P", "I", "O", "PI", "PO", "IO", "", "", "P"])
    ]
    hist = category_histogram(records)
    assert hist == {
        "P": 3, "I": 1, "O": 1, "PI": 1, "PO": 1, "IO": 1, "PIO": 0, "NEGATIVE": 2,
    }
    _announce("dataset-rules")


def test_ingest_contracts():
    # fixture suite: structured / unstructured / missing-abstract / entities
    structured = parse_pubmed_xml((FIXTURES / "pubmed_structured.xml").read_bytes())
    assert len(structured.abstracts) == 1
    assert structured.abstracts[0].is_structured
    assert len(structured.abstracts[0].sections) == 2

    unstructured = parse_pubmed_xml((FIXTURES / "pubmed_unstructured.xml").read_bytes())
    assert not unstructured.abstracts[0].is_structured

    mixed = parse_pubmed_xml((FIXTURES / "pubmed_mixed.xml").read_bytes())
    assert (len(mixed.abstracts), mixed.skipped_no_abstract) == (2, 1)

    entities = parse_pubmed_xml((FIXTURES / "pubmed_entities.xml").read_bytes())
    assert "µg & 10 µg" in entities.abstracts[0].sections[0].body

    data = (FIXTURES / "pubmed_mixed.xml").read_bytes()
    with pytest.raises(XmlError) as err:
        parse_pubmed_xml(data[: len(data) - 40])
    assert err.value.kind == "truncated"

    # rate-limit and retry contracts against the mock transport
    from test_ingest import FakeClock, ScriptedTransport, _esearch_body, _page_body

    clock = FakeClock()
    transport = ScriptedTransport(
        [
            (200, _esearch_body(2)),
            (200, _page_body(1)),
            (500, b""),
            (429, b""),
            (200, _page_body(2)),
        ],
        clock,
    )
    summary = fetch_corpus(
        SearchSpec(page_size=1), lambda a: None, transport=transport,
        api_key=None, sleep=clock.sleep, monotonic=clock.monotonic,
    )
    assert (summary.fetched, summary.skipped, summary.pages, summary.retries) == (2, 0, 2, 2)
    gaps = [b - a for a, b in zip(transport.request_times, transport.request_times[1:])]
    assert all(gap >= 0.334 - 1e-9 for gap in gaps)
    _announce("ingest-contracts")
