import io

import pytest

from piostack.errors import ConfigError, FetchError, ValidationError, XmlError
from piostack.ingest import (
    EFETCH_URL,
    ESEARCH_URL,
    RawAbstract,
    RawSection,
    SearchSpec,
    abstract_to_json,
    fetch_corpus,
    parse_esearch_xml,
    parse_pubmed_xml,
    plan_fetch,
    read_raw_abstracts,
    request_delay_ms,
    write_raw_abstracts,
)


class TestPlanFetch:
    def test_paged_plan(self):
        plan = plan_fetch(SearchSpec(page_size=100), count=250)
        assert [d.kind for d in plan] == ["search", "fetch", "fetch", "fetch"]
        assert [int(d.params["retstart"]) for d in plan[1:]] == [0, 100, 200]
        assert all(int(d.params["retmax"]) == 100 for d in plan[1:])

    def test_empty_result_set(self):
        plan = plan_fetch(SearchSpec(page_size=100), count=0)
        assert len(plan) == 1 and plan[0].kind == "search"

    def test_single_full_page(self):
        plan = plan_fetch(SearchSpec(page_size=10000), count=10000)
        assert len(plan) == 2

    def test_invalid_page_size(self):
        with pytest.raises(ConfigError):
            SearchSpec(page_size=0)
        with pytest.raises(ConfigError):
            SearchSpec(page_size=10001)

    def test_search_params_carry_filters_and_history(self):
        plan = plan_fetch(SearchSpec(query_terms="migraine"), count=0)
        params = plan[0].params
        assert params["db"] == "pubmed"
        assert params["usehistory"] == "y"
        for clause in ("Clinical Trial[pt]", "Humans[mh]", "English[la]"):
            assert clause in params["term"]
        assert "(migraine)" in params["term"]

    def test_delay_lowered_by_api_key(self):
        assert request_delay_ms(None) == 334
        assert request_delay_ms("k") == 100
        assert plan_fetch(SearchSpec(), 0)[0].min_delay_ms == 334
        assert plan_fetch(SearchSpec(), 0, api_key="k")[0].min_delay_ms == 100


class TestParsePubmedXml:
    def test_structured_two_sections(self, fixtures_dir):
        result = parse_pubmed_xml((fixtures_dir / "pubmed_structured.xml").read_bytes())
        assert len(result.abstracts) == 1
        abstract = result.abstracts[0]
        assert abstract.pmid == 11111111
        assert [s.heading for s in abstract.sections] == ["POPULATION", "RESULTS"]
        assert abstract.sections[0].nlm_category == "METHODS"
        assert abstract.is_structured

    def test_unlabeled_single_section(self, fixtures_dir):
        result = parse_pubmed_xml((fixtures_dir / "pubmed_unstructured.xml").read_bytes())
        (abstract,) = result.abstracts
        assert abstract.sections[0].heading == ""
        assert not abstract.is_structured

    def test_missing_abstract_is_skipped_and_counted(self, fixtures_dir):
        result = parse_pubmed_xml((fixtures_dir / "pubmed_mixed.xml").read_bytes())
        assert len(result.abstracts) == 2
        assert result.skipped_no_abstract == 1
        assert [a.pmid for a in result.abstracts] == [33333301, 33333303]

    def test_character_entities_resolved(self, fixtures_dir):
        result = parse_pubmed_xml((fixtures_dir / "pubmed_entities.xml").read_bytes())
        body = result.abstracts[0].sections[0].body
        assert "µg & 10 µg" in body
        assert "<100 €" in body

    def test_truncated_stream(self, fixtures_dir):
        data = (fixtures_dir / "pubmed_mixed.xml").read_bytes()
        with pytest.raises(XmlError) as err:
            parse_pubmed_xml(data[: len(data) // 2])
        assert err.value.kind == "truncated"
        assert 0 < err.value.byte_offset <= len(data)

    def test_malformed_stream(self):
        with pytest.raises(XmlError) as err:
            parse_pubmed_xml(b"<PubmedArticleSet><foo></bar></PubmedArticleSet>")
        assert err.value.kind == "malformed"
        assert err.value.byte_offset == 25

    def test_abstract_count_bounded_by_article_count(self, fixtures_dir):
        data = (fixtures_dir / "pubmed_mixed.xml").read_bytes()
        result = parse_pubmed_xml(data)
        n_articles = data.count(b"<PubmedArticle>")
        assert len(result.abstracts) <= n_articles
        assert len(result.abstracts) + result.skipped_no_abstract == n_articles

    def test_duplicate_pmid_rejected(self, fixtures_dir):
        data = (fixtures_dir / "pubmed_structured.xml").read_text()
        payload = data.replace(
            "</PubmedArticleSet>",
            data[data.index("<PubmedArticle>"): data.index("</PubmedArticleSet>")]
            + "</PubmedArticleSet>",
        )
        with pytest.raises(ValidationError, match="duplicate PMID"):
            parse_pubmed_xml(payload.encode())


class TestJsonlRoundTrip:
    def test_replay_is_byte_identical(self, fixtures_dir):
        result = parse_pubmed_xml((fixtures_dir / "pubmed_mixed.xml").read_bytes())
        buf1, buf2 = io.StringIO(), io.StringIO()
        write_raw_abstracts(result.abstracts, buf1)
        write_raw_abstracts(read_raw_abstracts(io.StringIO(buf1.getvalue())), buf2)
        assert buf1.getvalue() == buf2.getvalue()

    def test_bad_line_reports_lineno(self):
        with pytest.raises(ValidationError, match="line 1"):
            read_raw_abstracts(io.StringIO('{"pmid": "x"}\n'))


def _esearch_body(count: int) -> bytes:
    return (
        f"<eSearchResult><Count>{count}</Count><RetMax>0</RetMax>"
        f"<QueryKey>1</QueryKey><WebEnv>WE1</WebEnv></eSearchResult>"
    ).encode()


def _page_body(pmid: int) -> bytes:
    return (
        "<PubmedArticleSet><PubmedArticle><MedlineCitation>"
        f"<PMID>{pmid}</PMID><Article><Abstract>"
        '<AbstractText Label="SUBJECTS">twenty patients were enrolled in this study</AbstractText>'
        "</Abstract></Article></MedlineCitation></PubmedArticle></PubmedArticleSet>"
    ).encode()


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps: list[float] = []

    def monotonic(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


class ScriptedTransport:
    """Returns scripted (status, body) responses and records request times."""

    def __init__(self, script, clock: FakeClock):
        self.script = list(script)
        self.clock = clock
        self.request_times: list[float] = []
        self.requests: list[tuple[str, dict]] = []

    def get(self, url, params):
        self.request_times.append(self.clock.monotonic())
        self.requests.append((url, dict(params)))
        status, body = self.script.pop(0)
        self.clock.now += 0.001  # a tiny bit of wire time
        return status, body


class TestFetchCorpus:
    def test_two_pages(self):
        clock = FakeClock()
        transport = ScriptedTransport(
            [(200, _esearch_body(2)), (200, _page_body(1)), (200, _page_body(2))], clock
        )
        got = []
        summary = fetch_corpus(
            SearchSpec(page_size=1), got.append, transport=transport,
            api_key=None, sleep=clock.sleep, monotonic=clock.monotonic,
        )
        assert (summary.fetched, summary.skipped, summary.pages) == (2, 0, 2)
        assert [a.pmid for a in got] == [1, 2]
        assert transport.requests[0][0] == ESEARCH_URL
        assert transport.requests[1][0] == EFETCH_URL
        assert transport.requests[1][1]["WebEnv"] == "WE1"

    def test_failed_page_retried_then_succeeds(self):
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
        got = []
        summary = fetch_corpus(
            SearchSpec(page_size=1), got.append, transport=transport,
            api_key=None, sleep=clock.sleep, monotonic=clock.monotonic,
        )
        assert (summary.fetched, summary.skipped, summary.pages) == (2, 0, 2)
        assert summary.retries == 2
        # exponential backoff between the page-2 attempts
        assert 1.0 in clock.sleeps and 2.0 in clock.sleeps

    def test_retry_exhaustion_names_the_page(self):
        clock = FakeClock()
        transport = ScriptedTransport(
            [(200, _esearch_body(2)), (200, _page_body(1))] + [(500, b"")] * 4, clock
        )
        with pytest.raises(FetchError, match="page 2"):
            fetch_corpus(
                SearchSpec(page_size=1), lambda a: None, transport=transport,
                api_key=None, sleep=clock.sleep, monotonic=clock.monotonic,
            )

    def test_rate_limit_spacing(self):
        clock = FakeClock()
        transport = ScriptedTransport(
            [(200, _esearch_body(3))] + [(200, _page_body(k)) for k in (1, 2, 3)], clock
        )
        fetch_corpus(
            SearchSpec(page_size=1), lambda a: None, transport=transport,
            api_key=None, sleep=clock.sleep, monotonic=clock.monotonic,
        )
        gaps = [b - a for a, b in zip(transport.request_times, transport.request_times[1:])]
        # 1e-9 absorbs float64 noise in differencing the recorded marks
        assert all(gap >= 0.334 - 1e-9 for gap in gaps), gaps

    def test_api_key_tightens_spacing(self):
        clock = FakeClock()
        transport = ScriptedTransport(
            [(200, _esearch_body(2)), (200, _page_body(1)), (200, _page_body(2))], clock
        )
        fetch_corpus(
            SearchSpec(page_size=1), lambda a: None, transport=transport,
            api_key="secret", sleep=clock.sleep, monotonic=clock.monotonic,
        )
        gaps = [b - a for a, b in zip(transport.request_times, transport.request_times[1:])]
        assert all(0.1 <= gap < 0.334 for gap in gaps), gaps
        assert all(params["api_key"] == "secret" for _, params in transport.requests)


def test_parse_esearch_xml():
    count, web_env, query_key = parse_esearch_xml(_esearch_body(42))
    assert (count, web_env, query_key) == (42, "WE1", "1")
    with pytest.raises(ValidationError):
        parse_esearch_xml(b"<eSearchResult><Count>1</Count></eSearchResult>")


def test_abstract_json_shape():
    abstract = RawAbstract(
        pmid=9, sections=(RawSection("AIM", None, "to test"),), is_structured=True
    )
    line = abstract_to_json(abstract)
    assert '"pmid": 9' in line and '"nlm_category": null' in line
