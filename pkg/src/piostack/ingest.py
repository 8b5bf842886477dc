"""PubMed E-utilities client and PubmedArticleSet XML parser.

Fetching uses the history server: one esearch call pins a result set and
returns its size, then efetch pages through it with ``retstart``/``retmax``.
NCBI allows at most 3 requests per second without an API key (10 with one),
so every outbound request is spaced by a minimum delay. The HTTP transport
and the clock are injectable so the whole client is testable offline.
"""

from __future__ import annotations

import json
import logging
import os
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import date
from typing import Callable, Iterable, Protocol, TextIO
from xml.parsers.expat import errors as expat_errors

from .errors import ConfigError, FetchError, ValidationError, XmlError

log = logging.getLogger(__name__)

EUTILS_BASE = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/"
ESEARCH_URL = EUTILS_BASE + "esearch.fcgi"
EFETCH_URL = EUTILS_BASE + "efetch.fcgi"

#: PubMed query clauses for the three default corpus filters.
FILTER_CLINICAL_TRIAL = "Clinical Trial[pt]"
FILTER_HUMANS = "Humans[mh]"
FILTER_ENGLISH = "English[la]"
DEFAULT_FILTERS = (FILTER_CLINICAL_TRIAL, FILTER_HUMANS, FILTER_ENGLISH)

RETMAX_LIMIT = 10000  # E-utilities hard cap on retmax

API_KEY_ENV = "NCBI_API_KEY"

#: Retry schedule for a failed page, in seconds.
RETRY_DELAYS = (1.0, 2.0, 4.0)


def request_delay_ms(api_key: str | None) -> int:
    """Minimum spacing between consecutive requests (3/s, or 10/s keyed)."""
    return 100 if api_key else 334


@dataclass(frozen=True)
class SearchSpec:
    """What to ask PubMed for. All three corpus filters are on by default."""

    query_terms: str = ""
    filters: tuple[str, ...] = DEFAULT_FILTERS
    date_cutoff: date | None = None
    page_size: int = 1000

    def __post_init__(self):
        if not 1 <= self.page_size <= RETMAX_LIMIT:
            raise ConfigError(
                f"page_size must be in [1, {RETMAX_LIMIT}], got {self.page_size}"
            )

    def term(self) -> str:
        clauses = []
        if self.query_terms.strip():
            clauses.append(f"({self.query_terms.strip()})")
        clauses.extend(self.filters)
        if self.date_cutoff is not None:
            clauses.append(f'("1900/01/01"[PDAT] : "{self.date_cutoff:%Y/%m/%d}"[PDAT])')
        return " AND ".join(clauses)


@dataclass(frozen=True)
class RawSection:
    """One AbstractText node: heading kept verbatim, body trimmed."""

    heading: str
    nlm_category: str | None
    body: str


@dataclass(frozen=True)
class RawAbstract:
    pmid: int
    sections: tuple[RawSection, ...]
    is_structured: bool


@dataclass(frozen=True)
class RequestDescriptor:
    """A planned outbound request with its rate-limit spacing."""

    kind: str  # "search" or "fetch"
    url: str
    params: dict[str, str]
    min_delay_ms: int


def _search_params(spec: SearchSpec, api_key: str | None) -> dict[str, str]:
    params = {
        "db": "pubmed",
        "term": spec.term(),
        "retmax": "0",
        "usehistory": "y",
        "retmode": "xml",
    }
    if api_key:
        params["api_key"] = api_key
    return params


def _fetch_params(spec: SearchSpec, offset: int, api_key: str | None) -> dict[str, str]:
    params = {
        "db": "pubmed",
        "retmode": "xml",
        "retstart": str(offset),
        "retmax": str(spec.page_size),
        # query_key/WebEnv are filled in once the search response is known
    }
    if api_key:
        params["api_key"] = api_key
    return params


def plan_fetch(spec: SearchSpec, count: int, api_key: str | None = None) -> list[RequestDescriptor]:
    """Plan the request sequence: one search, then pages covering [0, count).

    The search descriptor comes first because its response carries the
    result-set key and the authoritative count; the page descriptors
    partition [0, count) into contiguous page_size chunks.
    """
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    delay = request_delay_ms(api_key)
    plan = [RequestDescriptor("search", ESEARCH_URL, _search_params(spec, api_key), delay)]
    for offset in range(0, count, spec.page_size):
        plan.append(
            RequestDescriptor("fetch", EFETCH_URL, _fetch_params(spec, offset, api_key), delay)
        )
    return plan


# -- XML parsing ---------------------------------------------------------

# Expat messages that indicate the stream ended early rather than being
# structurally invalid.
_TRUNCATION_MESSAGES = (
    expat_errors.XML_ERROR_NO_ELEMENTS,
    expat_errors.XML_ERROR_UNCLOSED_TOKEN,
    expat_errors.XML_ERROR_UNCLOSED_CDATA_SECTION,
    expat_errors.XML_ERROR_PARTIAL_CHAR,
)
_TRUNCATION_CODES = frozenset(expat_errors.codes[m] for m in _TRUNCATION_MESSAGES)


def _byte_offset(payload: bytes, line: int, column: int) -> int:
    lines = payload.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[: line - 1]) + column


@dataclass
class ParseResult:
    abstracts: list[RawAbstract]
    skipped_no_abstract: int


def parse_pubmed_xml(payload: bytes) -> ParseResult:
    """Parse a PubmedArticleSet payload into RawAbstract records.

    One record per PubmedArticle that has an Abstract element; articles
    without one are skipped and counted. Character entities are resolved
    by the XML parser. Raises XmlError with a byte offset on malformed
    input, distinguishing truncation from structural damage.
    """
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        line, column = exc.position
        kind = "truncated" if exc.code in _TRUNCATION_CODES else "malformed"
        raise XmlError(kind, _byte_offset(payload, line, column), str(exc)) from exc

    abstracts: list[RawAbstract] = []
    seen_pmids: set[int] = set()
    skipped = 0
    for article in root.iter("PubmedArticle"):
        pmid_node = article.find("./MedlineCitation/PMID")
        if pmid_node is None or not (pmid_node.text or "").strip():
            raise ValidationError("PubmedArticle without a PMID")
        pmid = int(pmid_node.text.strip())
        if pmid in seen_pmids:
            raise ValidationError(f"duplicate PMID {pmid} in one payload")
        seen_pmids.add(pmid)

        abstract_node = article.find("./MedlineCitation/Article/Abstract")
        if abstract_node is None:
            skipped += 1
            continue
        sections = []
        for node in abstract_node.findall("AbstractText"):
            body = "".join(node.itertext()).strip()
            if not body:
                continue
            sections.append(
                RawSection(
                    heading=node.get("Label", ""),
                    nlm_category=node.get("NlmCategory"),
                    body=body,
                )
            )
        abstracts.append(
            RawAbstract(
                pmid=pmid,
                sections=tuple(sections),
                is_structured=any(sec.heading for sec in sections),
            )
        )
    return ParseResult(abstracts=abstracts, skipped_no_abstract=skipped)


def parse_esearch_xml(payload: bytes) -> tuple[int, str, str]:
    """Extract (count, WebEnv, query_key) from an esearch response."""
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        line, column = exc.position
        raise XmlError("malformed", _byte_offset(payload, line, column), str(exc)) from exc
    count = root.findtext("Count")
    web_env = root.findtext("WebEnv")
    query_key = root.findtext("QueryKey")
    if count is None or web_env is None or query_key is None:
        raise ValidationError("esearch response missing Count/WebEnv/QueryKey")
    return int(count), web_env, query_key


# -- transport and fetching ----------------------------------------------


class Transport(Protocol):
    def get(self, url: str, params: dict[str, str]) -> tuple[int, bytes]:
        """Issue a GET; return (status_code, body)."""


class RequestsTransport:
    """Live HTTP transport; import deferred so offline use never needs it."""

    def __init__(self, timeout: float = 60.0):
        self.timeout = timeout

    def get(self, url: str, params: dict[str, str]) -> tuple[int, bytes]:
        import requests

        resp = requests.get(url, params=params, timeout=self.timeout)
        return resp.status_code, resp.content


class _RateLimiter:
    """Enforces the minimum spacing between consecutive requests."""

    def __init__(self, delay_s: float, monotonic: Callable[[], float], sleep: Callable[[float], None]):
        self.delay_s = delay_s
        self._monotonic = monotonic
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        if self._last is not None:
            target = self._last + self.delay_s
            now = self._monotonic()
            while now < target:  # loop guards against sleep undershoot
                self._sleep(target - now)
                now = self._monotonic()
        self._last = self._monotonic()


@dataclass
class FetchSummary:
    fetched: int = 0
    skipped: int = 0
    pages: int = 0
    retries: int = 0


def _get_with_retry(
    transport: Transport,
    url: str,
    params: dict[str, str],
    limiter: _RateLimiter,
    sleep: Callable[[float], None],
    page: int,
    summary: FetchSummary,
) -> bytes:
    last_reason = "unknown"
    for attempt in range(len(RETRY_DELAYS) + 1):
        limiter.wait()
        try:
            status, body = transport.get(url, params)
        except Exception as exc:  # transport-level failure is retryable
            last_reason = f"transport error: {exc}"
        else:
            if status == 200:
                return body
            last_reason = f"HTTP {status}"
        if attempt == len(RETRY_DELAYS):
            break
        summary.retries += 1
        log.warning("page %d attempt %d failed (%s); retrying in %.0fs",
                    page, attempt + 1, last_reason, RETRY_DELAYS[attempt])
        sleep(RETRY_DELAYS[attempt])
    raise FetchError(page, last_reason)


def fetch_corpus(
    spec: SearchSpec,
    sink: Callable[[RawAbstract], None],
    transport: Transport | None = None,
    api_key: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
    monotonic: Callable[[], float] = time.monotonic,
) -> FetchSummary:
    """Stream every page of the search through the parser into ``sink``.

    Pages are fetched strictly sequentially under the rate limit; a failed
    page is retried up to 3 times with exponential backoff before a
    FetchError names it. Skips count only articles without an Abstract.
    """
    if api_key is None:
        api_key = os.environ.get(API_KEY_ENV) or None
    if transport is None:
        transport = RequestsTransport()
    limiter = _RateLimiter(request_delay_ms(api_key) / 1000.0, monotonic, sleep)
    summary = FetchSummary()

    search = plan_fetch(spec, count=0, api_key=api_key)[0]
    body = _get_with_retry(transport, search.url, search.params, limiter, sleep,
                           page=0, summary=summary)
    count, web_env, query_key = parse_esearch_xml(body)
    log.info("search matched %d records", count)

    pages = plan_fetch(spec, count=count, api_key=api_key)[1:]
    for page_no, descriptor in enumerate(pages, start=1):
        params = dict(descriptor.params, WebEnv=web_env, query_key=query_key)
        body = _get_with_retry(transport, descriptor.url, params, limiter, sleep,
                               page=page_no, summary=summary)
        result = parse_pubmed_xml(body)
        for abstract in result.abstracts:
            sink(abstract)
        summary.fetched += len(result.abstracts)
        summary.skipped += result.skipped_no_abstract
        summary.pages += 1
    return summary


# -- one-record-per-line persistence --------------------------------------


def abstract_to_json(abstract: RawAbstract) -> str:
    return json.dumps(
        {
            "pmid": abstract.pmid,
            "is_structured": abstract.is_structured,
            "sections": [
                {"heading": s.heading, "nlm_category": s.nlm_category, "body": s.body}
                for s in abstract.sections
            ],
        },
        ensure_ascii=True,
    )


def abstract_from_json(line: str, lineno: int = 0) -> RawAbstract:
    try:
        obj = json.loads(line)
        sections = tuple(
            RawSection(heading=s["heading"], nlm_category=s["nlm_category"], body=s["body"])
            for s in obj["sections"]
        )
        return RawAbstract(
            pmid=int(obj["pmid"]),
            sections=sections,
            is_structured=bool(obj["is_structured"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"bad raw abstract at line {lineno}: {exc}") from exc


def write_raw_abstracts(abstracts: Iterable[RawAbstract], fh: TextIO) -> int:
    n = 0
    for abstract in abstracts:
        fh.write(abstract_to_json(abstract) + "\n")
        n += 1
    return n


def read_raw_abstracts(fh: TextIO) -> list[RawAbstract]:
    return [
        abstract_from_json(line, lineno)
        for lineno, line in enumerate(fh, start=1)
        if line.strip()
    ]
