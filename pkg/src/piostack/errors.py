"""Exception hierarchy shared across the pipeline stages.

The CLI maps these onto exit codes: usage problems exit 1, data and
protocol violations exit 2, I/O and transport failures exit 3.
"""


class PiostackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PiostackError):
    """Invalid configuration value or malformed config/pattern/map file."""


class DataError(PiostackError):
    """Input data violates a documented format or value contract."""


class ValidationError(DataError):
    """A record failed row-level validation (bad value, duplicate id...)."""


class ProtocolError(DataError):
    """The base/stack split or fold protocol was violated (e.g. leakage)."""


class UndefinedMetricError(DataError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class DivergenceError(PiostackError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite training loss at epoch {epoch}")


class XmlError(DataError):
    """Payload could not be parsed as PubMed XML.

    ``kind`` is ``"truncated"`` when the stream ended mid-document and
    ``"malformed"`` for any other well-formedness violation.
    ``byte_offset`` locates the failure in the payload.
    """

    def __init__(self, kind: str, byte_offset: int, message: str):
        self.kind = kind
        self.byte_offset = byte_offset
        super().__init__(f"{kind} XML at byte {byte_offset}: {message}")


class FetchError(PiostackError):
    """A page could not be retrieved after exhausting retries."""

    def __init__(self, page: int, message: str):
        self.page = page
        super().__init__(f"fetch failed for page {page}: {message}")


class UnstructuredAbstractError(DataError):
    """Abstract has no labeled sections and cannot be auto-labeled."""

    reason = "unstructured"

    def __init__(self, pmid: int):
        self.pmid = pmid
        super().__init__(f"abstract {pmid} is unstructured; skipped ({self.reason})")


class SchemaError(DataError):
    """A persisted artifact has the wrong version or schema."""
