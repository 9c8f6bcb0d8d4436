"""Exception types shared across the package."""


class TopolinkError(Exception):
    """Base class. ``code`` feeds the CLI's machine-readable error records."""

    code = "error"


class DescriptorError(TopolinkError):
    code = "bad-descriptor"


class IngestError(TopolinkError):
    code = "ingest-failed"


class ResolutionError(TopolinkError):
    code = "bad-resolution"


class DomainMismatchError(TopolinkError):
    code = "domain-mismatch"


class CorpusError(TopolinkError):
    code = "corpus-error"
