"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems (parse/schema/graph) exit 2,
endpoint and protocol problems exit 3.
"""


class KgplayError(Exception):
    """Base class for all package errors."""


class ParseError(KgplayError):
    """Input bytes are not valid JSON / JSONL."""


class SchemaError(KgplayError):
    """Input parsed but violates a structural invariant; message names the path."""


class GraphError(KgplayError):
    """Graph operation violated an invariant (dangling endpoint, bad confidence, ...)."""


class NoPathAvailable(KgplayError):
    """The graph has no valid edge to start a walk from."""


class EndpointError(KgplayError):
    """A remote endpoint (generate/embed/classify) failed or returned garbage."""


class ProtocolError(KgplayError):
    """A model response violated the structured-output contract."""


class StaleBatchError(KgplayError):
    """A refinement batch was built against an older graph version."""
