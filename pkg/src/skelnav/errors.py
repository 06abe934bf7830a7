"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`NavError` so callers
(and the CLI) can distinguish bad input from internal trouble.
"""


class NavError(Exception):
    """Base class for all package errors."""


class InputError(NavError):
    """Caller supplied invalid data: bad shapes, poses inside walls,
    malformed bundles, unknown ids, out-of-range parameters."""


class ProtocolError(NavError):
    """A model backend returned something that does not parse into the
    expected reply structure, or referenced an unknown waypoint id."""


class TransportError(NavError):
    """The remote endpoint could not be reached or answered with a
    non-success HTTP status after retries were exhausted."""


class EpisodeFailure(NavError):
    """An episode had to be abandoned mid-run (e.g. repeated protocol
    errors). The partial record is attached when available."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record
