"""Exception hierarchy shared by every crset module."""


class CRSetError(Exception):
    """Base class for domain errors."""


class CapacityExceeded(CRSetError):
    """The instance is full; a new CRSet must be started."""


class BuildDiverged(CRSetError):
    """Cascade construction did not converge within the restart budget."""


class FormatOverflow(CRSetError):
    """A value does not fit its field in the wire format."""


class UnsupportedFormat(CRSetError):
    """Bad magic bytes or unknown format version."""


class CorruptPayload(CRSetError):
    """Serialized data or blob bundle is truncated or inconsistent."""


class UnknownId(CRSetError):
    """The revocation ID is not present in the registry."""


class NoPublication(CRSetError):
    """The account has never published a cascade."""


class MalformedEntry(CRSetError, ValueError):
    """A credential status entry could not be parsed."""


class CheckUnavailable(CRSetError):
    """The revocation status could not be determined (fail-closed)."""


class ImplausibleSeries(CRSetError, ValueError):
    """A count series contradicts the credential life cycle."""


class DegenerateDesign(CRSetError, ValueError):
    """No usable feature columns remain after scaling."""
