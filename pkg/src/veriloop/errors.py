"""Exception types shared across the package."""


class VeriloopError(Exception):
    """Base class for all package errors."""


class CorpusError(VeriloopError):
    """Malformed dataset file, duplicate ids, or an impossible split request."""


class MissingInputError(VeriloopError):
    """A referenced input file (config, corpus, state) does not exist."""


class DegenerateGeometryError(VeriloopError):
    """Clustering input on which the silhouette score is undefined."""


class AnnotationError(VeriloopError):
    """LLM transport failure after retries, or an unusable endpoint config."""


class StateError(VeriloopError):
    """Corrupt, tampered, or version-incompatible run state file."""


class ConflictError(VeriloopError):
    """A second, different human label was submitted for the same record."""
