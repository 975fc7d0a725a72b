"""Exception types shared across the toolkit."""


class EnsemblekitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EnsemblekitError, ValueError):
    """Invalid data or arguments: bad file contents, broken invariants,
    out-of-range parameters.  Maps to exit code 2 in the CLI."""


class StorageError(EnsemblekitError, OSError):
    """I/O failure: missing files, unreadable images, write errors.
    Maps to exit code 3 in the CLI."""
