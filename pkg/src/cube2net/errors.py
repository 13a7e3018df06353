"""Exception types shared across the package.

Everything raised on bad user input or bad data derives from
:class:`Cube2NetError` so the CLI can catch one base class, print the
message, and exit nonzero.
"""

from __future__ import annotations


class Cube2NetError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(Cube2NetError):
    """An object's labels do not match the dimension schema."""


class IngestionError(Cube2NetError):
    """Malformed object or link input (duplicate ids, unknown endpoints)."""


class UnknownCellError(Cube2NetError):
    """A cell id that does not exist in the cube was referenced."""


class QueryError(Cube2NetError):
    """The query is empty or names objects absent from the dataset."""


class WordTableError(Cube2NetError):
    """A word-vector table line could not be parsed."""


class NoCandidatesError(Cube2NetError):
    """Nearest-cell retrieval was asked to choose from an empty candidate set."""


class ConfigError(Cube2NetError):
    """Invalid run, training, or generator configuration."""


class NumericError(Cube2NetError):
    """A numeric computation produced non-finite values."""
