"""Cell embeddings: label text mapped into a shared continuous space.

A label embeds as the sum of the word vectors of its tokens; a cell embeds
as the concatenation of its per-dimension label embeddings, in schema
order.  Tokens missing from the table and stop words contribute zero
vectors, and labels listed in the alias map are expanded to their token
list instead of being split (for example a decade label standing for ten
year tokens, or a venue acronym standing for its full name).
"""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .cube import Cell, DataCube
from .errors import ConfigError, NoCandidatesError, WordTableError

logger = logging.getLogger(__name__)

# Unicode whitespace plus ASCII punctuation.
_SPLIT_RE = re.compile("[\\s" + re.escape(string.punctuation) + "]+")

AliasMap = Mapping[str, Sequence[str]]


@dataclass
class WordTable:
    """Fixed-dimension word vectors keyed by lowercase token."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    @classmethod
    def from_file(cls, path: str, dim: int) -> "WordTable":
        with open(path, "r", encoding="utf-8") as fh:
            return load_word_table(fh, dim)


def load_word_table(stream: IO[str] | Iterable[str], dim: int) -> WordTable:
    """Parse ``token v1 ... v<dim>`` lines into a :class:`WordTable`.

    Tokens are lowercased; a repeated token keeps the last vector seen.
    Blank lines are skipped, and a line with the wrong number of values is
    an error that names the line.
    """
    if dim < 1:
        raise WordTableError(f"vector dimension must be >= 1, got {dim}")
    vectors: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            continue
        token, values = parts[0].lower(), parts[1:]
        if len(values) != dim:
            raise WordTableError(
                f"line {line_no}: expected {dim} values for token {token!r}, "
                f"got {len(values)}"
            )
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise WordTableError(f"line {line_no}: non-numeric value: {exc}") from exc
        vectors[token] = vec
    return WordTable(dim=dim, vectors=vectors)


def tokenize(label: str) -> list[str]:
    """Lowercase and split on whitespace and ASCII punctuation."""
    return [t for t in _SPLIT_RE.split(label.lower()) if t]


def embed_label(
    label: str,
    table: WordTable,
    aliases: AliasMap | None = None,
    stopwords: frozenset[str] = frozenset(),
) -> np.ndarray:
    """Sum of word vectors over the label's tokens.

    Alias lookup is by exact label string; expansion tokens go through the
    same lowercasing and stop-word filter as split tokens.  A label whose
    tokens are all unknown or stopped embeds as the zero vector.
    """
    if aliases and label in aliases:
        tokens = [t.lower() for t in aliases[label]]
    else:
        tokens = tokenize(label)
    out = np.zeros(table.dim, dtype=np.float64)
    for token in tokens:
        if token in stopwords:
            continue
        vec = table.vectors.get(token)
        if vec is not None:
            out += vec
    return out


def embed_cell(cell: Cell, label_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate the per-dimension label embeddings of one cell."""
    if len(label_vectors) != len(cell.labels):
        raise ValueError(
            f"cell {cell.id} has {len(cell.labels)} dimensions but "
            f"{len(label_vectors)} label vectors were given"
        )
    return np.concatenate(label_vectors)


@dataclass
class CellEmbeddingTable:
    """Row i is the embedding of cell i; rows are read-only views."""

    vectors: np.ndarray
    word_dim: int
    zero_label_count: int = 0

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.vectors.setflags(write=False)

    @property
    def kappa(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def __getitem__(self, cell_id: int) -> np.ndarray:
        return self.vectors[cell_id]


def build_embedding_table(
    cube: DataCube,
    table: WordTable,
    aliases: AliasMap | None = None,
    stopwords: frozenset[str] = frozenset(),
) -> CellEmbeddingTable:
    """Embed every cell of the cube; kappa = dimensions x word dim.

    Label embeddings are computed once per distinct (dimension, label) pair.
    All-zero label embeddings are counted and logged: they usually mean the
    word table does not cover the labels.
    """
    dims = cube.schema.dimensions
    cache: dict[tuple[int, str], np.ndarray] = {}
    zero_labels = 0
    for cell in cube.cells:
        for p, label in enumerate(cell.labels):
            if (p, label) not in cache:
                vec = embed_label(label, table, aliases, stopwords)
                cache[(p, label)] = vec
                if not vec.any():
                    zero_labels += 1
    kappa = len(dims) * table.dim
    matrix = np.zeros((len(cube.cells), kappa), dtype=np.float64)
    for cell in cube.cells:
        matrix[cell.id] = embed_cell(cell, [cache[(p, l)] for p, l in enumerate(cell.labels)])
    if zero_labels:
        logger.warning(
            "%d label embeddings are all-zero (unknown or stopped tokens)", zero_labels
        )
    return CellEmbeddingTable(vectors=matrix, word_dim=table.dim, zero_label_count=zero_labels)


def nearest_cell(
    action: np.ndarray, table: CellEmbeddingTable, excluded: Iterable[int] = ()
) -> int:
    """Id of the non-excluded cell nearest to ``action`` in Euclidean distance.

    Ties break to the smallest cell id.  Excluding every cell is an error:
    retrieval must always be able to return something.
    """
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (table.kappa,):
        raise ValueError(f"action has shape {action.shape}, expected ({table.kappa},)")
    d2 = np.sum((table.vectors - action) ** 2, axis=1)
    excluded_ids = list(excluded)
    if excluded_ids:
        d2[np.asarray(excluded_ids, dtype=np.intp)] = np.inf
    if not np.isfinite(d2).any():
        raise NoCandidatesError("every cell is excluded; nothing left to retrieve")
    # argmin returns the first minimum, which is the smallest id on ties
    return int(np.argmin(d2))


def load_aliases(path: str) -> dict[str, list[str]]:
    """Read a JSON object mapping label -> non-empty list of expansion tokens."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: alias map must be a JSON object")
    out: dict[str, list[str]] = {}
    for label, tokens in doc.items():
        if not isinstance(tokens, list) or not tokens or not all(
            isinstance(t, str) for t in tokens
        ):
            raise ConfigError(f"{path}: alias {label!r} must map to a non-empty token list")
        out[label] = tokens
    return out


def load_stopwords(path: str) -> frozenset[str]:
    """Read stop words, one per line, lowercased."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())
