"""Multi-dimensional data cube over an attributed, linked object table.

Objects carry one or more label values per schema dimension.  Each object
is assigned to every cell in the Cartesian product of its per-dimension
label sets, so a cell is identified by one label tuple.  Cells below a
minimum size are dropped, and the survivors get dense integer ids in
lexicographic label-tuple order, which keeps every downstream artifact
reproducible.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import IngestionError, QueryError, SchemaError, UnknownCellError

logger = logging.getLogger(__name__)

DEFAULT_MIN_CELL_SIZE = 10


@dataclass(frozen=True)
class DimensionSchema:
    """Ordered dimension names plus an optional per-dimension vocabulary.

    The dimension order is fixed at construction and drives both cell-id
    assignment and cell-embedding concatenation order.  When ``vocabulary``
    is None the builder derives it from the data; when given, labels outside
    it are rejected.
    """

    dimensions: tuple[str, ...]
    vocabulary: Mapping[str, frozenset[str]] | None = None

    def __post_init__(self) -> None:
        if not self.dimensions:
            raise SchemaError("schema needs at least one dimension")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise SchemaError(f"duplicate dimension names: {self.dimensions}")
        if self.vocabulary is not None:
            missing = set(self.dimensions) - set(self.vocabulary)
            if missing:
                raise SchemaError(f"vocabulary missing dimensions: {sorted(missing)}")


@dataclass(frozen=True)
class ObjectRecord:
    """One object: an opaque id and a non-empty label set per dimension."""

    id: str
    labels: Mapping[str, frozenset[str]]


@dataclass(frozen=True, order=True)
class LinkRecord:
    """Undirected weighted link, stored with endpoints in sorted order."""

    src: str
    dst: str
    weight: float = 1.0

    @classmethod
    def canonical(cls, a: str, b: str, weight: float = 1.0) -> "LinkRecord":
        if a > b:
            a, b = b, a
        return cls(a, b, weight)


@dataclass(frozen=True)
class Cell:
    """One cube cell: dense id, its label tuple, and its member object ids."""

    id: int
    labels: tuple[str, ...]
    members: frozenset[str]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class DataCube:
    """Filtered cell index plus the full link adjacency of the dataset.

    ``object_to_cells`` is the exact inverse of cell membership and has an
    entry (possibly empty) for every ingested object.  ``adjacency`` keeps
    every kept link on both endpoints, sorted, so edge retrieval for any
    node set is deterministic.
    """

    schema: DimensionSchema
    cells: tuple[Cell, ...]
    object_ids: frozenset[str]
    object_to_cells: dict[str, frozenset[int]]
    adjacency: dict[str, tuple[tuple[str, float], ...]]
    labels_to_cell: dict[tuple[str, ...], int] = field(default_factory=dict)
    link_count: int = 0
    dropped_self_loops: int = 0
    dropped_duplicate_links: int = 0
    filtered_cell_count: int = 0

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    def union_members(self, selected: Iterable[int]) -> set[str]:
        """Union of the member sets of the selected cells."""
        members: set[str] = set()
        for cell_id in selected:
            if not 0 <= int(cell_id) < len(self.cells):
                raise UnknownCellError(f"no cell with id {cell_id!r}")
            members |= self.cells[int(cell_id)].members
        return members

    def neighbors(self, object_id: str) -> tuple[tuple[str, float], ...]:
        return self.adjacency.get(object_id, ())

    def manifest(self) -> dict:
        """JSON-ready summary: schema, per-cell sizes, and ingest counts."""
        vocab = self.schema.vocabulary or {}
        return {
            "schema": {
                "dimensions": list(self.schema.dimensions),
                "vocabulary": {d: sorted(vocab.get(d, ())) for d in self.schema.dimensions},
            },
            "cells": [
                {"id": c.id, "labels": list(c.labels), "size": c.size} for c in self.cells
            ],
            "counts": {
                "objects": len(self.object_ids),
                "links": self.link_count,
                "cells": len(self.cells),
                "cells_below_min_size": self.filtered_cell_count,
                "dropped_self_loops": self.dropped_self_loops,
                "dropped_duplicate_links": self.dropped_duplicate_links,
            },
        }


@dataclass(frozen=True)
class ConstructedNetwork:
    """Materialized output network: sorted nodes and sorted canonical edges."""

    nodes: tuple[str, ...]
    edges: tuple[LinkRecord, ...]


def _validate_labels(obj: ObjectRecord, schema: DimensionSchema) -> None:
    dims = set(schema.dimensions)
    extra = set(obj.labels) - dims
    if extra:
        raise SchemaError(f"object {obj.id!r} has unknown dimensions {sorted(extra)}")
    for dim in schema.dimensions:
        values = obj.labels.get(dim)
        if not values:
            raise SchemaError(f"object {obj.id!r} is missing labels for dimension {dim!r}")
        if schema.vocabulary is not None:
            unknown = set(values) - schema.vocabulary[dim]
            if unknown:
                raise SchemaError(
                    f"object {obj.id!r} has labels {sorted(unknown)} outside the "
                    f"vocabulary of dimension {dim!r}"
                )


def build_cube(
    objects: Sequence[ObjectRecord],
    links: Sequence[LinkRecord],
    schema: DimensionSchema,
    min_cell_size: int = DEFAULT_MIN_CELL_SIZE,
) -> DataCube:
    """Assign objects to cells, filter small cells, and index the links.

    Filtering ignores the query entirely: the cube is a reusable index of
    the dataset, not of any one request.  Self-loops and repeated links are
    dropped (counted and logged); a link endpoint that is not an ingested
    object is an error because adjacency must stay closed.
    """
    if min_cell_size < 1:
        raise SchemaError(f"min_cell_size must be >= 1, got {min_cell_size}")

    seen: set[str] = set()
    for obj in objects:
        if obj.id in seen:
            raise IngestionError(f"duplicate object id {obj.id!r}")
        seen.add(obj.id)
        _validate_labels(obj, schema)
    object_ids = frozenset(seen)

    if schema.vocabulary is None:
        vocab = {
            dim: frozenset().union(*(obj.labels[dim] for obj in objects)) if objects else frozenset()
            for dim in schema.dimensions
        }
        schema = DimensionSchema(schema.dimensions, vocab)

    by_labels: dict[tuple[str, ...], set[str]] = {}
    for obj in objects:
        value_lists = [sorted(obj.labels[dim]) for dim in schema.dimensions]
        for label_tuple in itertools.product(*value_lists):
            by_labels.setdefault(label_tuple, set()).add(obj.id)

    kept = sorted(t for t, m in by_labels.items() if len(m) >= min_cell_size)
    filtered = len(by_labels) - len(kept)
    cells = tuple(
        Cell(i, labels, frozenset(by_labels[labels])) for i, labels in enumerate(kept)
    )
    labels_to_cell = {c.labels: c.id for c in cells}

    inverse: dict[str, set[int]] = {oid: set() for oid in object_ids}
    for cell in cells:
        for oid in cell.members:
            inverse[oid].add(cell.id)

    adjacency: dict[str, set[tuple[str, float]]] = {oid: set() for oid in object_ids}
    kept_pairs: set[tuple[str, str]] = set()
    self_loops = 0
    duplicates = 0
    for link in links:
        if link.src not in object_ids or link.dst not in object_ids:
            raise IngestionError(
                f"link ({link.src!r}, {link.dst!r}) references an unknown object"
            )
        a, b = (link.src, link.dst) if link.src <= link.dst else (link.dst, link.src)
        if a == b:
            self_loops += 1
            continue
        if (a, b) in kept_pairs:
            duplicates += 1
            continue
        kept_pairs.add((a, b))
        adjacency[a].add((b, link.weight))
        adjacency[b].add((a, link.weight))
    if self_loops or duplicates:
        logger.warning(
            "dropped %d self-loops and %d duplicate links", self_loops, duplicates
        )

    return DataCube(
        schema=schema,
        cells=cells,
        object_ids=object_ids,
        object_to_cells={oid: frozenset(ids) for oid, ids in inverse.items()},
        adjacency={oid: tuple(sorted(nbrs)) for oid, nbrs in adjacency.items()},
        labels_to_cell=labels_to_cell,
        link_count=len(kept_pairs),
        dropped_self_loops=self_loops,
        dropped_duplicate_links=duplicates,
        filtered_cell_count=filtered,
    )


def induce_network(cube: DataCube, nodes: Iterable[str]) -> ConstructedNetwork:
    """Network induced on ``nodes``: every kept link with both endpoints inside."""
    node_set = set(nodes)
    unknown = node_set - cube.object_ids
    if unknown:
        raise QueryError(f"unknown object ids: {sorted(unknown)[:5]}")
    edges = [
        LinkRecord(u, v, w)
        for u in node_set
        for v, w in cube.neighbors(u)
        if u < v and v in node_set
    ]
    return ConstructedNetwork(nodes=tuple(sorted(node_set)), edges=tuple(sorted(edges)))


def materialize_network(
    cube: DataCube, selected: Iterable[int], query: Iterable[str]
) -> ConstructedNetwork:
    """Induce the network on the query plus the members of the selected cells.

    Query ids must exist in the dataset; links with either endpoint outside
    the node set are dropped, which is what closes the output network.
    """
    query_set = set(query)
    missing = query_set - cube.object_ids
    if missing:
        raise QueryError(f"query ids not in dataset: {sorted(missing)[:5]}")
    return induce_network(cube, query_set | cube.union_members(selected))


# ---------------------------------------------------------------------------
# File formats


def load_objects(path: str) -> list[ObjectRecord]:
    """Read objects from JSON lines: {"id": str, "labels": {dim: [str, ...]}}."""
    records: list[ObjectRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                oid = doc["id"]
                labels = {
                    dim: frozenset(values) for dim, values in doc["labels"].items()
                }
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
                raise IngestionError(f"{path}:{line_no}: bad object record: {exc}") from exc
            if not isinstance(oid, str):
                raise IngestionError(f"{path}:{line_no}: object id must be a string")
            records.append(ObjectRecord(id=oid, labels=labels))
    return records


def load_links(path: str) -> list[LinkRecord]:
    """Read links from TSV lines ``src<TAB>dst[<TAB>weight]`` (weight defaults to 1)."""
    links: list[LinkRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise IngestionError(
                    f"{path}:{line_no}: expected 2 or 3 tab-separated fields, got {len(parts)}"
                )
            weight = 1.0
            if len(parts) == 3:
                try:
                    weight = float(parts[2])
                except ValueError as exc:
                    raise IngestionError(f"{path}:{line_no}: bad weight {parts[2]!r}") from exc
            links.append(LinkRecord.canonical(parts[0], parts[1], weight))
    return links


def load_query(path: str) -> frozenset[str]:
    """Read query object ids, one per line; the query may not be empty."""
    with open(path, "r", encoding="utf-8") as fh:
        ids = frozenset(line.strip() for line in fh if line.strip())
    if not ids:
        raise QueryError(f"{path}: query file is empty")
    return ids


def dump_manifest(cube: DataCube) -> str:
    """Byte-stable JSON text of the cube manifest."""
    return json.dumps(cube.manifest(), sort_keys=True, indent=2) + "\n"


def write_manifest(cube: DataCube, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_manifest(cube))
