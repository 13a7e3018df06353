"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from cube2net.cube import DataCube, DimensionSchema, LinkRecord, ObjectRecord, build_cube
from cube2net.embedding import CellEmbeddingTable
from cube2net.policy import OptimizerState, PolicyParameters, init_params


def make_cube(
    objects: dict[str, dict[str, set[str]]],
    links: list[tuple] = (),
    min_cell_size: int = 1,
) -> DataCube:
    """Build a cube from an id -> {dimension: labels} mapping."""
    dims = tuple(sorted(next(iter(objects.values()))))
    records = [
        ObjectRecord(oid, {d: frozenset(v) for d, v in labels.items()})
        for oid, labels in objects.items()
    ]
    link_records = [
        LinkRecord.canonical(link[0], link[1], link[2] if len(link) > 2 else 1.0)
        for link in links
    ]
    return build_cube(records, link_records, DimensionSchema(dims), min_cell_size)


def single_dim_cube(
    members_by_label: dict[str, list[str]],
    links: list[tuple] = (),
    min_cell_size: int = 1,
) -> DataCube:
    """One-dimension cube: each object can sit in several labels."""
    objects: dict[str, dict[str, set[str]]] = {}
    for label, members in members_by_label.items():
        for oid in members:
            objects.setdefault(oid, {"d": set()})["d"].add(label)
    return make_cube(objects, links, min_cell_size)


def path_cube(n: int = 5) -> DataCube:
    """n objects in one cell, linked in a path o0 - o1 - ... - o(n-1)."""
    objects = {f"o{i}": {"d": {"all"}} for i in range(n)}
    links = [(f"o{i}", f"o{i + 1}") for i in range(n - 1)]
    return make_cube(objects, links)


def embedding_table(vectors, word_dim: int | None = None) -> CellEmbeddingTable:
    vectors = np.asarray(vectors, dtype=np.float64)
    return CellEmbeddingTable(
        vectors=vectors, word_dim=word_dim or vectors.shape[1]
    )


def random_params(
    kappa: int, hidden: int, seed: int
) -> tuple[PolicyParameters, OptimizerState]:
    """Seeded parameters initialized against a small random table."""
    rng = np.random.default_rng(seed)
    table = embedding_table(rng.standard_normal((6, kappa)))
    return init_params(kappa, hidden, seed, table)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
