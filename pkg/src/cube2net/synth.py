"""Seeded synthetic datasets with planted optimal selections.

The planted generator builds disjoint cells (one label per dimension per
object), marks k of them as planted, and draws the query mostly from the
planted members with a controlled fraction of noise drawn elsewhere.  With
zero noise and full query coverage the planted cells are a perfect-overlap
selection, which gives every strategy a known target.

The greedy-trap generator builds a small fixed instance where one large
mixed cell is the best single pick but the optimal pair avoids it, so a
one-step-lookahead strategy provably lands below the optimum.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError


@dataclass
class SyntheticSpec:
    """Knobs of the planted generator; defaults make a small dense instance."""

    dimensions: int = 2
    labels_per_dimension: int = 4
    word_dim: int = 8
    cells: int = 15
    objects_per_cell: int = 12
    planted_cells: int = 3
    query_fraction: float = 0.8
    noise_fraction: float = 0.1
    intra_link_prob: float = 0.3
    cross_link_prob: float = 0.01

    def validate(self) -> None:
        if min(self.dimensions, self.labels_per_dimension, self.word_dim) < 1:
            raise ConfigError("dimensions, labels_per_dimension, word_dim must be >= 1")
        if min(self.cells, self.objects_per_cell, self.planted_cells) < 1:
            raise ConfigError("cells, objects_per_cell, planted_cells must be >= 1")
        if self.planted_cells > self.cells:
            raise ConfigError(
                f"cannot plant {self.planted_cells} of {self.cells} cells"
            )
        if self.labels_per_dimension**self.dimensions < self.cells:
            raise ConfigError(
                f"{self.labels_per_dimension} labels over {self.dimensions} dimensions "
                f"yield fewer than {self.cells} distinct label tuples"
            )
        if not 0.0 < self.query_fraction <= 1.0:
            raise ConfigError("query_fraction must be in (0, 1]")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ConfigError("noise_fraction must be in [0, 1)")
        for name in ("intra_link_prob", "cross_link_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")


@dataclass
class SyntheticDataset:
    """Where the generated files live, plus the planted ground truth."""

    out_dir: str
    paths: dict[str, str]
    planted_labels: tuple[tuple[str, ...], ...]
    query_ids: frozenset[str]
    object_count: int
    link_count: int
    dimension_names: tuple[str, ...] = ()
    cell_members: dict[tuple[str, ...], tuple[str, ...]] = field(default_factory=dict)


def _unit_vectors(tokens: Sequence[str], dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    for token in tokens:
        v = rng.standard_normal(dim)
        vectors[token] = v / np.linalg.norm(v)
    return vectors


def _write_dataset(
    out_dir: str,
    objects: Sequence[tuple[str, Mapping[str, Sequence[str]]]],
    links: Sequence[tuple[str, str]],
    query: Sequence[str],
    vectors: Mapping[str, np.ndarray],
    aliases: Mapping[str, Sequence[str]],
    instance: Mapping,
) -> dict[str, str]:
    """Write all dataset files with sorted, byte-stable content."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    paths = {
        "objects": str(root / "objects.jsonl"),
        "links": str(root / "links.tsv"),
        "query": str(root / "query.txt"),
        "word_table": str(root / "word_vectors.txt"),
        "aliases": str(root / "aliases.json"),
        "instance": str(root / "instance.json"),
    }
    with open(paths["objects"], "w", encoding="utf-8") as fh:
        for oid, labels in sorted(objects):
            doc = {"id": oid, "labels": {d: sorted(v) for d, v in labels.items()}}
            fh.write(json.dumps(doc, sort_keys=True) + "\n")
    with open(paths["links"], "w", encoding="utf-8") as fh:
        for a, b in sorted(links):
            fh.write(f"{a}\t{b}\t1.0\n")
    with open(paths["query"], "w", encoding="utf-8") as fh:
        for oid in sorted(query):
            fh.write(oid + "\n")
    with open(paths["word_table"], "w", encoding="utf-8") as fh:
        for token in sorted(vectors):
            fh.write(token + " " + " ".join(repr(float(x)) for x in vectors[token]) + "\n")
    with open(paths["aliases"], "w", encoding="utf-8") as fh:
        json.dump({k: list(v) for k, v in aliases.items()}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(paths["instance"], "w", encoding="utf-8") as fh:
        json.dump(instance, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return paths


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir: str) -> SyntheticDataset:
    """Generate a planted instance; same (spec, seed) writes identical bytes.

    Objects are assigned one label per dimension, so cells are disjoint and
    the object count is exactly cells * objects_per_cell.  The first
    dimension's labels are routed through the alias map (each expands to
    two synthetic tokens) to keep that path exercised end to end.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    dims = tuple(f"dim{p + 1}" for p in range(spec.dimensions))
    dim_labels = [
        [f"d{p + 1}l{j:02d}" for j in range(spec.labels_per_dimension)]
        for p in range(spec.dimensions)
    ]
    tuples = list(itertools.islice(itertools.product(*dim_labels), spec.cells))

    planted_idx = sorted(
        int(i) for i in rng.choice(spec.cells, size=spec.planted_cells, replace=False)
    )
    planted = tuple(tuples[i] for i in planted_idx)

    cell_members: dict[tuple[str, ...], list[str]] = {}
    objects: list[tuple[str, dict[str, frozenset[str]]]] = []
    for i, labels in enumerate(tuples):
        members = [f"o{i:04d}_{j:04d}" for j in range(spec.objects_per_cell)]
        cell_members[labels] = members
        for oid in members:
            objects.append((oid, {d: frozenset([l]) for d, l in zip(dims, labels)}))

    pool_planted = sorted(oid for i in planted_idx for oid in cell_members[tuples[i]])
    pool_other = sorted(
        oid
        for i, labels in enumerate(tuples)
        if i not in planted_idx
        for oid in cell_members[labels]
    )
    query_size = max(1, round(spec.query_fraction * len(pool_planted)))
    noise_count = round(spec.noise_fraction * query_size)
    core_count = query_size - noise_count
    if core_count < 1:
        raise ConfigError("query would contain no planted members; lower noise_fraction")
    if noise_count > len(pool_other):
        raise ConfigError(
            f"need {noise_count} noise objects but only {len(pool_other)} exist "
            f"outside the planted cells"
        )
    core = [pool_planted[i] for i in sorted(rng.choice(len(pool_planted), size=core_count, replace=False))]
    noise = (
        [pool_other[i] for i in sorted(rng.choice(len(pool_other), size=noise_count, replace=False))]
        if noise_count
        else []
    )
    query = sorted(core + noise)

    object_of_cell = {oid: i for i, labels in enumerate(tuples) for oid in cell_members[labels]}
    all_ids = sorted(object_of_cell)
    links: list[tuple[str, str]] = []
    if spec.intra_link_prob > 0:
        for labels in tuples:
            members = cell_members[labels]
            for a, b in itertools.combinations(members, 2):
                if rng.random() < spec.intra_link_prob:
                    links.append((a, b))
    if spec.cross_link_prob > 0:
        for a, b in itertools.combinations(all_ids, 2):
            if object_of_cell[a] != object_of_cell[b] and rng.random() < spec.cross_link_prob:
                links.append((a, b))

    aliases = {label: [label + "a", label + "b"] for label in dim_labels[0]}
    tokens = sorted(
        {l for labels in dim_labels for l in labels}
        | {t for expansion in aliases.values() for t in expansion}
    )
    vectors = _unit_vectors(tokens, spec.word_dim, rng)

    instance = {
        "kind": "planted",
        "seed": seed,
        "spec": asdict(spec),
        "dimensions": list(dims),
        "planted_labels": [list(t) for t in planted],
        "query_size": len(query),
        "object_count": len(objects),
        "link_count": len(links),
    }
    paths = _write_dataset(out_dir, objects, links, query, vectors, aliases, instance)
    return SyntheticDataset(
        out_dir=out_dir,
        paths=paths,
        planted_labels=planted,
        query_ids=frozenset(query),
        object_count=len(objects),
        link_count=len(links),
        dimension_names=dims,
        cell_members={k: tuple(v) for k, v in cell_members.items()},
    )


def generate_greedy_trap(seed: int, out_dir: str, word_dim: int = 8) -> SyntheticDataset:
    """Fixed five-cell instance where the best single cell is a trap.

    Twenty query objects split into two groups of ten ("seta", "setb"); a
    third cell ("mix") overlaps both with fourteen query objects.  The
    best single pick is the mix cell, but the best pair is the two pure
    groups, so one-step-lookahead selection stalls strictly below the
    optimum at selection size two.  Two pad cells of non-query objects
    round out the cube.
    """
    rng = np.random.default_rng(seed)
    dims = ("group",)
    query = [f"q{i:02d}" for i in range(20)]
    pads = [f"p{i:02d}" for i in range(20)]

    def labels_for(oid: str) -> frozenset[str]:
        i = int(oid[1:])
        if oid.startswith("q"):
            group = "seta" if i < 10 else "setb"
            mixed = i < 7 or 10 <= i < 17
            return frozenset([group, "mix"]) if mixed else frozenset([group])
        return frozenset(["padx" if i < 10 else "pady"])

    objects = [(oid, {"group": labels_for(oid)}) for oid in query + pads]

    links: list[tuple[str, str]] = []
    groups = [query[:10], query[10:], pads[:10], pads[10:]]
    for members in groups:
        for a, b in itertools.combinations(members, 2):
            if rng.random() < 0.4:
                links.append((a, b))
    for a in query:
        for b in pads:
            if rng.random() < 0.05:
                links.append((a, b))

    vectors = _unit_vectors(["mix", "padx", "pady", "seta", "setb"], word_dim, rng)
    instance = {
        "kind": "greedy_trap",
        "seed": seed,
        "word_dim": word_dim,
        "dimensions": list(dims),
        "optimal_labels": [["seta"], ["setb"]],
        "trap_labels": [["mix"]],
        "query_size": len(query),
        "object_count": len(objects),
        "link_count": len(links),
    }
    paths = _write_dataset(out_dir, objects, links, query, vectors, {}, instance)
    cell_members = {
        ("mix",): tuple(sorted(o for o, l in objects if "mix" in l["group"])),
        ("padx",): tuple(sorted(pads[:10])),
        ("pady",): tuple(sorted(pads[10:])),
        ("seta",): tuple(sorted(query[:10])),
        ("setb",): tuple(sorted(query[10:])),
    }
    return SyntheticDataset(
        out_dir=out_dir,
        paths=paths,
        planted_labels=(("seta",), ("setb",)),
        query_ids=frozenset(query),
        object_count=len(objects),
        link_count=len(links),
        dimension_names=dims,
        cell_members=cell_members,
    )
