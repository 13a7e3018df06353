"""End-to-end run: ingest, cube, method, materialized network, reports.

Everything the pipeline writes except ``timings.json`` is byte-stable for
a fixed config and seed: node and edge files are sorted, JSON is dumped
with sorted keys, and measured wall times are kept out of the stable
files so reruns can be compared byte for byte.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import (
    SelectionResult,
    cube_greedy,
    cube_random,
    exhaustive_oracle,
    max_disc_lite,
    no_cube_family,
)
from .cube import (
    ConstructedNetwork,
    DataCube,
    DimensionSchema,
    build_cube,
    induce_network,
    load_links,
    load_objects,
    load_query,
    write_manifest,
)
from .embedding import (
    CellEmbeddingTable,
    WordTable,
    build_embedding_table,
    load_aliases,
    load_stopwords,
)
from .errors import ConfigError
from .policy import PolicyParameters, save_checkpoint
from .relevance import EvalCounter, SelectionQuality
from .trainer import TrainConfig, TrainReport, plan, train

logger = logging.getLogger(__name__)

METHODS = (
    "nocube",
    "nocube1",
    "nocube2",
    "maxdisc",
    "random",
    "greedy",
    "oracle",
    "cube2net",
)


@dataclass
class RunConfig:
    """One pipeline run: inputs, method, and every knob the method needs."""

    objects_path: str
    links_path: str
    query_path: str
    output_dir: str
    method: str = "cube2net"
    m: int = 20
    min_cell_size: int = 10
    seed: int = 0
    maxdisc_budget: Optional[int] = None
    word_table_path: Optional[str] = None
    word_dim: Optional[int] = None
    aliases_path: Optional[str] = None
    stopwords_path: Optional[str] = None
    trajectories_per_iteration: int = 40
    iterations: int = 40
    discount: float = 0.99
    clip_epsilon: float = 0.2
    sgd_epochs: int = 4
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    hidden_size: int = 256
    value_coef: float = 0.5

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown method {self.method!r}; choose one of {', '.join(METHODS)}"
            )
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.min_cell_size < 1:
            raise ConfigError("min_cell_size must be >= 1")
        if self.maxdisc_budget is not None and self.maxdisc_budget < 0:
            raise ConfigError("maxdisc_budget must be >= 0")
        if self.method == "cube2net":
            if not self.word_table_path or not self.word_dim:
                raise ConfigError(
                    "method cube2net needs word_table_path and word_dim for embeddings"
                )
        self.train_config().validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            trajectory_length=self.m,
            trajectories_per_iteration=self.trajectories_per_iteration,
            iterations=self.iterations,
            discount=self.discount,
            clip_epsilon=self.clip_epsilon,
            sgd_epochs=self.sgd_epochs,
            minibatch_size=self.minibatch_size,
            learning_rate=self.learning_rate,
            hidden_size=self.hidden_size,
            value_coef=self.value_coef,
            seed=self.seed,
        )

    def echo(self) -> dict:
        """Config as written to the metrics report; output_dir is left out
        so runs into different directories stay byte-comparable."""
        doc = asdict(self)
        doc.pop("output_dir")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"incomplete config: {exc}") from exc


@dataclass
class MetricsReport:
    """Stable summary of one run; timings travel separately."""

    method: str
    q: float
    node_count: int
    edge_count: int
    eval_count: int
    seed: int
    selected_cells: list[int]
    config: dict
    construction_s: float = 0.0
    training_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "q": self.q,
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "eval_count": self.eval_count,
            "seed": self.seed,
            "selected_cells": self.selected_cells,
            "config": self.config,
        }

    def timings_json(self) -> dict:
        return {"construction_s": self.construction_s, "training_s": self.training_s}


def _load_embeddings(cube: DataCube, config: RunConfig) -> CellEmbeddingTable:
    table = WordTable.from_file(config.word_table_path, config.word_dim)
    aliases = load_aliases(config.aliases_path) if config.aliases_path else None
    stopwords = (
        load_stopwords(config.stopwords_path) if config.stopwords_path else frozenset()
    )
    return build_embedding_table(cube, table, aliases, stopwords)


def execute_method(
    cube: DataCube, query: frozenset[str], config: RunConfig
) -> tuple[SelectionResult, Optional[TrainReport], Optional[PolicyParameters]]:
    """Dispatch to one strategy; cube2net trains first, then plans."""
    method = config.method
    if method == "nocube":
        return no_cube_family(cube, query, hops=0), None, None
    if method == "nocube1":
        return no_cube_family(cube, query, hops=1), None, None
    if method == "nocube2":
        return no_cube_family(cube, query, hops=2), None, None
    if method == "maxdisc":
        budget = config.maxdisc_budget
        if budget is None:
            budget = 2 * len(query)
        return max_disc_lite(cube, query, budget), None, None
    if method == "random":
        rng = np.random.default_rng(config.seed)
        return cube_random(cube, query, config.m, rng), None, None
    if method == "greedy":
        return cube_greedy(cube, query, config.m), None, None
    if method == "oracle":
        return exhaustive_oracle(cube, query, config.m), None, None

    # cube2net
    embeddings = _load_embeddings(cube, config)
    counter = EvalCounter()
    start = time.perf_counter()
    params, best_selection, report = train(
        cube, embeddings, query, config.train_config(), counter
    )
    selection = plan(
        params, cube, embeddings, query, config.m, best=(best_selection, report.best_q)
    )
    q = SelectionQuality(cube, query)(selection)
    result = SelectionResult(
        selected=tuple(sorted(selection)),
        nodes=frozenset(query) | cube.union_members(selection),
        q=q,
        eval_count=counter.count,
        wall_time_s=time.perf_counter() - start,
    )
    return result, report, params


def _dump_json(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_network(network: ConstructedNetwork, out_dir: Path) -> tuple[Path, Path]:
    nodes_path = out_dir / "nodes.tsv"
    edges_path = out_dir / "edges.tsv"
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for node in network.nodes:
            fh.write(node + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for edge in network.edges:
            fh.write(f"{edge.src}\t{edge.dst}\t{edge.weight!r}\n")
    return nodes_path, edges_path


def run_pipeline(config: RunConfig) -> MetricsReport:
    """Ingest, build the cube, run the method, and write all outputs.

    Writes nodes.tsv, edges.tsv, cells.json, metrics.json, cube.json, and
    timings.json into the output directory; cube2net runs add
    train_report.json and checkpoint.json.
    """
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    objects = load_objects(config.objects_path)
    links = load_links(config.links_path)
    if not objects:
        raise ConfigError(f"{config.objects_path}: no objects")
    dims = tuple(sorted(objects[0].labels))
    cube = build_cube(objects, links, DimensionSchema(dims), config.min_cell_size)
    construction_s = time.perf_counter() - t0
    query = load_query(config.query_path)
    missing = query - cube.object_ids
    if missing:
        raise ConfigError(f"query ids not in dataset: {sorted(missing)[:5]}")
    logger.info(
        "cube: %d objects, %d links, %d cells (min size %d)",
        len(objects),
        cube.link_count,
        cube.cell_count,
        config.min_cell_size,
    )

    result, train_report, params = execute_method(cube, query, config)
    network = induce_network(cube, result.nodes)

    write_manifest(cube, str(out_dir / "cube.json"))
    write_network(network, out_dir)
    _dump_json(
        {
            "selected": [
                {
                    "id": c,
                    "labels": list(cube.cells[c].labels),
                    "size": cube.cells[c].size,
                }
                for c in result.selected
            ]
        },
        out_dir / "cells.json",
    )
    report = MetricsReport(
        method=config.method,
        q=result.q,
        node_count=len(network.nodes),
        edge_count=len(network.edges),
        eval_count=result.eval_count,
        seed=config.seed,
        selected_cells=list(result.selected),
        config=config.echo(),
        construction_s=construction_s,
        training_s=train_report.wall_time_s if train_report else 0.0,
    )
    _dump_json(report.to_json(), out_dir / "metrics.json")
    _dump_json(report.timings_json(), out_dir / "timings.json")
    if train_report is not None:
        _dump_json(train_report.to_json(), out_dir / "train_report.json")
        save_checkpoint(params, config.seed, str(out_dir / "checkpoint.json"))
    logger.info(
        "%s: q=%.4f nodes=%d edges=%d evals=%d",
        config.method,
        result.q,
        len(network.nodes),
        len(network.edges),
        result.eval_count,
    )
    return report
