"""Reference strategies the learned method is compared against.

Three families: neighborhood growth on the raw links (no cube at all), a
link-count discriminative grower, and cell selectors (random, greedy, and
an exhaustive oracle that is the ground truth for small instances).  All
tie-breaks go to the smallest id so every strategy is deterministic.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import AbstractSet, Optional

import numpy as np

from .cube import DataCube
from .errors import ConfigError, QueryError
from .relevance import EvalCounter, SelectionQuality

ORACLE_GUARD = 1_000_000


@dataclass(frozen=True)
class SelectionResult:
    """What a strategy produced and what it cost.

    ``selected`` is empty for strategies that work on nodes instead of
    cells; ``q`` is always the relevance of the union of the selected
    cells' members, so node-only strategies score 0 by construction.
    """

    selected: tuple[int, ...]
    nodes: frozenset[str]
    q: float
    eval_count: int
    wall_time_s: float


def _check_query(cube: DataCube, query: AbstractSet[str]) -> None:
    if not query:
        raise QueryError("query may not be empty")
    missing = set(query) - cube.object_ids
    if missing:
        raise QueryError(f"query ids not in dataset: {sorted(missing)[:5]}")


def no_cube_family(cube: DataCube, query: AbstractSet[str], hops: int) -> SelectionResult:
    """Breadth-first shells around the query on the raw links.

    hops 0 is the query itself; each extra hop adds the direct neighbors of
    the previous shell.  No cells are consulted.
    """
    if hops < 0:
        raise ConfigError(f"hops must be >= 0, got {hops}")
    _check_query(cube, query)
    start = time.perf_counter()
    nodes = set(query)
    frontier = set(query)
    for _ in range(hops):
        frontier = {
            nbr for node in frontier for nbr, _ in cube.neighbors(node)
        } - nodes
        if not frontier:
            break
        nodes |= frontier
    return SelectionResult(
        selected=(),
        nodes=frozenset(nodes),
        q=0.0,
        eval_count=0,
        wall_time_s=time.perf_counter() - start,
    )


def max_disc_lite(cube: DataCube, query: AbstractSet[str], budget: int) -> SelectionResult:
    """Repeatedly add the outside node with the most links into the set.

    Stops after ``budget`` additions or when no outside node has a link
    into the set, so disconnected nodes are never pulled in.  Ties break to
    the smallest node id.
    """
    if budget < 0:
        raise ConfigError(f"budget must be >= 0, got {budget}")
    _check_query(cube, query)
    start = time.perf_counter()
    nodes = set(query)
    links_in: dict[str, int] = {}
    for node in nodes:
        for nbr, _ in cube.neighbors(node):
            if nbr not in nodes:
                links_in[nbr] = links_in.get(nbr, 0) + 1
    for _ in range(budget):
        if not links_in:
            break
        best = min(links_in.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        del links_in[best]
        nodes.add(best)
        for nbr, _ in cube.neighbors(best):
            if nbr not in nodes:
                links_in[nbr] = links_in.get(nbr, 0) + 1
    return SelectionResult(
        selected=(),
        nodes=frozenset(nodes),
        q=0.0,
        eval_count=0,
        wall_time_s=time.perf_counter() - start,
    )


def cube_random(
    cube: DataCube,
    query: AbstractSet[str],
    m: int,
    rng: np.random.Generator,
    counter: Optional[EvalCounter] = None,
) -> SelectionResult:
    """Uniform sample of min(m, n) distinct cells; one quality evaluation."""
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    _check_query(cube, query)
    start = time.perf_counter()
    counter = counter if counter is not None else EvalCounter()
    quality = SelectionQuality(cube, query, counter=counter)
    n = cube.cell_count
    take = min(m, n)
    selected = tuple(sorted(int(c) for c in rng.choice(n, size=take, replace=False)))
    q = quality(selected) if selected else 0.0
    return SelectionResult(
        selected=selected,
        nodes=frozenset(query) | cube.union_members(selected),
        q=q,
        eval_count=counter.count,
        wall_time_s=time.perf_counter() - start,
    )


def cube_greedy(
    cube: DataCube,
    query: AbstractSet[str],
    m: int,
    counter: Optional[EvalCounter] = None,
) -> SelectionResult:
    """Add the cell with the best marginal quality, m times.

    Every remaining candidate is evaluated at every step, which is exactly
    m*n - m*(m-1)/2 quality evaluations.  Ties break to the smallest id.
    """
    n = cube.cell_count
    if not 1 <= m <= n:
        raise ConfigError(f"m must be in [1, {n}], got {m}")
    _check_query(cube, query)
    start = time.perf_counter()
    counter = counter if counter is not None else EvalCounter()
    quality = SelectionQuality(cube, query, counter=counter)
    selected: list[int] = []
    remaining = list(range(n))
    best_q = 0.0
    for _ in range(m):
        best_cell = None
        best_next = -math.inf
        for cell in remaining:
            q = quality(selected + [cell])
            if q > best_next:
                best_next = q
                best_cell = cell
        selected.append(best_cell)
        remaining.remove(best_cell)
        best_q = best_next
    return SelectionResult(
        selected=tuple(sorted(selected)),
        nodes=frozenset(query) | cube.union_members(selected),
        q=best_q,
        eval_count=counter.count,
        wall_time_s=time.perf_counter() - start,
    )


def oracle_subset_count(n: int, m: int) -> int:
    """Number of non-empty selections of at most m of n cells."""
    return sum(math.comb(n, k) for k in range(1, m + 1))


def exhaustive_oracle(
    cube: DataCube,
    query: AbstractSet[str],
    m: int,
    counter: Optional[EvalCounter] = None,
) -> SelectionResult:
    """Evaluate every selection of at most m cells; the true optimum.

    Refuses instances with more than a million candidate subsets.  Subsets
    are enumerated smallest-first in lexicographic order and only a
    strictly better quality replaces the incumbent, so ties resolve to the
    lexicographically smallest id sequence.
    """
    n = cube.cell_count
    if not 1 <= m <= n:
        raise ConfigError(f"m must be in [1, {n}], got {m}")
    _check_query(cube, query)
    total = oracle_subset_count(n, m)
    if total > ORACLE_GUARD:
        raise ConfigError(
            f"{total} candidate subsets exceed the exhaustive-search guard "
            f"of {ORACLE_GUARD}"
        )
    start = time.perf_counter()
    counter = counter if counter is not None else EvalCounter()
    quality = SelectionQuality(cube, query, counter=counter)
    best_sel: tuple[int, ...] = ()
    best_q = -math.inf
    for k in range(1, m + 1):
        for subset in itertools.combinations(range(n), k):
            q = quality(subset)
            if q > best_q:
                best_q = q
                best_sel = subset
    return SelectionResult(
        selected=best_sel,
        nodes=frozenset(query) | cube.union_members(best_sel),
        q=best_q,
        eval_count=counter.count,
        wall_time_s=time.perf_counter() - start,
    )
