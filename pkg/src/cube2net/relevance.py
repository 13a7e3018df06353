"""Query relevance of a candidate member set, and the counting wrapper.

The quality of a selection is the Jaccard overlap between the union of the
selected cells' members and the query.  Per-step reward is the difference
of consecutive qualities, so rewards along a trajectory telescope to the
final quality exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Callable, Iterable, Optional

from .cube import DataCube
from .errors import QueryError


def relevance(members: AbstractSet[str], query: AbstractSet[str]) -> float:
    """Jaccard overlap |members & query| / |members | query|.

    The query must be non-empty; an empty member set scores 0 by the same
    formula, so the start of every trajectory has quality 0.
    """
    if not query:
        raise QueryError("relevance is undefined for an empty query")
    intersection = len(members & query)
    union = len(members | query)
    return intersection / union


def step_reward(q_prev: float, q_next: float) -> float:
    """Reward for growing the selection: the change in quality."""
    return q_next - q_prev


@dataclass
class EvalCounter:
    """Counts quality evaluations; the unit all methods are compared in."""

    count: int = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def merge(self, other: "EvalCounter") -> None:
        self.count += other.count


class SelectionQuality:
    """q(S): relevance of the members of the selected cells to a fixed query.

    Every call through this wrapper increments the attached counter by
    exactly one, which is what makes evaluation counts across strategies
    comparable.  A different relevance function can be plugged in; the
    Jaccard overlap is the only one shipped.
    """

    def __init__(
        self,
        cube: DataCube,
        query: AbstractSet[str],
        counter: Optional[EvalCounter] = None,
        relevance_fn: Callable[[AbstractSet[str], AbstractSet[str]], float] = relevance,
    ) -> None:
        if not query:
            raise QueryError("query may not be empty")
        self.cube = cube
        self.query = frozenset(query)
        self.counter = counter
        self.relevance_fn = relevance_fn

    def __call__(self, selected: Iterable[int]) -> float:
        if self.counter is not None:
            self.counter.add()
        return self.relevance_fn(self.cube.union_members(selected), self.query)
