"""Quality function, step reward, and the evaluation counter."""

from __future__ import annotations

import numpy as np
import pytest

from cube2net.errors import QueryError
from cube2net.relevance import EvalCounter, SelectionQuality, relevance, step_reward

from conftest import single_dim_cube


def random_sets(rng, universe=30):
    ids = [f"x{i}" for i in range(universe)]
    members = {i for i in ids if rng.random() < 0.4}
    query = {i for i in ids if rng.random() < 0.4} or {ids[0]}
    return members, query


class TestRelevance:
    def test_identical_sets_score_one(self):
        q = {"a", "b", "c"}
        assert relevance(q, q) == 1.0

    def test_disjoint_sets_score_zero(self):
        assert relevance({"a", "b"}, {"c", "d"}) == 0.0

    def test_quarter_overlap_exact(self):
        # |M & Q| = 5 and |M | Q| = 20 by construction, checked by
        # explicit enumeration, so the score must be exactly 0.25.
        members = {str(i) for i in range(6, 21)}
        query = {str(i) for i in range(1, 11)}
        assert len(members & query) == 5
        assert len(members | query) == 20
        assert relevance(members, query) == 0.25

    def test_empty_members_score_zero(self):
        assert relevance(set(), {"a"}) == 0.0

    def test_empty_query_rejected(self):
        with pytest.raises(QueryError):
            relevance({"a"}, set())

    def test_symmetry(self, rng):
        for _ in range(50):
            members, query = random_sets(rng)
            if not members:
                continue
            assert relevance(members, query) == relevance(query, members)

    def test_bounds(self, rng):
        for _ in range(50):
            members, query = random_sets(rng)
            assert 0.0 <= relevance(members, query) <= 1.0


class TestStepReward:
    def test_difference(self):
        assert step_reward(0.25, 0.75) == 0.5
        assert step_reward(0.75, 0.25) == -0.5

    def test_rewards_telescope(self, rng):
        for _ in range(20):
            qs = np.concatenate([[0.0], rng.random(10)])
            total = sum(step_reward(a, b) for a, b in zip(qs[:-1], qs[1:]))
            assert abs(total - qs[-1]) <= 1e-12


class TestCounter:
    def test_one_increment_per_call(self):
        cube = single_dim_cube({"a": ["x1", "x2"], "b": ["x2", "x3"]})
        counter = EvalCounter()
        quality = SelectionQuality(cube, {"x1", "x3"}, counter=counter)
        for expected in range(1, 6):
            quality([0])
            assert counter.count == expected

    def test_merge(self):
        a, b = EvalCounter(3), EvalCounter(4)
        a.merge(b)
        assert a.count == 7
        assert b.count == 4

    def test_uncounted_when_no_counter(self):
        cube = single_dim_cube({"a": ["x1"]})
        quality = SelectionQuality(cube, {"x1"})
        assert quality([0]) == 1.0


class TestSelectionQuality:
    def test_matches_manual_union(self):
        cube = single_dim_cube({"a": ["x1", "x2"], "b": ["x2", "x3"], "c": ["x9"]})
        query = {"x1", "x3", "x4"}
        quality = SelectionQuality(cube, query)
        for selection in ([0], [1], [0, 1], [0, 1, 2]):
            manual = relevance(cube.union_members(selection), query)
            assert quality(selection) == manual

    def test_empty_selection_scores_zero(self):
        cube = single_dim_cube({"a": ["x1"]})
        assert SelectionQuality(cube, {"x1"})([]) == 0.0

    def test_pluggable_relevance(self):
        cube = single_dim_cube({"a": ["x1"]})
        quality = SelectionQuality(
            cube, {"x1"}, relevance_fn=lambda members, query: float(len(members))
        )
        assert quality([0]) == 1.0

    def test_empty_query_rejected(self):
        cube = single_dim_cube({"a": ["x1"]})
        with pytest.raises(QueryError):
            SelectionQuality(cube, set())
