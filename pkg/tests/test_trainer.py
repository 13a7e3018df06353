"""Rollouts, advantage recursion, the clipped update, and the training loop.

The PPO update is verified end to end: finite differences of the written-out
loss, pushed through one Adam step by hand, must reproduce the parameters
that ``ppo_iteration`` returns.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from cube2net.embedding import nearest_cell
from cube2net.errors import ConfigError, NumericError
from cube2net.policy import PARAM_NAMES, adam_step, forward, gaussian_log_density
from cube2net.relevance import EvalCounter, SelectionQuality
from cube2net.trainer import (
    TrainConfig,
    Trajectory,
    Transition,
    clipped_surrogate,
    compute_advantages,
    plan,
    ppo_iteration,
    rollout,
    train,
    value_loss,
)
from cube2net.trainer import _surrogate_pieces

from conftest import embedding_table, random_params, single_dim_cube


def tiny_problem():
    """Three cells over six objects; the query covers cells 0 and 1."""
    cube = single_dim_cube(
        {
            "a": ["q1", "x0"],
            "b": ["q1", "q2"],
            "c": ["z0", "z1"],
        }
    )
    embeddings = embedding_table([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    return cube, embeddings, frozenset({"q1", "q2"})


class TestTrainConfig:
    def test_defaults_valid(self):
        TrainConfig().validate()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("trajectory_length", 0),
            ("trajectories_per_iteration", 0),
            ("iterations", 0),
            ("discount", -0.1),
            ("discount", 1.1),
            ("clip_epsilon", 0.0),
            ("sgd_epochs", 0),
            ("minibatch_size", 0),
            ("learning_rate", 0.0),
            ("hidden_size", 0),
            ("value_coef", -1.0),
        ],
    )
    def test_bad_values_rejected(self, field, value):
        config = TrainConfig(**{field: value})
        with pytest.raises(ConfigError):
            config.validate()


class TestRollout:
    def test_rewards_telescope_to_final_quality(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=0)
        traj = rollout(params, cube, embeddings, query, length=3, rng=rng)
        assert math.isclose(
            sum(t.reward for t in traj.transitions), traj.q_final, abs_tol=1e-12
        )

    def test_each_reward_is_a_quality_difference(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=1)
        traj = rollout(params, cube, embeddings, query, length=3, rng=rng)
        quality = SelectionQuality(cube, query)
        picked: list[int] = []
        q_prev = 0.0
        for t in traj.transitions:
            picked.append(t.cell)
            q_next = quality(picked)
            assert math.isclose(t.reward, q_next - q_prev, abs_tol=1e-12)
            q_prev = q_next
        assert math.isclose(traj.q_final, q_prev, abs_tol=1e-12)

    def test_states_accumulate_selected_embeddings(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=2)
        traj = rollout(params, cube, embeddings, query, length=3, rng=rng)
        running = np.zeros(2)
        for t in traj.transitions:
            np.testing.assert_array_equal(t.state_vec, running)
            running = running + embeddings[t.cell]
        np.testing.assert_array_equal(traj.final_state_vec, running)

    def test_logp_consistent_with_recomputation(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=3)
        traj = rollout(params, cube, embeddings, query, length=3, rng=rng)
        for t in traj.transitions:
            mu, _, _ = forward(params, t.state_vec)
            logp, _, _ = gaussian_log_density(t.action_vec, mu, params.sigma)
            assert math.isclose(t.logp_old, logp, rel_tol=1e-12)

    def test_cells_distinct_and_snapped(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=4)
        traj = rollout(params, cube, embeddings, query, length=3, rng=rng)
        cells = [t.cell for t in traj.transitions]
        assert len(set(cells)) == len(cells)
        for i, t in enumerate(traj.transitions):
            assert t.cell == nearest_cell(t.action_vec, embeddings, excluded=cells[:i])

    def test_length_capped_at_cell_count(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=5)
        traj = rollout(params, cube, embeddings, query, length=10, rng=rng)
        assert len(traj.transitions) == 3
        assert traj.selection() == (0, 1, 2)

    def test_one_evaluation_per_step(self, rng):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=6)
        counter = EvalCounter()
        rollout(params, cube, embeddings, query, length=2, rng=rng, counter=counter)
        assert counter.count == 2

    def test_seeded_reproducibility(self):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=7)
        a = rollout(params, cube, embeddings, query, 3, np.random.default_rng(5))
        b = rollout(params, cube, embeddings, query, 3, np.random.default_rng(5))
        assert [t.cell for t in a.transitions] == [t.cell for t in b.transitions]
        for ta, tb in zip(a.transitions, b.transitions):
            np.testing.assert_array_equal(ta.action_vec, tb.action_vec)


class TestComputeAdvantages:
    def make_trajectory(self, rewards, kappa, rng):
        states = [rng.standard_normal(kappa) for _ in rewards]
        transitions = [
            Transition(
                state_vec=s,
                action_vec=np.zeros(kappa),
                cell=i,
                reward=r,
                logp_old=0.0,
            )
            for i, (s, r) in enumerate(zip(states, rewards))
        ]
        return Trajectory(
            transitions=transitions,
            final_state_vec=rng.standard_normal(kappa),
            q_final=sum(rewards),
        )

    def test_matches_hand_recursion(self, rng):
        params, _ = random_params(kappa=3, hidden=4, seed=8)
        traj = self.make_trajectory([0.5, -0.2, 0.3, 0.1], kappa=3, rng=rng)
        discount = 0.9
        adv, targets = compute_advantages(traj, params, discount)

        g = forward(params, traj.final_state_vec)[1]
        expected_targets = []
        for t in reversed(traj.transitions):
            g = t.reward + discount * g
            expected_targets.insert(0, g)
        expected_values = [forward(params, t.state_vec)[1] for t in traj.transitions]
        np.testing.assert_allclose(targets, expected_targets, atol=1e-12)
        np.testing.assert_allclose(
            adv, np.array(expected_targets) - np.array(expected_values), atol=1e-12
        )

    def test_last_step_substitution(self, monkeypatch, rng):
        # With critic values 0 at the last state and 0.5 at the terminal
        # state, reward 1 and discount 0.99 give 1 + 0.99 * 0.5 = 1.495.
        import cube2net.trainer as trainer_module

        monkeypatch.setattr(
            trainer_module, "forward", lambda params, x: (None, 0.5 * float(x[0]), None)
        )
        params, _ = random_params(kappa=1, hidden=2, seed=11)
        traj = Trajectory(
            transitions=[
                Transition(
                    state_vec=np.array([0.0]),
                    action_vec=np.zeros(1),
                    cell=0,
                    reward=1.0,
                    logp_old=0.0,
                )
            ],
            final_state_vec=np.array([1.0]),
            q_final=1.0,
        )
        adv, targets = compute_advantages(traj, params, discount=0.99)
        assert math.isclose(adv[0], 1.495, rel_tol=1e-12)
        assert math.isclose(targets[0], 1.495, rel_tol=1e-12)

    def test_zero_discount_targets_are_rewards(self, rng):
        params, _ = random_params(kappa=2, hidden=3, seed=9)
        traj = self.make_trajectory([1.0, 2.0, 3.0], kappa=2, rng=rng)
        _, targets = compute_advantages(traj, params, discount=0.0)
        np.testing.assert_allclose(targets, [1.0, 2.0, 3.0], atol=1e-12)

    def test_unit_discount_targets_are_suffix_sums(self, rng):
        params, _ = random_params(kappa=2, hidden=3, seed=10)
        traj = self.make_trajectory([1.0, 2.0, 3.0], kappa=2, rng=rng)
        terminal_value = forward(params, traj.final_state_vec)[1]
        _, targets = compute_advantages(traj, params, discount=1.0)
        np.testing.assert_allclose(
            targets,
            [6.0 + terminal_value, 5.0 + terminal_value, 3.0 + terminal_value],
            atol=1e-12,
        )


class TestSurrogatePieces:
    # (ratio, advantage, expected value, expected derivative), epsilon = 0.2.
    CASES = [
        (1.0, 2.0, 2.0, 2.0),  # interior: unclipped and clipped agree
        (1.5, 2.0, 2.4, 0.0),  # above band, positive advantage: flat clip
        (1.5, -2.0, -3.0, -2.0),  # above band, negative advantage: unclipped wins
        (0.5, 2.0, 1.0, 2.0),  # below band, positive advantage: unclipped wins
        (0.5, -2.0, -1.6, 0.0),  # below band, negative advantage: flat clip
        (1.2, 3.0, 3.6, 3.0),  # exactly at the edge: tie goes to unclipped
        (0.8, -1.0, -0.8, -1.0),  # edge tie with negative advantage
        (1.1, 0.0, 0.0, 0.0),
    ]

    @pytest.mark.parametrize("ratio,adv,value,deriv", CASES)
    def test_hand_enumerated_branches(self, ratio, adv, value, deriv):
        got_value, got_deriv = _surrogate_pieces(ratio, adv, 0.2)
        assert math.isclose(got_value, value, abs_tol=1e-12)
        assert got_deriv == deriv

    def test_value_is_min_of_the_two_terms(self, rng):
        for _ in range(200):
            ratio = float(rng.uniform(0.0, 2.5))
            adv = float(rng.standard_normal())
            eps = float(rng.uniform(0.05, 0.5))
            value, _ = _surrogate_pieces(ratio, adv, eps)
            clipped = min(max(ratio, 1.0 - eps), 1.0 + eps) * adv
            assert math.isclose(value, min(ratio * adv, clipped), abs_tol=1e-12)

    def test_derivative_matches_finite_differences_off_kinks(self, rng):
        h = 1e-7
        for _ in range(200):
            ratio = float(rng.uniform(0.0, 2.5))
            adv = float(rng.standard_normal())
            eps = float(rng.uniform(0.05, 0.5))
            # Stay away from the two kinks of the min.
            if min(abs(ratio - (1 - eps)), abs(ratio - (1 + eps))) < 10 * h:
                continue
            _, deriv = _surrogate_pieces(ratio, adv, eps)
            fd = (
                _surrogate_pieces(ratio + h, adv, eps)[0]
                - _surrogate_pieces(ratio - h, adv, eps)[0]
            ) / (2 * h)
            assert math.isclose(deriv, fd, abs_tol=1e-5)


class TestDiagnosticLosses:
    def test_surrogate_at_unchanged_params_is_mean_advantage(self, rng):
        params, _ = random_params(kappa=2, hidden=3, seed=11)
        sigma = params.sigma
        states = [rng.standard_normal(2) for _ in range(6)]
        actions, logp_old = [], []
        for s in states:
            mu, _, _ = forward(params, s)
            a = mu + sigma * rng.standard_normal(2)
            actions.append(a)
            logp_old.append(gaussian_log_density(a, mu, sigma)[0])
        advantages = rng.standard_normal(6)
        loss = clipped_surrogate(
            params, states, actions, np.array(logp_old), advantages, 0.2
        )
        assert math.isclose(loss, -float(np.mean(advantages)), abs_tol=1e-9)

    def test_value_loss_matches_mean_square(self, rng):
        params, _ = random_params(kappa=2, hidden=3, seed=12)
        states = [rng.standard_normal(2) for _ in range(5)]
        targets = rng.standard_normal(5)
        values = [forward(params, s)[1] for s in states]
        expected = float(np.mean([(v - t) ** 2 for v, t in zip(values, targets)]))
        assert math.isclose(value_loss(params, states, targets), expected, rel_tol=1e-12)


def ppo_loss(params, transitions, norm_advantages, targets, config):
    """The minibatch objective written out directly, for finite differencing."""
    sigma = params.sigma
    total = 0.0
    for tr, adv, tgt in zip(transitions, norm_advantages, targets):
        mu, value, _ = forward(params, tr.state_vec)
        logp, _, _ = gaussian_log_density(tr.action_vec, mu, sigma)
        surr, _ = _surrogate_pieces(
            math.exp(logp - tr.logp_old), float(adv), config.clip_epsilon
        )
        verr = value - float(tgt)
        total += -surr + config.value_coef * verr * verr
    return total / len(transitions)


class TestPpoIteration:
    def build_batch(self, params, rng):
        """Four transitions whose ratios sit in all surrogate branches."""
        sigma = params.sigma
        transitions = []
        # Target ratios well clear of the clip edges at 0.8 and 1.2.
        for target_ratio in (1.0, 1.5, 1.5, 0.6):
            state = rng.standard_normal(2)
            mu, _, _ = forward(params, state)
            action = mu + sigma * rng.standard_normal(2)
            logp, _, _ = gaussian_log_density(action, mu, sigma)
            transitions.append(
                Transition(
                    state_vec=state,
                    action_vec=action,
                    cell=0,
                    reward=0.0,
                    logp_old=logp - math.log(target_ratio),
                )
            )
        advantages = np.array([2.0, 1.0, -1.0, -2.0])
        targets = np.array([0.5, -0.5, 0.2, 0.0])
        return transitions, advantages, targets

    def test_single_batch_step_matches_finite_differences(self, rng):
        params, opt = random_params(kappa=2, hidden=3, seed=13)
        config = TrainConfig(
            sgd_epochs=1, minibatch_size=64, learning_rate=0.05, clip_epsilon=0.2
        )
        transitions, advantages, targets = self.build_batch(params, rng)
        norm = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        h = 1e-6
        fd_grads = {}
        for name in PARAM_NAMES:
            array = getattr(params, name)
            grad = np.zeros_like(array)
            for idx in np.ndindex(array.shape):
                probe = params.copy()
                getattr(probe, name)[idx] = array[idx] + h
                up = ppo_loss(probe, transitions, norm, targets, config)
                getattr(probe, name)[idx] = array[idx] - h
                down = ppo_loss(probe, transitions, norm, targets, config)
                grad[idx] = (up - down) / (2 * h)
            fd_grads[name] = grad
        expected, _ = adam_step(params, fd_grads, opt, lr=config.learning_rate)

        got, got_opt = ppo_iteration(
            params, opt, transitions, advantages, targets, config,
            np.random.default_rng(0),
        )
        assert got_opt.step == 1
        for name in PARAM_NAMES:
            np.testing.assert_allclose(
                getattr(got, name), getattr(expected, name), rtol=1e-4, atol=1e-7
            )

    def test_step_count_epochs_times_minibatches(self, rng):
        params, opt = random_params(kappa=2, hidden=3, seed=14)
        transitions, advantages, targets = self.build_batch(params, rng)
        config = TrainConfig(sgd_epochs=3, minibatch_size=2)
        _, got_opt = ppo_iteration(
            params, opt, transitions, advantages, targets, config,
            np.random.default_rng(0),
        )
        assert got_opt.step == 3 * 2

    def test_empty_batch_is_identity(self):
        params, opt = random_params(kappa=2, hidden=3, seed=15)
        got, got_opt = ppo_iteration(
            params, opt, [], np.array([]), np.array([]), TrainConfig()
        )
        assert got is params and got_opt is opt

    def test_non_finite_advantage_rejected(self, rng):
        params, opt = random_params(kappa=2, hidden=3, seed=16)
        transitions, advantages, targets = self.build_batch(params, rng)
        advantages = advantages.astype(float)
        advantages[0] = np.inf
        with pytest.raises(NumericError):
            ppo_iteration(
                params, opt, transitions, advantages, targets, TrainConfig(),
                np.random.default_rng(0),
            )


class TestTrain:
    CONFIG = dict(
        trajectory_length=2,
        trajectories_per_iteration=4,
        iterations=3,
        hidden_size=8,
        seed=5,
    )

    def test_deterministic_across_runs(self):
        cube, embeddings, query = tiny_problem()
        runs = []
        for _ in range(2):
            params, selection, report = train(
                cube, embeddings, query, TrainConfig(**self.CONFIG)
            )
            runs.append((params, selection, report))
        a, b = runs
        assert a[1] == b[1]
        assert a[2].to_json() == b[2].to_json()
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(a[0], name), getattr(b[0], name))

    def test_eval_count_is_iterations_times_trajectories_times_steps(self):
        cube, embeddings, query = tiny_problem()
        counter = EvalCounter()
        _, _, report = train(
            cube, embeddings, query, TrainConfig(**self.CONFIG), counter=counter
        )
        assert report.eval_count == counter.count == 3 * 4 * 2

    def test_step_count_capped_by_cube_size(self):
        cube, embeddings, query = tiny_problem()
        config = TrainConfig(**{**self.CONFIG, "trajectory_length": 50})
        _, _, report = train(cube, embeddings, query, config)
        assert report.eval_count == 3 * 4 * 3

    def test_best_matches_report_statistics(self):
        cube, embeddings, query = tiny_problem()
        _, selection, report = train(cube, embeddings, query, TrainConfig(**self.CONFIG))
        assert len(report.mean_q) == len(report.max_q) == 3
        assert report.best_q == max(report.max_q)
        assert all(m <= x for m, x in zip(report.mean_q, report.max_q))
        # The reported best quality must be reproducible from the selection.
        quality = SelectionQuality(cube, query)
        assert math.isclose(quality(selection), report.best_q, abs_tol=1e-12)

    def test_report_serialization_shape(self):
        cube, embeddings, query = tiny_problem()
        _, _, report = train(cube, embeddings, query, TrainConfig(**self.CONFIG))
        doc = report.to_json()
        assert [d["iteration"] for d in doc["iterations"]] == [1, 2, 3]
        assert doc["eval_count"] == report.eval_count
        assert "wall_time_s" not in doc
        assert report.wall_time_s > 0.0

    def test_empty_cube_rejected(self):
        cube, _, query = tiny_problem()
        with pytest.raises(ConfigError, match="empty"):
            train(cube, embedding_table(np.zeros((0, 2)), word_dim=2),
                  query, TrainConfig(**self.CONFIG))

    def test_invalid_config_rejected(self):
        cube, embeddings, query = tiny_problem()
        with pytest.raises(ConfigError):
            train(cube, embeddings, query, TrainConfig(iterations=0))


class TestPlan:
    def test_matches_manual_mean_rollout(self):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=17)
        state = np.zeros(2)
        picked: list[int] = []
        for _ in range(2):
            mu, _, _ = forward(params, state)
            cell = nearest_cell(mu, embeddings, excluded=picked)
            state = state + embeddings[cell]
            picked.append(cell)
        assert plan(params, cube, embeddings, query, length=2) == tuple(sorted(picked))

    def test_keeps_training_best_when_better(self):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=18)
        quality = SelectionQuality(cube, query)
        deterministic = plan(params, cube, embeddings, query, length=1)
        best = ((1, 0), quality((0, 1)))
        got = plan(params, cube, embeddings, query, length=1, best=best)
        if quality(deterministic) < best[1]:
            assert got == (0, 1)
        else:
            assert got == deterministic

    def test_ignores_training_best_when_worse(self):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=19)
        deterministic = plan(params, cube, embeddings, query, length=3)
        got = plan(params, cube, embeddings, query, length=3, best=((2,), 0.0))
        assert got == deterministic

    def test_zero_length_returns_best(self):
        cube, embeddings, query = tiny_problem()
        params, _ = random_params(kappa=2, hidden=4, seed=20)
        assert plan(params, cube, embeddings, query, 0, best=((1,), 0.5)) == (1,)
        assert plan(params, cube, embeddings, query, 0) == ()
